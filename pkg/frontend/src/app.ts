// Session controller: one server call per user action, no optimistic
// updates, and every rendered number comes straight from the last response.

import { ApiClient } from './api.js';
import { Store } from './store.js';
import { DesignSpec, ServiceError, SessionView, WhatIfResult } from './types.js';
import { renderBeliefs } from './views/beliefs.js';
import { renderCompletion } from './views/completion.js';
import { renderOutcomeForm, OutcomeSubmission } from './views/outcomes.js';
import { renderRecommendation } from './views/recommendation.js';
import { renderStepper } from './views/stepper.js';
import { renderWhatIf } from './views/whatif.js';

export class ConsoleApp {
  readonly store = new Store();

  private lastWhatIf: WhatIfResult | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly root: HTMLElement,
  ) {
    this.store.subscribe(() => this.render());
  }

  async start(checkpoint: string, options: { horizon?: number; seed?: number }
      = {}): Promise<void> {
    await this.guard(async () => {
      const view = await this.api.createSession(checkpoint, options);
      this.store.set({
        view,
        recommendation: view.recommendation ?? null,
        stale: false,
      });
    });
  }

  async resume(sessionId: string): Promise<void> {
    await this.guard(async () => {
      const view = await this.api.getSession(sessionId);
      let recommendation = null;
      if (view.session.status === 'active') {
        recommendation =
          (await this.api.getRecommendation(sessionId)).recommendation;
      }
      this.store.set({ view, recommendation, stale: false });
    });
  }

  async submitOutcome(submission: OutcomeSubmission): Promise<void> {
    const sessionId = this.sessionId();
    const before = this.store.get().view!.session.step;
    await this.guard(async () => {
      const view = await this.api.submitOutcome(
        sessionId, submission.design, submission.outcomes);
      // another tab may have written first: the server state wins, and a
      // mismatch between what we expected and what came back is surfaced
      const stale = view.session.step !== before + 1;
      this.lastWhatIf = null;
      this.store.set({
        view,
        recommendation: view.recommendation ?? null,
        stale,
      });
    });
  }

  async explore(design: DesignSpec): Promise<void> {
    const sessionId = this.sessionId();
    await this.guard(async () => {
      const result = await this.api.whatIf(sessionId, design);
      this.lastWhatIf = result.whatif;
      this.store.set({});   // re-render with the new prediction
    });
  }

  retry(): void {
    const action = this.store.get().lastFailedAction;
    if (action) {
      this.store.set({ lastFailedAction: null });
      void action();
    }
  }

  private sessionId(): string {
    const view = this.store.get().view;
    if (!view) throw new Error('no active session');
    return view.session.id;
  }

  private async guard(action: () => Promise<void>): Promise<void> {
    this.store.set({ pending: true });
    try {
      await action();
      this.store.set({ pending: false, lastFailedAction: null });
    } catch (err) {
      if (err instanceof ServiceError && err.code === 'bad_schema') {
        // schema drift: refuse to render anything partial
        this.store.set({ pending: false, blockingError: err.message });
        return;
      }
      if (err instanceof ServiceError && err.code === 'network') {
        this.store.set({ pending: false, lastFailedAction: action });
        return;
      }
      throw err;
    }
  }

  render(): void {
    const state = this.store.get();
    this.root.innerHTML = '';

    if (state.blockingError) {
      const banner = document.createElement('div');
      banner.className = 'banner blocking';
      banner.dataset.testid = 'schema-banner';
      banner.textContent =
        `incompatible server payload: ${state.blockingError}`;
      this.root.appendChild(banner);
      return;
    }
    if (state.lastFailedAction) {
      const banner = document.createElement('div');
      banner.className = 'banner retry';
      banner.dataset.testid = 'retry-banner';
      banner.textContent = 'network failure — nothing was lost. ';
      const button = document.createElement('button');
      button.textContent = 'Retry';
      button.addEventListener('click', () => this.retry());
      banner.appendChild(button);
      this.root.appendChild(banner);
    }
    if (state.stale) {
      const banner = document.createElement('div');
      banner.className = 'banner stale';
      banner.dataset.testid = 'stale-banner';
      banner.textContent =
        'this session changed elsewhere; showing the server’s latest state';
      this.root.appendChild(banner);
    }
    const view = state.view;
    if (!view) return;

    renderStepper(this.root, view.session);
    if (view.session.status === 'complete') {
      renderCompletion(this.root, view.session);
      renderBeliefs(this.root, view.beliefs);
      return;
    }
    if (state.recommendation) {
      renderRecommendation(this.root, state.recommendation);
    }
    renderOutcomeForm(this.root, view.session, state.recommendation,
                      (submission) => void this.submitOutcome(submission));
    renderBeliefs(this.root, view.beliefs);
    renderWhatIf(this.root, view.session, this.lastWhatIf,
                 (design) => void this.explore(design));
  }
}

export function currentView(app: ConsoleApp): SessionView | null {
  return app.store.get().view;
}
