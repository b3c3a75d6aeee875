// In-memory stand-in for the design service, faithful to its wire contract.
// Values are deliberately awkward floats so that display comparisons catch
// any client-side re-computation.

import { vi } from 'vitest';

export interface MockOptions {
  d?: number;
  horizon?: number;
  objective?: 'effect' | 'graph';
  failNextRequests?: number;
  schemaOverride?: number;
}

export class MockService {
  d: number;
  horizon: number;
  objective: 'effect' | 'graph';
  step = 0;
  history: { design: { targets: number[]; values: number[] };
             rows: number[][] }[] = [];
  failNextRequests: number;
  schemaOverride: number | null;
  requests: { method: string; url: string; body: any }[] = [];
  externalWrites = 0;   // simulates a second tab appending outcomes

  constructor(options: MockOptions = {}) {
    this.d = options.d ?? 3;
    this.horizon = options.horizon ?? 3;
    this.objective = options.objective ?? 'effect';
    this.failNextRequests = options.failNextRequests ?? 0;
    this.schemaOverride = options.schemaOverride ?? null;
  }

  recommendation() {
    const scores = Array.from({ length: this.d },
      (_, i) => (i + 1) / ((this.d * (this.d + 1)) / 2));
    return {
      design: { targets: [this.step % this.d], values: [1.25 + this.step * 0.1] },
      target_scores: scores,
      step: this.step,
      beyond_trained_horizon: false,
    };
  }

  beliefs() {
    if (this.objective === 'graph') {
      const marginals = Array.from({ length: this.d }, (_, i) =>
        Array.from({ length: this.d }, (_, j) =>
          i === j ? 0 : 0.1 + 0.1 * (i * this.d + j) + this.step * 0.01));
      return { kind: 'graph', edge_marginals: marginals,
               n_samples: 0, seed: 7 };
    }
    const base = 0.1 + this.step * 0.30000000000000004;
    return {
      kind: 'effect',
      targets: [1, 2],
      mean: [base, -base],
      quantiles: {
        '5': [base - 2.000000001, -base - 2], '25': [base - 1, -base - 1],
        '50': [base, -base], '75': [base + 1, -base + 1],
        '95': [base + 2, -base + 2.0000000003],
      },
      n_samples: 1024,
      seed: 7,
    };
  }

  session() {
    return {
      id: 'mock-session',
      run: 'mock_run',
      status: this.step >= this.horizon ? 'complete' : 'active',
      step: this.step,
      horizon: this.horizon,
      d: this.d,
      objective: this.objective,
      query: { kind: this.objective },
      seed: 0,
      created_at: 0,
      updated_at: 0,
      history: this.history,
    };
  }

  view(withRecommendation: boolean) {
    const payload: any = {
      schema: this.schemaOverride ?? 1,
      session: this.session(),
      beliefs: this.beliefs(),
    };
    if (withRecommendation && this.step < this.horizon) {
      payload.recommendation = this.recommendation();
    }
    return payload;
  }

  error(status: number, code: string, message: string) {
    return new Response(
      JSON.stringify({ schema: 1, error: { code, message } }),
      { status, headers: { 'content-type': 'application/json' } });
  }

  json(payload: any, status = 200) {
    return new Response(JSON.stringify(payload),
      { status, headers: { 'content-type': 'application/json' } });
  }

  async handle(url: string, init?: RequestInit): Promise<Response> {
    const method = init?.method ?? 'GET';
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    this.requests.push({ method, url, body });
    if (this.failNextRequests > 0) {
      this.failNextRequests -= 1;
      throw new TypeError('fetch failed');
    }
    if (body && body.schema !== 1) {
      return this.error(400, 'bad_schema', 'payload schema must be 1');
    }
    if (method === 'POST' && url.endsWith('/sessions')) {
      return this.json(this.view(true), 201);
    }
    if (url.endsWith('/recommendation')) {
      if (this.step >= this.horizon) {
        return this.error(409, 'session_complete', 'already complete');
      }
      return this.json({ schema: 1, recommendation: this.recommendation() });
    }
    if (method === 'POST' && url.endsWith('/outcomes')) {
      const design = body.design;
      const rows: number[][] = body.outcomes;
      if (rows.some((r) => r.length !== this.d)) {
        return this.error(400, 'bad_outcomes',
          `outcome rows must have ${this.d} values`);
      }
      for (const [k, t] of design.targets.entries()) {
        if (rows.some((r) => r[t] !== design.values[k])) {
          return this.error(400, 'clamp_mismatch', 'clamp mismatch');
        }
      }
      this.step += 1 + this.externalWrites;
      this.externalWrites = 0;
      this.history.push({ design, rows });
      return this.json(this.view(true));
    }
    if (method === 'POST' && url.endsWith('/whatif')) {
      return this.json({
        schema: 1,
        whatif: {
          design: body.design,
          predictive_mean: Array.from({ length: this.d },
            (_, i) => i * 0.5 + 0.030000000000000002),
          predictive_std: Array.from({ length: this.d }, (_, i) => 0.25 + i),
          basis: 'conjugate_posterior',
          model_based: true,
          n_samples: body.mc_budget,
          seed: body.seed,
        },
      });
    }
    if (url.endsWith('/checkpoints')) {
      return this.json({
        schema: 1,
        checkpoints: [{ name: 'mock_run', objective: this.objective,
                        d: this.d, horizon: this.horizon }],
      });
    }
    if (url.includes('/sessions/')) {
      return this.json(this.view(false));
    }
    return this.error(404, 'not_found', url);
  }

  install(): void {
    vi.stubGlobal('fetch',
      (url: string, init?: RequestInit) => this.handle(String(url), init));
  }
}
