import { afterEach, beforeEach, describe, expect, it, vi } from 'vitest';

import { ApiClient } from '../src/api.js';
import { ConsoleApp } from '../src/app.js';
import { MockService } from './mock_service.js';

function setup(options = {}) {
  const service = new MockService(options);
  service.install();
  document.body.innerHTML = '<div id="root"></div>';
  const root = document.getElementById('root')!;
  const app = new ConsoleApp(new ApiClient('http://svc'), root);
  return { service, root, app };
}

function fill(root: HTMLElement, name: string, value: string) {
  const el = root.querySelector(`[name="${name}"]`) as HTMLInputElement;
  el.value = value;
}

async function submitOutcome(root: HTMLElement, service: MockService) {
  const rec = service.recommendation();
  const target = rec.design.targets[0];
  for (let i = 0; i < service.d; i++) {
    fill(root, `outcome-${i}`,
         i === target ? String(rec.design.values[0]) : `0.${i}`);
  }
  const form = root.querySelector('.outcome-form form') as HTMLFormElement;
  form.dispatchEvent(new Event('submit', { bubbles: true, cancelable: true }));
  await vi.waitFor(() => {
    if ((root.querySelector('[data-testid="step-counter"]') as HTMLElement)
        .textContent === null) throw new Error('not rendered');
  });
  await new Promise((r) => setTimeout(r, 0));
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe('session flow', () => {
  it('completes a three-stage loop and renders the completion table', async () => {
    const { service, root, app } = setup({ horizon: 3 });
    await app.start('mock_run');

    for (let stage = 0; stage < 3; stage++) {
      const counter = root.querySelector('[data-testid="step-counter"]')!;
      expect(counter.textContent).toBe(`${stage}/3`);
      expect(root.querySelector('[data-testid="recommended-design"]'))
        .not.toBeNull();
      await submitOutcome(root, service);
    }

    expect(root.querySelector('[data-testid="completion-title"]')!.textContent)
      .toContain('3/3');
    const table = root.querySelector('[data-testid="history-table"]')!;
    expect(table.querySelectorAll('tr')).toHaveLength(4); // header + 3 rows
    // inputs are gone once complete
    expect(root.querySelector('.outcome-form')).toBeNull();
    const download = root.querySelector('[data-testid="csv-export"]')!;
    expect(download.getAttribute('href')).toContain('data:text/csv');
    const csv = decodeURIComponent(
      download.getAttribute('href')!.split(',')[1]);
    expect(csv.split('\n')[0]).toBe('stage,target,clamp,x0,x1,x2');
  });

  it('displays recommendation values exactly as served', async () => {
    const { service, root, app } = setup();
    await app.start('mock_run');
    const rec = service.recommendation();
    const shown = root.querySelector('[data-testid="recommended-value"]')!;
    expect(shown.textContent).toBe(String(rec.design.values[0]));
    rec.target_scores.forEach((score, node) => {
      const cell = root.querySelector(`[data-testid="target-score-${node}"]`)!;
      expect(cell.textContent).toBe(String(score));
    });
  });

  it('one outcome submission equals exactly one POST', async () => {
    const { service, root, app } = setup();
    await app.start('mock_run');
    const before = service.requests.filter(
      (r) => r.url.endsWith('/outcomes')).length;
    await submitOutcome(root, service);
    const after = service.requests.filter(
      (r) => r.url.endsWith('/outcomes')).length;
    expect(after - before).toBe(1);
  });

  it('shows a stale banner when another writer advanced the session', async () => {
    const { service, root, app } = setup();
    await app.start('mock_run');
    service.externalWrites = 1;   // concurrent tab writes before our submit
    await submitOutcome(root, service);
    expect(root.querySelector('[data-testid="stale-banner"]')).not.toBeNull();
    // and the rendered state is the server's, not ours
    expect(root.querySelector('[data-testid="step-counter"]')!.textContent)
      .toBe('2/3');
  });

  it('network failure offers retry without losing state', async () => {
    const { service, root, app } = setup();
    await app.start('mock_run');
    service.failNextRequests = 1;
    await submitOutcome(root, service);
    const banner = root.querySelector('[data-testid="retry-banner"]');
    expect(banner).not.toBeNull();
    expect(root.querySelector('[data-testid="step-counter"]')!.textContent)
      .toBe('0/3');
    (banner!.querySelector('button') as HTMLButtonElement).click();
    await new Promise((r) => setTimeout(r, 0));
    expect(root.querySelector('[data-testid="step-counter"]')!.textContent)
      .toBe('1/3');
  });

  it('unknown schema raises a blocking banner with no partial render', async () => {
    const { root, app } = setup({ schemaOverride: 2 });
    await app.start('mock_run');
    expect(root.querySelector('[data-testid="schema-banner"]')).not.toBeNull();
    expect(root.querySelector('.card')).toBeNull();
  });
});
