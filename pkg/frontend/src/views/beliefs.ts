import { percentWidth, raw } from '../format.js';
import { Beliefs, EffectBeliefs, GraphBeliefs } from '../types.js';

const QUANTILE_ORDER = ['5', '25', '50', '75', '95'];

function renderHeatmap(root: HTMLElement, beliefs: GraphBeliefs): void {
  const d = beliefs.edge_marginals.length;
  const table = document.createElement('table');
  table.className = 'heatmap';
  table.dataset.testid = 'edge-heatmap';
  const head = document.createElement('tr');
  head.appendChild(document.createElement('th'));
  for (let j = 0; j < d; j++) {
    const th = document.createElement('th');
    th.textContent = `→X${j}`;
    head.appendChild(th);
  }
  table.appendChild(head);
  for (let i = 0; i < d; i++) {
    const tr = document.createElement('tr');
    const th = document.createElement('th');
    th.textContent = `X${i}`;
    tr.appendChild(th);
    for (let j = 0; j < d; j++) {
      const td = document.createElement('td');
      const p = beliefs.edge_marginals[i][j];
      td.dataset.testid = `marginal-${i}-${j}`;
      td.textContent = raw(p);
      // opacity tracks the displayed probability; the number itself is
      // exactly what the server sent
      td.style.backgroundColor = `rgba(31, 119, 180, ${Math.min(1, Math.max(0, p))})`;
      if (i === j) td.classList.add('diagonal');
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
  root.appendChild(table);
}

function renderQuantileStrip(root: HTMLElement, beliefs: EffectBeliefs): void {
  const strip = document.createElement('div');
  strip.className = 'quantile-strip';
  strip.dataset.testid = 'quantile-strip';
  const names = beliefs.kind === 'effect'
    ? (beliefs.targets ?? []).map((t) => `X${t}`)
    : (beliefs.edges ?? []).map(([i, j]) => `w(${i}→${j})`);
  beliefs.mean.forEach((mean, k) => {
    const row = document.createElement('div');
    row.className = 'quantile-row';
    const label = document.createElement('span');
    label.className = 'quantile-label';
    label.textContent = names[k] ?? `z${k}`;
    row.appendChild(label);

    const band = document.createElement('div');
    band.className = 'quantile-band';
    const qs = QUANTILE_ORDER.map((q) => beliefs.quantiles[q][k]);
    const lo = qs[0];
    const hi = qs[qs.length - 1];
    const span = hi - lo || 1;
    const outer = document.createElement('div');
    outer.className = 'band-outer';
    const inner = document.createElement('div');
    inner.className = 'band-inner';
    inner.style.left = percentWidth(qs[1] - lo, span);
    inner.style.width = percentWidth(qs[3] - qs[1], span);
    const median = document.createElement('div');
    median.className = 'band-median';
    median.style.left = percentWidth(qs[2] - lo, span);
    outer.append(inner, median);
    band.appendChild(outer);
    row.appendChild(band);

    const numbers = document.createElement('span');
    numbers.className = 'quantile-numbers';
    numbers.dataset.testid = `quantiles-${k}`;
    numbers.textContent = qs.map(raw).join(' | ');
    const meanEl = document.createElement('span');
    meanEl.className = 'quantile-mean';
    meanEl.dataset.testid = `belief-mean-${k}`;
    meanEl.textContent = raw(mean);
    row.append(numbers, meanEl);
    strip.appendChild(row);
  });
  root.appendChild(strip);
}

export function renderBeliefs(root: HTMLElement, beliefs: Beliefs): void {
  const card = document.createElement('section');
  card.className = 'card beliefs';
  const title = document.createElement('h2');
  title.textContent = beliefs.kind === 'graph'
    ? 'Edge beliefs (posterior marginals)'
    : 'Query beliefs (posterior draws)';
  card.appendChild(title);

  if (beliefs.kind === 'graph') {
    renderHeatmap(card, beliefs);
  } else {
    renderQuantileStrip(card, beliefs);
  }

  const meta = document.createElement('p');
  meta.className = 'belief-meta';
  meta.dataset.testid = 'belief-meta';
  meta.textContent =
    `samples: ${raw(beliefs.n_samples)}, seed: ${raw(beliefs.seed)}`;
  card.appendChild(meta);
  root.appendChild(card);
}
