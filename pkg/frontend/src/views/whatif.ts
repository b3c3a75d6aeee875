import { percentWidth, raw } from '../format.js';
import { DesignSpec, SessionInfo, WhatIfResult } from '../types.js';

export function renderWhatIf(
  root: HTMLElement,
  session: SessionInfo,
  last: WhatIfResult | null,
  onExplore: (design: DesignSpec) => void,
): void {
  const card = document.createElement('section');
  card.className = 'card whatif';
  const title = document.createElement('h2');
  title.textContent = 'What if?';
  card.appendChild(title);

  const form = document.createElement('form');
  form.noValidate = true;
  const targetSelect = document.createElement('select');
  targetSelect.name = 'whatif-target';
  for (let node = 0; node < session.d; node++) {
    const opt = document.createElement('option');
    opt.value = String(node);
    opt.textContent = `X${node}`;
    targetSelect.appendChild(opt);
  }
  const valueInput = document.createElement('input');
  valueInput.type = 'text';
  valueInput.name = 'whatif-value';
  valueInput.value = '0';
  const go = document.createElement('button');
  go.type = 'submit';
  go.textContent = 'Preview outcome';
  const error = document.createElement('span');
  error.className = 'inline-error';
  error.dataset.testid = 'whatif-error';
  form.append(targetSelect, valueInput, go, error);
  form.addEventListener('submit', (event) => {
    event.preventDefault();
    const value = Number(valueInput.value);
    if (!isFinite(value)) {
      error.textContent = 'value must be a number';
      error.classList.add('visible');
      return;
    }
    error.textContent = '';
    error.classList.remove('visible');
    onExplore({ targets: [Number(targetSelect.value)], values: [value] });
  });
  card.appendChild(form);

  if (last) {
    const note = document.createElement('p');
    note.className = 'whatif-note';
    note.textContent =
      `model-based prediction (${last.basis}, ${raw(last.n_samples)} draws, ` +
      `seed ${raw(last.seed)})`;
    card.appendChild(note);
    const rows = document.createElement('div');
    rows.className = 'whatif-rows';
    rows.dataset.testid = 'whatif-result';
    const maxAbs = Math.max(
      ...last.predictive_mean.map(Math.abs),
      ...last.predictive_std,
      1e-9,
    );
    last.predictive_mean.forEach((mean, node) => {
      const row = document.createElement('div');
      row.className = 'whatif-row';
      const name = document.createElement('span');
      name.textContent = `x${node}`;
      const track = document.createElement('div');
      track.className = 'whatif-track';
      const bar = document.createElement('div');
      bar.className = 'whatif-bar';
      bar.style.width = percentWidth(Math.abs(mean), maxAbs);
      if (mean < 0) bar.classList.add('negative');
      track.appendChild(bar);
      const text = document.createElement('span');
      text.dataset.testid = `whatif-node-${node}`;
      text.textContent =
        `${raw(mean)} ± ${raw(last.predictive_std[node])}`;
      row.append(name, track, text);
      rows.appendChild(row);
    });
    card.appendChild(rows);
  }
  root.appendChild(card);
}
