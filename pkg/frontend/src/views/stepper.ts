import { SessionInfo } from '../types.js';

export function renderStepper(root: HTMLElement, session: SessionInfo): void {
  const bar = document.createElement('div');
  bar.className = 'stepper';
  for (let t = 1; t <= session.horizon; t++) {
    const dot = document.createElement('span');
    dot.className = 'step-dot';
    if (t <= session.step) dot.classList.add('done');
    if (t === session.step + 1 && session.status === 'active') {
      dot.classList.add('current');
    }
    dot.textContent = String(t);
    bar.appendChild(dot);
  }
  const label = document.createElement('span');
  label.className = 'step-label';
  label.dataset.testid = 'step-counter';
  label.textContent = `${session.step}/${session.horizon}`;
  bar.appendChild(label);
  root.appendChild(bar);
}
