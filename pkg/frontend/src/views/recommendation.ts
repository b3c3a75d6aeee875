import { percentWidth, raw } from '../format.js';
import { Recommendation } from '../types.js';

export function renderRecommendation(root: HTMLElement,
                                     rec: Recommendation): void {
  const card = document.createElement('section');
  card.className = 'card recommendation';

  const title = document.createElement('h2');
  title.textContent = `Stage ${rec.step + 1}: recommended intervention`;
  card.appendChild(title);

  const design = document.createElement('p');
  design.className = 'design-line';
  design.dataset.testid = 'recommended-design';
  const target = rec.design.targets[0];
  design.innerHTML =
    `clamp <strong>X${target}</strong> to ` +
    `<strong data-testid="recommended-value">${raw(rec.design.values[0])}</strong>`;
  card.appendChild(design);

  if (rec.beyond_trained_horizon) {
    const warn = document.createElement('p');
    warn.className = 'warning';
    warn.textContent =
      'this session runs past the horizon the policy was trained for';
    card.appendChild(warn);
  }

  const bars = document.createElement('div');
  bars.className = 'score-bars';
  const maxScore = Math.max(...rec.target_scores);
  rec.target_scores.forEach((score, node) => {
    const row = document.createElement('div');
    row.className = 'score-row';
    const name = document.createElement('span');
    name.className = 'score-name';
    name.textContent = `X${node}`;
    const track = document.createElement('div');
    track.className = 'score-track';
    const fill = document.createElement('div');
    fill.className = 'score-fill';
    if (node === target) fill.classList.add('selected');
    fill.style.width = percentWidth(score, maxScore);
    track.appendChild(fill);
    const value = document.createElement('span');
    value.className = 'score-value';
    value.dataset.testid = `target-score-${node}`;
    value.textContent = raw(score);
    row.append(name, track, value);
    bars.appendChild(row);
  });
  card.appendChild(bars);
  root.appendChild(card);
}
