import { parseCsvRows } from '../format.js';
import { DesignSpec, Recommendation, SessionInfo } from '../types.js';

export interface OutcomeSubmission {
  design: DesignSpec;
  outcomes: number[][];
}

/** Entry form for the performed design and its measured outcome rows.
 *
 * The design defaults to the recommendation but stays editable: the lab may
 * have run something else, and the record must reflect what actually
 * happened. Validation mirrors the service rules and renders inline.
 */
export function renderOutcomeForm(
  root: HTMLElement,
  session: SessionInfo,
  rec: Recommendation | null,
  onSubmit: (submission: OutcomeSubmission) => void,
): void {
  const card = document.createElement('section');
  card.className = 'card outcome-form';
  const title = document.createElement('h2');
  title.textContent = 'Record the performed experiment';
  card.appendChild(title);

  const form = document.createElement('form');
  form.noValidate = true;

  const designRow = document.createElement('div');
  designRow.className = 'form-row';
  const targetLabel = document.createElement('label');
  targetLabel.textContent = 'intervened node';
  const targetSelect = document.createElement('select');
  targetSelect.name = 'target';
  for (let node = 0; node < session.d; node++) {
    const opt = document.createElement('option');
    opt.value = String(node);
    opt.textContent = `X${node}`;
    targetSelect.appendChild(opt);
  }
  if (rec) targetSelect.value = String(rec.design.targets[0]);
  targetLabel.appendChild(targetSelect);

  const valueLabel = document.createElement('label');
  valueLabel.textContent = 'clamp value';
  const valueInput = document.createElement('input');
  valueInput.name = 'clamp';
  valueInput.type = 'text';
  if (rec) valueInput.value = String(rec.design.values[0]);
  valueLabel.appendChild(valueInput);
  designRow.append(targetLabel, valueLabel);
  form.appendChild(designRow);

  const designError = document.createElement('p');
  designError.className = 'inline-error';
  designError.dataset.testid = 'design-error';
  form.appendChild(designError);

  const gridLabel = document.createElement('p');
  gridLabel.textContent = 'measured values (one input per node):';
  form.appendChild(gridLabel);

  const grid = document.createElement('div');
  grid.className = 'outcome-grid';
  const inputs: HTMLInputElement[] = [];
  for (let node = 0; node < session.d; node++) {
    const wrap = document.createElement('label');
    wrap.textContent = `x${node}`;
    const input = document.createElement('input');
    input.type = 'text';
    input.name = `outcome-${node}`;
    inputs.push(input);
    wrap.appendChild(input);
    grid.appendChild(wrap);
  }
  form.appendChild(grid);

  const outcomeError = document.createElement('p');
  outcomeError.className = 'inline-error';
  outcomeError.dataset.testid = 'outcome-error';
  form.appendChild(outcomeError);

  const pasteLabel = document.createElement('details');
  const pasteSummary = document.createElement('summary');
  pasteSummary.textContent = 'or paste a CSV batch';
  pasteLabel.appendChild(pasteSummary);
  const pasteArea = document.createElement('textarea');
  pasteArea.name = 'csv';
  pasteArea.rows = 3;
  pasteArea.placeholder = `rows of ${session.d} comma-separated values`;
  pasteLabel.appendChild(pasteArea);
  form.appendChild(pasteLabel);

  const submit = document.createElement('button');
  submit.type = 'submit';
  submit.textContent = 'Submit outcome';
  form.appendChild(submit);

  function setError(el: HTMLElement, message: string): void {
    el.textContent = message;
    el.classList.toggle('visible', message.length > 0);
  }

  form.addEventListener('submit', (event) => {
    event.preventDefault();
    setError(designError, '');
    setError(outcomeError, '');

    const target = Number(targetSelect.value);
    const clamp = Number(valueInput.value);
    if (!isFinite(clamp)) {
      setError(designError, 'clamp value must be a number');
      return;
    }
    const design: DesignSpec = { targets: [target], values: [clamp] };

    let rows: number[][];
    if (pasteArea.value.trim()) {
      try {
        rows = parseCsvRows(pasteArea.value, session.d);
      } catch (err) {
        setError(outcomeError, String((err as Error).message));
        return;
      }
    } else {
      const row: number[] = [];
      for (let node = 0; node < session.d; node++) {
        const v = Number(inputs[node].value);
        if (inputs[node].value.trim() === '' || !isFinite(v)) {
          setError(outcomeError, `x${node} needs a numeric value`);
          return;
        }
        row.push(v);
      }
      rows = [row];
    }
    for (const row of rows) {
      if (row[target] !== clamp) {
        setError(outcomeError,
          `column x${target} must equal the clamp value ${clamp} ` +
          '(it was held there during the experiment)');
        return;
      }
    }
    onSubmit({ design, outcomes: rows });
  });

  card.appendChild(form);
  root.appendChild(card);
}
