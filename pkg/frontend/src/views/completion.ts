import { historyCsv, raw } from '../format.js';
import { SessionInfo } from '../types.js';

export function renderCompletion(root: HTMLElement,
                                 session: SessionInfo): void {
  const card = document.createElement('section');
  card.className = 'card completion';
  const title = document.createElement('h2');
  title.dataset.testid = 'completion-title';
  title.textContent =
    `Session complete: ${session.step}/${session.horizon} stages recorded`;
  card.appendChild(title);

  const table = document.createElement('table');
  table.className = 'history-table';
  table.dataset.testid = 'history-table';
  const head = document.createElement('tr');
  for (const label of ['stage', 'design',
                       ...Array.from({ length: session.d }, (_, i) => `x${i}`)]) {
    const th = document.createElement('th');
    th.textContent = label;
    head.appendChild(th);
  }
  table.appendChild(head);
  session.history.forEach((step, stage) => {
    step.rows.forEach((row) => {
      const tr = document.createElement('tr');
      const stageTd = document.createElement('td');
      stageTd.textContent = String(stage + 1);
      const designTd = document.createElement('td');
      designTd.textContent =
        `do(X${step.design.targets[0]} = ${raw(step.design.values[0])})`;
      tr.append(stageTd, designTd);
      row.forEach((v) => {
        const td = document.createElement('td');
        td.textContent = raw(v);
        tr.appendChild(td);
      });
      table.appendChild(tr);
    });
  });
  card.appendChild(table);

  const download = document.createElement('a');
  download.className = 'csv-download';
  download.dataset.testid = 'csv-export';
  download.textContent = 'Download history as CSV';
  const csv = historyCsv(session.history, session.d);
  download.href = `data:text/csv;charset=utf-8,${encodeURIComponent(csv)}`;
  download.setAttribute('download', `session-${session.id}.csv`);
  card.appendChild(download);
  root.appendChild(card);
}
