// Bootstrap: checkpoint picker, then the session loop.

import { ApiClient } from './api.js';
import { ConsoleApp } from './app.js';

function serviceBase(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get('service') ?? window.location.origin;
}

async function boot(): Promise<void> {
  const root = document.getElementById('app');
  if (!root) throw new Error('missing #app element');
  const api = new ApiClient(serviceBase());

  const picker = document.createElement('section');
  picker.className = 'card picker';
  const title = document.createElement('h1');
  title.textContent = 'Adaptive experiment console';
  picker.appendChild(title);

  const { checkpoints } = await api.listCheckpoints();
  if (!checkpoints.length) {
    const empty = document.createElement('p');
    empty.textContent = 'no checkpoints available on this service';
    picker.appendChild(empty);
    root.appendChild(picker);
    return;
  }
  const select = document.createElement('select');
  for (const entry of checkpoints) {
    const opt = document.createElement('option');
    opt.value = entry.name;
    opt.textContent =
      `${entry.name} (${entry.objective ?? '?'}, d=${entry.d ?? '?'})`;
    select.appendChild(opt);
  }
  const start = document.createElement('button');
  start.textContent = 'Start session';
  picker.append(select, start);
  root.appendChild(picker);

  start.addEventListener('click', () => {
    picker.remove();
    const stage = document.createElement('main');
    stage.id = 'session';
    root.appendChild(stage);
    const app = new ConsoleApp(api, stage);
    void app.start(select.value);
  });
}

void boot();
