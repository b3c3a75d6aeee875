// Minimal observable store for the console state.

import { Recommendation, SessionView } from './types.js';

export interface ConsoleState {
  view: SessionView | null;
  recommendation: Recommendation | null;
  pending: boolean;
  stale: boolean;
  blockingError: string | null;
  lastFailedAction: (() => Promise<void>) | null;
}

type Listener = (state: ConsoleState) => void;

export class Store {
  private state: ConsoleState = {
    view: null,
    recommendation: null,
    pending: false,
    stale: false,
    blockingError: null,
    lastFailedAction: null,
  };

  private listeners: Listener[] = [];

  get(): ConsoleState {
    return this.state;
  }

  set(patch: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.state);
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }
}
