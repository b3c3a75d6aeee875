// Thin typed client over the service API. Every mutation is exactly one
// HTTP call; nothing is computed client-side.

import {
  CheckpointEntry,
  DesignSpec,
  Recommendation,
  SCHEMA,
  ServiceError,
  SessionView,
  WhatIfResult,
} from './types.js';

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let resp: Response;
  try {
    resp = await fetch(url, init);
  } catch (err) {
    throw new ServiceError(0, 'network', `network failure: ${err}`);
  }
  let body: any;
  try {
    body = await resp.json();
  } catch {
    throw new ServiceError(resp.status, 'bad_response', 'non-JSON response');
  }
  if (!resp.ok) {
    const err = body?.error ?? { code: 'unknown', message: 'request failed' };
    throw new ServiceError(resp.status, err.code, err.message);
  }
  if (body?.schema !== SCHEMA) {
    throw new ServiceError(resp.status, 'bad_schema',
      `unsupported payload schema: ${body?.schema}`);
  }
  return body as T;
}

export class ApiClient {
  constructor(private readonly base: string) {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  listCheckpoints(): Promise<{ checkpoints: CheckpointEntry[] }> {
    return request(this.url('/checkpoints'));
  }

  createSession(checkpoint: string, options: {
    horizon?: number;
    seed?: number;
    query?: Record<string, unknown>;
  } = {}): Promise<SessionView> {
    return request(this.url('/sessions'), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ schema: SCHEMA, checkpoint, ...options }),
    });
  }

  getSession(id: string): Promise<SessionView> {
    return request(this.url(`/sessions/${id}`));
  }

  getRecommendation(id: string): Promise<{ recommendation: Recommendation }> {
    return request(this.url(`/sessions/${id}/recommendation`));
  }

  submitOutcome(id: string, design: DesignSpec,
                outcomes: number[][]): Promise<SessionView> {
    return request(this.url(`/sessions/${id}/outcomes`), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ schema: SCHEMA, design, outcomes }),
    });
  }

  whatIf(id: string, design: DesignSpec, mcBudget = 256,
         seed = 0): Promise<{ whatif: WhatIfResult }> {
    return request(this.url(`/sessions/${id}/whatif`), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({
        schema: SCHEMA, design, mc_budget: mcBudget, seed,
      }),
    });
  }
}
