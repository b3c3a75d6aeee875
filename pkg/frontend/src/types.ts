// Payload shapes of the design-service HTTP API (schema version 1).

export const SCHEMA = 1;

export interface DesignSpec {
  targets: number[];
  values: number[];
}

export interface HistoryStep {
  design: DesignSpec;
  rows: number[][];
}

export interface SessionInfo {
  id: string;
  run: string;
  status: 'active' | 'complete';
  step: number;
  horizon: number;
  d: number;
  objective: string;
  query: Record<string, unknown>;
  seed: number;
  created_at: number;
  updated_at: number;
  history: HistoryStep[];
}

export interface EffectBeliefs {
  kind: 'effect' | 'theta';
  targets?: number[];
  edges?: number[][];
  mean: number[];
  quantiles: Record<string, number[]>;
  n_samples: number;
  seed: number;
}

export interface GraphBeliefs {
  kind: 'graph';
  edge_marginals: number[][];
  n_samples: number;
  seed: number;
}

export type Beliefs = EffectBeliefs | GraphBeliefs;

export interface Recommendation {
  design: DesignSpec;
  target_scores: number[];
  step: number;
  beyond_trained_horizon: boolean;
}

export interface SessionView {
  schema: number;
  session: SessionInfo;
  beliefs: Beliefs;
  recommendation?: Recommendation;
}

export interface WhatIfResult {
  design: DesignSpec;
  predictive_mean: number[];
  predictive_std: number[];
  basis: string;
  model_based: boolean;
  n_samples: number;
  seed: number;
}

export interface CheckpointEntry {
  name: string;
  objective?: string;
  d?: number;
  horizon?: number;
  config_hash?: string;
}

export interface ApiError {
  code: string;
  message: string;
}

export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}
