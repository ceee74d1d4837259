/** Wire-level and user-facing types for the environment binding. */

/** Task-configuration document accepted by `make`; unknown fields are
 * rejected by the host with a field-path error message. */
export interface TaskDocument {
  task?: string;
  vehicle?: string;
  level?: string;
  episode_length?: number;
  bounds?: number;
  nu_max?: number;
  fail_penalty?: number;
  target_position?: [number, number, number];
  target_yaw?: number;
  start_radius?: number;
  success_tol?: number;
  weights?: Record<string, number>;
  dock?: Record<string, number>;
  trajectory?: Record<string, unknown>;
}

/** Engine-configuration document (batch size, integrator, workers). */
export interface SimDocument {
  batch_size?: number;
  dt?: number;
  substeps?: number;
  workers?: number;
}

export interface MakeOptions {
  /** Domain-randomization preset name ("train", "test_env1", "test_env2"). */
  drPreset?: string;
  seed?: number;
  /** When true every step result carries the post-step batch state
   * (`p`, `quat`, `nu`), matching the trajectory-export records. */
  trace?: boolean;
}

/** One span of the flat observation vector: [name, start, end). */
export type ObsSpan = [name: string, start: number, end: number];

/** Environment metadata, identical to the core library's `spaces()`. */
export interface Spaces {
  task: string;
  vehicle: string;
  level: string;
  n_envs: number;
  obs_dim: number;
  action_dim: number;
  dt: number;
  episode_length: number;
  metric: string;
  obs_layout: ObsSpan[];
}

/** Per-step diagnostics, one entry per environment. */
export interface StepInfo {
  position_error: number[];
  attitude_error: number[];
  metric: number[];
  finished: boolean[];
  failure: boolean[];
  diverged: boolean[];
  success: boolean[];
  time: number[];
}

/** Post-step batch state reported in trace mode (row per environment). */
export interface StateTrace {
  p: number[][];
  quat: number[][];
  nu: number[][];
}

/** The conventional vectorized-env 5-tuple.  Finished rows are already
 * reset: their `obs` row starts the next episode. */
export interface StepResult {
  obs: number[][];
  reward: number[];
  terminated: boolean[];
  truncated: boolean[];
  info: StepInfo;
  state?: StateTrace;
}

/** Structured failure surfaced by the host (or by this client for
 * contract violations).  `kind` carries the host-side exception type,
 * e.g. "TaskError" with a field path in the message. */
export class EnvError extends Error {
  constructor(readonly kind: string, message: string) {
    super(message);
    this.name = "EnvError";
  }
}
