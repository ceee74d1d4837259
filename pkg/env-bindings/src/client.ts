/** Child-process client for the core library's stdio environment host.
 *
 * One `EnvClient` owns one host process and one environment handle.
 * Requests are strictly sequential: issuing a call while another is in
 * flight is a contract violation and is rejected immediately.  Non-finite
 * floats cross the boundary as JSON nulls and are restored to NaN here,
 * so callers always see plain number arrays.
 */

import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { createInterface, type Interface } from "node:readline";

import {
  EnvError,
  type MakeOptions,
  type SimDocument,
  type Spaces,
  type StepInfo,
  type StepResult,
  type TaskDocument,
} from "./types.js";

export interface ClientOptions {
  /** Interpreter for the host process; UUVSIM_PYTHON overrides the
   * default "python3". */
  python?: string;
  /** Extra arguments placed before "-m uuvsim.envhost". */
  pythonArgs?: string[];
}

const FLOAT_INFO_KEYS = ["position_error", "attitude_error", "metric", "time"] as const;

function reviveVec(row: (number | null)[]): number[] {
  return row.map((x) => (x === null ? NaN : x));
}

function reviveMat(rows: (number | null)[][]): number[][] {
  return rows.map(reviveVec);
}

export class EnvClient {
  private readonly child: ChildProcessWithoutNullStreams;
  private readonly lines: Interface;
  private pending: { resolve: (reply: any) => void; reject: (err: Error) => void } | null = null;
  private stderrTail = "";
  private closed = false;
  private exitCode: Promise<number | null>;
  private cachedSpaces: Spaces | null = null;

  constructor(options: ClientOptions = {}) {
    const python = options.python ?? process.env.UUVSIM_PYTHON ?? "python3";
    const args = [...(options.pythonArgs ?? []), "-m", "uuvsim.envhost"];
    this.child = spawn(python, args, { stdio: ["pipe", "pipe", "pipe"] });
    this.lines = createInterface({ input: this.child.stdout });
    this.lines.on("line", (line) => this.onLine(line));
    this.child.stderr.on("data", (chunk) => {
      this.stderrTail = (this.stderrTail + chunk.toString()).slice(-2000);
    });
    this.exitCode = new Promise((resolve) => {
      this.child.on("exit", (code) => {
        if (this.pending) {
          const { reject } = this.pending;
          this.pending = null;
          reject(new EnvError("HostExit", `host exited with code ${code}: ${this.stderrTail}`));
        }
        resolve(code);
      });
    });
  }

  private onLine(line: string): void {
    if (!this.pending) return; // host never sends unsolicited lines
    const { resolve, reject } = this.pending;
    this.pending = null;
    let reply: any;
    try {
      reply = JSON.parse(line);
    } catch (err) {
      reject(new EnvError("ProtocolError", `unparseable host reply: ${line.slice(0, 200)}`));
      return;
    }
    if (reply && reply.ok === true) resolve(reply);
    else reject(new EnvError(reply?.error?.type ?? "HostError",
                             reply?.error?.message ?? "malformed host reply"));
  }

  private request(req: Record<string, unknown>): Promise<any> {
    if (this.closed) {
      return Promise.reject(new EnvError("Closed", "client is closed"));
    }
    if (this.pending) {
      return Promise.reject(new EnvError(
        "ContractViolation", "one request at a time: the previous call has not settled"));
    }
    return new Promise((resolve, reject) => {
      this.pending = { resolve, reject };
      this.child.stdin.write(JSON.stringify(req) + "\n");
    });
  }

  /** Construct the environment.  May be called once per client; the
   * returned metadata (and the cached dimensions) never change. */
  async make(task: TaskDocument, sim: SimDocument = {}, options: MakeOptions = {}): Promise<Spaces> {
    if (this.cachedSpaces) {
      throw new EnvError("ContractViolation", "this handle is already bound to an environment");
    }
    const reply = await this.request({
      op: "make", task, sim,
      dr_preset: options.drPreset ?? null,
      seed: options.seed ?? 0,
      trace: options.trace ?? false,
    });
    this.cachedSpaces = reply.spaces as Spaces;
    return this.cachedSpaces;
  }

  /** Metadata cached at make time (throws before make). */
  get meta(): Spaces {
    if (!this.cachedSpaces) throw new EnvError("ContractViolation", "make the environment first");
    return this.cachedSpaces;
  }

  get nEnvs(): number { return this.meta.n_envs; }
  get obsDim(): number { return this.meta.obs_dim; }
  get actionDim(): number { return this.meta.action_dim; }

  /** Re-query the live metadata from the host. */
  async spaces(): Promise<Spaces> {
    const reply = await this.request({ op: "spaces" });
    return reply.spaces as Spaces;
  }

  /** Reset all environments (or the masked subset) and return the first
   * observations, one row per environment. */
  async reset(mask?: boolean[]): Promise<number[][]> {
    const req: Record<string, unknown> = { op: "reset" };
    if (mask !== undefined) req.mask = mask;
    const reply = await this.request(req);
    return reviveMat(reply.obs);
  }

  /** Advance one control step.  `commands` is row-major, one row of
   * `actionDim` normalized commands per environment.  Finished rows come
   * back already reset per the auto-reset convention. */
  async step(commands: number[][]): Promise<StepResult> {
    const reply = await this.request({ op: "step", commands });
    const info = reply.info as StepInfo;
    for (const key of FLOAT_INFO_KEYS) info[key] = reviveVec(info[key]);
    const result: StepResult = {
      obs: reviveMat(reply.obs),
      reward: reviveVec(reply.reward),
      terminated: reply.terminated,
      truncated: reply.truncated,
      info,
    };
    if (reply.state) {
      result.state = {
        p: reviveMat(reply.state.p),
        quat: reviveMat(reply.state.quat),
        nu: reviveMat(reply.state.nu),
      };
    }
    return result;
  }

  /** Rebuild the environment from its stored config with a new seed. */
  async seed(seed: number): Promise<void> {
    await this.request({ op: "seed", seed });
  }

  /** Shut the host down and wait for it to exit. */
  async close(): Promise<number | null> {
    if (!this.closed) {
      await this.request({ op: "close" });
      this.closed = true;
      this.child.stdin.end();
    }
    return this.exitCode;
  }

  /** Hard-kill the host (error paths only). */
  dispose(): void {
    this.closed = true;
    this.child.kill();
  }
}
