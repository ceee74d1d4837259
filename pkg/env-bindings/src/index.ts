export { EnvClient, type ClientOptions } from "./client.js";
export {
  EnvError,
  type MakeOptions,
  type ObsSpan,
  type SimDocument,
  type Spaces,
  type StateTrace,
  type StepInfo,
  type StepResult,
  type TaskDocument,
} from "./types.js";
