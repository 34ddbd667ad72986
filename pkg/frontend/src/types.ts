/** Payload shapes of the coverage-pilot service, mirrored by hand.
 *
 * The service is the source of truth; these types follow its JSON
 * schemas field for field. Row/column pairs arrive as two-element
 * arrays, coverage as sparse [row, col, count] triples.
 */

export type CellPair = [number, number];

export type MissionStatus = "Idle" | "Planning" | "Flying" | "Complete" | "Failed";

export interface PoseEstimate {
  x: number;
  y: number;
  residual: number;
  confident: boolean;
}

export interface PlannerActivity {
  state: "idle" | "searching";
  rollout: number | null;
}

export interface Snapshot {
  seq: number;
  step: number;
  position: CellPair;
  plan: CellPair[];
  coverage: [number, number, number][];
  cr: number;
  dr: number;
  status: MissionStatus;
  last_instruction: string;
  pose_estimate: PoseEstimate | null;
  planner_activity: PlannerActivity;
  paused: boolean;
  failure_cause: string | null;
}

/** Slow-consumer marker interleaved into a stream before the current snapshot. */
export interface GapMarker {
  resume_from: number;
}

export type StreamEvent = Snapshot | GapMarker;

export function isGapMarker(ev: StreamEvent): ev is GapMarker {
  return "resume_from" in ev;
}

export interface MissionMap {
  width: number;
  height: number;
  obstacles: CellPair[];
  start: CellPair;
}

export interface GenerateSpec {
  width: number;
  height: number;
  density: number;
  seed: number;
}

export interface StartMissionRequest {
  id: string;
  instruction: string;
  planner?: "mcts" | "single-shot";
  generate?: GenerateSpec;
  map?: { width: number; height: number; obstacles: CellPair[]; start: CellPair };
  seed?: number;
  replace?: boolean;
  target_cr?: number;
  max_steps?: number;
  replan_every?: number;
  n_rollouts?: number;
  pace_s?: number;
  simulate_localization?: boolean;
}

export interface InstructionAck {
  ok: boolean;
  scheduled_step: number;
}

export type ControlCommand = "pause" | "resume" | "abort";

export interface ServiceMeta {
  service: string;
  version: string;
  planners: string[];
  missions: string[];
  endpoints: string[];
}
