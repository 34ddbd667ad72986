/** Pure view-model: snapshot plus transcript in, render-ready data out.
 *
 * Nothing here touches the DOM or the network, so replaying a recorded
 * snapshot sequence through these functions is fully deterministic.
 */

import type { CellPair, MissionMap, MissionStatus, Snapshot } from "./types.js";

// Sequential blues for visit depth with a dark neutral for obstacles,
// purple plan line, orange vehicle: distinguishable under the common
// forms of color vision deficiency.
export const PALETTE = {
  obstacle: "#2b2d33",
  free: "#f4f7fb",
  visited: ["#bcd7eb", "#6ba3d0", "#2a6fb0"],
  plan: "#7b3294",
  vehicle: "#e66101",
} as const;

export const VISIT_CAP = 3;

export type ConnectionState =
  | "idle"
  | "connecting"
  | "live"
  | "reconnecting"
  | "gap"
  | "closed";

export interface TranscriptEntry {
  kind: "user" | "ack" | "error" | "info";
  text: string;
}

export interface CellView {
  row: number;
  col: number;
  kind: "free" | "obstacle";
  count: number;
  shade: string;
}

export interface ViewModel {
  grid: { width: number; height: number; cells: CellView[] } | null;
  vehicle: CellPair | null;
  planPoints: string;
  readouts: { cr: string; dr: string; step: number; status: MissionStatus | "-" };
  paused: boolean;
  banner: { kind: "complete" | "failed" | "reconnecting" | "gap"; text: string } | null;
  transcript: TranscriptEntry[];
  connection: ConnectionState;
  debug: string;
}

export function formatPct(value: number): string {
  return `${value.toFixed(1)}%`;
}

export function cellShade(kind: "free" | "obstacle", count: number): string {
  if (kind === "obstacle") return PALETTE.obstacle;
  if (count <= 0) return PALETTE.free;
  return PALETTE.visited[Math.min(count, VISIT_CAP) - 1]!;
}

/** Centerline of the remaining plan in cell units, vehicle first. */
export function planPolyline(position: CellPair | null, plan: CellPair[]): string {
  const points: CellPair[] = position ? [position, ...plan] : [...plan];
  return points.map(([r, c]) => `${c + 0.5},${r + 0.5}`).join(" ");
}

function buildCells(map: MissionMap, snapshot: Snapshot | null): CellView[] {
  const counts = new Map<number, number>();
  if (snapshot) {
    for (const [r, c, n] of snapshot.coverage) counts.set(r * map.width + c, n);
  }
  const blocked = new Set(map.obstacles.map(([r, c]) => r * map.width + c));
  const cells: CellView[] = [];
  for (let row = 0; row < map.height; row++) {
    for (let col = 0; col < map.width; col++) {
      const key = row * map.width + col;
      const kind = blocked.has(key) ? "obstacle" : "free";
      const count = kind === "free" ? (counts.get(key) ?? 0) : 0;
      cells.push({ row, col, kind, count, shade: cellShade(kind, count) });
    }
  }
  return cells;
}

function bannerFor(
  snapshot: Snapshot | null,
  connection: ConnectionState,
): ViewModel["banner"] {
  if (connection === "reconnecting")
    return { kind: "reconnecting", text: "stream dropped, reconnecting" };
  if (connection === "gap")
    return { kind: "gap", text: "stream lagged, resumed from current state" };
  if (snapshot?.status === "Complete")
    return { kind: "complete", text: `mission complete at step ${snapshot.step}` };
  if (snapshot?.status === "Failed")
    return {
      kind: "failed",
      text: `mission failed: ${snapshot.failure_cause ?? "unknown cause"}`,
    };
  return null;
}

function debugLine(snapshot: Snapshot | null): string {
  if (!snapshot) return "";
  const parts = [`planner ${snapshot.planner_activity.state}`];
  if (snapshot.planner_activity.rollout !== null)
    parts.push(`rollout ${snapshot.planner_activity.rollout}`);
  const pose = snapshot.pose_estimate;
  if (pose)
    parts.push(
      `pose (${pose.x.toFixed(2)}, ${pose.y.toFixed(2)}) residual ${pose.residual.toFixed(4)}` +
        (pose.confident ? "" : " (low confidence)"),
    );
  return parts.join(" | ");
}

export function buildViewModel(
  map: MissionMap | null,
  snapshot: Snapshot | null,
  transcript: TranscriptEntry[],
  connection: ConnectionState,
): ViewModel {
  return {
    grid: map
      ? { width: map.width, height: map.height, cells: buildCells(map, snapshot) }
      : null,
    vehicle: snapshot ? snapshot.position : null,
    planPoints: snapshot ? planPolyline(snapshot.position, snapshot.plan) : "",
    readouts: {
      cr: snapshot ? formatPct(snapshot.cr) : "-",
      dr: snapshot ? formatPct(snapshot.dr) : "-",
      step: snapshot ? snapshot.step : 0,
      status: snapshot ? snapshot.status : "-",
    },
    paused: snapshot?.paused ?? false,
    banner: bannerFor(snapshot, connection),
    transcript,
    connection,
    debug: debugLine(snapshot),
  };
}

/** True when `plan` is just `earlier` with some leading cells consumed. */
export function isPlanTail(plan: CellPair[], earlier: CellPair[]): boolean {
  if (plan.length > earlier.length) return false;
  const offset = earlier.length - plan.length;
  return plan.every(
    ([r, c], i) => earlier[offset + i]![0] === r && earlier[offset + i]![1] === c,
  );
}
