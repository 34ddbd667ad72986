import type { CellPair, MissionMap, Snapshot } from "../src/types.js";

export function makeMap(overrides: Partial<MissionMap> = {}): MissionMap {
  return {
    width: 6,
    height: 6,
    obstacles: [
      [2, 2],
      [2, 3],
    ],
    start: [0, 0],
    ...overrides,
  };
}

export function makeSnapshot(overrides: Partial<Snapshot> = {}): Snapshot {
  return {
    seq: 1,
    step: 0,
    position: [0, 0],
    plan: [
      [0, 1],
      [0, 2],
    ],
    coverage: [[0, 0, 1]],
    cr: 2.9,
    dr: 0.0,
    status: "Flying",
    last_instruction: "cover the entire area",
    pose_estimate: null,
    planner_activity: { state: "idle", rollout: null },
    paused: false,
    failure_cause: null,
    ...overrides,
  };
}

/**
 * A recorded-looking mission history: serpentine walk over the free
 * cells of makeMap()'s grid, coverage and metrics accumulating per step,
 * last snapshot Complete.
 */
export function syntheticRun(length: number): { map: MissionMap; snapshots: Snapshot[] } {
  const map = makeMap();
  const path: CellPair[] = [];
  for (let r = 0; r < map.height; r++) {
    const cols = [...Array(map.width).keys()];
    if (r % 2 === 1) cols.reverse();
    for (const c of cols) {
      if (!map.obstacles.some(([orow, ocol]) => orow === r && ocol === c)) path.push([r, c]);
    }
  }
  const freeCells = path.length;
  const visits = new Map<string, number>();
  const snapshots: Snapshot[] = [];
  let revisits = 0;
  for (let i = 0; i < length; i++) {
    const pos = path[Math.min(i, path.length - 1)]!;
    const key = `${pos[0]},${pos[1]}`;
    const prior = visits.get(key) ?? 0;
    if (prior > 0) revisits += 1;
    visits.set(key, prior + 1);
    const coverage: [number, number, number][] = [];
    for (const [cellKey, count] of visits) {
      const [r, c] = cellKey.split(",").map(Number) as [number, number];
      coverage.push([r, c, count]);
    }
    const covered = visits.size;
    const moves = i + 1;
    const last = i === length - 1;
    snapshots.push(
      makeSnapshot({
        seq: i + 1,
        step: i + 1,
        position: pos,
        plan: path.slice(Math.min(i, path.length - 1) + 1, Math.min(i, path.length - 1) + 4),
        coverage,
        cr: (covered / freeCells) * 100,
        dr: (revisits / moves) * 100,
        status: last ? "Complete" : "Flying",
      }),
    );
  }
  return { map, snapshots };
}

export async function waitFor(
  predicate: () => boolean,
  timeoutMs = 15_000,
  intervalMs = 25,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (predicate()) return;
    await new Promise((resolve) => setTimeout(resolve, intervalMs));
  }
  throw new Error("condition not reached in time");
}
