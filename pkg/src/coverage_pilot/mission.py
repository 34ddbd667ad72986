"""Sequential plan-execute-update mission loop.

The vehicle starts on its start cell with that cell already counted as
visited. Each cycle plans a path from the current position, flies one
waypoint per step, and updates the coverage map. Replanning happens on plan
exhaustion, on instruction change, and on a fixed step cadence; a fresh
instruction submitted mid-flight takes effect at the next step boundary.

The loop pieces (plan_step, execute_step, submit_instruction) are public so
an external driver such as the ground-station service can run the same
cycle under its own scheduling, interleaving queued commands at step
boundaries.
"""

from __future__ import annotations

import enum
import hashlib
import json
import random
import time
from dataclasses import dataclass, field

from .gridworld import (
    Cell,
    CoverageMap,
    GridMap,
    Trajectory,
    coverage_sets,
    reachable_free_cells,
    validate_path,
)
from .proposer import ActionKind, Instruction, ProposerAction


from .mcts import MctsConfig, run_search


class MissionSetupError(ValueError):
    """The mission inputs are unusable (disconnected map, bad start)."""


class MissionStatus(enum.Enum):
    IDLE = "Idle"
    PLANNING = "Planning"
    FLYING = "Flying"
    COMPLETE = "Complete"
    FAILED = "Failed"


@dataclass(frozen=True)
class MissionConfig:
    target_cr: float = 0.95
    replan_every: int = 5
    planner_retries: int = 1
    max_steps: int = 400

    def __post_init__(self):
        if not 0.0 < self.target_cr <= 1.0:
            raise ValueError("target_cr must lie in (0, 1]")
        if self.replan_every < 1:
            raise ValueError("replan_every must be at least 1")
        if self.planner_retries < 0:
            raise ValueError("planner_retries must be nonnegative")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


@dataclass
class MissionState:
    grid: GridMap
    coverage: CoverageMap
    position: Cell
    instruction: Instruction
    step: int = 0
    plan: tuple[Cell, ...] = ()
    status: MissionStatus = MissionStatus.IDLE
    history: list[Cell] = field(default_factory=list)
    needs_replan: bool = True
    last_plan_step: int = 0
    replans: int = 0
    failure_cause: str | None = None
    collided: bool = False

    def cr(self) -> float:
        n_free, n_vis, _ = coverage_sets(self.coverage, self.grid)
        return n_vis / n_free if n_free else 0.0

    def dr(self) -> float:
        _, n_vis, n_rev = coverage_sets(self.coverage, self.grid)
        return n_rev / n_vis if n_vis else 0.0


@dataclass
class MissionMetrics:
    """Per-mission outcome summary; fleet-level aggregation lives elsewhere."""

    cr: float = 0.0
    dr: float = 0.0
    steps: int = 0
    replans: int = 0
    collided: bool = False
    completed: bool = False
    plan_latencies_s: list[float] = field(default_factory=list)

    def mean_plan_latency_s(self) -> float:
        if not self.plan_latencies_s:
            return 0.0
        return sum(self.plan_latencies_s) / len(self.plan_latencies_s)


def make_mission(grid: GridMap, instruction: Instruction | str, start: Cell | None = None) -> MissionState:
    """Fresh Idle mission with the start cell counted as visited once.

    Rejects maps whose free region is not fully reachable from the start,
    naming a few of the unreachable cells.
    """
    if start is None:
        start = grid.start
    start = Cell(*start)
    if not grid.is_free(start):
        raise MissionSetupError(f"start cell {tuple(start)} is not a free in-bounds cell")
    reachable = reachable_free_cells(grid, start)
    unreachable = sorted(set(grid.free_cells()) - reachable)
    if unreachable:
        shown = ", ".join(str(tuple(c)) for c in unreachable[:5])
        raise MissionSetupError(
            f"map is disconnected: {len(unreachable)} free cells unreachable from start, e.g. {shown}"
        )
    if isinstance(instruction, str):
        instruction = Instruction(instruction)
    coverage = CoverageMap.fresh(grid).visit(start)
    return MissionState(grid=grid, coverage=coverage, position=start, instruction=instruction)


def _accept_plan(state: MissionState, trajectory: Trajectory | None) -> str | None:
    """Vet a planner proposal; install it and return None, or a rejection reason.

    The proposal must be a valid path whose first waypoint is the current
    position; that leading waypoint is stripped so the stored plan holds
    only cells still to fly.
    """
    if trajectory is None or len(trajectory) == 0:
        return "planner returned no trajectory"
    if trajectory[0] != state.position:
        return f"plan starts at {tuple(trajectory[0])}, not current position {tuple(state.position)}"
    report = validate_path(state.grid, trajectory)
    if not report.valid:
        return f"plan fails validation: {report.summary()}"
    state.plan = tuple(trajectory.waypoints[1:])
    return None


def plan_step(state: MissionState, planner, config: MissionConfig = MissionConfig(), seed: int = 0) -> MissionState:
    """Replace the plan via the planner; one retry on rejection, then Failed.

    No-op unless the mission is Idle or Flying. On success the mission is
    Flying with a plan of pending waypoints (possibly empty when coverage is
    already at target).
    """
    if state.status not in (MissionStatus.IDLE, MissionStatus.FLYING):
        return state
    state.status = MissionStatus.PLANNING
    reason = None
    for attempt in range(config.planner_retries + 1):
        trajectory = planner.plan(state.grid, state.coverage, state.instruction, state.position, seed + attempt)
        reason = _accept_plan(state, trajectory)
        if reason is None:
            break
    if reason is not None:
        state.status = MissionStatus.FAILED
        state.failure_cause = f"planner failure: {reason}"
        return state
    state.needs_replan = False
    state.last_plan_step = state.step
    state.replans += 1
    if _coverage_done(state, config):
        state.status = MissionStatus.COMPLETE
    else:
        state.status = MissionStatus.FLYING
    return state


def _coverage_done(state: MissionState, config: MissionConfig) -> bool:
    return state.cr() >= config.target_cr


def execute_step(state: MissionState, config: MissionConfig = MissionConfig()) -> MissionState:
    """Fly to the plan's first waypoint and update coverage.

    The waypoint must be a free cell exactly one four-connected step away;
    anything else fails the mission (an obstacle target additionally marks
    a collision).
    """
    if state.status is not MissionStatus.FLYING or not state.plan:
        raise ValueError("execute_step requires a Flying mission with a pending plan")
    if _coverage_done(state, config):
        state.status = MissionStatus.COMPLETE
        return state
    target = state.plan[0]
    if not state.grid.in_bounds(target) or not state.grid.is_free(target):
        state.status = MissionStatus.FAILED
        state.collided = True
        state.failure_cause = f"collision: waypoint {tuple(target)} is not a free cell"
        return state
    if abs(target.row - state.position.row) + abs(target.col - state.position.col) != 1:
        state.status = MissionStatus.FAILED
        state.failure_cause = f"connectivity breach: {tuple(state.position)} to {tuple(target)}"
        return state
    state.coverage = state.coverage.visit(target)
    state.position = target
    state.plan = state.plan[1:]
    state.step += 1
    state.history.append(target)
    if _coverage_done(state, config):
        state.status = MissionStatus.COMPLETE
    return state


def submit_instruction(state: MissionState, instruction: Instruction | str) -> MissionState:
    """Swap in a new instruction; a replan fires at the next step boundary.

    Re-submitting identical text still schedules a replan. A Complete
    mission returns to Flying when uncovered cells remain.
    """
    if state.status is MissionStatus.FAILED:
        raise ValueError("cannot instruct a Failed mission")
    if isinstance(instruction, str):
        instruction = Instruction(instruction)
    state.instruction = instruction
    state.needs_replan = True
    if state.status is MissionStatus.COMPLETE:
        n_free, n_vis, _ = coverage_sets(state.coverage, state.grid)
        if n_vis < n_free:
            state.status = MissionStatus.FLYING
            state.plan = ()
    return state


def instruction_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def replay_record(state: MissionState) -> dict:
    """One replay-file line: where the mission stands after a step."""
    return {
        "step": state.step,
        "position": [state.position.row, state.position.col],
        "plan_head": [state.plan[0].row, state.plan[0].col] if state.plan else None,
        "cr": round(state.cr() * 100.0, 6),
        "dr": round(state.dr() * 100.0, 6),
        "instruction": instruction_digest(state.instruction.text),
        "status": state.status.value,
    }


def write_replay(path: str, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            json.dump(rec, f, ensure_ascii=False)
            f.write("\n")


class SingleShotPlanner:
    """One generate call per replan; no search on top.

    The ablation baseline: whatever the proposer returns first (validated)
    becomes the plan.
    """

    def __init__(self, backend):
        self.backend = backend
        self.last_instruction: str | None = None

    @property
    def name(self) -> str:
        return f"single-shot({self.backend.name})"

    def plan(self, grid: GridMap, coverage: CoverageMap, instruction: Instruction, position: Cell, seed: int):
        self.last_instruction = instruction.text
        try:
            reply = self.backend.propose(
                ProposerAction(ActionKind.GENERATE), grid, coverage, instruction, Cell(*position), seed
            )
        except Exception:
            return None
        if reply.trajectory is None:
            return None
        return reply.trajectory


class MctsPlanner:
    """Full tree search per replan; plans with the best candidate found."""

    def __init__(self, backend, config: MctsConfig = MctsConfig()):
        self.backend = backend
        self.config = config
        self.last_instruction: str | None = None
        self.progress = None  # optional per-rollout callback, forwarded to the search

    @property
    def name(self) -> str:
        return f"mcts({self.backend.name})"

    def plan(self, grid: GridMap, coverage: CoverageMap, instruction: Instruction, position: Cell, seed: int):
        self.last_instruction = instruction.text
        result = run_search(
            (grid, coverage, instruction), self.backend, self.config, seed=seed,
            start=Cell(*position), progress=self.progress,
        )
        if result.best is None or len(result.best) == 0:
            return None
        if not validate_path(grid, result.best).valid:
            return None
        return result.best


def run_mission(
    grid: GridMap,
    instruction: Instruction | str,
    planner,
    config: MissionConfig = MissionConfig(),
    seed: int = 0,
    max_steps: int | None = None,
    start: Cell | None = None,
    on_step=None,
    clock=time.monotonic,
) -> tuple[MissionState, MissionMetrics]:
    """Loop plan/execute until coverage target, max_steps, or failure.

    Replans when the plan runs dry, after an instruction change, and every
    replan_every steps otherwise. on_step(state) fires after each executed
    waypoint. Deterministic for a fixed seed with the heuristic backend;
    only the recorded planner latencies vary run to run.
    """
    state = make_mission(grid, instruction, start)
    if max_steps is None:
        max_steps = config.max_steps
    rng = random.Random(seed)
    metrics = MissionMetrics()

    while state.status not in (MissionStatus.COMPLETE, MissionStatus.FAILED) and state.step < max_steps:
        due = (
            state.needs_replan
            or not state.plan
            or (state.step - state.last_plan_step) >= config.replan_every
        )
        if state.status is MissionStatus.IDLE or due:
            t0 = clock()
            plan_step(state, planner, config, seed=rng.getrandbits(32))
            metrics.plan_latencies_s.append(clock() - t0)
            if state.status in (MissionStatus.COMPLETE, MissionStatus.FAILED):
                break
        execute_step(state, config)
        if on_step is not None:
            on_step(state)

    metrics.cr = state.cr() * 100.0
    metrics.dr = state.dr() * 100.0
    metrics.steps = state.step
    metrics.replans = state.replans
    metrics.collided = state.collided
    metrics.completed = state.status is MissionStatus.COMPLETE
    return state, metrics
