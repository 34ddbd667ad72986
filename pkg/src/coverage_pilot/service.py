"""Ground-station backend: mission control and live state streaming over HTTP.

One mission runner thread per mission id owns the mission state and drives
the plan-execute loop; every outside mutation (instructions, pause, resume,
abort) goes through a command queue applied at step boundaries. Each state
change is published as a numbered snapshot: `seq` increases by one per
snapshot, `step` is non-decreasing and covers every executed step, so
subscribers can both dedupe and spot gaps.

Streaming uses server-sent events. A late subscriber first receives the
current snapshot; `?from_seq=0` replays the retained history before going
live. Slow subscribers get their buffer cleared and a resume marker rather
than ever blocking the mission loop.
"""

from __future__ import annotations

import json
import queue
import random
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field, field_validator

from . import __version__
from .gridworld import GridMap, generate_map, map_from_payload
from .localization import AmbiguityError, Pose, cast_beams, compute_sdf, estimate_position
from .mcts import MctsConfig
from .mission import (
    MctsPlanner,
    MissionConfig,
    MissionSetupError,
    MissionStatus,
    SingleShotPlanner,
    execute_step,
    make_mission,
    plan_step,
    replay_record,
    submit_instruction,
    write_replay,
)
from .proposer import HeuristicBackend

SUBSCRIBER_BUFFER = 256
PLANNERS = ("mcts", "single-shot")


class GenerateSpec(BaseModel):
    width: int = Field(default=10, ge=1, le=64)
    height: int = Field(default=10, ge=1, le=64)
    density: float = Field(default=0.15, ge=0.0, lt=1.0)
    seed: int = 0


class StartMissionRequest(BaseModel):
    id: str = Field(default="default", min_length=1, max_length=64)
    instruction: str = Field(min_length=1)
    planner: str = "mcts"
    map: dict | None = None
    generate: GenerateSpec | None = None
    seed: int = 0
    replace: bool = False
    target_cr: float = Field(default=0.95, gt=0.0, le=1.0)
    max_steps: int = Field(default=400, ge=1)
    replan_every: int = Field(default=5, ge=1)
    n_rollouts: int = Field(default=8, ge=0)
    pace_s: float = Field(default=0.0, ge=0.0, le=1.0)
    simulate_localization: bool = False


class InstructionRequest(BaseModel):
    text: str = Field(min_length=1)

    @field_validator("text")
    @classmethod
    def _not_blank(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("instruction text is blank")
        return value


class ControlRequest(BaseModel):
    command: str


@dataclass
class _Subscriber:
    q: queue.Queue = field(default_factory=lambda: queue.Queue(maxsize=SUBSCRIBER_BUFFER))


class MissionRunner:
    """Owns one mission's state; the only thread that ever mutates it."""

    def __init__(
        self,
        mission_id: str,
        grid: GridMap,
        instruction: str,
        planner_kind: str,
        seed: int = 0,
        config: MissionConfig = MissionConfig(),
        mcts_config: MctsConfig = MctsConfig(),
        pace_s: float = 0.0,
        simulate_localization: bool = False,
    ):
        self.id = mission_id
        self.config = config
        self.pace_s = pace_s
        self.state = make_mission(grid, instruction)
        backend = HeuristicBackend()
        if planner_kind == "mcts":
            self.planner = MctsPlanner(backend, mcts_config)
        elif planner_kind == "single-shot":
            self.planner = SingleShotPlanner(backend)
        else:
            raise ValueError(f"unknown planner {planner_kind!r}; expected one of {PLANNERS}")
        self._rng = random.Random(seed)
        self._commands: queue.Queue = queue.Queue()
        self._subscribers: list[_Subscriber] = []
        self._lock = threading.Lock()
        self._seq = 0
        self._history: list[dict] = []
        self._latest: dict = {}
        self._paused = False
        self._stopping = False
        self._activity: tuple[str, int | None] = ("idle", None)
        self._replay: list[dict] = []
        self._pose_estimate: dict | None = None
        self._sdf = compute_sdf(grid) if simulate_localization else None
        self._thread = threading.Thread(target=self._run, name=f"mission-{mission_id}", daemon=True)
        self._publish()  # initial Idle snapshot, available before the loop starts

    # ----- public surface used by handlers -----

    def start(self) -> None:
        self._thread.start()

    def post_instruction(self, text: str) -> int:
        if self.latest()["status"] == MissionStatus.FAILED.value:
            raise ValueError("mission already Failed")
        self._commands.put(("instruction", text))
        return self.latest()["step"] + 1

    def control(self, command: str) -> None:
        if command not in ("pause", "resume", "abort"):
            raise ValueError(f"unknown command {command!r}")
        self._commands.put((command, None))

    def latest(self) -> dict:
        with self._lock:
            return self._latest

    def history_from(self, from_seq: int) -> list[dict]:
        with self._lock:
            return [s for s in self._history if s["seq"] >= from_seq]

    def subscribe(self) -> _Subscriber:
        sub = _Subscriber()
        with self._lock:
            self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: _Subscriber) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    def stop(self, checkpoint_path: str | Path | None = None) -> None:
        self._stopping = True
        if self._thread.is_alive():
            self._thread.join(timeout=5.0)
        if checkpoint_path is not None:
            write_replay(str(checkpoint_path), self._replay)

    def alive(self) -> bool:
        return self._thread.is_alive()

    # ----- snapshot plumbing -----

    def _snapshot(self) -> dict:
        state = self.state
        counts = state.coverage.visit_counts
        cells = []
        nz = counts.nonzero()
        for r, c in zip(nz[0].tolist(), nz[1].tolist()):
            cells.append([r, c, int(counts[r, c])])
        kind, rollout = self._activity
        return {
            "seq": self._seq,
            "step": state.step,
            "position": [state.position.row, state.position.col],
            "plan": [[c.row, c.col] for c in state.plan],
            "coverage": cells,
            "cr": state.cr() * 100.0,
            "dr": state.dr() * 100.0,
            "status": state.status.value,
            "last_instruction": state.instruction.text,
            "pose_estimate": self._pose_estimate,
            "planner_activity": {"state": kind, "rollout": rollout},
            "paused": self._paused,
            "failure_cause": state.failure_cause,
        }

    def _publish(self) -> None:
        with self._lock:
            self._seq += 1
            snap = self._snapshot()
            self._history.append(snap)
            self._latest = snap
            subs = list(self._subscribers)
        for sub in subs:
            try:
                sub.q.put_nowait(snap)
            except queue.Full:
                # slow consumer: drop its backlog, tell it to resume from current
                try:
                    while True:
                        sub.q.get_nowait()
                except queue.Empty:
                    pass
                sub.q.put_nowait({"resume_from": snap["seq"]})
                sub.q.put_nowait(snap)

    def _estimate_pose(self) -> None:
        if self._sdf is None:
            return
        pos = self.state.position
        pose = Pose(pos.col + 0.5, pos.row + 0.5, 0.0)
        try:
            scan = cast_beams(self.state.grid, pose)
            est = estimate_position(self._sdf, scan, heading=0.0)
            self._pose_estimate = {
                "x": est.pose.x,
                "y": est.pose.y,
                "residual": est.residual,
                "confident": est.confident,
            }
        except (AmbiguityError, ValueError):
            self._pose_estimate = None

    # ----- the loop -----

    def _drain_commands(self) -> bool:
        """Apply queued commands; returns True when the mission should stop."""
        while True:
            try:
                kind, payload = self._commands.get_nowait()
            except queue.Empty:
                return False
            if kind == "instruction":
                try:
                    submit_instruction(self.state, payload)
                    self._publish()
                except ValueError:
                    pass
            elif kind == "pause":
                if not self._paused:
                    self._paused = True
                    self._publish()
            elif kind == "resume":
                if self._paused:
                    self._paused = False
                    self._publish()
            elif kind == "abort":
                self.state.status = MissionStatus.FAILED
                self.state.failure_cause = "aborted"
                self._publish()
                return True

    def _run(self) -> None:
        state = self.state
        while not self._stopping:
            if self._drain_commands():
                return
            if self._paused:
                time.sleep(0.005)
                continue
            status = state.status
            if status is MissionStatus.FAILED:
                return
            if status is MissionStatus.COMPLETE:
                # stay responsive to a reviving instruction, but stop burning cycles
                time.sleep(0.05)
                continue
            if state.step >= self.config.max_steps:
                return
            due = (
                status is MissionStatus.IDLE
                or state.needs_replan
                or not state.plan
                or (state.step - state.last_plan_step) >= self.config.replan_every
            )
            if due:
                def on_rollout(r: int) -> None:
                    self._activity = ("searching", r)
                    self._publish()

                if isinstance(self.planner, MctsPlanner):
                    self.planner.progress = on_rollout
                self._activity = ("searching", 0)
                self._publish()
                # plan_step owns the Planning transition; it must see Idle or Flying
                plan_step(state, self.planner, self.config, seed=self._rng.getrandbits(32))
                self._activity = ("idle", None)
                self._publish()
                if state.status in (MissionStatus.FAILED, MissionStatus.COMPLETE):
                    continue
            if state.plan:
                execute_step(state, self.config)
                self._estimate_pose()
                self._replay.append(replay_record(state))
                self._publish()
                if self.pace_s:
                    time.sleep(self.pace_s)


def _build_grid(req: StartMissionRequest) -> GridMap:
    if req.map is not None:
        try:
            return map_from_payload(req.map)
        except (KeyError, TypeError, IndexError) as exc:
            raise HTTPException(status_code=400, detail=f"map: missing or malformed field {exc}")
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=f"map: {exc}")
    spec = req.generate or GenerateSpec()
    return generate_map(spec.width, spec.height, spec.density, spec.seed)


def create_app(checkpoint_dir: str | Path | None = None, ui_dir: str | Path | None = None) -> FastAPI:
    runners: dict[str, MissionRunner] = {}

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        yield
        directory = Path(checkpoint_dir) if checkpoint_dir else Path.cwd()
        for mission_id, runner in runners.items():
            runner.stop(checkpoint_path=directory / f"mission-{mission_id}-checkpoint.jsonl")

    app = FastAPI(title="coverage-pilot ground station", version=__version__, lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.runners = runners

    def get_runner(mission_id: str) -> MissionRunner:
        runner = runners.get(mission_id)
        if runner is None:
            raise HTTPException(status_code=404, detail=f"no mission {mission_id!r}")
        return runner

    @app.get("/")
    def metadata():
        return {
            "service": "coverage-pilot",
            "version": __version__,
            "planners": list(PLANNERS),
            "missions": sorted(runners),
            "endpoints": [
                "POST /missions",
                "POST /missions/{id}/instruction",
                "POST /missions/{id}/control",
                "GET /missions/{id}/map",
                "GET /missions/{id}/state",
                "GET /missions/{id}/stream",
            ],
        }

    @app.post("/missions", status_code=201)
    def start_mission(req: StartMissionRequest):
        existing = runners.get(req.id)
        if existing is not None and existing.alive() and not req.replace:
            raise HTTPException(status_code=409, detail=f"mission {req.id!r} already running")
        if existing is not None and req.replace:
            existing.stop()
        grid = _build_grid(req)
        try:
            runner = MissionRunner(
                req.id,
                grid,
                req.instruction,
                req.planner,
                seed=req.seed,
                config=MissionConfig(
                    target_cr=req.target_cr, replan_every=req.replan_every, max_steps=req.max_steps
                ),
                mcts_config=MctsConfig(n_rollouts=req.n_rollouts),
                pace_s=req.pace_s,
                simulate_localization=req.simulate_localization,
            )
        except (MissionSetupError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        runners[req.id] = runner
        runner.start()
        return {"id": req.id, "status": runner.latest()["status"]}

    @app.post("/missions/{mission_id}/instruction")
    def post_instruction(mission_id: str, req: InstructionRequest):
        runner = get_runner(mission_id)
        try:
            scheduled = runner.post_instruction(req.text)
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"ok": True, "scheduled_step": scheduled}

    @app.post("/missions/{mission_id}/control")
    def control(mission_id: str, req: ControlRequest):
        runner = get_runner(mission_id)
        try:
            runner.control(req.command)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"ok": True, "command": req.command}

    @app.get("/missions/{mission_id}/map")
    def mission_map(mission_id: str):
        # static layout, fetched once per connect; snapshots stay lean
        grid = get_runner(mission_id).state.grid
        rows, cols = grid.occupancy.nonzero()
        return {
            "width": grid.width,
            "height": grid.height,
            "obstacles": [[int(r), int(c)] for r, c in zip(rows.tolist(), cols.tolist())],
            "start": [grid.start.row, grid.start.col],
        }

    @app.get("/missions/{mission_id}/state")
    def state(mission_id: str):
        return get_runner(mission_id).latest()

    @app.get("/missions/{mission_id}/stream")
    async def stream(mission_id: str, request: Request, from_seq: int | None = None):
        runner = get_runner(mission_id)

        def event(payload: dict) -> str:
            return f"data: {json.dumps(payload, ensure_ascii=False)}\n\n"

        terminal = (MissionStatus.COMPLETE.value, MissionStatus.FAILED.value)

        def closes_stream(snap: dict) -> bool:
            # terminal AND current: replaying past a revived Complete must not stop early
            return snap.get("status") in terminal and snap["seq"] >= runner.latest()["seq"]

        async def gen():
            import anyio

            sub = runner.subscribe()
            try:
                last = from_seq - 1 if from_seq is not None else 0
                if from_seq is not None:
                    for snap in runner.history_from(from_seq):
                        yield event(snap)
                        last = snap["seq"]
                else:
                    snap = runner.latest()
                    yield event(snap)
                    last = snap["seq"]
                current = runner.latest()
                if current.get("status") in terminal and last >= current["seq"]:
                    return
                while True:
                    if await request.is_disconnected():
                        return
                    try:
                        item = sub.q.get_nowait()
                    except queue.Empty:
                        if not runner.alive():
                            return
                        await anyio.sleep(0.01)
                        continue
                    if "resume_from" in item or item["seq"] > last:
                        yield event(item)
                        last = item.get("seq", last)
                        if closes_stream(item):
                            return
            finally:
                runner.unsubscribe(sub)

        return StreamingResponse(gen(), media_type="text/event-stream")

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
