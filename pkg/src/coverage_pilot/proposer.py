"""The trajectory-proposal boundary: prompts, reply parsing, and backends.

Four proposal actions drive the search: generate a fresh path, regenerate a
rejected path from validator feedback, fine-tune a path toward the current
instruction, and evaluate a path's instruction compliance. Two backends
stand behind the same call shape: a deterministic heuristic (boustrophedon
coverage with repair and keyword scoring, used offline and in tests) and a
remote chat-completions client.

Trajectories cross the proposal boundary as JSON arrays of [row, col] pairs,
chosen for unambiguous extraction from surrounding prose.
"""

from __future__ import annotations

import enum
import heapq
import json
import random
import re
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .gridworld import (
    Cell,
    CoverageMap,
    GridMap,
    Trajectory,
    ValidityReport,
    apply_path,
    coverage_sets,
    shortest_path,
    validate_path,
)


class ActionKind(enum.Enum):
    GENERATE = "generate"
    REGENERATE = "regenerate"
    FINETUNE = "finetune"
    EVALUATE = "evaluate"


TRAJECTORY_ACTIONS = (ActionKind.GENERATE, ActionKind.REGENERATE, ActionKind.FINETUNE)

SYSTEM_PROMPT = "You are a precise flight-planning assistant. Follow the output format exactly."

FORMAT_CLAUSE = (
    "Reply with a JSON array of [row, col] waypoint pairs and nothing else, "
    "for example [[0,0],[0,1],[1,1]]."
)

INSTRUCTION_ARCHETYPES = (
    "complete coverage of the field",
    "rapid traversal of the field",
    "focused area exploration",
    "search the top-left quadrant carefully",
    "search the top-right quadrant carefully",
    "search the bottom-left quadrant carefully",
    "search the bottom-right quadrant carefully",
    "pass through the top-left quadrant quickly",
    "pass through the bottom-right quadrant quickly",
    "cover the entire field and avoid repeated passes",
)


class ParseError(ValueError):
    """Backend output held no extractable payload; raw text preserved."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class BackendUnavailableError(RuntimeError):
    """The remote backend stayed unreachable after the retry budget."""


class ConfigurationError(ValueError):
    """Required backend configuration is missing or malformed."""


@dataclass(frozen=True)
class Instruction:
    text: str
    issued_at: int = 0

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("instruction text must be nonempty")


@dataclass(frozen=True)
class ProposerAction:
    """One of the four proposal actions plus its context payload."""

    kind: ActionKind
    feedback: str | None = None
    prior: Trajectory | None = None


@dataclass
class ProposerReply:
    """Parsed backend output; raw text kept verbatim for logs and debugging."""

    trajectory: Trajectory | None = None
    compliance: float | None = None
    verdict: bool | None = None
    raw: str = ""
    latency_s: float | None = None


# ----- serialization and parsing -----

def serialize_trajectory(traj: Trajectory) -> str:
    return json.dumps(traj.to_pairs(), separators=(",", ":"))


def _balanced_blocks(raw: str, open_ch: str, close_ch: str):
    """Yield each balanced top-level block starting at open_ch, outermost first."""
    depth = 0
    start = -1
    for i, ch in enumerate(raw):
        if ch == open_ch:
            if depth == 0:
                start = i
            depth += 1
        elif ch == close_ch and depth > 0:
            depth -= 1
            if depth == 0:
                yield raw[start : i + 1]


def _extract_trajectory(raw: str) -> Trajectory:
    for block in _balanced_blocks(raw, "[", "]"):
        try:
            data = json.loads(block)
        except json.JSONDecodeError:
            continue
        if (
            isinstance(data, list)
            and len(data) >= 1
            and all(
                isinstance(p, list)
                and len(p) == 2
                and all(isinstance(v, int) and not isinstance(v, bool) for v in p)
                for p in data
            )
        ):
            return Trajectory.from_cells(data)
    raise ParseError("no waypoint array found in reply", raw)


_SCORE_RE = re.compile(r"(?<![\w.])(?:1(?:\.0+)?|0(?:\.\d+)?|\.\d+)(?![\w.])")
_STOP_TOKENS = ("no further exploration", "further_exploration\": false", "stop exploring", "sufficient", "stop")
_GO_TOKENS = ("further exploration", "further_exploration\": true", "keep exploring", "continue", "explore")


def _extract_evaluation(raw: str) -> tuple[float, bool]:
    for block in _balanced_blocks(raw, "{", "}"):
        try:
            data = json.loads(block)
        except json.JSONDecodeError:
            continue
        if isinstance(data, dict) and "compliance" in data:
            score = data["compliance"]
            if isinstance(score, (int, float)) and 0.0 <= float(score) <= 1.0:
                verdict = data.get("further_exploration", data.get("continue", True))
                return float(score), bool(verdict)
    # prose fallback: first number in [0,1], then a verdict keyword
    m = _SCORE_RE.search(raw)
    if m is None:
        raise ParseError("no compliance score found in reply", raw)
    score = float(m.group(0))
    lowered = raw.lower()
    verdict = True  # exploration-required is the safe default when unstated
    for token in _STOP_TOKENS:
        if token in lowered:
            verdict = False
            break
    else:
        for token in _GO_TOKENS:
            if token in lowered:
                verdict = True
                break
    return score, verdict


def parse_reply(kind: ActionKind, raw: str) -> ProposerReply:
    """Extract the action's payload from raw backend text, tolerating prose.

    Trajectory actions yield the first well-formed [row, col] array; Evaluate
    yields the first score in [0, 1] plus a verdict (replies that state a
    score but no verdict read as exploration-required).
    """
    if kind == ActionKind.EVALUATE:
        score, verdict = _extract_evaluation(raw)
        return ProposerReply(compliance=score, verdict=verdict, raw=raw)
    return ProposerReply(trajectory=_extract_trajectory(raw), raw=raw)


# ----- prompt construction -----

_template_cache: dict[str, str] = {}


def _load_template(kind: ActionKind) -> str:
    name = kind.value
    if name not in _template_cache:
        path = resources.files("coverage_pilot").joinpath("prompts", f"{name}.txt")
        _template_cache[name] = path.read_text(encoding="utf-8")
    return _template_cache[name]


def _check_action(action: ProposerAction) -> None:
    if action.kind == ActionKind.GENERATE:
        if action.prior is not None or action.feedback is not None:
            raise ValueError("Generate carries neither prior nor feedback")
    elif action.prior is None:
        raise ValueError(f"{action.kind.value} requires a prior trajectory")


def build_prompt(
    action: ProposerAction,
    grid: GridMap,
    coverage: CoverageMap,
    instruction: Instruction,
    start: Cell,
) -> str:
    """Render the action's template with the serialized planning context."""
    _check_action(action)
    rows, cols = np.nonzero(coverage.visit_counts)
    visited = sorted([int(r), int(c)] for r, c in zip(rows, cols))
    fields = {
        "width": grid.width,
        "height": grid.height,
        "obstacles": json.dumps(sorted([c.row, c.col] for c in grid.obstacle_cells()), separators=(",", ":")),
        "visited": json.dumps(visited, separators=(",", ":")),
        "start": f"[{start.row},{start.col}]",
        "instruction": instruction.text,
        "prior": serialize_trajectory(action.prior) if action.prior is not None else "none",
        "feedback": action.feedback if action.feedback else "none",
        "format_clause": FORMAT_CLAUSE,
    }
    return _load_template(action.kind).format(**fields)


def feedback_from_report(report: ValidityReport) -> str:
    """Turn a validity report into the violation text fed back to the proposer."""
    parts = []
    for _, cell in report.collisions[:3]:
        parts.append(f"Error: path enters no-fly zone at coordinates ({cell.row}, {cell.col}).")
    for idx, cell in report.out_of_bounds[:3]:
        parts.append(f"Error: path leaves the grid at coordinates ({cell.row}, {cell.col}).")
    for idx in report.breaks[:3]:
        parts.append(f"Error: path breaks four-connectivity at step {idx}.")
    return " ".join(parts) if parts else "Error: path rejected."


# ----- instruction keyword interpretation -----

_REGION_SYNONYMS: list[tuple[str, str]] = []
for _key, _names in (
    ("top-left", ["top-left", "top left", "upper-left", "upper left", "northwest", "quadrant ii", "quadrant 2"]),
    ("top-right", ["top-right", "top right", "upper-right", "upper right", "northeast", "quadrant i", "quadrant 1"]),
    ("bottom-left", ["bottom-left", "bottom left", "lower-left", "lower left", "southwest", "quadrant iii", "quadrant 3"]),
    ("bottom-right", ["bottom-right", "bottom right", "lower-right", "lower right", "southeast", "quadrant iv", "quadrant 4"]),
):
    for _n in _names:
        _REGION_SYNONYMS.append((_n, _key))
# longest synonym first so "quadrant iii" is not read as "quadrant ii"
_REGION_SYNONYMS.sort(key=lambda kv: len(kv[0]), reverse=True)

_RAPID_TOKENS = ("quick", "rapid", "fast", "pass through", "transit", "swift")
_CAREFUL_TOKENS = ("careful", "thorough", "fine-grained", "focus", "dense", "meticulous")


def parse_instruction(text: str, grid: GridMap) -> tuple[str, set[Cell] | None]:
    """Map instruction text to (mode, region cells).

    mode is one of "rapid", "careful", "complete"; region is None for the
    whole field. Keyword-driven by design: quadrant names plus a few pace
    words, matching the supported instruction archetypes.
    """
    lowered = text.lower()
    region_key = None
    for synonym, key in _REGION_SYNONYMS:
        if synonym in lowered:
            region_key = key
            break
    if any(t in lowered for t in _RAPID_TOKENS):
        mode = "rapid"
    elif any(t in lowered for t in _CAREFUL_TOKENS):
        mode = "careful"
    else:
        mode = "complete"
    if region_key is None:
        return mode, None
    half_r = grid.height / 2.0
    half_c = grid.width / 2.0
    cells = set()
    for r in range(grid.height):
        for c in range(grid.width):
            top = r < half_r
            left = c < half_c
            key = ("top" if top else "bottom") + "-" + ("left" if left else "right")
            if key == region_key:
                cells.add(Cell(r, c))
    return mode, cells


# ----- heuristic backend -----

def _path_to_nearest(
    grid: GridMap,
    src: Cell,
    targets: set[Cell],
    counts: np.ndarray,
    axis: str,
) -> list[Cell]:
    """Cheapest free route from src to the closest target, endpoints included.

    Cost is one per step plus a sub-step penalty on already-visited cells,
    so routes thread through fresh ground when lengths tie. Equal-cost
    frontier cells pop in (row, col) order for axis "row" and (col, row)
    for axis "col"; the axis is what makes two seeded sweep variants differ.
    """
    if src in targets:
        return [src]
    penalty = 1.0 / (4 * grid.width * grid.height)

    def key(cell: Cell) -> tuple[int, int]:
        return (cell.row, cell.col) if axis == "row" else (cell.col, cell.row)

    dist: dict[Cell, float] = {src: 0.0}
    prev: dict[Cell, Cell] = {}
    heap: list[tuple[float, int, int]] = [(0.0, *key(src))]
    found: Cell | None = None
    while heap:
        d, a, b = heapq.heappop(heap)
        cell = Cell(a, b) if axis == "row" else Cell(b, a)
        if d > dist.get(cell, float("inf")):
            continue
        if cell in targets:
            found = cell
            break
        for nxt in grid.neighbors(cell):
            step = 1.0 + (penalty if counts[nxt.row, nxt.col] > 0 else 0.0)
            nd = d + step
            if nd < dist.get(nxt, float("inf")):
                dist[nxt] = nd
                prev[nxt] = cell
                heapq.heappush(heap, (nd, *key(nxt)))
    if found is None:
        raise ValueError(f"no target reachable from {src}")
    path = [found]
    while path[-1] != src:
        path.append(prev[path[-1]])
    path.reverse()
    return path


def _components(grid: GridMap, cells: set[Cell]) -> list[set[Cell]]:
    """Connected components of a cell set under four-connectivity."""
    left = set(cells)
    comps: list[set[Cell]] = []
    while left:
        seed_cell = left.pop()
        comp = {seed_cell}
        stack = [seed_cell]
        while stack:
            cur = stack.pop()
            for nb in grid.neighbors(cur):
                if nb in left:
                    left.discard(nb)
                    comp.add(nb)
                    stack.append(nb)
        comps.append(comp)
    return comps


def _component_count(grid: GridMap, cells: set[Cell]) -> int:
    return len(_components(grid, cells))


def _sweep_path(
    grid: GridMap,
    counts: np.ndarray,
    start: Cell,
    wanted: set[Cell],
    axis: str,
    rng: random.Random | None = None,
    max_new: int | None = None,
) -> list[Cell]:
    """Greedy low-revisit tour from start through wanted cells.

    While an adjacent unvisited cell exists, steps to the one that leaves
    the remaining set in the fewest connected pieces (don't strand a
    pocket), then to the one with the fewest unvisited neighbors (clear
    dead ends before they need a return trip); leftover ties fall to the
    axis order, or to a seeded jitter when rng is given so sibling proposals
    differ. When no neighbor is unvisited, travels to the nearest remaining
    cell through the cheapest route. max_new stops the tour after that many
    wanted cells have been newly covered.

    counts is mutated to track cells covered so far (it arrives as a copy).
    On an obstacle-free map this reduces to an exact boustrophedon sweep, so
    fresh missions cover without a single revisit.
    """
    path = [start]
    counts[start.row, start.col] += 1
    remaining = {c for c in wanted if counts[c.row, c.col] == 0}
    budget = len(remaining) if max_new is None else min(max_new, len(remaining))

    def axkey(cell: Cell) -> tuple[int, int]:
        return (cell.row, cell.col) if axis == "row" else (cell.col, cell.row)

    while remaining and budget > 0:
        cur = path[-1]
        adjacent = [n for n in grid.neighbors(cur) if n in remaining]
        if adjacent:
            if len(adjacent) == 1:
                nxt = adjacent[0]
            else:
                comps = _components(grid, remaining)
                sizes = {cell: len(comp) for comp in comps for cell in comp}
                # stranding a tiny pocket is free while the total stranded
                # stays within the tail a satisfied mission never executes
                slack = max(1, round(0.05 * grid.free_cell_count))
                defer = sum(len(c) for c in comps if len(c) <= 2) <= slack

                def choice_key(cand: Cell):
                    split = _components(grid, remaining - {cand})
                    if defer:
                        pieces = sum(1 for comp in split if len(comp) > 2)
                        tiny = 1 if sizes[cand] <= 2 else 0
                    else:
                        pieces = len(split)
                        tiny = 0
                    degree = sum(1 for n in grid.neighbors(cand) if n in remaining)
                    jitter = rng.random() if rng is not None else 0.0
                    return (tiny, pieces, degree, jitter) + axkey(cand)

                nxt = min(adjacent, key=choice_key)
            path.append(nxt)
            counts[nxt.row, nxt.col] += 1
            remaining.discard(nxt)
            budget -= 1
        else:
            # travel toward a sizable region first; tiny pockets wait at the
            # tail, where a mission that has already met its target never pays
            # for them
            comps = _components(grid, remaining)
            big = [comp for comp in comps if len(comp) > 3]
            if rng is not None and len(big) > 1 and rng.random() < 0.5:
                # explore a different region order in this proposal
                big.sort(key=lambda comp: min(comp))
                eligible = set(big[rng.randrange(len(big))])
            else:
                eligible = {c for comp in big for c in comp} or remaining
            seg = _path_to_nearest(grid, cur, eligible, counts, axis)
            for cell in seg[1:]:
                path.append(cell)
                counts[cell.row, cell.col] += 1
                if cell in remaining:
                    remaining.discard(cell)
                    budget -= 1
                    if budget <= 0:
                        break
    return path


def _sweep_axis(seed: int) -> str:
    return "row" if random.Random(seed).random() < 0.5 else "col"


# Fresh proposals cover at most this many new cells; refinement then extends
# them. Keeps an opening proposal from solving the whole field outright, which
# would end every search at its root.
PROPOSAL_HORIZON = 40


def _heuristic_generate(grid: GridMap, coverage: CoverageMap, start: Cell, seed: int) -> Trajectory:
    counts = coverage.visit_counts.copy()
    unvisited = {c for c in grid.free_cells() if counts[c.row, c.col] == 0}
    path = _sweep_path(grid, counts, start, unvisited, _sweep_axis(seed), max_new=PROPOSAL_HORIZON)
    return Trajectory(tuple(path))


def _heuristic_repair(grid: GridMap, coverage: CoverageMap, start: Cell, prior: Trajectory, seed: int) -> Trajectory:
    """Drop offending cells, then re-connect the survivors with free routes."""
    anchors: list[Cell] = []
    for cell in prior:
        if grid.is_free(cell) and (not anchors or anchors[-1] != cell):
            anchors.append(cell)
    if not anchors:
        return _heuristic_generate(grid, coverage, start, seed)
    path = [start]
    counts = coverage.visit_counts.copy()
    counts[start.row, start.col] += 1
    for a in anchors:
        if a == path[-1]:
            continue
        seg = shortest_path(grid, path[-1], a, counts)
        for cell in seg[1:]:
            path.append(cell)
            counts[cell.row, cell.col] += 1
    return Trajectory(tuple(path))


def _run_bounds(traj: Trajectory, region: set[Cell]) -> list[tuple[int, int]]:
    """Maximal index runs [i, j] of waypoints lying inside the region."""
    runs = []
    i = None
    for k, cell in enumerate(traj):
        if cell in region:
            if i is None:
                i = k
        elif i is not None:
            runs.append((i, k - 1))
            i = None
    if i is not None:
        runs.append((i, len(traj) - 1))
    return runs


def _heuristic_finetune(
    grid: GridMap,
    coverage: CoverageMap,
    start: Cell,
    prior: Trajectory,
    instruction: Instruction,
    seed: int,
) -> Trajectory:
    mode, region = parse_instruction(instruction.text, grid)
    base = prior
    if not validate_path(grid, base).valid or len(base) == 0 or base[0] != start:
        base = _heuristic_repair(grid, coverage, start, base, seed)
    if mode == "rapid" and region:
        # compress each in-region run to a shortest crossing
        waypoints = list(base.waypoints)
        out: list[Cell] = []
        runs = dict()
        for i, j in _run_bounds(base, region):
            runs[i] = j
        k = 0
        while k < len(waypoints):
            if k in runs and runs[k] > k:
                j = runs[k]
                seg = shortest_path(grid, waypoints[k], waypoints[j])
                if out and out[-1] == seg[0]:
                    out.extend(seg[1:])
                else:
                    out.extend(seg)
                k = j + 1
            else:
                out.append(waypoints[k])
                k += 1
        return Trajectory(tuple(out))
    if mode == "rapid":
        # whole-field rapid: the nearest-first sweep is already the lean tour
        return _heuristic_generate(grid, coverage, start, seed)
    # careful/complete: extend the path until the named region (or all free
    # space) is fully covered. Half the proposals rebuild the tour outright
    # instead, so siblings explore different region orders rather than all
    # sharing the prior's prefix.
    rng = random.Random(seed)
    counts = coverage.visit_counts.copy()
    for cell in base:
        counts[cell.row, cell.col] += 1
    wanted = region if region is not None else set(grid.free_cells())
    missing = {c for c in wanted if grid.is_free(c) and counts[c.row, c.col] == 0}
    if not missing or (region is None and rng.random() < 0.5):
        fresh = coverage.visit_counts.copy()
        unvisited = {c for c in grid.free_cells() if fresh[c.row, c.col] == 0}
        alt = _sweep_path(grid, fresh, start, unvisited, _sweep_axis(seed), rng=rng)
        return Trajectory(tuple(alt))
    tail = _sweep_path(grid, counts, base[-1] if len(base) else start, missing, _sweep_axis(seed), rng=rng)
    return Trajectory(tuple(list(base.waypoints) + tail[1:]))


def _heuristic_evaluate(
    grid: GridMap,
    coverage: CoverageMap,
    instruction: Instruction,
    prior: Trajectory,
    terminal_cr: float = 0.95,
) -> tuple[float, bool]:
    report = validate_path(grid, prior)
    if not report.valid or len(prior) == 0:
        return 0.0, True
    sim = apply_path(coverage, grid, prior)
    n_free, n_vis, n_rev = coverage_sets(sim, grid)
    mode, region = parse_instruction(instruction.text, grid)
    if mode == "rapid":
        if region:
            dwell = sum(1 for c in prior if c in region) / len(prior)
            compliance = 1.0 - dwell
        else:
            # whole-field pace reads as path efficiency: share of visits
            # that were not repeats
            compliance = 1.0 - (n_rev / n_vis if n_vis else 0.0)
    else:
        wanted = [c for c in (region if region is not None else set(grid.free_cells())) if grid.is_free(c)]
        if not wanted:
            compliance = 1.0
        else:
            covered = sum(1 for c in wanted if sim.visit_counts[c.row, c.col] > 0)
            compliance = covered / len(wanted)
    further = (n_vis / n_free if n_free else 1.0) < terminal_cr
    return float(compliance), bool(further)


def heuristic_propose(
    action: ProposerAction,
    grid: GridMap,
    coverage: CoverageMap,
    instruction: Instruction,
    start: Cell,
    seed: int = 0,
) -> ProposerReply:
    """Deterministic stand-in for the remote proposer.

    Generate sweeps the unvisited free cells boustrophedon-style with
    detours around obstacles; Regenerate repairs the violations listed for
    the prior path; Finetune densifies or shortens coverage in the region
    the instruction names; Evaluate scores keyword-region coverage (or pace)
    and flags whether exploration should continue. Pure in all arguments.
    """
    _check_action(action)
    if action.kind == ActionKind.GENERATE:
        traj = _heuristic_generate(grid, coverage, start, seed)
    elif action.kind == ActionKind.REGENERATE:
        traj = _heuristic_repair(grid, coverage, start, action.prior, seed)
    elif action.kind == ActionKind.FINETUNE:
        traj = _heuristic_finetune(grid, coverage, start, action.prior, instruction, seed)
    else:
        score, further = _heuristic_evaluate(grid, coverage, instruction, action.prior)
        return ProposerReply(
            compliance=score,
            verdict=further,
            raw=json.dumps({"compliance": score, "further_exploration": further}),
        )
    return ProposerReply(trajectory=traj, raw=serialize_trajectory(traj))


class HeuristicBackend:
    """Proposer backend wrapping heuristic_propose."""

    name = "heuristic"

    def propose(
        self,
        action: ProposerAction,
        grid: GridMap,
        coverage: CoverageMap,
        instruction: Instruction,
        start: Cell,
        seed: int = 0,
    ) -> ProposerReply:
        return heuristic_propose(action, grid, coverage, instruction, start, seed)


# ----- remote backend -----

@dataclass
class RemoteConfig:
    """Chat-completions endpoint settings; see from_env for the variables."""

    base_url: str
    model: str
    api_key: str = ""
    temperature: float = 0.2
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_base_s: float = 0.5

    @staticmethod
    def from_env(env=None) -> "RemoteConfig":
        import os

        env = env if env is not None else os.environ
        base = env.get("COVERAGE_PILOT_API_BASE", "").strip()
        model = env.get("COVERAGE_PILOT_MODEL", "").strip()
        if not base or not model:
            raise ConfigurationError(
                "remote backend needs COVERAGE_PILOT_API_BASE and COVERAGE_PILOT_MODEL "
                "(plus COVERAGE_PILOT_API_KEY when the endpoint requires one)"
            )
        return RemoteConfig(base_url=base, model=model, api_key=env.get("COVERAGE_PILOT_API_KEY", ""))


class _TransientHttpError(Exception):
    pass


def remote_propose(
    action: ProposerAction,
    grid: GridMap,
    coverage: CoverageMap,
    instruction: Instruction,
    start: Cell,
    config: RemoteConfig,
    transport=None,
    sleeper=time.sleep,
) -> ProposerReply:
    """Send the prompt over the chat-completions wire shape and parse the reply.

    Transient transport failures and 5xx/429 responses are retried up to
    config.max_retries with exponential backoff. Parse failures are not
    retried; they surface as ParseError for the caller to treat as an
    invalid proposal. Latency covers the full exchange including parsing.
    """
    import httpx

    prompt = build_prompt(action, grid, coverage, instruction, start)
    payload = {
        "model": config.model,
        "messages": [
            {"role": "system", "content": SYSTEM_PROMPT},
            {"role": "user", "content": prompt},
        ],
        "temperature": config.temperature,
    }
    headers = {}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    base = config.base_url.rstrip("/") + "/"
    started = time.monotonic()
    last_error: Exception | None = None
    with httpx.Client(base_url=base, timeout=config.timeout_s, transport=transport) as client:
        for attempt in range(config.max_retries + 1):
            try:
                resp = client.post("chat/completions", json=payload, headers=headers)
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise _TransientHttpError(f"status {resp.status_code}")
                if resp.status_code >= 400:
                    raise BackendUnavailableError(
                        f"endpoint rejected the request with status {resp.status_code}"
                    )
                try:
                    content = resp.json()["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError, ValueError) as exc:
                    raise ParseError(f"malformed completion envelope: {exc}", resp.text)
                reply = parse_reply(action.kind, content)
                reply.latency_s = time.monotonic() - started
                return reply
            except (httpx.TransportError, _TransientHttpError) as exc:
                last_error = exc
                if attempt < config.max_retries:
                    sleeper(config.backoff_base_s * (2.0 ** attempt))
    raise BackendUnavailableError(f"backend unreachable after {config.max_retries} retries: {last_error}")


class RemoteBackend:
    """Proposer backend speaking the chat-completions protocol."""

    def __init__(self, config: RemoteConfig, transport=None, sleeper=time.sleep):
        self.config = config
        self.transport = transport
        self.sleeper = sleeper
        self.name = f"remote:{config.model}"

    def propose(
        self,
        action: ProposerAction,
        grid: GridMap,
        coverage: CoverageMap,
        instruction: Instruction,
        start: Cell,
        seed: int = 0,
    ) -> ProposerReply:
        # seed is part of the shared backend signature; sampling temperature
        # lives server-side, so it is unused here
        return remote_propose(
            action, grid, coverage, instruction, start, self.config,
            transport=self.transport, sleeper=self.sleeper,
        )
