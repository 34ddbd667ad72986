"""Coverage metrics and the density-tier benchmark harness.

Metrics follow the standard coverage-search definitions: CR is the percent
of free cells visited, DR the percent of visited cells visited more than
once, SR the fraction of trials without a collision, CSI the mean CR scaled
by SR, IL the mean wall-clock planning latency. The harness runs a trial
grid of obstacle-density tiers against a list of planners, with trial maps
and mission seeds derived from (seed, tier, trial) only, so every planner
sees identical worlds.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .gridworld import CoverageMap, GridMap, generate_map
from .mission import MissionConfig, run_mission

DENSITY_TIERS = {"sparse": 0.05, "medium": 0.15, "dense": 0.25}
BENCH_INSTRUCTION = "cover the entire area"


@dataclass
class TrialResult:
    trial: int
    cr: float
    dr: float
    collided: bool
    completed: bool
    latency_s: float
    steps: int


@dataclass
class MetricsReport:
    cr: float
    dr: float
    sr: float
    csi: float
    il: float
    trials: int
    cr_std: float = 0.0
    dr_std: float = 0.0
    il_std: float = 0.0
    per_trial: list[TrialResult] = field(default_factory=list)

    @staticmethod
    def from_trials(results: list[TrialResult]) -> "MetricsReport":
        if not results:
            raise ValueError("at least one trial required")
        ordered = sorted(results, key=lambda t: t.trial)
        crs = np.array([t.cr for t in ordered])
        drs = np.array([t.dr for t in ordered])
        lats = np.array([t.latency_s for t in ordered])
        sr = sum(1 for t in ordered if not t.collided) / len(ordered)
        cr_mean = float(crs.mean())
        return MetricsReport(
            cr=cr_mean,
            dr=float(drs.mean()),
            sr=sr,
            csi=cr_mean * sr,
            il=float(lats.mean()),
            trials=len(ordered),
            cr_std=float(crs.std()),
            dr_std=float(drs.std()),
            il_std=float(lats.std()),
            per_trial=ordered,
        )


def compute_cr(coverage: CoverageMap, grid: GridMap) -> float:
    """Percent of free cells visited at least once."""
    n_free = grid.free_cell_count
    if n_free == 0:
        raise ValueError("map has no free cells; coverage ratio undefined")
    free = ~grid.occupancy
    visited = int(np.count_nonzero((coverage.visit_counts >= 1) & free))
    return visited / n_free * 100.0


def compute_dr(coverage: CoverageMap) -> float:
    """Percent of visited cells visited more than once; no visits means 0."""
    counts = coverage.visit_counts
    visited = int(np.count_nonzero(counts >= 1))
    if visited == 0:
        return 0.0
    revisited = int(np.count_nonzero(counts >= 2))
    return revisited / visited * 100.0


def compute_csi(cr_mean: float, sr: float) -> float:
    """Collision-penalized coverage: mean CR (percent) times SR (fraction)."""
    if not 0.0 <= cr_mean <= 100.0:
        raise ValueError("cr_mean must be a percent in [0, 100]")
    if not 0.0 <= sr <= 1.0:
        raise ValueError("sr must be a fraction in [0, 1]")
    return cr_mean * sr


def _trial_seeds(seed: int, tier_index: int, trial: int) -> tuple[int, int]:
    # planner-independent derivation so every planner sees the same worlds
    base = np.random.SeedSequence((seed, tier_index, trial))
    a, b = base.generate_state(2)
    return int(a), int(b)


def run_trial(
    tier_index: int,
    density: float,
    trial: int,
    planner,
    seed: int,
    mission_config: MissionConfig,
    map_size: tuple[int, int] = (10, 10),
    timing: bool = True,
) -> TrialResult:
    map_seed, mission_seed = _trial_seeds(seed, tier_index, trial)
    grid = generate_map(map_size[0], map_size[1], density, map_seed)
    clock = time.monotonic if timing else (lambda: 0.0)
    state, metrics = run_mission(
        grid, BENCH_INSTRUCTION, planner, mission_config, seed=mission_seed, clock=clock
    )
    return TrialResult(
        trial=trial,
        cr=metrics.cr,
        dr=metrics.dr,
        collided=metrics.collided,
        completed=metrics.completed,
        latency_s=metrics.mean_plan_latency_s(),
        steps=metrics.steps,
    )


def run_benchmark(
    planners: dict[str, object],
    tiers: dict[str, float] = DENSITY_TIERS,
    trials: int = 10,
    seed: int = 0,
    mission_config: MissionConfig = MissionConfig(),
    map_size: tuple[int, int] = (10, 10),
    timing: bool = True,
    jobs: int = 1,
) -> dict[tuple[str, str], MetricsReport]:
    """One MetricsReport per (tier, planner) cell, trial-order deterministic."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    table: dict[tuple[str, str], MetricsReport] = {}
    for tier_index, (tier, density) in enumerate(tiers.items()):
        for planner_name, planner in planners.items():
            def one(trial: int) -> TrialResult:
                return run_trial(
                    tier_index, density, trial, planner, seed, mission_config, map_size, timing
                )

            if jobs > 1:
                with ThreadPoolExecutor(max_workers=jobs) as pool:
                    results = list(pool.map(one, range(trials)))
            else:
                results = [one(t) for t in range(trials)]
            table[(tier, planner_name)] = MetricsReport.from_trials(results)
    return table


def format_table(table: dict[tuple[str, str], MetricsReport], fmt: str = "plain") -> str:
    """Aligned text or CSV, two decimals, one row per (tier, planner)."""
    header = ["tier", "planner", "CR%", "CR sd", "DR%", "DR sd", "SR", "CSI%", "IL ms", "IL sd", "trials"]
    rows = []
    for (tier, planner), rep in table.items():
        rows.append(
            [
                tier,
                planner,
                f"{rep.cr:.2f}",
                f"{rep.cr_std:.2f}",
                f"{rep.dr:.2f}",
                f"{rep.dr_std:.2f}",
                f"{rep.sr:.2f}",
                f"{rep.csi:.2f}",
                f"{rep.il * 1000.0:.2f}",
                f"{rep.il_std * 1000.0:.2f}",
                str(rep.trials),
            ]
        )
    if fmt == "csv":
        lines = [",".join(header)] + [",".join(row) for row in rows]
        return "\n".join(lines) + "\n"
    if fmt != "plain":
        raise ValueError(f"unknown table format {fmt!r}")
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i]) for i in range(len(header))]
    out = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    for row in rows:
        out.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(out) + "\n"


def write_trial_log(table: dict[tuple[str, str], MetricsReport], path: str) -> None:
    """Raw per-trial rows as line-delimited records for external statistics."""
    with open(path, "w", encoding="utf-8") as f:
        for (tier, planner), rep in table.items():
            for t in rep.per_trial:
                json.dump(
                    {
                        "tier": tier,
                        "planner": planner,
                        "trial": t.trial,
                        "cr": t.cr,
                        "dr": t.dr,
                        "collided": t.collided,
                        "completed": t.completed,
                        "latency_s": t.latency_s,
                        "steps": t.steps,
                    },
                    f,
                    ensure_ascii=False,
                )
                f.write("\n")
