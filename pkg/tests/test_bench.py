"""Fleet metrics and the benchmark harness.

The metric formulas are rechecked against direct tallies over random
coverage states; the harness checks pin layout, determinism, and the
all-clear baseline on obstacle-free fields.
"""

import json

import numpy as np
import pytest

from coverage_pilot.bench import (
    DENSITY_TIERS,
    MetricsReport,
    TrialResult,
    compute_cr,
    compute_csi,
    compute_dr,
    format_table,
    run_benchmark,
    write_trial_log,
)
from coverage_pilot.gridworld import Cell, CoverageMap, generate_map
from coverage_pilot.mcts import MctsConfig
from coverage_pilot.mission import MctsPlanner, MissionConfig, SingleShotPlanner
from coverage_pilot.proposer import HeuristicBackend


def random_coverage(grid, rng):
    counts = rng.integers(0, 4, size=(grid.height, grid.width))
    counts[grid.occupancy] = 0
    return CoverageMap(counts.astype(np.int64))


class TestMetricFormulas:
    def test_cr_simple(self):
        grid = generate_map(10, 10, 0.0, seed=0)
        cov = CoverageMap.fresh(grid)
        for c in range(5):
            cov = cov.visit(Cell(0, c))
        assert compute_cr(cov, grid) == pytest.approx(5.0)

    def test_dr_simple(self):
        grid = generate_map(10, 10, 0.0, seed=0)
        cov = CoverageMap.fresh(grid)
        for c in range(4):
            cov = cov.visit(Cell(0, c))
        cov = cov.visit(Cell(0, 0))
        assert compute_dr(cov) == pytest.approx(25.0)

    def test_dr_empty_reads_zero(self):
        grid = generate_map(4, 4, 0.0, seed=0)
        assert compute_dr(CoverageMap.fresh(grid)) == 0.0

    def test_csi_pairs_published_style_numbers(self):
        # a 91.98 mean CR at 92% success lands on 84.62
        sr = 84.62 / 91.98
        assert compute_csi(91.98, sr) == pytest.approx(84.62, abs=1e-9)

    def test_csi_endpoints(self):
        assert compute_csi(77.5, 1.0) == pytest.approx(77.5)
        assert compute_csi(77.5, 0.0) == 0.0

    def test_csi_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            compute_csi(120.0, 0.5)
        with pytest.raises(ValueError):
            compute_csi(50.0, 1.5)

    def test_brute_force_1000_states(self):
        rng = np.random.default_rng(8)
        for i in range(1000):
            grid = generate_map(6, 6, float(rng.choice([0.0, 0.15, 0.25])), seed=i % 50)
            cov = random_coverage(grid, rng)
            counts = cov.visit_counts
            free = int((~grid.occupancy).sum())
            visited = sum(
                1
                for r in range(6)
                for c in range(6)
                if counts[r, c] >= 1 and not grid.occupancy[r, c]
            )
            revisited = sum(
                1 for r in range(6) for c in range(6) if counts[r, c] >= 2
            )
            assert compute_cr(cov, grid) == pytest.approx(visited / free * 100.0)
            want_dr = revisited / visited * 100.0 if visited else 0.0
            assert compute_dr(cov) == pytest.approx(want_dr)


class TestMetricsReport:
    def trials(self):
        return [
            TrialResult(0, 90.0, 4.0, False, True, 0.010, 50),
            TrialResult(1, 100.0, 2.0, False, True, 0.020, 60),
            TrialResult(2, 80.0, 6.0, True, False, 0.030, 40),
        ]

    def test_aggregation(self):
        rep = MetricsReport.from_trials(self.trials())
        assert rep.cr == pytest.approx(90.0)
        assert rep.dr == pytest.approx(4.0)
        assert rep.sr == pytest.approx(2.0 / 3.0)
        assert rep.il == pytest.approx(0.020)
        assert rep.trials == 3

    def test_csi_identity_invariant(self):
        rep = MetricsReport.from_trials(self.trials())
        assert abs(rep.csi - rep.cr * rep.sr) < 1e-6

    def test_trial_order_normalized(self):
        rep = MetricsReport.from_trials(list(reversed(self.trials())))
        assert [t.trial for t in rep.per_trial] == [0, 1, 2]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            MetricsReport.from_trials([])


class TestRunBenchmark:
    def planners(self):
        backend = HeuristicBackend()
        return {
            "single-shot": SingleShotPlanner(backend),
            "mcts": MctsPlanner(backend, MctsConfig(n_rollouts=2)),
        }

    def test_obstacle_free_tier_is_all_clear(self):
        table = run_benchmark(
            {"single-shot": SingleShotPlanner(HeuristicBackend())},
            tiers={"open": 0.0},
            trials=10,
            seed=0,
            mission_config=MissionConfig(target_cr=1.0),
            map_size=(6, 6),
            timing=False,
        )
        rep = table[("open", "single-shot")]
        assert rep.cr == pytest.approx(100.0)
        assert rep.dr == pytest.approx(0.0)
        assert rep.sr == 1.0
        assert rep.csi == pytest.approx(100.0)

    def test_two_planners_three_tiers_six_rows(self):
        table = run_benchmark(
            self.planners(), tiers=DENSITY_TIERS, trials=5, seed=1,
            map_size=(6, 6), timing=False,
        )
        assert len(table) == 6
        assert set(table) == {
            (tier, planner)
            for tier in ("sparse", "medium", "dense")
            for planner in ("single-shot", "mcts")
        }
        formatted = format_table(table)
        lines = formatted.strip().split("\n")
        assert len(lines) == 7  # header plus six rows
        assert lines[0].split()[:2] == ["tier", "planner"]

    def test_same_seed_reruns_identically(self):
        kwargs = dict(
            tiers={"sparse": 0.05, "medium": 0.15}, trials=3, seed=9,
            map_size=(6, 6), timing=False,
        )
        a = run_benchmark(self.planners(), **kwargs)
        b = run_benchmark(self.planners(), **kwargs)
        for key in a:
            assert [vars(t) for t in a[key].per_trial] == [
                vars(t) for t in b[key].per_trial
            ]

    def test_jobs_do_not_change_results(self):
        kwargs = dict(tiers={"dense": 0.25}, trials=4, seed=2, map_size=(6, 6),
                      timing=False)
        serial = run_benchmark(self.planners(), jobs=1, **kwargs)
        threaded = run_benchmark(self.planners(), jobs=4, **kwargs)
        for key in serial:
            assert [vars(t) for t in serial[key].per_trial] == [
                vars(t) for t in threaded[key].per_trial
            ]

    def test_csv_format(self):
        table = run_benchmark(
            {"single-shot": SingleShotPlanner(HeuristicBackend())},
            tiers={"open": 0.0}, trials=2, seed=0, map_size=(5, 5), timing=False,
            mission_config=MissionConfig(target_cr=1.0),
        )
        csv = format_table(table, fmt="csv")
        lines = csv.strip().split("\n")
        assert lines[0] == "tier,planner,CR%,CR sd,DR%,DR sd,SR,CSI%,IL ms,IL sd,trials"
        cells = lines[1].split(",")
        assert cells[0] == "open" and cells[2] == "100.00"
        with pytest.raises(ValueError):
            format_table(table, fmt="markdown")

    def test_trial_log_round_trip(self, tmp_path):
        table = run_benchmark(
            {"single-shot": SingleShotPlanner(HeuristicBackend())},
            tiers={"open": 0.0}, trials=3, seed=0, map_size=(5, 5), timing=False,
        )
        path = tmp_path / "trials.jsonl"
        write_trial_log(table, str(path))
        rows = [json.loads(line) for line in path.read_text().strip().split("\n")]
        assert len(rows) == 3
        assert [r["trial"] for r in rows] == [0, 1, 2]
        assert all(r["planner"] == "single-shot" for r in rows)
