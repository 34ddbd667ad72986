"""Training-record assembly: search episodes in, instruction-tuning shards out.

Each episode draws a fresh map and an instruction, runs the tree search
from the start cell (start already visited once, matching a mission's first
planning call), and keeps the best trajectory with its score. Records are
self-contained: the full map, the prompt text, the weights, and the cached
compliance ride along, so any record can be re-validated and re-scored
without the code that produced it.

Export writes line-delimited records sharded as {stem}.{k:04d}.{train|val}
plus a manifest of shard digests. Shards are flushed whole as they fill, so
an interrupted collection leaves valid files behind.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gridworld import (
    CoverageMap,
    Trajectory,
    coverage_sets,
    apply_path,
    generate_map,
    map_from_payload,
    map_to_payload,
    validate_path,
)
from .mcts import MctsConfig, run_search
from .proposer import (
    INSTRUCTION_ARCHETYPES,
    ActionKind,
    Instruction,
    ProposerAction,
    build_prompt,
    serialize_trajectory,
)

log = logging.getLogger(__name__)

REQUIRED_KEYS = ("input", "output", "map", "instruction", "trajectory", "score", "meta")
REQUIRED_META_KEYS = ("seed", "config", "backend", "rollouts", "weights", "compliance")


@dataclass
class DatasetRecord:
    map_payload: dict
    instruction: str
    trajectory: Trajectory
    score: float
    meta: dict

    def to_line(self) -> dict:
        grid = map_from_payload(self.map_payload)
        coverage = CoverageMap.fresh(grid).visit(grid.start)
        prompt = build_prompt(
            ProposerAction(ActionKind.GENERATE), grid, coverage, Instruction(self.instruction), grid.start
        )
        return {
            "input": prompt,
            "output": serialize_trajectory(self.trajectory),
            "map": self.map_payload,
            "instruction": self.instruction,
            "trajectory": self.trajectory.to_pairs(),
            "score": self.score,
            "meta": self.meta,
        }

    @staticmethod
    def from_line(payload: dict) -> "DatasetRecord":
        return DatasetRecord(
            map_payload=payload["map"],
            instruction=payload["instruction"],
            trajectory=Trajectory.from_cells(payload["trajectory"]),
            score=float(payload["score"]),
            meta=payload["meta"],
        )


def rescore_record(payload: dict) -> float:
    """Recompute the record's score from its own embedded fields.

    Coverage starts fresh with the start cell visited once, the trajectory
    is applied on top, and the stored weights and compliance finish the
    reward. Matches the search's candidate scoring exactly.
    """
    grid = map_from_payload(payload["map"])
    c1, c2, c3 = payload["meta"]["weights"]
    compliance = float(payload["meta"]["compliance"])
    coverage = CoverageMap.fresh(grid).visit(grid.start)
    sim = apply_path(coverage, grid, Trajectory.from_cells(payload["trajectory"]))
    n_free, n_vis, n_rev = coverage_sets(sim, grid)
    cover_term = n_vis / n_free if n_free else 0.0
    revisit_term = n_rev / n_vis if n_vis else 0.0
    return c1 * cover_term - c2 * revisit_term + c3 * compliance


@dataclass(frozen=True)
class CollectConfig:
    width: int = 10
    height: int = 10
    densities: tuple[float, ...] = (0.05, 0.15, 0.25)
    instructions: tuple[str, ...] = INSTRUCTION_ARCHETYPES
    mcts: MctsConfig = MctsConfig()

    def __post_init__(self):
        if not self.densities:
            raise ValueError("at least one obstacle density required")
        if not self.instructions:
            raise ValueError("instruction pool must be nonempty")


def episode_seeds(base_seed: int, n_episodes: int) -> list[int]:
    """Independent per-episode seeds; stable under parallel episode order."""
    children = np.random.SeedSequence(base_seed).spawn(n_episodes)
    return [int(c.generate_state(1)[0]) for c in children]


def collect_episode(episode_seed: int, backend, config: CollectConfig) -> DatasetRecord | None:
    """One map + instruction + search; None when the search yields nothing usable."""
    rng = random.Random(episode_seed)
    density = rng.choice(config.densities)
    map_seed = rng.getrandbits(32)
    instruction_text = rng.choice(config.instructions)
    search_seed = rng.getrandbits(32)
    grid = generate_map(config.width, config.height, density, map_seed)
    coverage = CoverageMap.fresh(grid).visit(grid.start)
    result = run_search(
        (grid, coverage, Instruction(instruction_text)), backend, config.mcts, seed=search_seed
    )
    if result.error is not None or result.best is None or len(result.best) == 0:
        log.warning("episode seed %d skipped: %s", episode_seed, result.error or "no trajectory")
        return None
    if not validate_path(grid, result.best).valid:
        log.warning("episode seed %d skipped: best trajectory invalid", episode_seed)
        return None
    best_node = result.tree[result.best_node_id]
    compliance = best_node.compliance if best_node.compliance is not None else 0.0
    meta = {
        "seed": episode_seed,
        "config": config.mcts.digest(),
        "backend": backend.name,
        "rollouts": len(result.candidates),
        "weights": list(config.mcts.weights),
        "compliance": float(compliance),
    }
    return DatasetRecord(
        map_payload=map_to_payload(grid),
        instruction=instruction_text,
        trajectory=result.best,
        score=float(result.best_q),
        meta=meta,
    )


def collect(n_episodes: int, backend, config: CollectConfig = CollectConfig(), base_seed: int = 0):
    """Yield up to n_episodes records; failed episodes are skipped, not fatal."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    for seed in episode_seeds(base_seed, n_episodes):
        record = collect_episode(seed, backend, config)
        if record is not None:
            yield record


def split_counts(n: int, ratio: float) -> tuple[int, int]:
    """(train, validation) sizes; ratio 0.8 over 10 gives (8, 2)."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("split ratio must lie in [0, 1]")
    n_train = int(round(n * ratio))
    return n_train, n - n_train


def chunk_sizes(n: int, shard_size: int) -> list[int]:
    """Greedy full shards then the remainder; 10 by 4 gives [4, 4, 2]."""
    if shard_size < 1:
        raise ValueError("shard_size must be at least 1")
    full = [shard_size] * (n // shard_size)
    if n % shard_size:
        full.append(n % shard_size)
    return full


def _train_membership(n: int, ratio: float, seed: int) -> list[bool]:
    n_train, _ = split_counts(n, ratio)
    order = list(range(n))
    random.Random(seed).shuffle(order)
    chosen = set(order[:n_train])
    return [i in chosen for i in range(n)]


class Exporter:
    """Incremental shard writer for a known episode budget.

    Split membership for every index is fixed up front from the seed, so
    records can stream in one at a time; each shard file is written in one
    call once its quota fills. close() flushes partial shards and writes
    the manifest last.
    """

    def __init__(self, stem: str | Path, n_total: int, split_ratio: float = 0.8,
                 shard_size: int = 64, seed: int = 0):
        self.stem = Path(stem)
        self.stem.parent.mkdir(parents=True, exist_ok=True)
        self.split_ratio = split_ratio
        self.shard_size = shard_size
        self.seed = seed
        self._membership = _train_membership(n_total, split_ratio, seed)
        self._added = 0
        self._buffers: dict[str, list[dict]] = {"train": [], "val": []}
        self._shard_index = {"train": 0, "val": 0}
        self._manifest_shards: list[dict] = []
        self.counts = {"train": 0, "val": 0}

    def add(self, record: DatasetRecord) -> None:
        split = "train" if self._membership[self._added] else "val"
        self._added += 1
        self.counts[split] += 1
        self._buffers[split].append(record.to_line())
        if len(self._buffers[split]) >= self.shard_size:
            self._flush(split)

    def _flush(self, split: str) -> None:
        if not self._buffers[split]:
            return
        k = self._shard_index[split]
        self._shard_index[split] += 1
        path = self.stem.with_name(f"{self.stem.name}.{k:04d}.{split}")
        body = "".join(json.dumps(line, ensure_ascii=False) + "\n" for line in self._buffers[split])
        data = body.encode("utf-8")
        with open(path, "wb") as f:
            f.write(data)
        self._manifest_shards.append(
            {
                "file": path.name,
                "split": split,
                "records": len(self._buffers[split]),
                "sha256": hashlib.sha256(data).hexdigest(),
            }
        )
        self._buffers[split] = []

    def close(self) -> list[Path]:
        self._flush("train")
        self._flush("val")
        manifest = {
            "stem": self.stem.name,
            "split_ratio": self.split_ratio,
            "shard_size": self.shard_size,
            "seed": self.seed,
            "counts": dict(self.counts),
            "shards": self._manifest_shards,
        }
        manifest_path = self.stem.with_name(f"{self.stem.name}.manifest.json")
        with open(manifest_path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")
        written = [self.stem.with_name(s["file"]) for s in self._manifest_shards]
        return written + [manifest_path]


def export(records: list[DatasetRecord], stem: str | Path, split_ratio: float = 0.8,
           shard_size: int = 64, seed: int = 0) -> list[Path]:
    """Write a full record list as shards plus manifest; returns paths written."""
    exporter = Exporter(stem, len(records), split_ratio, shard_size, seed)
    for record in records:
        exporter.add(record)
    return exporter.close()


def load_records(stem: str | Path) -> dict[str, list[DatasetRecord]]:
    """Read every shard back into records, per split, in shard order."""
    stem = Path(stem)
    out: dict[str, list[DatasetRecord]] = {"train": [], "val": []}
    for split in ("train", "val"):
        for path in sorted(stem.parent.glob(f"{stem.name}.[0-9][0-9][0-9][0-9].{split}")):
            with open(path, "r", encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        out[split].append(DatasetRecord.from_line(json.loads(line)))
    return out


@dataclass
class ValidationReport:
    n_records: int = 0
    n_passed: int = 0
    failures: list[tuple[str, int, str]] = field(default_factory=list)
    manifest_ok: bool | None = None

    @property
    def all_passed(self) -> bool:
        return self.n_passed == self.n_records and not self.failures and self.manifest_ok is not False

    def summary(self) -> str:
        head = f"{self.n_passed}/{self.n_records} records passed"
        if self.manifest_ok is None:
            head += "; no manifest"
        elif not self.manifest_ok:
            head += "; manifest MISMATCH"
        for file, line_no, reason in self.failures[:10]:
            head += f"\n  {file}:{line_no}: {reason}"
        return head


def _check_record(payload: dict) -> str | None:
    for key in REQUIRED_KEYS:
        if key not in payload:
            return f"missing field {key!r}"
    for key in REQUIRED_META_KEYS:
        if key not in payload["meta"]:
            return f"missing meta field {key!r}"
    try:
        grid = map_from_payload(payload["map"])
    except (KeyError, ValueError, TypeError) as exc:
        return f"bad map: {exc}"
    trajectory = Trajectory.from_cells(payload["trajectory"])
    if len(trajectory) == 0:
        return "empty trajectory"
    report = validate_path(grid, trajectory)
    if not report.valid:
        return f"invalid trajectory: {report.summary()}"
    if payload["output"] != serialize_trajectory(trajectory):
        return "output text does not match trajectory"
    if abs(rescore_record(payload) - float(payload["score"])) > 1e-9:
        return f"score mismatch: stored {payload['score']}, rescored {rescore_record(payload)}"
    return None


def validate_dataset(stem: str | Path) -> ValidationReport:
    """Re-check every shard record: schema, path validity, score consistency.

    Works with or without the manifest; when present, shard digests and
    counts are verified too.
    """
    stem = Path(stem)
    report = ValidationReport()
    shard_paths = sorted(
        p for split in ("train", "val")
        for p in stem.parent.glob(f"{stem.name}.[0-9][0-9][0-9][0-9].{split}")
    )
    if not shard_paths:
        raise FileNotFoundError(f"no shards found for stem {stem}")
    digests: dict[str, tuple[str, int]] = {}
    for path in shard_paths:
        with open(path, "rb") as f:
            data = f.read()
        lines = [ln for ln in data.decode("utf-8").splitlines() if ln.strip()]
        digests[path.name] = (hashlib.sha256(data).hexdigest(), len(lines))
        for i, line in enumerate(lines, start=1):
            report.n_records += 1
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                report.failures.append((path.name, i, f"unparseable line: {exc}"))
                continue
            reason = _check_record(payload)
            if reason is None:
                report.n_passed += 1
            else:
                report.failures.append((path.name, i, reason))
    manifest_path = stem.with_name(f"{stem.name}.manifest.json")
    if manifest_path.exists():
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
        report.manifest_ok = True
        for shard in manifest.get("shards", []):
            have = digests.get(shard["file"])
            if have is None or have[0] != shard["sha256"] or have[1] != shard["records"]:
                report.manifest_ok = False
    return report
