"""Static workspace, coverage accounting, and path validity for the grid world.

The workspace is a rectangular grid of unit cells, each either free or
obstacle. A coverage map tracks per-cell visit counts as the vehicle moves.
Trajectories are ordered waypoint sequences restricted to four-connected
moves. Everything here is a value: maps are immutable after construction and
coverage updates return fresh instances, so any number of readers may share
them across threads.

Cell coordinates are (row, col) with row 0 at the top. Continuous positions
used by the localization module place cell (r, c) on the square
[c, c+1) x [r, r+1) in (x, y) = (col, row) axes.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np


class MapGenerationError(RuntimeError):
    """Raised when no connected obstacle layout is found within the retry budget."""


class DimensionMismatchError(ValueError):
    """Raised when a coverage map is paired with a grid of different shape."""


class InvalidPathError(ValueError):
    """Raised when a path that fails validation is applied to a coverage map."""

    def __init__(self, report: "ValidityReport"):
        super().__init__(f"path is invalid: {report.summary()}")
        self.report = report


class Cell(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class GridMap:
    """Static workspace: dimensions, obstacle layout, and the start cell.

    The occupancy array has shape (height, width); True marks an obstacle.
    Free and obstacle cells partition the grid by construction.
    """

    width: int
    height: int
    occupancy: np.ndarray
    start: Cell

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("map dimensions must be at least 1x1")
        if self.occupancy.shape != (self.height, self.width):
            raise ValueError("occupancy shape does not match dimensions")
        if not self.in_bounds(self.start):
            raise ValueError("start cell out of bounds")
        if self.occupancy[self.start.row, self.start.col]:
            raise ValueError("start cell must be free")
        # freeze the layout so shared references cannot diverge
        self.occupancy.setflags(write=False)

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell.row < self.height and 0 <= cell.col < self.width

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and not self.occupancy[cell.row, cell.col]

    def neighbors(self, cell: Cell) -> Iterator[Cell]:
        """Four-connected free neighbors of a cell."""
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nxt = Cell(cell.row + dr, cell.col + dc)
            if self.is_free(nxt):
                yield nxt

    @property
    def free_cell_count(self) -> int:
        return int(self.occupancy.size - np.count_nonzero(self.occupancy))

    def free_cells(self) -> list[Cell]:
        rows, cols = np.nonzero(~self.occupancy)
        return [Cell(int(r), int(c)) for r, c in zip(rows, cols)]

    def obstacle_cells(self) -> list[Cell]:
        rows, cols = np.nonzero(self.occupancy)
        return [Cell(int(r), int(c)) for r, c in zip(rows, cols)]


@dataclass(frozen=True)
class CoverageMap:
    """Per-cell visit counts; counts on obstacle cells stay 0 forever."""

    visit_counts: np.ndarray

    def __post_init__(self):
        self.visit_counts.setflags(write=False)

    @staticmethod
    def fresh(grid: GridMap) -> "CoverageMap":
        return CoverageMap(np.zeros((grid.height, grid.width), dtype=np.int64))

    def count(self, cell: Cell) -> int:
        return int(self.visit_counts[cell.row, cell.col])

    def visit(self, cell: Cell) -> "CoverageMap":
        """A new coverage map with this one cell's count incremented."""
        counts = self.visit_counts.copy()
        counts[cell.row, cell.col] += 1
        return CoverageMap(counts)


@dataclass(frozen=True)
class Trajectory:
    """Ordered waypoint sequence; consecutive waypoints must be four-connected."""

    waypoints: tuple[Cell, ...]

    @staticmethod
    def from_cells(cells) -> "Trajectory":
        return Trajectory(tuple(Cell(int(r), int(c)) for r, c in cells))

    def __len__(self) -> int:
        return len(self.waypoints)

    def __iter__(self) -> Iterator[Cell]:
        return iter(self.waypoints)

    def __getitem__(self, idx):
        return self.waypoints[idx]

    def to_pairs(self) -> list[list[int]]:
        return [[c.row, c.col] for c in self.waypoints]


@dataclass
class ValidityReport:
    """Every violation found in a path, by waypoint index."""

    valid: bool
    collisions: list[tuple[int, Cell]] = field(default_factory=list)
    breaks: list[int] = field(default_factory=list)
    out_of_bounds: list[tuple[int, Cell]] = field(default_factory=list)

    def summary(self) -> str:
        parts = []
        if self.out_of_bounds:
            idx, cell = self.out_of_bounds[0]
            parts.append(f"leaves the grid at index {idx}, cell ({cell.row}, {cell.col})")
        if self.collisions:
            idx, cell = self.collisions[0]
            parts.append(f"enters an obstacle at index {idx}, cell ({cell.row}, {cell.col})")
        if self.breaks:
            parts.append(f"breaks four-connectivity at index {self.breaks[0]}")
        return "; ".join(parts) if parts else "no violations"


def generate_map(
    width: int,
    height: int,
    obstacle_density: float,
    seed: int,
    max_retries: int = 100,
) -> GridMap:
    """Generate a random map whose free region is four-connected.

    Obstacles are laid down as small rectangular blocks, the way walls and
    parked structures read from above, until exactly round(density * cells)
    cells are blocked. The start cell is fixed at (0, 0) and never blocked.
    Layouts that disconnect the free region are redrawn from the same seeded
    stream, so results stay deterministic for fixed inputs.

    Raises:
        MapGenerationError: no connected layout found within max_retries draws.
    """
    if not 0.0 <= obstacle_density < 1.0:
        raise ValueError("obstacle_density must lie in [0, 1)")
    n_cells = width * height
    n_obstacles = int(round(obstacle_density * n_cells))
    if n_obstacles >= n_cells:
        raise ValueError("density leaves no free cell")
    start = Cell(0, 0)
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        occupancy = _block_layout(width, height, n_obstacles, start, rng)
        if occupancy is None:
            continue
        grid = GridMap(width, height, occupancy, start)
        if _free_region_connected(grid):
            return grid
    raise MapGenerationError(
        f"no connected layout at density {obstacle_density} within {max_retries} retries"
    )


def _block_layout(
    width: int,
    height: int,
    n_obstacles: int,
    start: Cell,
    rng: np.random.Generator,
) -> np.ndarray | None:
    """One seeded attempt at placing n_obstacles cells as rectangular blocks.

    Blocks up to 3x3 are dropped at random anchors; the final block is
    trimmed cell by cell so the count lands exactly. Returns None when the
    draw stalls before reaching the count (caller retries).
    """
    occupancy = np.zeros((height, width), dtype=bool)
    placed = 0
    stalls = 0
    while placed < n_obstacles and stalls < 200:
        bh = int(rng.integers(1, 4))
        bw = int(rng.integers(1, 4))
        r0 = int(rng.integers(0, height))
        c0 = int(rng.integers(0, width))
        block = [
            Cell(r, c)
            for r in range(r0, min(r0 + bh, height))
            for c in range(c0, min(c0 + bw, width))
            if not occupancy[r, c] and Cell(r, c) != start
        ]
        if not block:
            stalls += 1
            continue
        for cell in block[: n_obstacles - placed]:
            occupancy[cell.row, cell.col] = True
            placed += 1
    return occupancy if placed == n_obstacles else None


def _free_region_connected(grid: GridMap) -> bool:
    return len(reachable_free_cells(grid)) == grid.free_cell_count


def reachable_free_cells(grid: GridMap, start: Cell | None = None) -> set[Cell]:
    """Free cells reachable from start by four-connected moves (BFS flood fill)."""
    if start is None:
        start = grid.start
    seen = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nxt in grid.neighbors(cur):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def validate_path(grid: GridMap, path: Trajectory) -> ValidityReport:
    """Check a path against bounds, obstacles, and four-connectivity.

    Violations are data, not errors: the report lists each one with its
    waypoint index. A break at index i means the step from waypoint i-1 to
    waypoint i is not a four-connected move.
    """
    report = ValidityReport(valid=True)
    prev: Cell | None = None
    for i, cell in enumerate(path):
        if not grid.in_bounds(cell):
            report.out_of_bounds.append((i, cell))
        elif grid.occupancy[cell.row, cell.col]:
            report.collisions.append((i, cell))
        if prev is not None:
            if abs(cell.row - prev.row) + abs(cell.col - prev.col) != 1:
                report.breaks.append(i)
        prev = cell
    report.valid = not (report.collisions or report.breaks or report.out_of_bounds)
    return report


def apply_path(coverage: CoverageMap, grid: GridMap, path: Trajectory) -> CoverageMap:
    """Return a new coverage map with each waypoint's count incremented.

    Counts rise once per occurrence in the path; the input coverage is left
    untouched. Invalid paths are rejected with the report attached.
    """
    _check_dims(coverage, grid)
    report = validate_path(grid, path)
    if not report.valid:
        raise InvalidPathError(report)
    counts = coverage.visit_counts.copy()
    for cell in path:
        counts[cell.row, cell.col] += 1
    return CoverageMap(counts)


def coverage_sets(coverage: CoverageMap, grid: GridMap) -> tuple[int, int, int]:
    """Return (|C_free|, |C_visited|, |C_revisited|) for the coverage state."""
    _check_dims(coverage, grid)
    counts = coverage.visit_counts
    n_free = grid.free_cell_count
    n_visited = int(np.count_nonzero(counts >= 1))
    n_revisited = int(np.count_nonzero(counts >= 2))
    return n_free, n_visited, n_revisited


def _check_dims(coverage: CoverageMap, grid: GridMap) -> None:
    if coverage.visit_counts.shape != (grid.height, grid.width):
        raise DimensionMismatchError(
            f"coverage shape {coverage.visit_counts.shape} does not match "
            f"map shape {(grid.height, grid.width)}"
        )


def shortest_path(grid: GridMap, src: Cell, dst: Cell, visited_counts: np.ndarray | None = None) -> list[Cell]:
    """Shortest four-connected free path from src to dst, endpoints included.

    Among equal-length paths, prefers routes through cells with lower visit
    counts when visited_counts is given (keeps coverage detours productive).
    Deterministic: neighbor expansion order is fixed.
    """
    if src == dst:
        return [src]
    # Dijkstra with cost 1 per step plus a tiny penalty for already-visited
    # cells; the penalty is small enough never to outweigh a step.
    import heapq

    penalty = 1.0 / (4 * grid.width * grid.height)
    dist: dict[Cell, float] = {src: 0.0}
    prev: dict[Cell, Cell] = {}
    heap: list[tuple[float, int, int]] = [(0.0, src.row, src.col)]
    while heap:
        d, r, c = heapq.heappop(heap)
        cur = Cell(r, c)
        if cur == dst:
            break
        if d > dist.get(cur, float("inf")):
            continue
        for nxt in grid.neighbors(cur):
            step = 1.0
            if visited_counts is not None and visited_counts[nxt.row, nxt.col] > 0:
                step += penalty
            nd = d + step
            if nd < dist.get(nxt, float("inf")):
                dist[nxt] = nd
                prev[nxt] = cur
                heapq.heappush(heap, (nd, nxt.row, nxt.col))
    if dst not in dist:
        raise ValueError(f"no route from {src} to {dst}")
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    path.reverse()
    return path


# ----- map file round trip -----

def map_to_payload(grid: GridMap) -> dict:
    return {
        "width": grid.width,
        "height": grid.height,
        "start": [grid.start.row, grid.start.col],
        "obstacles": sorted([c.row, c.col] for c in grid.obstacle_cells()),
    }


def map_from_payload(payload: dict) -> GridMap:
    width = int(payload["width"])
    height = int(payload["height"])
    occupancy = np.zeros((height, width), dtype=bool)
    for row, col in payload.get("obstacles", []):
        if not (0 <= row < height and 0 <= col < width):
            raise ValueError(f"obstacle ({row}, {col}) out of bounds")
        occupancy[row, col] = True
    start = Cell(int(payload["start"][0]), int(payload["start"][1]))
    return GridMap(width, height, occupancy, start)


def save_map(grid: GridMap, path: str) -> None:
    """Write the map as canonical JSON; save(load(f)) is byte-identical to save."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(map_to_payload(grid), f, indent=2, sort_keys=True)
        f.write("\n")


def load_map(path: str) -> GridMap:
    with open(path, "r", encoding="utf-8") as f:
        return map_from_payload(json.load(f))
