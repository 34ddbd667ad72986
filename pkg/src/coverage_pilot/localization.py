"""Simulated radar forward model and SDF-residual position estimation.

The estimator aligns a beam scan with the map's signed distance field: the
position estimate is the argmin over candidate positions of the sum of
squared SDF values at the beam endpoints. Heading is treated as known
(supplied alongside the scan, as from a compass), so only translation is
searched. Beams that never terminated on an obstacle boundary (border exits
and max-range clamps) carry no alignment information against an
obstacle-only SDF and are excluded from the residual.

All operations are pure; SdfGrid is immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .gridworld import GridMap
from .kernels import HIT_BORDER, HIT_NONE, HIT_OBSTACLE  # noqa: F401 (re-export)

DEGENERATE_SENTINEL = float("inf")


class AmbiguityError(RuntimeError):
    """Raised when the scan/SDF pair cannot pin a position."""


@dataclass(frozen=True)
class Pose:
    """Continuous position in cell units plus heading in radians."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        # normalize heading to [-pi, pi)
        h = (self.heading + math.pi) % (2.0 * math.pi) - math.pi
        object.__setattr__(self, "heading", h)


@dataclass(frozen=True)
class BeamScan:
    """Range readings of an N-beam planar radar.

    Beam i points along heading + 2*pi*i/N. ``hits`` classifies each beam's
    termination (kernels.HIT_*); when absent, beams strictly below max_range
    are assumed to have terminated on a surface.
    """

    ranges: np.ndarray
    max_range: float
    hits: np.ndarray | None = None

    def __post_init__(self):
        self.ranges.setflags(write=False)
        if self.hits is not None:
            self.hits.setflags(write=False)
        if np.any(self.ranges < 0) or np.any(self.ranges > self.max_range):
            raise ValueError("ranges must lie in [0, max_range]")

    @property
    def n_beams(self) -> int:
        return int(self.ranges.shape[0])


@dataclass(frozen=True)
class SdfGrid:
    """Signed distance to the nearest obstacle boundary, sampled sub-cell.

    values[i, j] is the distance at position ((j+0.5)*spacing, (i+0.5)*spacing)
    in cell units; negative inside obstacle cells, positive in free space.
    A map with no obstacles has no boundary; such grids carry the degenerate
    flag and an all-infinity sentinel.
    """

    values: np.ndarray
    resolution: int
    degenerate: bool = False

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def spacing(self) -> float:
        return 1.0 / self.resolution

    @property
    def extent(self) -> tuple[float, float]:
        """(width, height) of the covered area in cell units."""
        nsy, nsx = self.values.shape
        return nsx * self.spacing, nsy * self.spacing

    def value_at(self, x: float, y: float) -> float:
        """Bilinear SDF value at a single continuous position."""
        return float(
            kernels.bilinear(
                self.values, self.spacing, np.array([x]), np.array([y])
            )[0]
        )


@dataclass(frozen=True)
class PoseEstimate:
    pose: Pose
    residual: float
    confident: bool


def obstacle_boundary_segments(grid: GridMap) -> np.ndarray:
    """Unit edges separating obstacle cells from free space or the map exterior.

    Returns an (S, 4) array of (x1, y1, x2, y2) rows. Edges between two
    obstacle cells are interior to the obstacle region and excluded.
    """
    occ = grid.occupancy
    padded = np.zeros((grid.height + 2, grid.width + 2), dtype=bool)
    padded[1:-1, 1:-1] = occ
    segs: list[tuple[float, float, float, float]] = []
    rows, cols = np.nonzero(occ)
    for r, c in zip(rows, cols):
        r = int(r)
        c = int(c)
        if not padded[r, c + 1]:  # neighbor above
            segs.append((c, r, c + 1, r))
        if not padded[r + 2, c + 1]:  # below
            segs.append((c, r + 1, c + 1, r + 1))
        if not padded[r + 1, c]:  # left
            segs.append((c, r, c, r + 1))
        if not padded[r + 1, c + 2]:  # right
            segs.append((c + 1, r, c + 1, r + 1))
    return np.array(segs, dtype=np.float64).reshape(-1, 4)


def compute_sdf(grid: GridMap, resolution: int = 4) -> SdfGrid:
    """Sample the signed distance field of the map's obstacle boundary.

    Each sample holds the exact Euclidean distance from the sample center to
    the nearest boundary edge, signed negative inside obstacle cells.
    """
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    nsx = grid.width * resolution
    nsy = grid.height * resolution
    segs = obstacle_boundary_segments(grid)
    if segs.shape[0] == 0:
        values = np.full((nsy, nsx), DEGENERATE_SENTINEL)
        return SdfGrid(values, resolution, degenerate=True)
    spacing = 1.0 / resolution
    xs = (np.arange(nsx) + 0.5) * spacing
    ys = (np.arange(nsy) + 0.5) * spacing
    gx, gy = np.meshgrid(xs, ys)
    dist = kernels.sdf_min_distance(gx.ravel(), gy.ravel(), segs)
    dist = dist.reshape(nsy, nsx)
    # samples never land exactly on cell edges, so floor is unambiguous
    cell_r = np.floor(gy).astype(np.int64)
    cell_c = np.floor(gx).astype(np.int64)
    inside = grid.occupancy[cell_r, cell_c]
    values = np.where(inside, -dist, dist)
    return SdfGrid(values, resolution)


def cast_beams(grid: GridMap, pose: Pose, n_beams: int = 64, max_range: float = 20.0) -> BeamScan:
    """Cast n_beams rays from the pose; ranges stop at obstacle boundaries or the border.

    Beam i points along pose.heading + 2*pi*i/n_beams. Deterministic exact
    grid traversal; no noise model (callers add noise when they want it).
    """
    if n_beams < 1:
        raise ValueError("need at least one beam")
    col = math.floor(pose.x)
    row = math.floor(pose.y)
    if not (0 <= col < grid.width and 0 <= row < grid.height):
        raise ValueError("pose outside the map")
    if grid.occupancy[row, col]:
        raise ValueError("pose inside an obstacle")
    angles = pose.heading + 2.0 * math.pi * np.arange(n_beams) / n_beams
    occ = grid.occupancy.astype(np.uint8)
    ranges, kinds = kernels.cast_rays(occ, float(pose.x), float(pose.y), angles, float(max_range))
    return BeamScan(ranges, float(max_range), kinds)


def _valid_offsets(scan: BeamScan, heading: float) -> tuple[np.ndarray, np.ndarray]:
    """Endpoint offsets (relative to position) of beams usable in the residual."""
    n = scan.n_beams
    angles = heading + 2.0 * math.pi * np.arange(n) / n
    if scan.hits is not None:
        mask = scan.hits == HIT_OBSTACLE
    else:
        mask = scan.ranges < scan.max_range * (1.0 - 1e-12)
    r = scan.ranges[mask]
    a = angles[mask]
    return r * np.cos(a), r * np.sin(a)


def estimate_position(
    sdf: SdfGrid,
    scan: BeamScan,
    heading: float,
    search_region: tuple[float, float, float, float] | None = None,
    refine_iters: int = 10,
) -> PoseEstimate:
    """Find the position minimizing the scan-to-SDF residual.

    Coarse grid search at the SDF sample spacing over the search region
    (x_min, y_min, x_max, y_max), then local pattern search with the step
    halved each iteration starting from 0.5 cells. Ties in the coarse grid
    resolve to the lowest candidate index for determinism.

    Raises:
        AmbiguityError: degenerate SDF, or no beam terminated on an obstacle.
        ValueError: empty scan or empty search region.
    """
    if sdf.degenerate:
        raise AmbiguityError("SDF is degenerate (no obstacles); position is unobservable")
    if scan.n_beams == 0:
        raise ValueError("scan is empty")
    ext_x, ext_y = sdf.extent
    if search_region is None:
        search_region = (0.0, 0.0, ext_x, ext_y)
    x_min, y_min, x_max, y_max = search_region
    if not (x_min < x_max and y_min < y_max):
        raise ValueError("empty search region")
    off_x, off_y = _valid_offsets(scan, heading)
    if off_x.shape[0] == 0:
        raise AmbiguityError("no beam terminated on an obstacle boundary")

    spacing = sdf.spacing
    nx = max(1, int(math.ceil((x_max - x_min) / spacing)))
    ny = max(1, int(math.ceil((y_max - y_min) / spacing)))
    xs = x_min + (np.arange(nx) + 0.5) * (x_max - x_min) / nx
    ys = y_min + (np.arange(ny) + 0.5) * (y_max - y_min) / ny
    gx, gy = np.meshgrid(xs, ys)
    cand_x = gx.ravel()
    cand_y = gy.ravel()
    residuals = kernels.residual_grid(sdf.values, spacing, cand_x, cand_y, off_x, off_y)
    best_idx = int(np.argmin(residuals))
    best_x = float(cand_x[best_idx])
    best_y = float(cand_y[best_idx])
    best_res = float(residuals[best_idx])

    def eval_at(x: float, y: float) -> float:
        return float(
            kernels.residual_grid(sdf.values, spacing, np.array([x]), np.array([y]), off_x, off_y)[0]
        )

    step = 0.5
    for _ in range(refine_iters):
        # greedy moves at the current scale before halving
        for _ in range(32):
            moved = False
            for dx, dy in ((step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step),
                           (step, step), (step, -step), (-step, step), (-step, -step)):
                x = min(max(best_x + dx, x_min), x_max)
                y = min(max(best_y + dy, y_min), y_max)
                r = eval_at(x, y)
                if r < best_res - 1e-15:
                    best_x, best_y, best_res = x, y, r
                    moved = True
            if not moved:
                break
        step *= 0.5

    n_valid = off_x.shape[0]
    confident = n_valid >= 3 and best_res / n_valid <= 0.25
    return PoseEstimate(Pose(best_x, best_y, heading), best_res, confident)
