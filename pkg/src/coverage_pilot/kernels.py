"""Numeric hot kernels: SDF distances, beam casting, residual grid evaluation.

Two interchangeable implementations live here. The default path compiles the
loop kernels with numba's @njit; a pure-numpy path provides the same results
without a compiler. Selection happens once at import:

  * set ``COVERAGE_PILOT_NO_NUMBA=1`` to force the numpy path;
  * otherwise numba is used when importable, numpy when not.

Both paths are also reachable explicitly through ``get_impls(name)``, which
the kernel benchmark and the cross-check tests use. Results agree to float
rounding; only throughput differs (see benchmarks/kernel_bench.py).

Beam hit codes: 0 = terminated on an obstacle boundary, 1 = left the map at
the border, 2 = clamped at max_range without hitting anything.
"""

from __future__ import annotations

import math
import os
from types import SimpleNamespace

import numpy as np

HIT_OBSTACLE = 0
HIT_BORDER = 1
HIT_NONE = 2

_INF = 1e30


# ----- pure-numpy implementations -----

def _sdf_min_distance_numpy(px: np.ndarray, py: np.ndarray, segs: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest segment, vectorized.

    px, py: (P,) point coordinates. segs: (S, 4) rows (x1, y1, x2, y2).
    """
    x1 = segs[:, 0][None, :]
    y1 = segs[:, 1][None, :]
    vx = (segs[:, 2] - segs[:, 0])[None, :]
    vy = (segs[:, 3] - segs[:, 1])[None, :]
    wx = px[:, None] - x1
    wy = py[:, None] - y1
    denom = vx * vx + vy * vy
    # segments here always have positive length (unit cell edges)
    t = np.clip((wx * vx + wy * vy) / denom, 0.0, 1.0)
    dx = wx - t * vx
    dy = wy - t * vy
    return np.sqrt((dx * dx + dy * dy).min(axis=1))


def _cast_rays_numpy(
    occ: np.ndarray, x0: float, y0: float, angles: np.ndarray, max_range: float
) -> tuple[np.ndarray, np.ndarray]:
    """Exact grid traversal per ray; loop over beams in Python."""
    n = angles.shape[0]
    ranges = np.empty(n, dtype=np.float64)
    kinds = np.empty(n, dtype=np.uint8)
    h, w = occ.shape
    for i in range(n):
        r, k = _cast_single(occ, h, w, x0, y0, math.cos(angles[i]), math.sin(angles[i]), max_range)
        ranges[i] = r
        kinds[i] = k
    return ranges, kinds


def _cast_single(occ, h, w, x0, y0, dx, dy, max_range):
    """March one ray across cell boundaries; distance to first obstacle or border.

    Works on the amanatides-woo traversal: track the parameter t of the next
    vertical and horizontal gridline crossing, always advance the nearer one.
    A tie means the ray passes exactly through a cell corner; both indices
    step so the diagonal cell is the one inspected.
    """
    col = int(math.floor(x0))
    row = int(math.floor(y0))
    if dx > 0.0:
        step_c, t_max_x, t_dx = 1, ((col + 1) - x0) / dx, 1.0 / dx
    elif dx < 0.0:
        step_c, t_max_x, t_dx = -1, (col - x0) / dx, -1.0 / dx
    else:
        step_c, t_max_x, t_dx = 0, _INF, _INF
    if dy > 0.0:
        step_r, t_max_y, t_dy = 1, ((row + 1) - y0) / dy, 1.0 / dy
    elif dy < 0.0:
        step_r, t_max_y, t_dy = -1, (row - y0) / dy, -1.0 / dy
    else:
        step_r, t_max_y, t_dy = 0, _INF, _INF
    while True:
        if t_max_x < t_max_y:
            t = t_max_x
            col += step_c
            t_max_x += t_dx
        elif t_max_y < t_max_x:
            t = t_max_y
            row += step_r
            t_max_y += t_dy
        else:
            t = t_max_x
            col += step_c
            row += step_r
            t_max_x += t_dx
            t_max_y += t_dy
        if t >= max_range:
            return max_range, HIT_NONE
        if col < 0 or col >= w or row < 0 or row >= h:
            return t, HIT_BORDER
        if occ[row, col]:
            return t, HIT_OBSTACLE


def _bilinear_numpy(values: np.ndarray, spacing: float, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear interpolation between sample centers, clamped at the hull."""
    nsy, nsx = values.shape
    gx = np.clip(xs / spacing - 0.5, 0.0, nsx - 1.0)
    gy = np.clip(ys / spacing - 0.5, 0.0, nsy - 1.0)
    x0 = np.minimum(gx.astype(np.int64), nsx - 2) if nsx > 1 else np.zeros_like(gx, dtype=np.int64)
    y0 = np.minimum(gy.astype(np.int64), nsy - 2) if nsy > 1 else np.zeros_like(gy, dtype=np.int64)
    x1 = np.minimum(x0 + 1, nsx - 1)
    y1 = np.minimum(y0 + 1, nsy - 1)
    fx = gx - x0
    fy = gy - y0
    v00 = values[y0, x0]
    v01 = values[y0, x1]
    v10 = values[y1, x0]
    v11 = values[y1, x1]
    return (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v01 + (1 - fx) * fy * v10 + fx * fy * v11


def _residual_grid_numpy(
    values: np.ndarray,
    spacing: float,
    cand_x: np.ndarray,
    cand_y: np.ndarray,
    off_x: np.ndarray,
    off_y: np.ndarray,
) -> np.ndarray:
    """Sum of squared SDF values at beam endpoints for every candidate position."""
    xs = cand_x[:, None] + off_x[None, :]
    ys = cand_y[:, None] + off_y[None, :]
    v = _bilinear_numpy(values, spacing, xs.ravel(), ys.ravel())
    v = v.reshape(xs.shape)
    return np.sum(v * v, axis=1)


_NUMPY_IMPLS = SimpleNamespace(
    name="numpy",
    sdf_min_distance=_sdf_min_distance_numpy,
    cast_rays=_cast_rays_numpy,
    residual_grid=_residual_grid_numpy,
    bilinear=_bilinear_numpy,
)


# ----- numba implementations -----

def _build_numba_impls():
    from numba import njit

    @njit(cache=True)
    def sdf_min_distance(px, py, segs):
        n_pts = px.shape[0]
        n_segs = segs.shape[0]
        out = np.empty(n_pts, dtype=np.float64)
        for p in range(n_pts):
            best = _INF
            for s in range(n_segs):
                x1 = segs[s, 0]
                y1 = segs[s, 1]
                vx = segs[s, 2] - x1
                vy = segs[s, 3] - y1
                wx = px[p] - x1
                wy = py[p] - y1
                t = (wx * vx + wy * vy) / (vx * vx + vy * vy)
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                dx = wx - t * vx
                dy = wy - t * vy
                d2 = dx * dx + dy * dy
                if d2 < best:
                    best = d2
            out[p] = math.sqrt(best)
        return out

    @njit(cache=True)
    def _cast_single_nb(occ, h, w, x0, y0, dx, dy, max_range):
        col = int(math.floor(x0))
        row = int(math.floor(y0))
        if dx > 0.0:
            step_c, t_max_x, t_dx = 1, ((col + 1) - x0) / dx, 1.0 / dx
        elif dx < 0.0:
            step_c, t_max_x, t_dx = -1, (col - x0) / dx, -1.0 / dx
        else:
            step_c, t_max_x, t_dx = 0, _INF, _INF
        if dy > 0.0:
            step_r, t_max_y, t_dy = 1, ((row + 1) - y0) / dy, 1.0 / dy
        elif dy < 0.0:
            step_r, t_max_y, t_dy = -1, (row - y0) / dy, -1.0 / dy
        else:
            step_r, t_max_y, t_dy = 0, _INF, _INF
        while True:
            if t_max_x < t_max_y:
                t = t_max_x
                col += step_c
                t_max_x += t_dx
            elif t_max_y < t_max_x:
                t = t_max_y
                row += step_r
                t_max_y += t_dy
            else:
                t = t_max_x
                col += step_c
                row += step_r
                t_max_x += t_dx
                t_max_y += t_dy
            if t >= max_range:
                return max_range, HIT_NONE
            if col < 0 or col >= w or row < 0 or row >= h:
                return t, HIT_BORDER
            if occ[row, col]:
                return t, HIT_OBSTACLE

    @njit(cache=True)
    def cast_rays(occ, x0, y0, angles, max_range):
        n = angles.shape[0]
        ranges = np.empty(n, dtype=np.float64)
        kinds = np.empty(n, dtype=np.uint8)
        h, w = occ.shape
        for i in range(n):
            r, k = _cast_single_nb(occ, h, w, x0, y0, math.cos(angles[i]), math.sin(angles[i]), max_range)
            ranges[i] = r
            kinds[i] = np.uint8(k)
        return ranges, kinds

    @njit(cache=True, inline="always")
    def _bilinear_one(values, spacing, x, y):
        nsy, nsx = values.shape
        gx = x / spacing - 0.5
        gy = y / spacing - 0.5
        if gx < 0.0:
            gx = 0.0
        elif gx > nsx - 1.0:
            gx = nsx - 1.0
        if gy < 0.0:
            gy = 0.0
        elif gy > nsy - 1.0:
            gy = nsy - 1.0
        x0 = int(gx)
        y0 = int(gy)
        if x0 > nsx - 2:
            x0 = nsx - 2 if nsx > 1 else 0
        if y0 > nsy - 2:
            y0 = nsy - 2 if nsy > 1 else 0
        x1 = x0 + 1 if x0 + 1 < nsx else nsx - 1
        y1 = y0 + 1 if y0 + 1 < nsy else nsy - 1
        fx = gx - x0
        fy = gy - y0
        return (
            (1 - fx) * (1 - fy) * values[y0, x0]
            + fx * (1 - fy) * values[y0, x1]
            + (1 - fx) * fy * values[y1, x0]
            + fx * fy * values[y1, x1]
        )

    @njit(cache=True)
    def residual_grid(values, spacing, cand_x, cand_y, off_x, off_y):
        n_c = cand_x.shape[0]
        n_b = off_x.shape[0]
        out = np.empty(n_c, dtype=np.float64)
        for c in range(n_c):
            acc = 0.0
            for b in range(n_b):
                v = _bilinear_one(values, spacing, cand_x[c] + off_x[b], cand_y[c] + off_y[b])
                acc += v * v
            out[c] = acc
        return out

    def bilinear(values, spacing, xs, ys):
        # scalar-loop interface kept numpy-shaped for parity with the fallback
        flat_x = np.asarray(xs, dtype=np.float64).ravel()
        flat_y = np.asarray(ys, dtype=np.float64).ravel()
        out = np.empty(flat_x.shape[0], dtype=np.float64)
        for i in range(flat_x.shape[0]):
            out[i] = _bilinear_one(values, spacing, flat_x[i], flat_y[i])
        return out.reshape(np.shape(xs))

    return SimpleNamespace(
        name="numba",
        sdf_min_distance=sdf_min_distance,
        cast_rays=cast_rays,
        residual_grid=residual_grid,
        bilinear=bilinear,
    )


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def available_backends() -> list[str]:
    names = ["numpy"]
    if numba_available():
        names.append("numba")
    return names


_numba_cache = None


def get_impls(backend: str) -> SimpleNamespace:
    """Return the named implementation set ('numpy' or 'numba')."""
    global _numba_cache
    if backend == "numpy":
        return _NUMPY_IMPLS
    if backend == "numba":
        if not numba_available():
            raise RuntimeError("numba backend requested but numba is not importable")
        if _numba_cache is None:
            _numba_cache = _build_numba_impls()
        return _numba_cache
    raise ValueError(f"unknown kernel backend {backend!r}")


def _select_default() -> SimpleNamespace:
    if os.environ.get("COVERAGE_PILOT_NO_NUMBA", "").strip() not in ("", "0"):
        return _NUMPY_IMPLS
    if numba_available():
        return get_impls("numba")
    return _NUMPY_IMPLS


_active = _select_default()
ACTIVE_BACKEND = _active.name

sdf_min_distance = _active.sdf_min_distance
cast_rays = _active.cast_rays
residual_grid = _active.residual_grid
bilinear = _active.bilinear
