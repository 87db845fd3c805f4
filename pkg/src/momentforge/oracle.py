"""Brute-force ground truth over a bounded box.

Everything here is deliberately independent of the SDP machinery: a dense
grid scan, local pattern-search refinement around the best grid points, and
a final smooth local polish (SLSQP) whose output is only accepted when it
passes the same feasibility test as grid points. Results only speak about
the configured box.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize

from .poly import Polynomial, PolySystem

#: refinement keeps at most this many seed clusters
MAX_SEEDS = 64
#: candidates examined before clustering (lowest values first)
MAX_CANDIDATES = 2000
#: points per axis on each side of the centre of a refinement grid
LOCAL_HALF = 10
MAX_RECENTER = 50
CHUNK = 1 << 18


@dataclass(frozen=True)
class OracleConfig:
    box: tuple[tuple[float, float], ...]
    resolution: int = 201
    refine_rounds: int = 6
    feas_tol: float = 1e-9
    #: run the smooth local polish after grid refinement
    polish: bool = True

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        object.__setattr__(self, "box", box)
        if not box:
            raise ValueError("box needs at least one interval")
        for lo, hi in box:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"bad box interval [{lo}, {hi}]")
        if self.resolution < 3:
            raise ValueError("resolution must be at least 3")
        if self.refine_rounds < 0:
            raise ValueError("refine_rounds must be nonnegative")
        if self.feas_tol < 0:
            raise ValueError("feas_tol must be nonnegative")

    @classmethod
    def cube(cls, n: int, half_width: float, **kw) -> OracleConfig:
        return cls(tuple((-half_width, half_width) for _ in range(n)), **kw)

    @property
    def n(self) -> int:
        return len(self.box)

    @property
    def spacing(self) -> np.ndarray:
        lo, hi = self.bounds
        return (hi - lo) / (self.resolution - 1)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        arr = np.array(self.box)
        return arr[:, 0], arr[:, 1]


class OracleResult(NamedTuple):
    value: float
    minimizers: list[np.ndarray]
    feasible_found: bool


def set_membership(x, g: PolySystem, feas_tol: float = 1e-9) -> bool:
    x = np.asarray(x, dtype=float)
    if x.shape != (g.n,):
        raise ValueError(f"point has shape {x.shape}, expected ({g.n},)")
    if not g.constraints:
        return True
    return bool(np.all(g.values(x) >= -feas_tol))


def _feasible(g: PolySystem, pts: np.ndarray, feas_tol: float) -> np.ndarray:
    ok = np.ones(pts.shape[0], dtype=bool)
    for gi in g.constraints:
        ok &= gi.eval(pts) >= -feas_tol
    return ok


def _masked_values(f: Polynomial, g: PolySystem, pts: np.ndarray, feas_tol: float) -> np.ndarray:
    vals = f.eval(pts)
    vals = np.where(_feasible(g, pts, feas_tol), vals, np.inf)
    return vals


def minimizer_cluster(points: Sequence, radius: float) -> list[np.ndarray]:
    """Greedy clustering in input order; returns one representative per cluster."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    reps: list[np.ndarray] = []
    for p in points:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if all(np.linalg.norm(p - r) >= radius for r in reps):
            reps.append(p)
    return reps


def _order(vals: np.ndarray, pts: np.ndarray) -> np.ndarray:
    # ascending value, ties broken by the lexicographically smallest point
    keys = [pts[:, i] for i in range(pts.shape[1] - 1, -1, -1)] + [vals]
    return np.lexsort(keys)


def _full_grid(f, g, cfg: OracleConfig) -> tuple[np.ndarray, list[np.ndarray]]:
    lo, hi = cfg.bounds
    axes = [np.linspace(a, b, cfg.resolution) for a, b in zip(lo, hi)]
    shape = (cfg.resolution,) * cfg.n
    total = cfg.resolution**cfg.n
    F = np.empty(total)
    for start in range(0, total, CHUNK):
        idx = np.unravel_index(np.arange(start, min(total, start + CHUNK)), shape)
        pts = np.stack([ax[i] for ax, i in zip(axes, idx)], axis=1)
        F[start : start + pts.shape[0]] = _masked_values(f, g, pts, cfg.feas_tol)
    return F.reshape(shape), axes


def _local_minima(F: np.ndarray) -> np.ndarray:
    """Mask of feasible grid points no larger than any axis neighbour."""
    mask = np.isfinite(F)
    for ax in range(F.ndim):
        pad = [(0, 0)] * F.ndim
        pad[ax] = (1, 1)
        P = np.pad(F, pad, constant_values=np.inf)
        lower = np.take(P, range(0, F.shape[ax]), axis=ax)
        upper = np.take(P, range(2, F.shape[ax] + 2), axis=ax)
        mask &= (F <= lower) & (F <= upper)
    return mask


def _neighbour_spread(F: np.ndarray, idx: tuple) -> float:
    """Largest finite change of ``F`` from ``idx`` to an axis neighbour."""
    best = F[idx]
    spread = 0.0
    for ax in range(F.ndim):
        for step in (-1, 1):
            j = list(idx)
            j[ax] += step
            if 0 <= j[ax] < F.shape[ax] and np.isfinite(F[tuple(j)]):
                spread = max(spread, float(F[tuple(j)] - best))
    return spread


def _refine(f, g, cfg: OracleConfig, seed: np.ndarray, seed_val: float) -> tuple[float, np.ndarray]:
    lo, hi = cfg.bounds
    offsets = np.array(list(itertools.product(range(-LOCAL_HALF, LOCAL_HALF + 1), repeat=cfg.n)), dtype=float)
    h = cfg.spacing
    centre, best_val = seed, seed_val
    for _ in range(cfg.refine_rounds):
        h = h / LOCAL_HALF
        for _ in range(MAX_RECENTER):
            pts = centre + offsets * h
            inside = np.all((pts >= lo) & (pts <= hi), axis=1)
            pts = pts[inside]
            vals = _masked_values(f, g, pts, cfg.feas_tol)
            k = _order(vals, pts)[0]
            if not vals[k] < best_val:
                break
            moved = np.abs(pts[k] - centre) / h
            centre, best_val = pts[k], float(vals[k])
            # keep walking while the optimum sits on the edge of the local grid
            if np.max(moved) < LOCAL_HALF - 0.5:
                break
    return best_val, centre


def _polish(f, g, cfg: OracleConfig, x0: np.ndarray, val0: float) -> tuple[float, np.ndarray]:
    lo, hi = cfg.bounds
    grads = [p.gradient() for p in (f, *g.constraints)]

    def jac(k):
        return lambda x: np.array([q.eval(x) for q in grads[k]])

    cons = [
        {"type": "ineq", "fun": gi.eval, "jac": jac(i + 1)} for i, gi in enumerate(g.constraints)
    ]
    try:
        res = minimize(
            f.eval, x0, jac=jac(0), method="SLSQP", bounds=list(zip(lo, hi)),
            constraints=cons, options={"ftol": 1e-15, "maxiter": 200},
        )
    except (ValueError, ArithmeticError):
        return val0, x0
    x = np.clip(np.asarray(res.x, dtype=float), lo, hi)
    if not np.all(np.isfinite(x)) or not _feasible(g, x[None, :], cfg.feas_tol)[0]:
        return val0, x0
    v = float(f.eval(x))
    return (v, x) if v < val0 else (val0, x0)


def grid_min(f: Polynomial, g: PolySystem, cfg: OracleConfig) -> OracleResult:
    """Minimize ``f`` over ``S(g)`` intersected with the box."""
    if f.n != g.n or cfg.n != g.n:
        raise ValueError("objective, constraints and box disagree on the number of variables")
    F, axes = _full_grid(f, g, cfg)
    if not np.any(np.isfinite(F)):
        return OracleResult(np.inf, [], False)

    def point(idx):
        return np.array([ax[i] for ax, i in zip(axes, idx)])

    best_flat = int(np.argmin(F))
    best_idx = np.unravel_index(best_flat, F.shape)
    a = float(F[best_idx])
    slack = max(1e-6, _neighbour_spread(F, best_idx))
    cand = np.flatnonzero((_local_minima(F) & (F <= a + slack)).ravel())
    idx = np.unravel_index(cand, F.shape)
    flat_pts = np.stack([ax[i] for ax, i in zip(axes, idx)], axis=1)
    vals = F.ravel()[cand]
    order = _order(vals, flat_pts)[:MAX_CANDIDATES]
    radius = 2.0 * float(np.max(cfg.spacing))
    seeds: list[tuple[float, np.ndarray]] = []
    for k in order:
        p = flat_pts[k]
        if all(np.linalg.norm(p - s) >= radius for _, s in seeds):
            seeds.append((float(vals[k]), p))
        if len(seeds) >= MAX_SEEDS:
            break
    if not seeds:
        seeds = [(a, point(best_idx))]

    refined = [_refine(f, g, cfg, p, v) for v, p in seeds]
    if cfg.polish:
        refined = [_polish(f, g, cfg, p, v) for v, p in refined]
    refined.sort(key=lambda vp: (vp[0], tuple(vp[1])))
    value = refined[0][0]
    close = [p for v, p in refined if v <= value + 1e-6]
    return OracleResult(value, minimizer_cluster(close, radius), True)


def grid_max(f: Polynomial, g: PolySystem, cfg: OracleConfig) -> OracleResult:
    res = grid_min(-f, g, cfg)
    return OracleResult(-res.value, res.minimizers, res.feasible_found)


def feasible_points(g: PolySystem, cfg: OracleConfig, strict_margin: float | None = None) -> np.ndarray:
    """Grid points of the box lying in ``S(g)`` (or with all ``g_i > strict_margin``)."""
    lo, hi = cfg.bounds
    axes = [np.linspace(a, b, cfg.resolution) for a, b in zip(lo, hi)]
    pts = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    if strict_margin is None:
        return pts[_feasible(g, pts, cfg.feas_tol)]
    ok = np.ones(pts.shape[0], dtype=bool)
    for gi in g.constraints:
        ok &= gi.eval(pts) > strict_margin
    return pts[ok]


def bounding_box(g: PolySystem, cfg: OracleConfig) -> tuple[tuple[float, float], ...] | None:
    """Per-axis extent of the feasible grid points (``None`` when none is feasible).

    Degenerate axes are widened by one grid cell so every interval is proper.
    """
    pts = feasible_points(g, cfg)
    if pts.shape[0] == 0:
        return None
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    h = cfg.spacing
    widen = hi - lo < h
    lo = np.where(widen, lo - h, lo)
    hi = np.where(widen, hi + h, hi)
    return tuple((float(a), float(b)) for a, b in zip(lo, hi))
