"""Numerical checks of the geometric hypotheses behind exactness results.

Strict quasiconcavity of the constraints at boundary points, the rank-one
lift criterion, the concavity exponent, sampling of the convex boundary, an
interior probe near it, a semi-decision search for the Archimedean
property, the epsilon-u margin and the Hessian state functional.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from . import linalg
from .oracle import OracleConfig, grid_min, set_membership, feasible_points, minimizer_cluster
from .poly import DimensionError, Polynomial, PolySystem, build_ux, shifted_concavity_transform
from .relax import Verdict, sos_membership
from .sdp import SolverSettings

QC_TOL = 1e-7
ACTIVE_REL_TOL = 1e-6
LIFT_LAMBDA_MAX = 2.0**40
#: above this exponent the symbolic transform is too large to expand
SYMBOLIC_K_MAX = 6
DERIVATIVE_IDENTITY_TOL = 1e-10


class HypothesisError(ValueError):
    pass


class EmptySetError(HypothesisError):
    """The oracle found no feasible point in its box."""


class IncompleteMinimizersError(HypothesisError):
    pass


def _point(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != n:
        raise DimensionError(f"point has dimension {x.shape[0]}, expected {n}")
    return x


# ---------------------------------------------------------------- quasiconcavity


class QcVerdict(str, enum.Enum):
    STRICTLY_CONCAVE = "StrictlyConcave"
    STRICTLY_QUASICONCAVE = "StrictlyQuasiconcave"
    FAILS = "Fails"


@dataclass
class QuasiconcavityVerdict:
    point: np.ndarray
    gradient_norm: float
    #: largest eigenvalue of the Hessian on the tangent space (whole space if the gradient is ~0)
    tangent_max_eigenvalue: float
    verdict: QcVerdict
    lift_lambda: float | None = None

    @property
    def quasiconcave(self) -> bool:
        # strictly concave implies strictly quasiconcave
        return self.verdict is not QcVerdict.FAILS

    def to_json(self) -> dict:
        return {
            "point": self.point.tolist(),
            "gradient_norm": self.gradient_norm,
            "tangent_max_eigenvalue": self.tangent_max_eigenvalue,
            "verdict": self.verdict.value,
            "lift_lambda": self.lift_lambda,
        }


def strict_quasiconcave_at(g: Polynomial, x, tol: float = QC_TOL) -> QuasiconcavityVerdict:
    """Is ``v^T Hess g(x) v < 0`` for every nonzero ``v`` orthogonal to ``grad g(x)``?

    With a vanishing gradient this is strict concavity at ``x``. The tangent
    space is spanned by a Householder complement of the gradient and
    strictness means the projected Hessian has all eigenvalues ``<= -tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = _point(x, g.n)
    grad = g.gradient_at(x)
    H = g.hessian_at(x)
    gnorm = float(np.linalg.norm(grad))
    concave = linalg.is_nd(H, tol)
    if gnorm <= tol:
        lam = linalg.max_eigenvalue(H)
        verdict = QcVerdict.STRICTLY_CONCAVE if concave else QcVerdict.FAILS
        return QuasiconcavityVerdict(x, gnorm, lam, verdict)
    if g.n == 1:
        lam = -math.inf  # the tangent space is {0}
    else:
        P = linalg.householder_complement(grad)
        lam = linalg.max_eigenvalue(P.T @ H @ P)
    if lam > -tol:
        return QuasiconcavityVerdict(x, gnorm, lam, QcVerdict.FAILS)
    verdict = QcVerdict.STRICTLY_CONCAVE if concave else QcVerdict.STRICTLY_QUASICONCAVE
    return QuasiconcavityVerdict(x, gnorm, lam, verdict, quasiconcave_lift_lambda(g, x, LIFT_LAMBDA_MAX, tol))


def quasiconcave_lift_lambda(g: Polynomial, x, lambda_max: float, tol: float = QC_TOL) -> float | None:
    """First ``lam`` in ``0, 1, 2, 4, ...`` with ``lam grad grad^T - Hess`` positive definite (margin ``tol``)."""
    if not lambda_max > 0:
        raise ValueError("lambda_max must be positive")
    x = _point(x, g.n)
    grad = g.gradient_at(x)
    H = g.hessian_at(x)
    G = np.outer(grad, grad)
    lam = 0.0
    while lam <= lambda_max:
        if linalg.min_eigenvalue(lam * G - H) > tol:
            return lam
        lam = 1.0 if lam == 0 else 2.0 * lam
    return None


def transform_hessians(g: Polynomial, x, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Hessian of ``g (1-g)^k`` at ``x``: (chain rule at the actual value of g, closed form assuming ``g(x) = 0``).

    With ``h(t) = t (1-t)^k`` the chain rule gives ``h'(g) Hess g + h''(g) grad grad^T``;
    at a zero of ``g`` ``h'(0) = 1`` and ``h''(0) = -2k``.
    """
    x = _point(x, g.n)
    c = g.eval(x)
    grad = g.gradient_at(x)
    H = g.hessian_at(x)
    G = np.outer(grad, grad)
    d1 = (1 - c) ** k - k * c * (1 - c) ** (k - 1)
    d2 = -2 * k * (1 - c) ** (k - 1) + (k * (k - 1) * c * (1 - c) ** (k - 2) if k >= 2 else 0.0)
    return d1 * H + d2 * G, H - 2 * k * G


def concavity_exponent(g: Polynomial, x, k_max: int = 64, tol: float = QC_TOL) -> int | None:
    """Smallest ``k >= 1`` with ``g (1-g)^k`` strictly concave at the zero ``x`` of ``g``."""
    x = _point(x, g.n)
    if abs(g.eval(x)) > tol:
        raise HypothesisError(f"g(x) = {g.eval(x):.3e} is not a zero within tol {tol}")
    for k in range(1, k_max + 1):
        chain, closed = transform_hessians(g, x, k)
        if k <= SYMBOLIC_K_MAX:
            sym = shifted_concavity_transform(g, k).hessian_at(x)
            if np.max(np.abs(sym - chain)) > DERIVATIVE_IDENTITY_TOL * (1 + np.max(np.abs(sym))):
                raise ArithmeticError(f"Hessian of the transform disagrees with the chain rule at k={k}")
        if linalg.is_nd(chain, tol):
            if not linalg.is_nd(closed, 0.5 * tol):
                raise ArithmeticError(f"closed-form Hessian disagrees with the chain rule at k={k}")
            return k
    return None


# ---------------------------------------------------------------- convex boundary


def directions(n: int, n_dirs: int) -> np.ndarray:
    """Deterministic quasi-uniform unit directions plus the coordinate axes (both signs)."""
    if n_dirs < 1:
        raise ValueError("n_dirs must be positive")
    if n == 1:
        base = np.array([[1.0], [-1.0]])
    elif n == 2:
        ang = 2 * np.pi * np.arange(n_dirs) / n_dirs
        base = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    elif n == 3:
        # Fibonacci sphere
        i = np.arange(n_dirs) + 0.5
        z = 1 - 2 * i / n_dirs
        r = np.sqrt(1 - z * z)
        phi = np.pi * (3 - np.sqrt(5)) * i
        base = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    else:
        rng = np.random.default_rng(0)
        base = rng.standard_normal((n_dirs, n))
        base /= np.linalg.norm(base, axis=1, keepdims=True)
    axes = np.vstack([np.eye(n), -np.eye(n)])
    out: list[np.ndarray] = []
    for v in np.vstack([base, axes]):
        if all(np.linalg.norm(v - w) > 1e-9 for w in out):
            out.append(v)
    return np.array(out)


@dataclass
class AtlasPoint:
    point: np.ndarray
    active: tuple[int, ...]
    direction: np.ndarray
    #: False when the point touches the oracle box or no constraint is active
    usable: bool

    def to_json(self) -> dict:
        return {
            "point": self.point.tolist(),
            "active": list(self.active),
            "direction": self.direction.tolist(),
            "usable": self.usable,
        }


@dataclass
class BoundaryAtlas:
    points: list[AtlasPoint] = field(default_factory=list)
    active_tol: float = ACTIVE_REL_TOL

    def usable(self) -> list[AtlasPoint]:
        return [p for p in self.points if p.usable]

    def to_json(self) -> dict:
        return {"active_tol": self.active_tol, "points": [p.to_json() for p in self.points]}


def active_set(g: PolySystem, x, rel_tol: float = ACTIVE_REL_TOL) -> tuple[int, ...]:
    """Indices ``i`` (0-based) with ``|g_i(x)| <= rel_tol (1 + max |coefficient of g_i|)``."""
    x = _point(x, g.n)
    return tuple(
        i for i, gi in enumerate(g.constraints) if abs(gi.eval(x)) <= rel_tol * (1 + gi.max_abs_coefficient())
    )


def convex_boundary_sample(g: PolySystem, n_dirs: int, oracle_cfg: OracleConfig) -> BoundaryAtlas:
    """Minimizers of linear forms over ``S(g)`` in the oracle box."""
    lo, hi = oracle_cfg.bounds
    edge = float(np.max(oracle_cfg.spacing))
    radius = 2 * edge
    atlas = BoundaryAtlas()
    for ell in directions(g.n, n_dirs):
        f = Polynomial(g.n, {tuple(int(i == j) for j in range(g.n)): float(c) for i, c in enumerate(ell)})
        res = grid_min(f, g, oracle_cfg)
        if not res.feasible_found:
            raise EmptySetError("no feasible point in the oracle box")
        for x in res.minimizers:
            if any(np.linalg.norm(x - p.point) < radius for p in atlas.points):
                continue
            if not set_membership(x, g, oracle_cfg.feas_tol):
                continue
            act = active_set(g, x)
            on_box = bool(np.any(x - lo <= edge) or np.any(hi - x <= edge))
            atlas.points.append(AtlasPoint(x, act, ell, usable=bool(act) and not on_box))
    return atlas


def interior_near_convbd_probe(
    g: PolySystem, atlas: BoundaryAtlas, radius: float, samples: int = 256, margin: float = 1e-9
) -> list[bool]:
    """Per atlas point: does a low-discrepancy sample of the ball around it hit ``{g_i > margin}``?

    A heuristic: a False answer means no strictly feasible sample was seen.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    unit = _ball_samples(g.n, samples)
    out = []
    for p in atlas.points:
        pts = p.point + radius * unit
        ok = np.ones(pts.shape[0], dtype=bool)
        for gi in g.constraints:
            ok &= gi.eval(pts) > margin
        out.append(bool(np.any(ok)))
    return out


def _ball_samples(n: int, samples: int) -> np.ndarray:
    """First ``samples`` points of the (unscrambled) Halton sequence that fall in the unit ball."""
    sampler = qmc.Halton(d=n, scramble=False)
    got: list[np.ndarray] = []
    count = 0
    while count < samples:
        batch = 2 * sampler.random(max(64, 2 * samples)) - 1
        batch = batch[np.linalg.norm(batch, axis=1) <= 1]
        got.append(batch)
        count += batch.shape[0]
    return np.vstack(got)[:samples]


# ---------------------------------------------------------------- Archimedean search


@dataclass(frozen=True)
class ArchimedeanResult:
    found: bool
    N: float | None = None
    d: int | None = None

    @property
    def status(self) -> str:
        return "Found" if self.found else "Inconclusive"

    def to_json(self) -> dict:
        return {"status": self.status, "N": self.N, "d": self.d}


def archimedean_search(
    g: PolySystem, N_max: float = 16, d_max: int = 4, settings: SolverSettings | None = None
) -> ArchimedeanResult:
    """First ``(N, d)`` with ``N - sum X_i^2`` certified in ``M_d(g)``; d outer, N inner."""
    if N_max < 1 or d_max < 1:
        raise ValueError("N_max and d_max must be at least 1")
    n = g.n
    sq = sum((Polynomial.variable(n, i) ** 2 for i in range(n)), Polynomial.zero(n))
    for d in range(2, d_max + 1, 2):
        N = 1.0
        while N <= N_max:
            if sos_membership(N - sq, g, d, settings).verdict is Verdict.MEMBER:
                return ArchimedeanResult(True, N, d)
            N *= 2
    return ArchimedeanResult(False)


# ---------------------------------------------------------------- margins and functionals


@dataclass
class EpsilonMargin:
    epsilon: float
    #: infimum of (f - a)/u over grid points of S(g) outside the excluded balls
    outside_ratio: float
    #: per minimizer, lambda_min(Hess f) / lambda_max(Hess u)
    hessian_ratios: list[float]
    a: float

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "outside_ratio": self.outside_ratio,
            "hessian_ratios": list(self.hessian_ratios),
            "a": self.a,
        }


def epsilon_u_margin(
    f: Polynomial, g: PolySystem, minimizers: Sequence, exclusion_radius: float, oracle_cfg: OracleConfig
) -> EpsilonMargin:
    """Estimate the largest ``eps`` with ``f >= a + eps u`` on ``S(g)``."""
    pts = [_point(m, f.n) for m in minimizers]
    if not pts:
        raise ValueError("minimizer list is empty")
    if len(minimizer_cluster(pts, 1e-12)) != len(pts):
        raise ValueError("minimizers must be pairwise distinct")
    if not exclusion_radius > 0:
        raise ValueError("exclusion_radius must be positive")
    a = grid_min(f, g, oracle_cfg).value
    u = build_ux(pts, f.n)
    grid = feasible_points(g, oracle_cfg)
    far = np.ones(grid.shape[0], dtype=bool)
    for p in pts:
        far &= np.linalg.norm(grid - p, axis=1) > exclusion_radius
    grid = grid[far]
    outside = math.inf
    if grid.shape[0]:
        fv = f.eval(grid) - a
        uv = u.eval(grid)
        if np.any(uv <= 1e-300) or np.any(fv <= 0):
            raise IncompleteMinimizersError("f attains its minimum away from the listed minimizers")
        outside = float(np.min(fv / uv))
    ratios = []
    for p in pts:
        top = linalg.max_eigenvalue(u.hessian_at(p))
        if not top > 0:
            # the product of squared distances underflowed: far too many minimizers
            raise HypothesisError(f"u is flat at the minimizer {p.tolist()}")
        ratios.append(linalg.min_eigenvalue(f.hessian_at(p)) / top)
    return EpsilonMargin(min(outside, min(ratios)), outside, ratios, a)


def hessian_state(p: Polynomial, x, v) -> float:
    """``v^T (Hess p)(x) v``."""
    x = _point(x, p.n)
    v = _point(v, p.n)
    return float(v @ p.hessian_at(x) @ v)
