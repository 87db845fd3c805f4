"""Small dense semidefinite programming solver.

Problems are in block-diagonal standard form::

    primal   minimize  sum_k <C_k, X_k>   s.t.  sum_k <A_jk, X_k> = b_j,  X_k >= 0
    dual     maximize  b^T y              s.t.  Z_k = C_k - sum_j y_j A_jk >= 0

(with ``maximize=True`` the primal objective is maximized instead). The
solver is an infeasible-start primal-dual path-following method using the
HKM search direction with a Mehrotra predictor-corrector step.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .linalg import NotPositiveDefiniteError, cho_solve, cholesky_spd, pivoted_cholesky_rank, sym_eigen

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    MAX_ITER = "MaxIter"
    NUMERICAL = "Numerical"


class SdpFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iter: int = 200
    step_frac: float = 0.98
    infeasibility_growth: float = 1e8
    certificate_tol: float = 1e-7
    #: "double", "extended" or "auto" (double, then extended if undecided)
    precision: str = "auto"
    #: stop after this many iterations without halving the best merit
    stall_iterations: int = 30

    def __post_init__(self):
        for name in ("gap_tol", "feas_tol", "step_frac", "infeasibility_growth", "certificate_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if not self.step_frac < 1:
            raise ValueError("step_frac must be < 1")
        if self.precision not in ("double", "extended", "auto"):
            raise ValueError(f"unknown precision {self.precision!r}")


@dataclass
class Constraint:
    coefficients: list[np.ndarray]
    rhs: float


@dataclass
class SdpProblem:
    blocks: list[int]
    objective: list[np.ndarray]
    constraints: list[Constraint]
    maximize: bool = False

    def __post_init__(self):
        self.blocks = [int(b) for b in self.blocks]
        if not self.blocks or any(b < 1 for b in self.blocks):
            raise SdpFormatError("block dimensions must be positive")
        self.objective = [_square(C, b, "objective") for C, b in zip(self.objective, self.blocks)]
        if len(self.objective) != len(self.blocks):
            raise SdpFormatError("one objective matrix per block is required")
        if not self.constraints:
            raise SdpFormatError("constraint list is empty")
        for j, con in enumerate(self.constraints):
            if len(con.coefficients) != len(self.blocks):
                raise SdpFormatError(f"constraint {j} has {len(con.coefficients)} blocks, expected {len(self.blocks)}")
            con.coefficients = [_square(A, b, f"constraint {j}") for A, b in zip(con.coefficients, self.blocks)]
            con.rhs = float(con.rhs)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def stacked(self) -> tuple[list[np.ndarray], np.ndarray]:
        """Per block, the ``(m, s, s)`` array of constraint matrices; and ``b``."""
        A = [np.stack([con.coefficients[k] for con in self.constraints]) for k in range(len(self.blocks))]
        b = np.array([con.rhs for con in self.constraints])
        return A, b

    def constraint_residual(self, X: Sequence[np.ndarray]) -> np.ndarray:
        A, b = self.stacked()
        return _apply(A, X) - b

    def objective_value(self, X: Sequence[np.ndarray]) -> float:
        return float(sum(np.sum(C * Xk) for C, Xk in zip(self.objective, X)))


def _square(M, dim: int, what: str) -> np.ndarray:
    M = np.array(M, dtype=float, ndmin=2)
    if M.shape != (dim, dim):
        raise SdpFormatError(f"{what}: matrix of shape {M.shape} for block of size {dim}")
    if not np.all(np.isfinite(M)):
        raise SdpFormatError(f"{what}: non-finite entries")
    return 0.5 * (M + M.T)


@dataclass
class SdpSolution:
    status: Status
    X: list[np.ndarray]
    y: np.ndarray
    Z: list[np.ndarray]
    primal_value: float
    dual_value: float
    gap: float
    iterations: int
    primal_residual: float = math.nan
    dual_residual: float = math.nan
    certificate: dict = field(default_factory=dict)
    extended_precision: bool = False
    maximize: bool = False
    #: the returned ``y`` is strictly dual feasible, so ``dual_value`` is a valid bound
    dual_certified: bool = False

    @property
    def value(self) -> float:
        return self.primal_value

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


# ---------------------------------------------------------------- helpers


def _apply(A: list[np.ndarray], X: Sequence[np.ndarray]) -> np.ndarray:
    """``(<A_j, X>)_j`` summed over blocks."""
    out = 0.0
    for Ak, Xk in zip(A, X):
        out = out + Ak.reshape(Ak.shape[0], -1) @ Xk.reshape(-1)
    return np.asarray(out, dtype=float)


def _adjoint(A: list[np.ndarray], y: np.ndarray) -> list[np.ndarray]:
    return [np.tensordot(y, Ak, axes=1) for Ak in A]


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _inner(U: Sequence[np.ndarray], V: Sequence[np.ndarray]) -> float:
    return float(sum(np.sum(u * v) for u, v in zip(U, V)))


def _norm(U: Sequence[np.ndarray]) -> float:
    return math.sqrt(_inner(U, U))


class _Backend:
    """Dense kernels for one working precision.

    Double precision goes through LAPACK; extended precision (``longdouble``)
    uses the pure numpy Cholesky and Jacobi routines of :mod:`linalg`.
    """

    def __init__(self, extended: bool):
        self.extended = extended
        self.dtype = np.dtype(np.longdouble) if extended else np.dtype(np.float64)

    def cast(self, M):
        return np.asarray(M, dtype=self.dtype)

    def chol(self, M):
        if self.extended:
            return cholesky_spd(M, pivot_tol=0.0)
        return np.linalg.cholesky(M)

    def inv_spd(self, M):
        L = self.chol(M)
        if self.extended:
            Li = _lower_inverse(L)
        else:
            Li = np.linalg.inv(L)
        return _sym(Li.T @ Li)

    def min_eig(self, M):
        if self.extended:
            return sym_eigen(M)[0][0]
        return np.linalg.eigvalsh(M)[0]

    def max_step(self, X, dX) -> float:
        """Largest alpha with ``X + alpha dX`` PSD (``inf`` when unbounded)."""
        L = self.chol(X)
        Li = _lower_inverse(L) if self.extended else np.linalg.inv(L)
        lam = self.min_eig(_sym(Li @ dX @ Li.T))
        return math.inf if lam >= 0 else float(-1.0 / lam)


def _lower_inverse(L):
    n = L.shape[0]
    Li = np.zeros_like(L)
    eye = np.eye(n, dtype=L.dtype)
    for i in range(n):
        Li[i] = (eye[i] - L[i, :i] @ Li[:i]) / L[i, i]
    return Li


# ---------------------------------------------------------------- solver


class _Reduced(NamedTuple):
    A: list[np.ndarray]
    b: np.ndarray
    keep: list[int]
    row_scale: np.ndarray


def _reduce(A: list[np.ndarray], b: np.ndarray, tol: float = 1e-10):
    """Normalize rows and drop linearly dependent equality constraints.

    Returns the reduced data, or ``(None, y_cert)`` when the dropped rows are
    inconsistent with the kept ones (``y_cert`` being a Farkas direction).
    """
    m = b.shape[0]
    flat = np.hstack([Ak.reshape(m, -1) for Ak in A])
    norms = np.linalg.norm(flat, axis=1)
    zero = norms == 0
    if np.any(zero & (np.abs(b) > tol)):
        y = np.zeros(m)
        j = int(np.flatnonzero(zero & (np.abs(b) > tol))[0])
        y[j] = np.sign(b[j])
        return None, y
    scale = np.where(zero, 1.0, norms)
    F = flat / scale[:, None]
    bs = b / scale
    candidates = [j for j in range(m) if not zero[j]]
    keep_local = pivoted_cholesky_rank(F[candidates] @ F[candidates].T, tol) if candidates else []
    keep = [candidates[i] for i in keep_local]
    dropped = [j for j in candidates if j not in keep]
    if dropped:
        coef, *_ = np.linalg.lstsq(F[keep].T, F[dropped].T, rcond=None)
        mismatch = bs[dropped] - coef.T @ bs[keep]
        bad = np.abs(mismatch) > 1e-8 * (1.0 + np.max(np.abs(bs)))
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            y = np.zeros(m)
            y[dropped[i]] = 1.0
            y[keep] = -coef[:, i]
            y = y / scale
            if b @ y < 0:
                y = -y
            return None, y
    Ar = [Ak[keep] / scale[keep][:, None, None] for Ak in A]
    return _Reduced(Ar, bs[keep], keep, scale[keep]), None


def solve(prob: SdpProblem, settings: SolverSettings | None = None) -> SdpSolution:
    """Solve ``prob``; see the module docstring for the problem form.

    With ``settings.precision == "auto"`` a solve that ends without a
    decision (``MaxIter``/``Numerical``) is repeated in extended precision and
    the better of the two results is returned.
    """
    settings = settings or SolverSettings()
    if settings.precision == "extended":
        return _solve(prob, settings, extended=True)
    sol = _solve(prob, settings, extended=False)
    if settings.precision == "auto" and sol.status in (Status.MAX_ITER, Status.NUMERICAL):
        ext = _solve(prob, settings, extended=True)
        if ext.status not in (Status.MAX_ITER, Status.NUMERICAL) or _rank(ext, settings) > _rank(sol, settings):
            return ext
    return sol


def _rank(sol: SdpSolution, settings: SolverSettings) -> tuple:
    # undecided results: a dual-feasible one with the best bound wins, else the smaller merit
    if sol.dual_certified:
        return (1, -sol.dual_value if sol.maximize else sol.dual_value)
    rel_gap = abs(sol.primal_value - sol.dual_value) / (1.0 + abs(sol.primal_value) + abs(sol.dual_value))
    return (0, -max(rel_gap, sol.primal_residual, sol.dual_residual))


def _solve(prob: SdpProblem, settings: SolverSettings, extended: bool) -> SdpSolution:
    be = _Backend(extended)
    sign = -1.0 if prob.maximize else 1.0
    A_full, b_full = prob.stacked()
    m_full = b_full.shape[0]
    dims = prob.blocks

    reduced, farkas = _reduce(A_full, b_full)
    if reduced is None:
        return _infeasible_by_rows(prob, farkas)
    C = [be.cast(sign * Ck) for Ck in prob.objective]
    A = [be.cast(Ak) for Ak in reduced.A]
    b = be.cast(reduced.b)
    m = b.shape[0]
    N = sum(dims)

    if m == 0:
        return _solve_unconstrained(prob, [sign * Ck for Ck in prob.objective], sign)

    tau = 1.0 + float(np.max(np.abs(b))) + max(float(np.max(np.abs(Ak))) for Ak in A)
    X = [tau * np.eye(s, dtype=be.dtype) for s in dims]
    Z = [tau * np.eye(s, dtype=be.dtype) for s in dims]
    y = np.zeros(m, dtype=be.dtype)
    norm_b = 1.0 + float(np.sqrt(b @ b))
    norm_C = 1.0 + _norm(C)
    growth = settings.infeasibility_growth * tau

    status = Status.MAX_ITER
    cert: dict = {}
    best = None
    best_merit = math.inf
    # best strictly dual-feasible iterate; its b^T y is a valid bound even if
    # the primal side never converges
    best_dual = None
    stall = 0
    it = 0
    for it in range(1, settings.max_iter + 1):
        rp = b - _apply(A, X)
        ATy = _adjoint(A, y)
        Rd = [Ck - Zk - Ak for Ck, Zk, Ak in zip(C, Z, ATy)]
        pobj = _inner(C, X)
        dobj = float(b @ y)
        mu = _inner(X, Z) / N
        pres = float(np.sqrt(rp @ rp)) / norm_b
        dres = _norm(Rd) / norm_C
        rel_gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        merit = max(rel_gap, pres, dres)
        log.debug("%3d p=%+.12e d=%+.12e gap=%.2e pres=%.2e dres=%.2e mu=%.2e", it, pobj, dobj, rel_gap, pres, dres, mu)
        if merit < best_merit:
            if merit < 0.5 * best_merit:
                stall = 0
            best_merit = merit
            best = (X, y, Z)
        else:
            stall += 1
        if dres <= settings.feas_tol and (best_dual is None or dobj > best_dual[0]):
            # C - A^T y = Z + Rd is PSD whenever every lambda_min(Z_k) exceeds ||Rd_k||
            if all(float(be.min_eig(Zk)) > 2.0 * float(np.sqrt(np.sum(Rk * Rk))) for Zk, Rk in zip(Z, Rd)):
                best_dual = (dobj, X, y, Z)
        if rel_gap <= settings.gap_tol and pres <= settings.feas_tol and dres <= settings.feas_tol:
            status = Status.OPTIMAL
            break

        if max(_norm(Z), float(np.sqrt(y @ y))) > growth:
            c = _primal_infeasibility_certificate(be, A, b, y, settings.certificate_tol)
            if c is not None:
                status, cert = Status.PRIMAL_INFEASIBLE, c
                break
        if _norm(X) > growth:
            c = _dual_infeasibility_certificate(A, C, X, settings.certificate_tol)
            if c is not None:
                status, cert = Status.DUAL_INFEASIBLE, c
                break
        if stall >= settings.stall_iterations:
            status = Status.NUMERICAL
            break

        try:
            Zinv = [be.inv_spd(Zk) for Zk in Z]
            M = np.zeros((m, m), dtype=be.dtype)
            for Ak, Xk, Zi in zip(A, X, Zinv):
                G = np.matmul(np.matmul(Xk, Ak), Zi)
                M += Ak.reshape(m, -1) @ G.reshape(m, -1).T
            M = _sym(M)
            factor = _factor_schur(M)

            def direction(sigma_mu: float, K: list[np.ndarray] | None):
                # dX = sigma*mu*Z^-1 - X - (X dZ + K) Z^-1 with dZ = Rd - A^T dy
                R = []
                for k in range(len(dims)):
                    extra = X[k] @ Rd[k]
                    if K is not None:
                        extra = extra + K[k]
                    R.append(sigma_mu * Zinv[k] - X[k] - extra @ Zinv[k])
                dy = factor(rp - _apply(A, R))
                ATdy = _adjoint(A, dy)
                dZ = [Rdk - a for Rdk, a in zip(Rd, ATdy)]
                dX = [
                    _sym(sigma_mu * Zinv[k] - X[k] - (X[k] @ dZ[k] + (K[k] if K is not None else 0.0)) @ Zinv[k])
                    for k in range(len(dims))
                ]
                return dX, dy, dZ

            dXa, dya, dZa = direction(0.0, None)
            ap = min(1.0, min(be.max_step(Xk, d) for Xk, d in zip(X, dXa)))
            ad = min(1.0, min(be.max_step(Zk, d) for Zk, d in zip(Z, dZa)))
            mu_aff = _inner([Xk + ap * d for Xk, d in zip(X, dXa)], [Zk + ad * d for Zk, d in zip(Z, dZa)]) / N
            sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
            K = [dx @ dz for dx, dz in zip(dXa, dZa)]
            dX, dy, dZ = direction(sigma * mu, K)
            ap = min(1.0, settings.step_frac * min(be.max_step(Xk, d) for Xk, d in zip(X, dX)))
            ad = min(1.0, settings.step_frac * min(be.max_step(Zk, d) for Zk, d in zip(Z, dZ)))
        except (np.linalg.LinAlgError, NotPositiveDefiniteError, FloatingPointError):
            status = Status.NUMERICAL
            break
        if not (math.isfinite(ap) and math.isfinite(ad)) or max(ap, ad) < 1e-12:
            status = Status.NUMERICAL
            break
        X = [_sym(Xk + ap * d) for Xk, d in zip(X, dX)]
        y = y + ad * dy
        Z = [_sym(Zk + ad * d) for Zk, d in zip(Z, dZ)]

    if status in (Status.NUMERICAL, Status.MAX_ITER):
        # a stalled run may still have drifted far enough along a ray
        c = _primal_infeasibility_certificate(be, A, b, y, settings.certificate_tol)
        if c is not None:
            status, cert = Status.PRIMAL_INFEASIBLE, c
        else:
            c = _dual_infeasibility_certificate(A, C, X, settings.certificate_tol)
            if c is not None:
                status, cert = Status.DUAL_INFEASIBLE, c
    dual_certified = False
    if status in (Status.NUMERICAL, Status.MAX_ITER):
        if best_dual is not None:
            X, y, Z = best_dual[1:]
            dual_certified = True
        elif best is not None:
            X, y, Z = best
    rp = b - _apply(A, X)
    Rd = [Ck - Zk - Ak for Ck, Zk, Ak in zip(C, Z, _adjoint(A, y))]
    pobj = _inner(C, X)
    dobj = float(b @ y)
    X = [np.asarray(Xk, dtype=float) for Xk in X]
    Z = [np.asarray(Zk, dtype=float) for Zk in Z]
    y_full = np.zeros(m_full)
    y_full[reduced.keep] = np.asarray(y, dtype=float) / reduced.row_scale
    if prob.maximize:
        pobj, dobj, y_full, Z = -pobj, -dobj, -y_full, [-Zk for Zk in Z]
    return SdpSolution(
        status=status,
        X=X,
        y=y_full,
        Z=Z,
        primal_value=pobj,
        dual_value=dobj,
        gap=pobj - dobj if not prob.maximize else dobj - pobj,
        iterations=it,
        primal_residual=float(np.sqrt(rp @ rp)) / norm_b,
        dual_residual=_norm(Rd) / norm_C,
        certificate=cert,
        extended_precision=extended,
        maximize=prob.maximize,
        dual_certified=dual_certified or status is Status.OPTIMAL,
    )


def _factor_schur(M: np.ndarray):
    try:
        L = cholesky_spd(M, pivot_tol=1e-15)
        return lambda r: cho_solve(L, r)
    except NotPositiveDefiniteError:
        # near the end the Schur complement may lose definiteness to rounding
        reg = 1e-13 * max(np.max(np.abs(np.diag(M))), 1.0)
        try:
            L = cholesky_spd(M + reg * np.eye(M.shape[0]), pivot_tol=1e-16)
            return lambda r: cho_solve(L, r)
        except NotPositiveDefiniteError:
            Md = np.asarray(M, dtype=float)
            return lambda r: np.linalg.lstsq(Md, np.asarray(r, dtype=float), rcond=None)[0].astype(M.dtype)


def _primal_infeasibility_certificate(be, A, b, y, tol):
    by = float(b @ y)
    if by <= 0:
        return None
    yh = y / by
    S = _adjoint(A, yh)
    worst = max(-float(be.min_eig(-Sk)) for Sk in S)
    if worst <= tol:
        return {"kind": "farkas_dual", "b_dot_y": 1.0, "max_eig_adjoint": float(worst)}
    return None


def _dual_infeasibility_certificate(A, C, X, tol):
    cx = _inner(C, X)
    if cx >= 0:
        return None
    Xh = [Xk / -cx for Xk in X]
    r = np.linalg.norm(_apply(A, Xh))
    if r <= tol:
        return {"kind": "primal_ray", "objective": -1.0, "residual": float(r)}
    return None


def _infeasible_by_rows(prob: SdpProblem, y: np.ndarray) -> SdpSolution:
    dims = prob.blocks
    return SdpSolution(
        status=Status.PRIMAL_INFEASIBLE,
        X=[np.zeros((s, s)) for s in dims],
        y=y,
        Z=[np.zeros((s, s)) for s in dims],
        primal_value=-math.inf if prob.maximize else math.inf,
        dual_value=-math.inf if prob.maximize else math.inf,
        gap=math.nan,
        iterations=0,
        certificate={"kind": "inconsistent_equalities"},
    )


def _solve_unconstrained(prob: SdpProblem, C, sign) -> SdpSolution:
    # every row vanished: only X >= 0 remains, bounded iff every C_k is PSD
    dims = prob.blocks
    psd = all(np.linalg.eigvalsh(Ck)[0] >= -1e-12 for Ck in C)
    status = Status.OPTIMAL if psd else Status.DUAL_INFEASIBLE
    val = 0.0 if psd else -math.inf * sign
    return SdpSolution(
        status=status,
        X=[np.zeros((s, s)) for s in dims],
        y=np.zeros(prob.num_constraints),
        Z=[sign * Ck for Ck in C],
        primal_value=val,
        dual_value=0.0,
        gap=0.0,
        iterations=0,
    )


# ---------------------------------------------------------------- strict feasibility


class MarginResult(NamedTuple):
    t_star: float
    witness: list[np.ndarray]
    status: Status
    solution: SdpSolution | None
    #: upper bound on the true margin from the dual side
    t_upper: float = math.nan


def feasibility_margin(
    blocks: Sequence[int],
    constraints: Sequence[Constraint],
    settings: SolverSettings | None = None,
    cap: float | None = None,
) -> MarginResult:
    """Maximize ``t`` subject to ``X - t I >= 0`` blockwise and the equalities.

    ``t`` is bounded above by ``cap`` (default ``1 + max |b_j|``); any positive
    cap preserves the sign of the answer. The witness is the optimal ``X``.
    """
    blocks = [int(s) for s in blocks]
    if cap is None:
        cap = 1.0 + max((abs(c.rhs) for c in constraints), default=0.0)
    # X = W + t I with t = cap - s, W >= 0, s >= 0; maximize t <=> minimize s
    new_cons = []
    for con in constraints:
        coeffs = [np.array(A, dtype=float, ndmin=2) for A in con.coefficients]
        tr = sum(np.trace(A) for A in coeffs)
        new_cons.append(Constraint(coeffs + [np.array([[-tr]])], con.rhs - cap * tr))
    objective = [np.zeros((s, s)) for s in blocks] + [np.ones((1, 1))]
    prob = SdpProblem(blocks + [1], objective, new_cons)
    sol = solve(prob, settings)
    if sol.status is Status.PRIMAL_INFEASIBLE:
        # the equalities alone are inconsistent
        return MarginResult(-math.inf, [np.zeros((s, s)) for s in blocks], Status.OPTIMAL, sol, -math.inf)
    t = cap - float(sol.X[-1][0, 0])
    witness = [Wk + t * np.eye(Wk.shape[0]) for Wk in sol.X[:-1]]
    t_upper = cap - sol.dual_value if sol.status is Status.OPTIMAL else math.inf
    return MarginResult(t, witness, sol.status, sol, max(t, t_upper))
