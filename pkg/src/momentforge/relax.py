"""Degree-d moment relaxations and Gram-matrix membership tests.

A pseudo-moment vector ``y`` (one scalar per monomial of degree <= d, with
``y_0 = 1``) is feasible when the moment matrix and every localizing matrix
``(sum_gamma g_gamma y_{beta + beta' + gamma})`` are PSD. The moment problem
is written as the *dual* side of an :class:`~momentforge.sdp.SdpProblem`
whose free variables are exactly the ``y_alpha``; the primal side is then the
Gram-matrix SOS problem, so one solve yields both.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _json, linalg
from .poly import Monomial, PolySystem, Polynomial, gram_form, monomials_up_to
from .sdp import Constraint, SdpProblem, SolverSettings, Status, feasibility_margin, solve

MEMBER_MARGIN = 1e-9
NOT_MEMBER_MARGIN = -1e-7
CERT_RESIDUAL_TOL = 1e-6
CERT_EIG_TOL = 1e-8
#: relative eigenvalue slack for rebuilt moment matrices (float rounding of y)
MOMENT_ROUNDING = 1e-13


class RelaxationError(ValueError):
    pass


@dataclass(frozen=True)
class MomentBasis:
    n: int
    d: int
    #: indices into the constraint list; ``0`` is the implicit ``g_0 = 1``
    participating: tuple[int, ...]
    half_degrees: tuple[int, ...]
    bases: tuple[tuple[Monomial, ...], ...]
    full: tuple[Monomial, ...]

    def generator(self, g: PolySystem, i: int) -> Polynomial:
        return Polynomial.constant(self.n, 1.0) if i == 0 else g[i - 1]

    @property
    def sizes(self) -> list[int]:
        return [len(b) for b in self.bases]


def moment_basis(n: int, g: PolySystem, d: int) -> MomentBasis:
    if d < 0:
        raise RelaxationError("relaxation degree must be nonnegative")
    if g.n != n:
        raise RelaxationError(f"system has {g.n} variables, expected {n}")
    part, halves, bases = [0], [d // 2], [tuple(monomials_up_to(n, d // 2))]
    for i, gi in enumerate(g, start=1):
        if gi.is_zero() or gi.degree > d:
            continue
        k = (d - int(gi.degree)) // 2
        part.append(i)
        halves.append(k)
        bases.append(tuple(monomials_up_to(n, k)))
    return MomentBasis(n, d, tuple(part), tuple(halves), tuple(bases), tuple(monomials_up_to(n, d)))


def _coefficient_matrices(basis: MomentBasis, g: PolySystem) -> list[dict[Monomial, np.ndarray]]:
    """For each block, the map alpha -> B_alpha with sum_alpha y_alpha B_alpha the localizing matrix."""
    out = []
    for i, vec in zip(basis.participating, basis.bases):
        gi = basis.generator(g, i)
        s = len(vec)
        mats: dict[Monomial, np.ndarray] = {}
        for r in range(s):
            for c in range(r, s):
                for gamma, coeff in gi.terms.items():
                    alpha = tuple(a + b + e for a, b, e in zip(vec[r], vec[c], gamma))
                    M = mats.setdefault(alpha, np.zeros((s, s)))
                    M[r, c] += coeff
                    if r != c:
                        M[c, r] += coeff
        out.append(mats)
    return out


@dataclass
class MomentSdp:
    """A moment relaxation together with the bookkeeping to interpret it."""

    f: Polynomial
    g: PolySystem
    basis: MomentBasis
    problem: SdpProblem
    #: monomials carried as free variables, in constraint order
    variables: tuple[Monomial, ...]
    matrices: list[dict[Monomial, np.ndarray]]

    def blocks_at(self, y: dict[Monomial, float] | "MomentVector") -> list[np.ndarray]:
        """Moment and localizing matrices evaluated at a moment vector."""
        vals = y.values if isinstance(y, MomentVector) else y
        out = []
        for mats, s in zip(self.matrices, self.basis.sizes):
            M = np.zeros((s, s))
            for alpha, B in mats.items():
                M += (1.0 if sum(alpha) == 0 else vals.get(alpha, 0.0)) * B
            out.append(M)
        return out

    def objective_at(self, y) -> float:
        vals = y.values if isinstance(y, MomentVector) else y
        return sum(c * (1.0 if sum(a) == 0 else vals.get(a, 0.0)) for a, c in self.f.terms.items())


def build_moment_sdp(f: Polynomial, g: PolySystem, d: int) -> MomentSdp:
    """Moment relaxation of ``min f`` over ``S(g)`` at degree ``d``.

    Dual side: ``Z_k = B_{k,0} + sum_alpha y_alpha B_{k,alpha}`` with objective
    ``max -sum_alpha f_alpha y_alpha``, so that
    ``las_d = f_0 - (dual optimum)``.
    """
    if f.n != g.n:
        raise RelaxationError("objective and constraints have different variable counts")
    if f.degree > d:
        raise RelaxationError(f"deg f = {f.degree} exceeds relaxation degree {d}")
    basis = moment_basis(g.n, g, d)
    mats = _coefficient_matrices(basis, g)
    zero = (0,) * g.n
    variables = tuple(a for a in basis.full if a != zero)
    objective = [m.get(zero, np.zeros((s, s))) for m, s in zip(mats, basis.sizes)]
    constraints = []
    for alpha in variables:
        coeffs = [-m.get(alpha, np.zeros((s, s))) for m, s in zip(mats, basis.sizes)]
        constraints.append(Constraint(coeffs, -f.coefficient(alpha)))
    if not constraints:
        # d = 0: only y_0 exists; a dummy row keeps the problem well formed
        constraints.append(Constraint([np.zeros((s, s)) for s in basis.sizes], 0.0))
    prob = SdpProblem(basis.sizes, objective, constraints)
    return MomentSdp(f, g, basis, prob, variables, mats)


@dataclass
class MomentVector:
    n: int
    degree: int
    values: dict[Monomial, float]

    def __post_init__(self):
        self.values = dict(self.values)
        self.values[(0,) * self.n] = 1.0

    def __getitem__(self, alpha) -> float:
        return self.values.get(tuple(alpha), 0.0)

    def apply(self, p: Polynomial) -> float:
        """``L(p)`` for the functional represented by this vector."""
        return sum(c * self[a] for a, c in p.terms.items())

    def first_moments(self) -> np.ndarray:
        return np.array([self[tuple(int(i == j) for j in range(self.n))] for i in range(self.n)])

    @classmethod
    def point_evaluation(cls, x, d: int) -> MomentVector:
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        vals = {a: float(np.prod(x ** np.array(a))) for a in monomials_up_to(n, d)}
        return cls(n, d, vals)


@dataclass
class RelaxationResult:
    value: float
    moments: MomentVector | None
    status: str
    solution: object = field(default=None, repr=False)
    #: smallest eigenvalue over the moment/localizing matrices rebuilt from ``moments``
    min_moment_eigenvalue: float = math.nan
    #: largest absolute entry of those matrices
    moment_scale: float = 1.0

    @property
    def moment_feasible(self) -> bool:
        """``moments`` is feasible up to rounding, so ``value`` is at least an upper bound on las_d."""
        return self.min_moment_eigenvalue >= -MOMENT_ROUNDING * (1.0 + self.moment_scale)

    @property
    def certified(self) -> str | None:
        """``"optimal"``, ``"upper_bound"`` (feasible moments only) or ``None``."""
        if self.status == Status.OPTIMAL.value:
            return "optimal"
        if self.moment_feasible:
            return "upper_bound"
        return None

    def __iter__(self):
        return iter((self.value, self.moments, self.status))


def lasserre_value(
    f: Polynomial,
    g: PolySystem,
    d: int,
    settings: SolverSettings | None = None,
    box: Sequence | None = None,
) -> RelaxationResult:
    """Optimal value of the degree-``d`` relaxation.

    ``status`` speaks about the moment problem: ``PrimalInfeasible`` (empty
    projection, value ``+inf``) and ``DualInfeasible`` (unbounded, ``-inf``).

    ``box``, one ``(lo, hi)`` interval per variable, is only a conditioning hint: the variables are mapped
    affinely onto ``[-1, 1]^n`` before solving, which leaves the relaxation
    value unchanged (the hierarchy is invariant under affine maps) but keeps
    moment entries of order one. Returned moments are in the original
    coordinates.
    """
    if box is not None:
        return _lasserre_rescaled(f, g, d, settings, box)
    msdp = build_moment_sdp(f, g, d)
    zero = (0,) * g.n
    f0 = f.coefficient(zero)
    if not msdp.variables:
        return RelaxationResult(f0, MomentVector(g.n, d, {}), Status.OPTIMAL.value)
    sol = solve(msdp.problem, settings)
    # the SDP's dual is the moment problem and its primal the SOS problem
    if sol.status is Status.DUAL_INFEASIBLE:
        return RelaxationResult(math.inf, None, Status.PRIMAL_INFEASIBLE.value, sol)
    if sol.status is Status.PRIMAL_INFEASIBLE:
        return RelaxationResult(-math.inf, None, Status.DUAL_INFEASIBLE.value, sol)
    moments = MomentVector(g.n, d, dict(zip(msdp.variables, map(float, sol.y))))
    blocks = msdp.blocks_at(moments)
    lam = min(linalg.min_eigenvalue(M) for M in blocks)
    scale = max(float(np.max(np.abs(M))) for M in blocks)
    value = msdp.objective_at(moments)
    return RelaxationResult(value, moments, sol.status.value, sol, lam, scale)


def _lasserre_rescaled(f, g, d, settings, box) -> RelaxationResult:
    arr = np.asarray(box, dtype=float).reshape(-1, 2)
    if arr.shape[0] != g.n or not np.all(arr[:, 1] > arr[:, 0]):
        raise RelaxationError("box must give one interval lo < hi per variable")
    lo, hi = arr[:, 0], arr[:, 1]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    fs = f.substitute_affine(mid, half)
    gs = PolySystem(g.n, tuple(gi.substitute_affine(mid, half) for gi in g.constraints))
    res = lasserre_value(fs, gs, d, settings)
    if res.moments is None:
        return res
    # L(x^alpha) = L'(prod (mid_i + half_i u_i)^alpha_i)
    vals = {}
    for alpha in monomials_up_to(g.n, d):
        mono = Polynomial(g.n, {alpha: 1.0}).substitute_affine(mid, half)
        vals[alpha] = res.moments.apply(mono)
    res.moments = MomentVector(g.n, d, vals)
    return res


def support_value(
    ell: Polynomial, g: PolySystem, d: int, settings: SolverSettings | None = None, box: Sequence | None = None
) -> float:
    """``min ell`` over the projection of the degree-``d`` relaxation."""
    if ell.degree > 1:
        raise RelaxationError("support_value needs a polynomial of degree <= 1")
    if d < 1:
        raise RelaxationError("support_value needs d >= 1")
    return lasserre_value(ell, g, d, settings, box).value


# ---------------------------------------------------------------- certificates


@dataclass
class SosCertificate:
    n: int
    d: int
    #: constraint index per block (0 is g_0 = 1)
    indices: tuple[int, ...]
    bases: tuple[tuple[Monomial, ...], ...]
    grams: list[np.ndarray]
    residual: float = math.nan
    min_eigenvalues: list[float] = field(default_factory=list)

    def sigmas(self) -> list[Polynomial]:
        return [gram_form(b, Q, self.n) for b, Q in zip(self.bases, self.grams)]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "blocks": [
                {"constraint": i, "basis": [list(a) for a in b], "gram": Q.tolist()}
                for i, b, Q in zip(self.indices, self.bases, self.grams)
            ],
            "residual": self.residual,
            "min_eigenvalues": list(self.min_eigenvalues),
        }

    def dumps(self) -> str:
        return _json.dumps(self.to_json())

    @classmethod
    def from_json(cls, data: dict) -> SosCertificate:
        blocks = data["blocks"]
        return cls(
            n=int(data["n"]),
            d=int(data["d"]),
            indices=tuple(int(b["constraint"]) for b in blocks),
            bases=tuple(tuple(tuple(int(e) for e in a) for a in b["basis"]) for b in blocks),
            grams=[np.array(b["gram"], dtype=float).reshape(len(b["basis"]), len(b["basis"])) for b in blocks],
            residual=_json.decode_float(data.get("residual", "nan")),
            min_eigenvalues=[_json.decode_float(v) for v in data.get("min_eigenvalues", [])],
        )

    @classmethod
    def loads(cls, text: str) -> SosCertificate:
        return cls.from_json(json.loads(text))


@dataclass
class CertificateReport:
    residual: float
    min_eigenvalues: list[float]
    reconstruction: Polynomial

    @property
    def sound(self) -> bool:
        return self.residual <= CERT_RESIDUAL_TOL and all(e >= -CERT_EIG_TOL for e in self.min_eigenvalues)


def verify_certificate(cert: SosCertificate, f: Polynomial, g: PolySystem) -> CertificateReport:
    """Recompute ``sum_i (v^T Q_i v) g_i`` and compare with ``f`` coefficientwise.

    The difference is accumulated without pruning, so small injected faults
    show up in the residual instead of being rounded away.
    """
    if cert.n != f.n or cert.n != g.n:
        raise RelaxationError("certificate, objective and system disagree on the variable count")
    if not (len(cert.indices) == len(cert.bases) == len(cert.grams)):
        raise RelaxationError("certificate blocks are inconsistent")
    raw: dict[Monomial, float] = {}
    eigs = []
    for i, basis, Q in zip(cert.indices, cert.bases, cert.grams):
        if not 0 <= i <= len(g):
            raise RelaxationError(f"certificate refers to constraint {i}, system has {len(g)}")
        if Q.shape != (len(basis), len(basis)):
            raise RelaxationError(f"Gram block for constraint {i} does not match its basis")
        if any(len(a) != cert.n for a in basis):
            raise RelaxationError("basis monomial of the wrong length")
        gi = Polynomial.constant(cert.n, 1.0) if i == 0 else g[i - 1]
        for r, a in enumerate(basis):
            for c, b in enumerate(basis):
                for gamma, coeff in gi.terms.items():
                    key = tuple(x + y + z for x, y, z in zip(a, b, gamma))
                    raw[key] = raw.get(key, 0.0) + Q[r, c] * coeff
        eigs.append(linalg.min_eigenvalue(Q))
    reconstruction = Polynomial(cert.n, raw)
    for a, c in f.terms.items():
        raw[a] = raw.get(a, 0.0) - c
    residual = max((abs(v) for v in raw.values()), default=0.0)
    return CertificateReport(residual, eigs, reconstruction)


class Verdict(str, enum.Enum):
    MEMBER = "Member"
    NOT_MEMBER = "NotMember"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class MembershipResult:
    verdict: Verdict
    margin: float
    margin_upper: float
    status: str
    certificate: SosCertificate | None = None
    thresholds: tuple[float, float] = (MEMBER_MARGIN, NOT_MEMBER_MARGIN)

    @property
    def member(self) -> bool:
        return self.verdict is Verdict.MEMBER


def gram_constraints(f: Polynomial, g: PolySystem, d: int) -> tuple[MomentBasis, list[Constraint]]:
    """Coefficient matching equations ``sum_i <Q_i, B_{i,alpha}> = f_alpha`` for all ``|alpha| <= d``."""
    if f.n != g.n:
        raise RelaxationError("polynomial and system have different variable counts")
    if f.degree > d:
        raise RelaxationError(f"deg f = {f.degree} exceeds d = {d}")
    basis = moment_basis(g.n, g, d)
    mats = _coefficient_matrices(basis, g)
    cons = []
    for alpha in basis.full:
        coeffs = [m.get(alpha, np.zeros((s, s))) for m, s in zip(mats, basis.sizes)]
        cons.append(Constraint(coeffs, f.coefficient(alpha)))
    return basis, cons


def _psd_projection(Q: np.ndarray) -> np.ndarray:
    w, V = linalg.sym_eigen(Q)
    return (V * np.maximum(w, 0.0)) @ V.T


def sos_membership(f: Polynomial, g: PolySystem, d: int, settings: SolverSettings | None = None) -> MembershipResult:
    """Decide ``f in M_d(g)`` with the Gram-matrix method.

    ``Member`` comes with a certificate that has been verified. Members on the
    boundary of the cone (margin ~ 0) are accepted only through that
    verification; ``NotMember`` needs an optimal solve whose dual bound on
    the margin is below the negative threshold.
    """
    basis, cons = gram_constraints(f, g, d)
    res = feasibility_margin(basis.sizes, cons, settings)
    t, t_up = res.t_star, res.t_upper
    status = res.status.value
    if res.status is Status.OPTIMAL and t_up <= NOT_MEMBER_MARGIN:
        return MembershipResult(Verdict.NOT_MEMBER, t, t_up, status)
    if t > NOT_MEMBER_MARGIN and math.isfinite(t):
        grams = [_sym(W) for W in res.witness]
        if t < MEMBER_MARGIN:
            grams = [_psd_projection(Q) for Q in grams]
        cert = SosCertificate(g.n, d, basis.participating, basis.bases, grams)
        report = verify_certificate(cert, f, g)
        cert.residual = report.residual
        cert.min_eigenvalues = report.min_eigenvalues
        if report.sound:
            return MembershipResult(Verdict.MEMBER, t, t_up, status, cert)
    return MembershipResult(Verdict.INCONCLUSIVE, t, t_up, status)


def _sym(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)
