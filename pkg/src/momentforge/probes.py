"""Degree sweeps and canned experiments built on the relaxation and the oracle.

Reports are plain dataclasses with lossless JSON round-trips. Wall times are
kept out of the JSON body (see ``ExactnessReport.timings``) so that reports
of identical inputs serialize identically.
"""
from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _json, linalg
from .hypotheses import (
    EmptySetError,
    HypothesisError,
    archimedean_search,
    convex_boundary_sample,
    directions,
    epsilon_u_margin,
    hessian_state,
    interior_near_convbd_probe,
    strict_quasiconcave_at,
)
from .oracle import OracleConfig, bounding_box, feasible_points, grid_min, set_membership
from .poly import Polynomial, PolySystem, double_zero_test, parse_poly, parse_system
from .relax import Verdict, lasserre_value, sos_membership, support_value
from .sdp import SolverSettings, Status

DEFAULT_TOL = 1e-6
#: rows may undershoot the oracle by this much before the report flags them
CONSISTENCY_SLACK = 1e-6
CSV_COLUMNS = ("d", "value", "oracle", "gap", "status", "millis")


def max_threads() -> int:
    try:
        return max(1, int(os.environ.get("MOMENTFORGE_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn: Callable, items: Sequence) -> list:
    workers = min(max_threads(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _degrees(d_min: int, d_max: int, include_odd: bool) -> list[int]:
    if include_odd:
        return list(range(d_min, d_max + 1))
    return [d for d in range(d_min, d_max + 1) if d % 2 == 0]


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, 1000.0 * (time.perf_counter() - t0)


# ---------------------------------------------------------------- reports


@dataclass
class ExactnessRow:
    d: int
    value: float
    oracle: float
    gap: float
    status: str
    #: for set sweeps the direction attaining the worst gap
    direction: list[float] | None = None
    #: "optimal", "upper_bound" (feasible moments only) or None
    certified: str | None = None

    def to_json(self) -> dict:
        return {
            "certified": self.certified,
            "d": self.d,
            "value": self.value,
            "oracle": self.oracle,
            "gap": self.gap,
            "status": self.status,
            "direction": self.direction,
        }

    @classmethod
    def from_json(cls, data: dict) -> ExactnessRow:
        return cls(
            d=int(data["d"]),
            value=_json.decode_float(data["value"]),
            oracle=_json.decode_float(data["oracle"]),
            gap=_json.decode_float(data["gap"]),
            status=str(data["status"]),
            direction=None if data.get("direction") is None else [float(v) for v in data["direction"]],
            certified=data.get("certified"),
        )


@dataclass
class ExactnessReport:
    kind: str
    instance: dict
    tol: float
    rows: list[ExactnessRow] = field(default_factory=list)
    first_exact_d: int | None = None
    hypotheses: dict = field(default_factory=dict)
    vacuous: bool = False
    #: set sweeps: per direction, the gaps by degree
    directions: list[dict] = field(default_factory=list)
    #: wall time per row in milliseconds (not serialized with the report)
    timings: list[float] = field(default_factory=list, compare=False)

    @property
    def consistent(self) -> bool:
        """Every row satisfies ``gap >= -slack``."""
        return all(not (r.gap < -CONSISTENCY_SLACK) for r in self.rows)

    def to_json(self) -> dict:
        return _json.encode(
            {
                "kind": self.kind,
                "instance": self.instance,
                "tol": self.tol,
                "rows": [r.to_json() for r in self.rows],
                "first_exact_d": self.first_exact_d,
                "hypotheses": self.hypotheses,
                "vacuous": self.vacuous,
                "directions": self.directions,
            }
        )

    def dumps(self) -> str:
        return _json.dumps(self.to_json())

    @classmethod
    def from_json(cls, data: dict) -> ExactnessReport:
        return cls(
            kind=data["kind"],
            instance=data["instance"],
            tol=_json.decode_float(data["tol"]),
            rows=[ExactnessRow.from_json(r) for r in data["rows"]],
            first_exact_d=data["first_exact_d"],
            hypotheses=data["hypotheses"],
            vacuous=bool(data["vacuous"]),
            directions=data["directions"],
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        times = self.timings if len(self.timings) == len(self.rows) else [math.nan] * len(self.rows)
        for r, ms in zip(self.rows, times):
            w.writerow([r.d, repr(r.value), repr(r.oracle), repr(r.gap), r.status, f"{ms:.1f}"])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{self.kind}: {self.instance.get('description', '')}".rstrip()]
        if self.vacuous:
            lines.append("vacuous instance: the oracle found no feasible point")
        lines.append(f"{'d':>3} {'value':>18} {'oracle':>18} {'gap':>11}  status")
        for r in self.rows:
            lines.append(f"{r.d:>3} {r.value:>18.10g} {r.oracle:>18.10g} {r.gap:>11.3e}  {r.status}")
        lines.append(f"first exact d (tol {self.tol:g}): {self.first_exact_d}")
        return "\n".join(lines) + "\n"


def _instance(g: PolySystem, names: Sequence[str] | None, f: Polynomial | None = None, **extra) -> dict:
    out = {
        "n": g.n,
        "constraints": [gi.to_string(names) for gi in g.constraints],
    }
    if names is not None:
        out["variables"] = list(names)
    if f is not None:
        out["objective"] = f.to_string(names)
    out.update(extra)
    return _json.encode(out)


def _exact(row: ExactnessRow, tol: float) -> bool:
    return row.status == Status.OPTIMAL.value and abs(row.gap) <= tol


# ---------------------------------------------------------------- optimization sweep


def _distance_to_infeasible(g: PolySystem, x: np.ndarray, cfg: OracleConfig, cells: int = 10) -> float:
    """Distance from ``x`` to the nearest infeasible point of a local grid (``inf`` if none)."""
    h = cfg.spacing
    axes = [x[i] + h[i] * np.arange(-cells, cells + 1) for i in range(g.n)]
    pts = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    bad = np.zeros(pts.shape[0], dtype=bool)
    for gi in g.constraints:
        bad |= gi.eval(pts) < -cfg.feas_tol
    if not np.any(bad):
        return math.inf
    return float(np.min(np.linalg.norm(pts[bad] - x, axis=1)))


def optimization_sweep(
    f: Polynomial,
    g: PolySystem,
    d_min: int | None = None,
    d_max: int = 8,
    tol: float = DEFAULT_TOL,
    settings: SolverSettings | None = None,
    oracle_cfg: OracleConfig | None = None,
    include_odd: bool = False,
    names: Sequence[str] | None = None,
    exclusion_radius: float = 0.1,
) -> ExactnessReport:
    """``las_d(f, g)`` against the oracle minimum for each degree in range."""
    if oracle_cfg is None:
        raise ValueError("optimization_sweep needs an oracle configuration")
    d_min = int(max(f.degree, 0)) if d_min is None else d_min
    if d_min < f.degree:
        raise ValueError(f"d_min = {d_min} is below deg f = {f.degree}")
    if d_max < d_min:
        raise ValueError("d_max must be at least d_min")
    report = ExactnessReport("optimization", _instance(g, names, f, box=oracle_cfg.box), tol)
    orc = grid_min(f, g, oracle_cfg)
    if not orc.feasible_found:
        report.vacuous = True
        return report
    a = orc.value
    degrees = _degrees(d_min, d_max, include_odd)
    hint = bounding_box(g, oracle_cfg)
    results = _map(lambda d: _timed(lasserre_value, f, g, d, settings, hint), degrees)
    for d, (res, ms) in zip(degrees, results):
        report.rows.append(ExactnessRow(d, res.value, a, a - res.value, res.status, certified=res.certified))
        report.timings.append(ms)
    report.first_exact_d = next((r.d for r in report.rows if _exact(r, tol)), None)
    report.hypotheses = _json.encode(_optimization_checklist(f, g, orc.minimizers, oracle_cfg, settings, exclusion_radius))
    return report


def _optimization_checklist(f, g, minimizers, cfg, settings, exclusion_radius) -> dict:
    mins = []
    for x in minimizers:
        lam = linalg.min_eigenvalue(f.hessian_at(x)) if f.n else math.inf
        mins.append(
            {
                "point": x.tolist(),
                "hessian_min_eigenvalue": lam,
                "hessian_pd": bool(lam > 1e-9),
                "distance_to_infeasible": _distance_to_infeasible(g, x, cfg),
                "interior": bool(all(gi.eval(x) > cfg.feas_tol for gi in g.constraints)),
            }
        )
    try:
        eps = epsilon_u_margin(f, g, minimizers, exclusion_radius, cfg).to_json()
    except (HypothesisError, ValueError) as exc:
        eps = {"error": str(exc)}
    arch = archimedean_search(g, settings=settings).to_json()
    return {
        "archimedean": arch,
        "minimizers": mins,
        "epsilon_u": eps,
        "all_green": bool(arch["status"] == "Found" and all(m["hessian_pd"] and m["interior"] for m in mins)),
    }


# ---------------------------------------------------------------- set sweep


def _linear(ell: np.ndarray) -> Polynomial:
    n = ell.shape[0]
    return Polynomial(n, {tuple(int(i == j) for j in range(n)): float(c) for i, c in enumerate(ell)})


def set_checklist(
    g: PolySystem,
    n_dirs: int,
    cfg: OracleConfig,
    settings: SolverSettings | None = None,
    probe_radius: float | None = None,
) -> dict:
    """Archimedean search, convex boundary atlas, quasiconcavity of active constraints, interior probe."""
    arch = archimedean_search(g, settings=settings).to_json()
    try:
        atlas = convex_boundary_sample(g, n_dirs, cfg)
    except EmptySetError:
        return {"archimedean": arch, "empty": True, "all_green": False}
    radius = probe_radius if probe_radius is not None else 0.05 * float(np.max(cfg.bounds[1] - cfg.bounds[0]))
    interior = interior_near_convbd_probe(g, atlas, radius)
    qc = []
    for p in atlas.points:
        if not p.usable:
            continue
        for i in p.active:
            qc.append({"point": p.point.tolist(), "constraint": i, **strict_quasiconcave_at(g[i], p.point).to_json()})
    usable = [ok for p, ok in zip(atlas.points, interior) if p.usable]
    green = (
        arch["status"] == "Found"
        and bool(usable)
        and all(usable)
        and all(q["verdict"] != "Fails" for q in qc)
    )
    return {
        "archimedean": arch,
        "atlas": atlas.to_json(),
        "interior_probe": {"radius": radius, "heuristic": True, "results": interior},
        "quasiconcavity": qc,
        "all_green": bool(green),
    }


def set_exactness_sweep(
    g: PolySystem,
    d_max: int = 6,
    n_dirs: int = 16,
    tol: float = DEFAULT_TOL,
    settings: SolverSettings | None = None,
    oracle_cfg: OracleConfig | None = None,
    d_min: int = 2,
    include_odd: bool = False,
    names: Sequence[str] | None = None,
    probe_radius: float | None = None,
) -> ExactnessReport:
    """Compare support values of the relaxation with oracle support values of ``S(g)``.

    Support functions of ``S(g)`` and of its convex hull coincide, so this
    compares ``conv S(g)`` with the projection of the degree-``d`` relaxation.
    """
    if oracle_cfg is None:
        raise ValueError("set_exactness_sweep needs an oracle configuration")
    if d_max < 2:
        raise ValueError("d_max must be at least 2")
    d_min = max(1, d_min)
    dirs = directions(g.n, n_dirs)
    report = ExactnessReport("set", _instance(g, names, box=oracle_cfg.box, n_dirs=int(dirs.shape[0])), tol)
    oracle_vals = []
    for ell in dirs:
        res = grid_min(_linear(ell), g, oracle_cfg)
        if not res.feasible_found:
            report.vacuous = True
            return report
        oracle_vals.append(res.value)
    degrees = _degrees(d_min, d_max, include_odd)
    per_dir = [{"direction": ell.tolist(), "oracle": a, "gaps": [], "statuses": []} for ell, a in zip(dirs, oracle_vals)]

    hint = bounding_box(g, oracle_cfg)

    def run(d):
        return [lasserre_value(_linear(ell), g, d, settings, hint) for ell in dirs]

    for d, (results, ms) in zip(degrees, _map(lambda d: _timed(run, d), degrees)):
        gaps = [a - r.value for a, r in zip(oracle_vals, results)]
        for rec, gap, r in zip(per_dir, gaps, results):
            rec["gaps"].append(gap)
            rec["statuses"].append(r.status)
        worst = int(np.argmax(np.abs(gaps)))
        bad = [r.status for r in results if r.status != Status.OPTIMAL.value]
        status = bad[0] if bad else Status.OPTIMAL.value
        report.rows.append(
            ExactnessRow(
                d, results[worst].value, oracle_vals[worst], gaps[worst], status,
                dirs[worst].tolist(), results[worst].certified,
            )
        )
        report.timings.append(ms)
    for rec in per_dir:
        rec["degrees"] = degrees
        rec["closed_at"] = next(
            (d for d, gap, st in zip(degrees, rec["gaps"], rec["statuses"]) if st == "Optimal" and abs(gap) <= tol),
            None,
        )
    report.directions = _json.encode(per_dir)
    report.first_exact_d = next((r.d for r in report.rows if _exact(r, tol)), None)
    report.hypotheses = _json.encode(set_checklist(g, n_dirs, oracle_cfg, settings, probe_radius))
    return report


# ---------------------------------------------------------------- squeeze


@dataclass
class SqueezeReport:
    positivity_off_minimizers: bool
    hessians_pd: bool
    epsilon: float
    #: (a): f > 0 off the minimizers and PD Hessians at them
    side_a: bool
    #: (b): epsilon_u_margin > 0
    side_b: bool
    margin: dict

    @property
    def agree(self) -> bool:
        return self.side_a == self.side_b

    def to_json(self) -> dict:
        return _json.encode(
            {
                "positivity_off_minimizers": self.positivity_off_minimizers,
                "hessians_pd": self.hessians_pd,
                "epsilon": self.epsilon,
                "side_a": self.side_a,
                "side_b": self.side_b,
                "agree": self.agree,
                "margin": self.margin,
            }
        )


def squeeze_check(
    f: Polynomial,
    g: PolySystem,
    minimizers: Sequence,
    exclusion_radius: float,
    oracle_cfg: OracleConfig,
    zero_tol: float = 1e-8,
    eps_tol: float = 1e-9,
) -> SqueezeReport:
    """Check both sides of: f > 0 off finitely many zeros with PD Hessians there iff f >= eps u."""
    pts = [np.asarray(m, dtype=float).reshape(-1) for m in minimizers]
    for x in pts:
        if abs(f.eval(x)) > zero_tol:
            raise HypothesisError(f"f({x.tolist()}) = {f.eval(x):.3e} is not zero")
        if not set_membership(x, g, oracle_cfg.feas_tol):
            raise HypothesisError(f"minimizer {x.tolist()} is not in S(g)")
    grid = feasible_points(g, oracle_cfg)
    far = np.ones(grid.shape[0], dtype=bool)
    for x in pts:
        far &= np.linalg.norm(grid - x, axis=1) > exclusion_radius
    positive = bool(np.all(f.eval(grid[far]) > 0)) if np.any(far) else True
    pd = all(linalg.min_eigenvalue(f.hessian_at(x)) > eps_tol for x in pts)
    margin = epsilon_u_margin(f, g, pts, exclusion_radius, oracle_cfg)
    return SqueezeReport(positive, pd, margin.epsilon, positive and pd, margin.epsilon > eps_tol, margin.to_json())


# ---------------------------------------------------------------- the two-disks counterexample

DISKS = ("1-(x-1)^2-y^2", "1-x^2-(y-1)^2")


def counterexample_xy(
    settings: SolverSettings | None = None,
    degrees: Iterable[int] = (2, 4, 6, 8),
    oracle_cfg: OracleConfig | None = None,
) -> dict:
    """XY is nonnegative on the intersection of the two disks yet not in their quadratic module."""
    names = ("x", "y")
    g = parse_system(DISKS, names)
    xy = parse_poly("x*y", names)
    cfg = oracle_cfg or OracleConfig.cube(2, 2.0)
    orc = grid_min(xy, g, cfg)
    phi = hessian_state(xy, (0.0, 0.0), (1.0, -1.0))
    rows = []
    for d in degrees:
        m, ms = _timed(sos_membership, xy, g, d, settings)
        rows.append(
            {"d": d, "verdict": m.verdict.value, "margin": m.margin, "margin_upper": m.margin_upper, "status": m.status}
        )
    double_zero = double_zero_test(xy, (0.0, 0.0), 1e-12)
    ok = (
        orc.feasible_found
        and abs(orc.value) <= 1e-6
        and phi == -2.0
        and double_zero
        and all(r["verdict"] == Verdict.NOT_MEMBER.value for r in rows)
    )
    return _json.encode(
        {
            "kind": "counterexample_xy",
            "instance": {"variables": list(names), "constraints": list(DISKS), "objective": "x*y"},
            "oracle_min": orc.value,
            "oracle_minimizers": [m.tolist() for m in orc.minimizers],
            "hessian_state": phi,
            "hessian_state_point": [0.0, 0.0],
            "hessian_state_direction": [1.0, -1.0],
            "double_zero": double_zero,
            "membership": rows,
            "ok": bool(ok),
        }
    )


ONEDIM = "x*(1-x)*(x-2)^2"


def onedim_config() -> OracleConfig:
    # {2} is an isolated point of S: any positive feasibility tolerance would
    # fatten it to radius sqrt(tol/2), so this instance is scanned exactly
    return OracleConfig(((-1.0, 3.0),), feas_tol=0.0, polish=False)


def onedim_probe(settings: SolverSettings | None = None, d_max: int = 10, tol: float = DEFAULT_TOL) -> ExactnessReport:
    """Set sweep on ``S = [0, 1] u {2}``: the direction ``-X`` should never close."""
    g = parse_system([ONEDIM], ("x",))
    rep = set_exactness_sweep(
        g, d_max=d_max, n_dirs=2, tol=tol, settings=settings, oracle_cfg=onedim_config(), d_min=4,
        names=("x",), probe_radius=0.1,
    )
    rep.instance["description"] = "S = [0,1] u {2}"
    return rep
