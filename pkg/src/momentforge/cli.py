"""Command-line interface: ``momentforge {solve,sweep,check,member,repro}``.

Problem files are TOML::

    variables = ["x", "y"]
    objective = "x*y"                  # optional
    constraints = ["1-(x-1)^2-y^2", "1-x^2-(y-1)^2"]
    box = 2.0                          # [-N, N]^n, or [[lo, hi], ...] per variable

    [sweep]                            # all optional
    d_min = 2
    d_max = 8
    tol = 1e-6
    n_dirs = 16

    [solver]                           # SolverSettings overrides
    precision = "auto"

    [oracle]                           # OracleConfig overrides (not the box)
    resolution = 201

Exit codes: 0 success, 2 parse error, 3 solver failure, 4 infeasible or
vacuous instance.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import tomli

from . import __version__, _json
from .oracle import OracleConfig
from .poly import Polynomial, PolynomialError, PolySystem, parse_poly, parse_system
from .probes import (
    CSV_COLUMNS,
    DEFAULT_TOL,
    counterexample_xy,
    onedim_probe,
    optimization_sweep,
    set_checklist,
    set_exactness_sweep,
)
from .relax import RelaxationError, Verdict, lasserre_value, sos_membership
from .sdp import SolverSettings, Status

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_SOLVER = 3
EXIT_INFEASIBLE = 4

_TOP_KEYS = {"variables", "objective", "constraints", "box", "sweep", "solver", "oracle"}
_SWEEP_KEYS = {"d_min", "d_max", "tol", "n_dirs"}


class ProblemError(ValueError):
    """Malformed problem file or command-line value."""


@dataclass
class ProblemFile:
    variables: list[str]
    constraints: list[str]
    box: tuple[tuple[float, float], ...]
    objective: str | None = None
    d_min: int | None = None
    d_max: int = 8
    tol: float = DEFAULT_TOL
    n_dirs: int = 16
    solver: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)

    @property
    def g(self) -> PolySystem:
        return parse_system(self.constraints, self.variables)

    @property
    def f(self) -> Polynomial | None:
        return None if self.objective is None else parse_poly(self.objective, self.variables)

    def settings(self) -> SolverSettings:
        return SolverSettings(**self.solver)

    def oracle_config(self) -> OracleConfig:
        return OracleConfig(self.box, **self.oracle)


def parse_box(value, n: int) -> tuple[tuple[float, float], ...]:
    """``N`` (the cube ``[-N, N]^n``) or one ``[lo, hi]`` per variable."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if not value > 0:
            raise ProblemError("box bound N must be positive")
        return tuple((-float(value), float(value)) for _ in range(n))
    try:
        box = tuple((float(lo), float(hi)) for lo, hi in value)
    except (TypeError, ValueError) as exc:
        raise ProblemError(f"bad box {value!r}") from exc
    if len(box) != n or any(not lo < hi for lo, hi in box):
        raise ProblemError(f"box needs {n} intervals with lo < hi")
    return box


def parse_box_flag(text: str, n: int) -> tuple[tuple[float, float], ...]:
    """``--box 2`` or ``--box -1:3,0:1``."""
    try:
        if ":" not in text:
            return parse_box(float(text), n)
        return parse_box([tuple(part.split(":")) for part in text.split(",")], n)
    except ValueError as exc:
        raise ProblemError(f"bad --box value {text!r}") from exc


def load_problem(path: str | Path) -> ProblemFile:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise ProblemError(f"cannot read {path}: {exc.strerror}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ProblemError(f"{path}: {exc}") from exc
    return problem_from_dict(data)


def problem_from_dict(data: dict) -> ProblemFile:
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ProblemError(f"unknown keys: {', '.join(sorted(unknown))}")
    names = data.get("variables")
    if not isinstance(names, list) or not names or not all(isinstance(v, str) for v in names):
        raise ProblemError("variables must be a nonempty list of names")
    cons = data.get("constraints", [])
    if not isinstance(cons, list) or not all(isinstance(c, str) for c in cons):
        raise ProblemError("constraints must be a list of polynomial strings")
    obj = data.get("objective")
    if obj is not None and not isinstance(obj, str):
        raise ProblemError("objective must be a polynomial string")
    if "box" not in data:
        raise ProblemError("box is required")
    sweep = data.get("sweep", {})
    if set(sweep) - _SWEEP_KEYS:
        raise ProblemError(f"unknown sweep keys: {', '.join(sorted(set(sweep) - _SWEEP_KEYS))}")
    prob = ProblemFile(
        variables=list(names),
        constraints=list(cons),
        box=parse_box(data["box"], len(names)),
        objective=obj,
        d_min=sweep.get("d_min"),
        d_max=int(sweep.get("d_max", 8)),
        tol=float(sweep.get("tol", DEFAULT_TOL)),
        n_dirs=int(sweep.get("n_dirs", 16)),
        solver=dict(data.get("solver", {})),
        oracle=dict(data.get("oracle", {})),
    )
    _validate(prob)
    return prob


def _validate(prob: ProblemFile) -> None:
    try:
        prob.g, prob.f
    except PolynomialError as exc:
        raise ProblemError(str(exc)) from exc
    for kind, ctor, fields in (
        ("solver", prob.settings, {f.name for f in dataclasses.fields(SolverSettings)}),
        ("oracle", prob.oracle_config, {f.name for f in dataclasses.fields(OracleConfig)} - {"box"}),
    ):
        extra = set(getattr(prob, kind)) - fields
        if extra:
            raise ProblemError(f"unknown {kind} keys: {', '.join(sorted(extra))}")
        try:
            ctor()
        except (TypeError, ValueError) as exc:
            raise ProblemError(f"{kind}: {exc}") from exc


# ---------------------------------------------------------------- output


class _Run:
    """Per-invocation output state: format, metadata sink, timings."""

    def __init__(self, args):
        self.format = args.format
        self.metadata_path = args.metadata
        self.started = datetime.datetime.now(datetime.timezone.utc)
        self.timings: list[float] = []
        self.t0 = time.perf_counter()

    def emit(self, doc: dict, text: str, csv_text: str | None = None) -> None:
        if self.format == "json":
            sys.stdout.write(_json.dumps(doc))
        elif self.format == "csv" and csv_text is not None:
            sys.stdout.write(csv_text)
        else:
            sys.stdout.write(text)

    def finish(self, argv: Sequence[str]) -> None:
        if not self.metadata_path:
            return
        meta = {
            "generated_at": self.started.isoformat(),
            "elapsed_ms": 1000.0 * (time.perf_counter() - self.t0),
            "timings_ms": self.timings,
            "argv": list(argv),
            "version": __version__,
        }
        Path(self.metadata_path).write_text(_json.dumps(meta))


def _mono_name(alpha, names) -> str:
    parts = [n if a == 1 else f"{n}^{a}" for n, a in zip(names, alpha) if a]
    return "*".join(parts) or "1"


def _warn_excluded(g: PolySystem, d: int, names) -> None:
    for i, gi in enumerate(g):
        if gi.degree > d:
            print(f"momentforge: warning: constraint {i} ({gi.to_string(names)}) has degree "
                  f"{gi.degree} > d = {d} and is left out of the relaxation", file=sys.stderr)


def _csv(rows: list[list]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    lines += [",".join(str(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- commands


def _load(args) -> ProblemFile:
    prob = load_problem(args.problem)
    if getattr(args, "box", None):
        prob.box = parse_box_flag(args.box, len(prob.variables))
    if getattr(args, "dmax", None) is not None:
        prob.d_max = args.dmax
    if getattr(args, "tol", None) is not None:
        prob.tol = args.tol
    if getattr(args, "dirs", None) is not None:
        prob.n_dirs = args.dirs
    return prob


def cmd_solve(args, run: _Run) -> int:
    prob = _load(args)
    f = prob.f
    if f is None:
        raise ProblemError("solve needs an objective")
    d = args.d if args.d is not None else max(2, int(math.ceil(max(f.degree, 0) / 2)) * 2)
    _warn_excluded(prob.g, d, prob.variables)
    t0 = time.perf_counter()
    try:
        res = lasserre_value(f, prob.g, d, prob.settings(), prob.box)
    except RelaxationError as exc:
        raise ProblemError(str(exc)) from exc
    ms = 1000.0 * (time.perf_counter() - t0)
    run.timings.append(ms)
    moments = {}
    if res.moments is not None:
        moments = {_mono_name(a, prob.variables): v for a, v in sorted(res.moments.values.items(), key=lambda kv: (sum(kv[0]), kv[0]))}
    doc = {"command": "solve", "d": d, "value": res.value, "status": res.status, "certified": res.certified, "moments": moments}
    text = f"las_{d} = {res.value!r}\nstatus: {res.status}\n" + "".join(f"  y[{k}] = {v!r}\n" for k, v in moments.items())
    run.emit(doc, text, _csv([[d, repr(res.value), "nan", "nan", res.status, f"{ms:.1f}"]]))
    if res.status == Status.PRIMAL_INFEASIBLE.value:
        return EXIT_INFEASIBLE
    if res.status in (Status.OPTIMAL.value, Status.DUAL_INFEASIBLE.value):
        return EXIT_OK
    return EXIT_SOLVER


def cmd_sweep(args, run: _Run) -> int:
    prob = _load(args)
    cfg, settings = prob.oracle_config(), prob.settings()
    f = prob.f
    try:
        if f is not None:
            rep = optimization_sweep(
                f, prob.g, prob.d_min, prob.d_max, prob.tol, settings, cfg, include_odd=args.odd,
                names=prob.variables,
            )
        else:
            rep = set_exactness_sweep(
                prob.g, prob.d_max, prob.n_dirs, prob.tol, settings, cfg, d_min=prob.d_min or 2,
                include_odd=args.odd, names=prob.variables,
            )
    except ValueError as exc:
        raise ProblemError(str(exc)) from exc
    run.timings.extend(rep.timings)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(rep.dumps())
        (out / "report.csv").write_text(rep.to_csv())
    run.emit(rep.to_json(), rep.to_text(), rep.to_csv())
    return EXIT_INFEASIBLE if rep.vacuous else EXIT_OK


def cmd_check(args, run: _Run) -> int:
    prob = _load(args)
    chk = _json.encode(set_checklist(prob.g, prob.n_dirs, prob.oracle_config(), prob.settings()))
    doc = {"command": "check", **chk}
    lines = [f"archimedean: {chk['archimedean']['status']}"]
    if chk.get("empty"):
        lines.append("S(g) has no point in the box")
    else:
        pts = chk["atlas"]["points"]
        lines.append(f"boundary points: {len(pts)} ({sum(p['usable'] for p in pts)} usable)")
        for p, ok in zip(pts, chk["interior_probe"]["results"]):
            if p["usable"]:
                lines.append(f"  {p['point']} active={p['active']} interior_nearby={ok}")
        for q in chk["quasiconcavity"]:
            lines.append(f"  g{q['constraint']} at {q['point']}: {q['verdict']}")
    lines.append(f"all green: {chk['all_green']}")
    run.emit(doc, "\n".join(lines) + "\n")
    return EXIT_INFEASIBLE if chk.get("empty") else EXIT_OK


def cmd_member(args, run: _Run) -> int:
    prob = _load(args)
    text = args.poly if args.poly is not None else prob.objective
    if text is None:
        raise ProblemError("member needs --poly or an objective in the problem file")
    try:
        f = parse_poly(text, prob.variables)
    except PolynomialError as exc:
        raise ProblemError(str(exc)) from exc
    d = args.d if args.d is not None else max(2, int(math.ceil(max(f.degree, 0) / 2)) * 2)
    _warn_excluded(prob.g, d, prob.variables)
    t0 = time.perf_counter()
    try:
        res = sos_membership(f, prob.g, d, prob.settings())
    except RelaxationError as exc:
        raise ProblemError(str(exc)) from exc
    run.timings.append(1000.0 * (time.perf_counter() - t0))
    doc = {
        "command": "member",
        "polynomial": f.to_string(prob.variables),
        "d": d,
        "verdict": res.verdict.value,
        "margin": res.margin,
        "margin_upper": res.margin_upper,
        "status": res.status,
    }
    if res.certificate is not None:
        doc["certificate_residual"] = res.certificate.residual
        if args.cert:
            Path(args.cert).write_text(res.certificate.dumps())
            doc["certificate_file"] = str(args.cert)
    txt = f"{res.verdict.value} (d={d}, margin {res.margin:.3e}, upper {res.margin_upper:.3e}, status {res.status})\n"
    run.emit(doc, txt)
    return EXIT_SOLVER if res.verdict is Verdict.INCONCLUSIVE else EXIT_OK


def cmd_repro(args, run: _Run) -> int:
    if args.name == "onedim":
        rep = onedim_probe(d_max=args.dmax or 10, tol=args.tol if args.tol is not None else DEFAULT_TOL)
        run.timings.extend(rep.timings)
        minus_x = [r for r in rep.directions if r["direction"] == [-1.0]]
        ok = rep.first_exact_d is None and bool(minus_x) and minus_x[0]["closed_at"] is None
        doc = rep.to_json()
        run.emit(doc, rep.to_text() + f"direction -x closed: {not ok}\n", rep.to_csv())
        return EXIT_OK if ok else EXIT_SOLVER
    rep = counterexample_xy()
    lines = [
        f"oracle min of xy on S(g,h): {rep['oracle_min']!r}",
        f"hessian state at (0,0) along (1,-1): {rep['hessian_state']!r}",
        f"xy and its gradient vanish at (0,0): {rep['double_zero']}",
    ]
    lines += [f"d={r['d']}: {r['verdict']} (margin {_json.decode_float(r['margin']):.3e})" for r in rep["membership"]]
    run.emit(rep, "\n".join(lines) + "\n")
    return EXIT_OK if rep["ok"] else EXIT_SOLVER


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv", "text"), default="text")
    common.add_argument("--metadata", metavar="PATH", help="write timestamps and timings here")
    common.add_argument("--box", help="N for [-N,N]^n, or lo:hi,lo:hi,... per variable")
    common.add_argument("--tol", type=float)
    common.add_argument("--dmax", type=int)
    common.add_argument("--dirs", type=int)

    p = argparse.ArgumentParser(prog="momentforge", description="Moment relaxations and their exactness checks.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="solve one relaxation")
    s.add_argument("problem")
    s.add_argument("--d", type=int)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sweep", parents=[common], help="degree sweep against the oracle")
    s.add_argument("problem")
    s.add_argument("--out-dir", help="also write report.json and report.csv here")
    s.add_argument("--odd", action="store_true", help="include odd degrees")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("check", parents=[common], help="hypothesis checklist")
    s.add_argument("problem")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("member", parents=[common], help="truncated quadratic module membership")
    s.add_argument("problem")
    s.add_argument("--poly", help="polynomial to test (defaults to the objective)")
    s.add_argument("--d", type=int)
    s.add_argument("--cert", help="write the certificate JSON here")
    s.set_defaults(func=cmd_member)

    s = sub.add_parser("repro", parents=[common], help="canned reproductions")
    s.add_argument("name", choices=("onedim", "disks"))
    s.set_defaults(func=cmd_repro)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    run = _Run(args)
    try:
        code = args.func(args, run)
    except ProblemError as exc:
        print(f"momentforge: {exc}", file=sys.stderr)
        return EXIT_PARSE
    run.finish(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
