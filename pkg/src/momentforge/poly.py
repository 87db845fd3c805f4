"""Sparse multivariate polynomials over machine reals.

A polynomial is a map from exponent tuples to nonzero float coefficients.
Monomials are ordered graded-lexicographically wherever a canonical order is
needed (``X`` before ``Y`` at equal degree, lower degree first).
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

Monomial = tuple[int, ...]

#: Degree of the zero polynomial; compares below every integer.
ZERO_DEGREE = -math.inf

PRUNE_RELATIVE = 1e-14


class PolynomialError(ValueError):
    pass


class DimensionError(PolynomialError):
    pass


class PolySyntaxError(PolynomialError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


def grlex_key(alpha: Monomial):
    return (sum(alpha), tuple(-a for a in alpha))


def monomials_up_to(n: int, d: int) -> list[Monomial]:
    """All exponent tuples of length ``n`` with total degree <= ``d``, grlex order."""
    if d < 0:
        return []
    out: list[Monomial] = []
    for k in range(d + 1):
        out.extend(monomials_of_degree(n, k))
    return out


def monomials_of_degree(n: int, k: int) -> list[Monomial]:
    if n == 0:
        return [()] if k == 0 else []
    out = []
    # first exponent descending gives X^k, X^{k-1}Y, ... order
    for a in range(k, -1, -1):
        for rest in monomials_of_degree(n - 1, k - a):
            out.append((a,) + rest)
    return out


def _prune(terms: dict[Monomial, float]) -> dict[Monomial, float]:
    if not terms:
        return {}
    big = max(abs(c) for c in terms.values())
    if big == 0.0 or not math.isfinite(big):
        return {a: c for a, c in terms.items() if c != 0.0}
    cut = PRUNE_RELATIVE * big
    return {a: c for a, c in terms.items() if abs(c) >= cut and c != 0.0}


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Immutable sparse polynomial in ``n`` variables."""

    n: int
    terms: Mapping[Monomial, float]

    def __init__(self, n: int, terms: Mapping[Monomial, float] | None = None, *, prune: bool = True):
        clean: dict[Monomial, float] = {}
        for alpha, c in (terms or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != n:
                raise DimensionError(f"exponent {alpha} does not have length {n}")
            if any(a < 0 for a in alpha):
                raise PolynomialError(f"negative exponent in {alpha}")
            clean[alpha] = clean.get(alpha, 0.0) + float(c)
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "terms", _prune(clean) if prune else {a: c for a, c in clean.items() if c != 0.0})

    # construction helpers
    @classmethod
    def constant(cls, n: int, c: float) -> Polynomial:
        return cls(n, {(0,) * n: c})

    @classmethod
    def variable(cls, n: int, i: int) -> Polynomial:
        alpha = [0] * n
        alpha[i] = 1
        return cls(n, {tuple(alpha): 1.0})

    @classmethod
    def zero(cls, n: int) -> Polynomial:
        return cls(n, {})

    @property
    def degree(self) -> float | int:
        if not self.terms:
            return ZERO_DEGREE
        return max(sum(a) for a in self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, alpha: Sequence[int]) -> float:
        return self.terms.get(tuple(alpha), 0.0)

    def sorted_terms(self) -> list[tuple[Monomial, float]]:
        return sorted(self.terms.items(), key=lambda t: grlex_key(t[0]))

    def max_abs_coefficient(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    # arithmetic
    def _coerce(self, other) -> Polynomial:
        if isinstance(other, Polynomial):
            if other.n != self.n:
                raise DimensionError(f"variable counts differ: {self.n} vs {other.n}")
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.n, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self.terms)
        for a, c in other.terms.items():
            terms[a] = terms.get(a, 0.0) + c
        return Polynomial(self.n, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.n, {a: -c for a, c in self.terms.items()}, prune=False)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms: dict[Monomial, float] = {}
        for a, c in self.terms.items():
            for b, e in other.terms.items():
                key = tuple(x + y for x, y in zip(a, b))
                terms[key] = terms.get(key, 0.0) + c * e
        return Polynomial(self.n, terms)

    __rmul__ = __mul__

    def scale(self, c: float) -> Polynomial:
        return Polynomial(self.n, {a: c * v for a, v in self.terms.items()})

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise PolynomialError("exponent must be a nonnegative integer")
        result = Polynomial.constant(self.n, 1.0)
        base = self
        k = int(k)
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.n == other.n and dict(self.terms) == dict(other.terms)

    def __hash__(self):
        return hash((self.n, frozenset(self.terms.items())))

    def allclose(self, other: Polynomial, atol: float = 1e-12) -> bool:
        return (self - other).max_abs_coefficient() <= atol

    # evaluation
    def __call__(self, x) -> float | np.ndarray:
        return self.eval(x)

    def eval(self, x) -> float | np.ndarray:
        """Evaluate at a point (shape ``(n,)``) or a batch of points ``(k, n)``."""
        pts = np.asarray(x, dtype=float)
        single = pts.ndim == 1
        if single:
            pts = pts[None, :]
        if pts.ndim != 2 or pts.shape[1] != self.n:
            raise DimensionError(f"point has dimension {pts.shape[-1] if pts.ndim else 0}, expected {self.n}")
        out = np.zeros(pts.shape[0])
        for alpha, c in self.terms.items():
            term = np.full(pts.shape[0], c)
            for i, a in enumerate(alpha):
                if a:
                    term = term * pts[:, i] ** a
            out += term
        return float(out[0]) if single else out

    # calculus
    def diff(self, i: int) -> Polynomial:
        terms = {}
        for alpha, c in self.terms.items():
            if alpha[i]:
                beta = list(alpha)
                beta[i] -= 1
                terms[tuple(beta)] = c * alpha[i]
        return Polynomial(self.n, terms)

    def gradient(self) -> list[Polynomial]:
        return [self.diff(i) for i in range(self.n)]

    def hessian(self) -> list[list[Polynomial]]:
        grad = self.gradient()
        H = [[None] * self.n for _ in range(self.n)]
        for i in range(self.n):
            for j in range(i, self.n):
                H[i][j] = H[j][i] = grad[i].diff(j)
        return H

    def gradient_at(self, x) -> np.ndarray:
        return np.array([g.eval(x) for g in self.gradient()], dtype=float).reshape(self.n)

    def hessian_at(self, x) -> np.ndarray:
        H = self.hessian()
        return np.array([[H[i][j].eval(x) for j in range(self.n)] for i in range(self.n)], dtype=float).reshape(
            self.n, self.n
        )

    def substitute_shift(self, x) -> Polynomial:
        """Return ``p(X + x)``."""
        return self.substitute_affine(x, np.ones(self.n))

    def substitute_affine(self, shift, scale) -> Polynomial:
        """Return ``p(shift + scale * X)`` (coordinatewise)."""
        x = np.asarray(shift, dtype=float).reshape(-1)
        s = np.asarray(scale, dtype=float).reshape(-1)
        if x.shape[0] != self.n or s.shape[0] != self.n:
            raise DimensionError(f"expected {self.n} coordinates")
        out = Polynomial.zero(self.n)
        shifted = [Polynomial.variable(self.n, i) * float(s[i]) + float(x[i]) for i in range(self.n)]
        for alpha, c in self.terms.items():
            term = Polynomial.constant(self.n, c)
            for i, a in enumerate(alpha):
                if a:
                    term = term * shifted[i] ** a
            out = out + term
        return out

    # text
    def to_string(self, names: Sequence[str] | None = None) -> str:
        if names is None:
            names = default_names(self.n)
        if not self.terms:
            return "0"
        parts = []
        for alpha, c in self.sorted_terms():
            mono = "*".join(
                names[i] if a == 1 else f"{names[i]}^{a}" for i, a in enumerate(alpha) if a
            )
            mag = abs(c)
            if mono:
                body = mono if mag == 1.0 else f"{_fmt(mag)}*{mono}"
            else:
                body = _fmt(mag)
            sign = "-" if c < 0 else "+"
            parts.append((sign, body))
        first_sign, first = parts[0]
        text = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return text

    def __repr__(self):
        return f"Polynomial({self.to_string()!s}, n={self.n})"


def _fmt(x: float) -> str:
    return repr(float(x)) if x != int(x) or abs(x) >= 1e16 else str(int(x))


def default_names(n: int) -> list[str]:
    if n <= 3:
        return ["x", "y", "z"][:n]
    return [f"x{i + 1}" for i in range(n)]


@dataclass(frozen=True)
class PolySystem:
    """The constraint list ``g = (g_1, ..., g_m)``; ``g_0 = 1`` is implicit."""

    n: int
    constraints: tuple[Polynomial, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        for g in self.constraints:
            if g.n != self.n:
                raise DimensionError(f"constraint in {g.n} variables, system has {self.n}")

    def __len__(self):
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def __getitem__(self, i):
        return self.constraints[i]

    def values(self, x) -> np.ndarray:
        return np.array([g.eval(x) for g in self.constraints], dtype=float)


# ---------------------------------------------------------------- special constructions


def _as_points(points, n: int | None) -> tuple[list[np.ndarray], int]:
    pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]
    if n is None:
        if not pts:
            raise DimensionError("variable count needed for an empty point list")
        n = pts[0].shape[0]
    for p in pts:
        if p.shape != (n,):
            raise DimensionError(f"point {p} does not have dimension {n}")
    return pts, n


def build_ux(points: Iterable, n: int | None = None) -> Polynomial:
    """Product over the points of the squared distance polynomials ``sum (X_i - x_i)^2``."""
    pts, n = _as_points(list(points), n)
    u = Polynomial.constant(n, 1.0)
    for p in pts:
        ux = Polynomial.zero(n)
        for i in range(n):
            ux = ux + (Polynomial.variable(n, i) - float(p[i])) ** 2
        u = u * ux
    return u


def shifted_concavity_transform(g: Polynomial, k: int) -> Polynomial:
    """``g * (1 - g)^k``."""
    if k < 1:
        raise PolynomialError("k must be a positive integer")
    return g * (1.0 - g) ** k


def double_zero_test(p: Polynomial, x, tol: float) -> bool:
    """True iff ``p`` and its gradient both vanish at ``x`` (within ``tol``)."""
    if tol <= 0:
        raise PolynomialError("tol must be positive")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != p.n:
        raise DimensionError(f"point has dimension {x.shape[0]}, expected {p.n}")
    if abs(p.eval(x)) > tol:
        return False
    return bool(p.n == 0 or np.max(np.abs(p.gradient_at(x))) <= tol)


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*^()]))"
)


class _Parser:
    def __init__(self, text: str, names: Sequence[str]):
        self.text = text
        self.names = {name: i for i, name in enumerate(names)}
        if len(self.names) != len(names):
            raise PolynomialError("duplicate variable names")
        self.n = len(names)
        self.tokens = self._tokenize()
        self.pos = 0

    def _tokenize(self):
        toks = []
        i = 0
        text = self.text
        while i < len(text):
            if text[i].isspace():
                i += 1
                continue
            m = _TOKEN.match(text, i)
            if not m or m.end() == i:
                raise PolySyntaxError(f"unexpected character {text[i]!r}", len(text[:i].encode()))
            kind = m.lastgroup
            start = m.start(kind)
            toks.append((kind, m.group(kind), len(text[:start].encode())))
            i = m.end()
        toks.append(("end", "", len(text.encode())))
        return toks

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, value):
        kind, val, off = self.take()
        if val != value:
            raise PolySyntaxError(f"expected {value!r}, found {val or 'end of input'!r}", off)

    def parse(self) -> Polynomial:
        p = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise PolySyntaxError(f"unexpected token {val!r}", off)
        return p

    def expr(self) -> Polynomial:
        sign = 1.0
        # a leading sign is accepted as shorthand for 0 - term
        if self.peek()[1] in "+-" and self.peek()[0] == "op":
            sign = -1.0 if self.take()[1] == "-" else 1.0
        p = self.term().scale(sign)
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self) -> Polynomial:
        p = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            p = p * self.factor()
        return p

    def _uint(self) -> int:
        kind, val, off = self.take()
        if kind != "num" or not val.isdigit():
            raise PolySyntaxError("exponent must be an unsigned integer", off)
        return int(val)

    def factor(self) -> Polynomial:
        kind, val, off = self.take()
        if kind == "num":
            base = Polynomial.constant(self.n, float(val))
            allow_pow = False
        elif kind == "name":
            if val not in self.names:
                raise PolynomialError(f"unknown variable {val!r} at offset {off}")
            base = Polynomial.variable(self.n, self.names[val])
            allow_pow = True
        elif val == "(":
            base = self.expr()
            self.expect(")")
            allow_pow = True
        else:
            raise PolySyntaxError(f"unexpected token {val or 'end of input'!r}", off)
        if allow_pow and self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            base = base ** self._uint()
        return base


def parse_poly(text: str, names: Sequence[str]) -> Polynomial:
    """Parse ``text`` as a polynomial in the variables ``names``.

    Grammar (whitespace ignored, implicit multiplication rejected)::

        expr   := ['+'|'-'] term (('+'|'-') term)*
        term   := factor ('*' factor)*
        factor := number | var | var '^' uint | '(' expr ')' ['^' uint]
    """
    return _Parser(text, list(names)).parse()


def parse_system(texts: Iterable[str], names: Sequence[str]) -> PolySystem:
    return PolySystem(len(names), tuple(parse_poly(t, names) for t in texts))


def random_polynomial(rng: np.random.Generator, n: int, degree: int, density: float = 1.0, scale: float = 10.0) -> Polynomial:
    terms = {}
    for alpha in monomials_up_to(n, degree):
        if rng.random() <= density:
            terms[alpha] = rng.uniform(-scale, scale)
    return Polynomial(n, terms)


def gram_form(basis: Sequence[Monomial], Q: np.ndarray, n: int) -> Polynomial:
    """The polynomial ``v^T Q v`` for the monomial vector ``v`` given by ``basis``."""
    terms: dict[Monomial, float] = {}
    for (i, r), (j, c) in itertools.product(enumerate(basis), repeat=2):
        key = tuple(a + b for a, b in zip(r, c))
        terms[key] = terms.get(key, 0.0) + float(Q[i, j])
    return Polynomial(n, terms)
