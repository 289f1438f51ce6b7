"""Sparse multivariate polynomial arithmetic over the (t, x, y, v) variables.

Everything downstream (constraint generation, moment matrices, graph
recovery) manipulates polynomials as sparse maps from exponent tuples to
real coefficients.  The monomial basis is graded lexicographic with the
fixed variable order (t, x, y, v), so for two variables and degree 3 the
basis reads 1, w1, w2, w1^2, w1*w2, w2^2, w1^3, w1^2*w2, w1*w2^2, w2^3.

Box integrals of monomials are computed with exact rational arithmetic and
converted to float once, so constraint right-hand sides carry no quadrature
noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Iterable, Iterator, Mapping

import numpy as np

#: Canonical variable order shared by every module.
VARIABLE_ORDER = ("t", "x", "y", "v")

Exponent = tuple[int, ...]


def total_degree(exponent: Exponent) -> int:
    return sum(exponent)


@lru_cache(maxsize=None)
def monomial_basis(arity: int, degree: int) -> tuple[Exponent, ...]:
    """All exponents of `arity` variables with total degree <= `degree`,
    in graded lexicographic order.  The zero exponent has index 0 and the
    basis has length C(arity + degree, degree)."""
    if arity < 1 or degree < 0:
        raise ValueError(f"invalid basis request: arity={arity}, degree={degree}")

    def fixed(n: int, k: int) -> Iterator[Exponent]:
        if n == 1:
            yield (k,)
            return
        for first in range(k, -1, -1):
            for rest in fixed(n - 1, k - first):
                yield (first,) + rest

    basis = tuple(e for k in range(degree + 1) for e in fixed(arity, k))
    assert len(basis) == comb(arity + degree, degree)
    return basis


@lru_cache(maxsize=None)
def basis_index(arity: int, degree: int) -> dict[Exponent, int]:
    return {e: i for i, e in enumerate(monomial_basis(arity, degree))}


def basis_size(arity: int, degree: int) -> int:
    return comb(arity + degree, degree)


@dataclass(frozen=True)
class VariableSpace:
    """An ordered tuple of named variables with finite box bounds.

    Names must be a subset of (t, x, y, v) and are stored in that canonical
    order; bounds are closed intervals with lower < upper.
    """

    names: tuple[str, ...]
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate variable names: {self.names}")
        for name in self.names:
            if name not in VARIABLE_ORDER:
                raise ValueError(f"unknown variable {name!r}; allowed: {VARIABLE_ORDER}")
        order = [VARIABLE_ORDER.index(n) for n in self.names]
        if order != sorted(order):
            raise ValueError(f"variables must follow the order {VARIABLE_ORDER}: {self.names}")
        if len(self.bounds) != len(self.names):
            raise ValueError("one (lo, hi) bound pair per variable required")
        for name, (lo, hi) in zip(self.names, self.bounds):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"bad bounds for {name}: [{lo}, {hi}]")

    @classmethod
    def make(cls, **bounds: tuple[float, float]) -> "VariableSpace":
        """Build a space from keyword bounds, reordering into canonical order."""
        names = tuple(n for n in VARIABLE_ORDER if n in bounds)
        if set(bounds) - set(names):
            raise ValueError(f"unknown variables: {set(bounds) - set(names)}")
        return cls(names, tuple((float(bounds[n][0]), float(bounds[n][1])) for n in names))

    @property
    def arity(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"variable {name!r} not in space {self.names}") from None

    def bound(self, name: str) -> tuple[float, float]:
        return self.bounds[self.index(name)]

    def drop(self, name: str) -> "VariableSpace":
        i = self.index(name)
        return VariableSpace(
            self.names[:i] + self.names[i + 1:], self.bounds[:i] + self.bounds[i + 1:]
        )

    def basis(self, degree: int) -> tuple[Exponent, ...]:
        return monomial_basis(self.arity, degree)


class Polynomial:
    """Sparse real polynomial over a :class:`VariableSpace`.

    Coefficients are doubles stored in an exponent -> coefficient map with
    no explicit zeros; the zero polynomial is the empty map and evaluates
    to 0 everywhere.  Instances are treated as immutable.
    """

    __slots__ = ("space", "coeffs")

    def __init__(self, space: VariableSpace, coeffs: Mapping[Exponent, float]):
        self.space = space
        clean: dict[Exponent, float] = {}
        for exp, c in coeffs.items():
            if len(exp) != space.arity:
                raise ValueError(f"exponent {exp} has wrong arity for {space.names}")
            if any(k < 0 for k in exp):
                raise ValueError(f"negative exponent: {exp}")
            c = float(c)
            if c != 0.0:
                clean[tuple(exp)] = c
        self.coeffs = clean

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, space: VariableSpace) -> "Polynomial":
        return cls(space, {})

    @classmethod
    def constant(cls, space: VariableSpace, value: float) -> "Polynomial":
        return cls(space, {(0,) * space.arity: value})

    @classmethod
    def variable(cls, space: VariableSpace, name: str) -> "Polynomial":
        exp = [0] * space.arity
        exp[space.index(name)] = 1
        return cls(space, {tuple(exp): 1.0})

    @classmethod
    def monomial(cls, space: VariableSpace, exp: Exponent, coeff: float = 1.0) -> "Polynomial":
        return cls(space, {tuple(exp): coeff})

    # -- structure ---------------------------------------------------------

    @property
    def degree(self) -> int:
        """Max total degree of stored exponents; -1 for the zero polynomial."""
        if not self.coeffs:
            return -1
        return max(total_degree(e) for e in self.coeffs)

    def is_zero(self) -> bool:
        return not self.coeffs

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Polynomial)
            and self.space == other.space
            and self.coeffs == other.coeffs
        )

    def __hash__(self) -> int:
        return hash((self.space, frozenset(self.coeffs.items())))

    # -- arithmetic --------------------------------------------------------

    def _check_space(self, other: "Polynomial") -> None:
        if self.space != other.space:
            raise ValueError("polynomials live on different variable spaces")

    def __add__(self, other: "Polynomial") -> "Polynomial":
        self._check_space(other)
        out = dict(self.coeffs)
        for exp, c in other.coeffs.items():
            out[exp] = out.get(exp, 0.0) + c
        return Polynomial(self.space, out)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.space, {e: -c for e, c in self.coeffs.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Polynomial(self.space, {e: c * other for e, c in self.coeffs.items()})
        self._check_space(other)
        out: dict[Exponent, float] = {}
        for ea, ca in self.coeffs.items():
            for eb, cb in other.coeffs.items():
                exp = tuple(a + b for a, b in zip(ea, eb))
                out[exp] = out.get(exp, 0.0) + ca * cb
        return Polynomial(self.space, out)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Polynomial":
        if k < 0:
            raise ValueError("negative power")
        result = Polynomial.constant(self.space, 1.0)
        for _ in range(k):
            result = result * self
        return result

    # -- calculus and evaluation -------------------------------------------

    def differentiate(self, name: str) -> "Polynomial":
        """Exact formal partial derivative with respect to `name`."""
        i = self.space.index(name)
        out: dict[Exponent, float] = {}
        for exp, c in self.coeffs.items():
            if exp[i] == 0:
                continue
            new = list(exp)
            new[i] -= 1
            key = tuple(new)
            out[key] = out.get(key, 0.0) + c * exp[i]
        return Polynomial(self.space, out)

    def evaluate(self, point: Mapping[str, float]):
        """Evaluate at a point given as name -> value; values may be numpy
        arrays (broadcast elementwise)."""
        vals = [point[name] for name in self.space.names]
        acc = None
        for exp, c in self.coeffs.items():
            term = c
            for v, k in zip(vals, exp):
                if k:
                    term = term * np.power(v, k)
            acc = term if acc is None else acc + term
        if acc is None:
            shape = np.broadcast(*[np.asarray(v) for v in vals]).shape if vals else ()
            return np.zeros(shape) if shape else 0.0
        return acc

    def substitute(self, name: str, value: float) -> "Polynomial":
        """Fix one variable to a constant, returning a polynomial on the
        reduced space (0**0 counts as 1)."""
        i = self.space.index(name)
        out: dict[Exponent, float] = {}
        for exp, c in self.coeffs.items():
            scaled = c * value ** exp[i]
            key = exp[:i] + exp[i + 1:]
            out[key] = out.get(key, 0.0) + scaled
        return Polynomial(self.space.drop(name), out)

    def embed(self, space: VariableSpace) -> "Polynomial":
        """Reinterpret over a larger space containing all current variables."""
        positions = [space.index(n) for n in self.space.names]
        out: dict[Exponent, float] = {}
        for exp, c in self.coeffs.items():
            new = [0] * space.arity
            for pos, k in zip(positions, exp):
                new[pos] = k
            key = tuple(new)
            out[key] = out.get(key, 0.0) + c
        return Polynomial(space, out)

    def __repr__(self) -> str:
        if not self.coeffs:
            return "Polynomial(0)"
        parts = []
        for exp in sorted(self.coeffs, key=lambda e: (total_degree(e), tuple(-k for k in e))):
            mono = "*".join(
                f"{n}^{k}" if k > 1 else n
                for n, k in zip(self.space.names, exp)
                if k
            )
            c = self.coeffs[exp]
            parts.append(f"{c:g}" + (f"*{mono}" if mono else ""))
        return "Polynomial(" + " + ".join(parts) + ")"


def monomials_up_to(space: VariableSpace, degree: int) -> tuple[Exponent, ...]:
    """Graded-lex ordered exponents of the space with total degree <= degree."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    return space.basis(degree)


def integrate_monomial_box_exact(
    exponent: Exponent, space: VariableSpace, subset: Iterable[str] | None = None
) -> Fraction:
    """Exact integral of w^exponent over the box restricted to `subset`
    variables; factors of variables outside the subset are omitted (the
    caller substitutes fixed values itself).

    Uses the closed form int_a^b s^k ds = (b^(k+1) - a^(k+1)) / (k+1) in
    rational arithmetic (float bounds are binary rationals, so exact).
    """
    chosen = set(space.names if subset is None else subset)
    unknown = chosen - set(space.names)
    if unknown:
        raise KeyError(f"subset variables {unknown} not in space {space.names}")
    result = Fraction(1)
    for name, (lo, hi), k in zip(space.names, space.bounds, exponent):
        if name not in chosen:
            continue
        a, b = Fraction(lo), Fraction(hi)
        result *= (b ** (k + 1) - a ** (k + 1)) / (k + 1)
    return result


def integrate_monomial_box(
    exponent: Exponent, space: VariableSpace, subset: Iterable[str] | None = None
) -> float:
    return float(integrate_monomial_box_exact(exponent, space, subset))


def compose_flux(coeffs: Iterable[float], y_bounds: tuple[float, float] = (0.0, 1.0)) -> Polynomial:
    """Univariate flux polynomial in y from ascending coefficients,
    f(y) = coeffs[0] + coeffs[1]*y + ..."""
    coeffs = list(coeffs)
    if not coeffs:
        raise ValueError("flux needs at least one coefficient")
    space = VariableSpace.make(y=y_bounds)
    return Polynomial(space, {(k,): c for k, c in enumerate(coeffs)})


def flux_derivative_antiderivative(
    flux_coeffs: Iterable[float], k: int, y_bounds: tuple[float, float] = (0.0, 1.0)
) -> Polynomial:
    """The polynomial q_k with q_k' = f' * d/dy(y^k) and q_k(0) = 0.

    For f(y) = sum_j c_j y^j this is q_k(y) = sum_{j>=1} j*c_j*k/(j+k-1) * y^(j+k-1),
    the companion of the convex entropy y^k in an entropy pair.
    """
    if k < 1:
        raise ValueError("entropy exponent k must be >= 1")
    coeffs = list(flux_coeffs)
    space = VariableSpace.make(y=y_bounds)
    out: dict[Exponent, float] = {}
    for j, c in enumerate(coeffs):
        if j == 0 or c == 0.0:
            continue
        power = j + k - 1
        out[(power,)] = out.get((power,), 0.0) + j * c * k / power
    return Polynomial(space, out)
