"""Measure-valued formulation of a scalar conservation-law Riemann problem.

A Riemann problem dy/dt + df(y)/dx = 0 with piecewise-constant initial data
is recast as a linear program over Borel measures:

* an occupation measure ``nu`` on time x space x value whose conditionals
  are the Young measure of the solution,
* boundary measures ``nu0, nuT`` (initial / final time slice) and
  ``nuL, nuR`` (left / right space boundary),
* optionally ten lifted measures carrying an extra value variable v, which
  encode the full |y - v| entropy family by splitting into the regions
  y >= v and y <= v.

The constraints are linear in moments: Lebesgue marginals in (t, x),
Dirac pinning of known boundary data, the weak form of the conservation
law against monomial test functions, and entropy inequalities against
products of the box's defining linear factors (a Handelman basis, which is
dense in the nonnegative test functions on a box).

Every generated constraint is truncated by the rule that all instantiated
integrands must have degree <= 2*order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import product
from typing import Literal

from .poly import (
    Exponent,
    Polynomial,
    VariableSpace,
    compose_flux,
    flux_derivative_antiderivative,
    integrate_monomial_box_exact,
    monomial_basis,
)

BASE_MEASURES = ("nu", "nu0", "nuT", "nuL", "nuR")
LIFTED_MEASURES = (
    "thp", "thm",
    "th0p", "th0m",
    "thTp", "thTm",
    "thLp", "thLm",
    "thRp", "thRm",
)

Relation = Literal["=", ">="]


@dataclass(frozen=True)
class SemialgebraicSet:
    """Box (or box with an order constraint y >= v / y <= v) described by
    polynomial inequalities g_j >= 0, each of degree <= 2."""

    space: VariableSpace
    inequalities: tuple[Polynomial, ...]
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        for g in self.inequalities:
            if g.degree > 2:
                raise ValueError("support certificates must have degree <= 2")
            if g.space != self.space:
                raise ValueError("certificate space mismatch")


@dataclass(frozen=True)
class MeasureDecl:
    """A declared unknown measure: reduced variable space, support
    certificates, and the coordinates that were substituted out."""

    name: str
    support: SemialgebraicSet
    fixed: dict[str, float] = field(default_factory=dict)

    @property
    def space(self) -> VariableSpace:
        return self.support.space


@dataclass(frozen=True)
class LinearMomentConstraint:
    """sum_i integral(h_i d nu_i) (=|>=) rhs with polynomial integrands h_i."""

    integrands: dict[str, Polynomial]
    relation: Relation
    rhs: float
    tag: str

    def max_degree(self) -> int:
        return max((p.degree for p in self.integrands.values()), default=-1)


@dataclass(frozen=True)
class Objective:
    kind: Literal["trace", "linear"]
    sense: Literal["min", "max"]
    integrands: dict[str, Polynomial] = field(default_factory=dict)


@dataclass(frozen=True)
class GmpProblem:
    measures: tuple[MeasureDecl, ...]
    constraints: tuple[LinearMomentConstraint, ...]
    objective: Objective
    order: int

    def measure(self, name: str) -> MeasureDecl:
        for m in self.measures:
            if m.name == name:
                return m
        raise KeyError(f"measure {name!r} not declared")

    def equalities(self) -> list[LinearMomentConstraint]:
        return [c for c in self.constraints if c.relation == "="]

    def inequalities(self) -> list[LinearMomentConstraint]:
        return [c for c in self.constraints if c.relation == ">="]


@dataclass(frozen=True)
class RiemannConfig:
    """Problem data: states, flux, domain window, relaxation choices."""

    left_state: float = 1.0
    right_state: float = 0.0
    flux_coeffs: tuple[float, ...] = (0.0, 0.0, 0.25)
    t_final: float = 1.0
    x_left: float = -0.5
    x_right: float = 0.5
    y_min: float = 0.0
    y_max: float = 1.0
    order: int = 4
    entropy_family: Literal["polynomial", "kruzhkov"] = "polynomial"
    k_max: int = 4
    boundary: Literal["impose-left", "impose-right", "both", "none"] = "impose-left"
    objective: Literal["trace-min", "entropy-max"] = "trace-min"

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError("relaxation order must be >= 1")
        if self.k_max < 2:
            raise ValueError("polynomial entropy family needs k_max >= 2")
        if not self.flux_coeffs:
            raise ValueError("flux needs at least one coefficient")
        lo, hi = min(self.left_state, self.right_state), max(self.left_state, self.right_state)
        if self.y_min > lo or self.y_max < hi:
            raise ValueError(
                f"value bounds [{self.y_min}, {self.y_max}] must contain the states {lo}, {hi}"
            )
        if not (self.t_final > 0 and self.x_left < self.x_right):
            raise ValueError("empty time or space window")
        if self.entropy_family not in ("polynomial", "kruzhkov"):
            raise ValueError(f"unknown entropy family {self.entropy_family!r}")
        if self.boundary not in ("impose-left", "impose-right", "both", "none"):
            raise ValueError(f"unknown boundary imposition {self.boundary!r}")
        if self.objective not in ("trace-min", "entropy-max"):
            raise ValueError(f"unknown objective {self.objective!r}")

    # -- derived geometry ---------------------------------------------------

    @property
    def y_bounds(self) -> tuple[float, float]:
        return (self.y_min, self.y_max)

    def space_txy(self) -> VariableSpace:
        return VariableSpace.make(
            t=(0.0, self.t_final), x=(self.x_left, self.x_right), y=self.y_bounds
        )

    def space_xy(self) -> VariableSpace:
        return VariableSpace.make(x=(self.x_left, self.x_right), y=self.y_bounds)

    def space_ty(self) -> VariableSpace:
        return VariableSpace.make(t=(0.0, self.t_final), y=self.y_bounds)

    def space_txyv(self) -> VariableSpace:
        return VariableSpace.make(
            t=(0.0, self.t_final),
            x=(self.x_left, self.x_right),
            y=self.y_bounds,
            v=self.y_bounds,
        )

    def space_xyv(self) -> VariableSpace:
        return VariableSpace.make(x=(self.x_left, self.x_right), y=self.y_bounds, v=self.y_bounds)

    def space_tyv(self) -> VariableSpace:
        return VariableSpace.make(t=(0.0, self.t_final), y=self.y_bounds, v=self.y_bounds)

    def flux(self, space: VariableSpace) -> Polynomial:
        return compose_flux(self.flux_coeffs, self.y_bounds).embed(space)

    def initial_value(self, x: float) -> float:
        return self.left_state if x < 0 else self.right_state


def shock_config(order: int = 4, **overrides) -> RiemannConfig:
    """Canonical decreasing-data case: left state 1, right state 0,
    trace-minimisation objective."""
    return replace(
        RiemannConfig(left_state=1.0, right_state=0.0, objective="trace-min", order=order),
        **overrides,
    )


def rarefaction_config(order: int = 4, **overrides) -> RiemannConfig:
    """Canonical increasing-data case: left state 0, right state 1,
    entropy-sum maximisation objective."""
    return replace(
        RiemannConfig(left_state=0.0, right_state=1.0, objective="entropy-max", order=order),
        **overrides,
    )


# ---------------------------------------------------------------------------
# measures


def _box_certificates(space: VariableSpace) -> tuple[list[Polynomial], list[str]]:
    gs, labels = [], []
    for name in space.names:
        lo, hi = space.bound(name)
        w = Polynomial.variable(space, name)
        gs.append((w - Polynomial.constant(space, lo)) * (Polynomial.constant(space, hi) - w))
        labels.append(f"box:{name}")
    return gs, labels


def _box_set(space: VariableSpace) -> SemialgebraicSet:
    gs, labels = _box_certificates(space)
    return SemialgebraicSet(space, tuple(gs), tuple(labels))


def _lifted_set(space: VariableSpace, sign: int) -> SemialgebraicSet:
    gs, labels = _box_certificates(space)
    y = Polynomial.variable(space, "y")
    v = Polynomial.variable(space, "v")
    gs.append((y - v) * sign)
    labels.append("order:y-v" if sign > 0 else "order:v-y")
    return SemialgebraicSet(space, tuple(gs), tuple(labels))


def declare_measures(cfg: RiemannConfig) -> list[MeasureDecl]:
    """The unknown measures: five on reduced boxes, plus ten lifted ones
    when the full entropy family is requested."""
    T, L, R = cfg.t_final, cfg.x_left, cfg.x_right
    decls = [
        MeasureDecl("nu", _box_set(cfg.space_txy())),
        MeasureDecl("nu0", _box_set(cfg.space_xy()), {"t": 0.0}),
        MeasureDecl("nuT", _box_set(cfg.space_xy()), {"t": T}),
        MeasureDecl("nuL", _box_set(cfg.space_ty()), {"x": L}),
        MeasureDecl("nuR", _box_set(cfg.space_ty()), {"x": R}),
    ]
    if cfg.entropy_family == "kruzhkov":
        lifted = [
            ("thp", cfg.space_txyv(), {}, +1),
            ("thm", cfg.space_txyv(), {}, -1),
            ("th0p", cfg.space_xyv(), {"t": 0.0}, +1),
            ("th0m", cfg.space_xyv(), {"t": 0.0}, -1),
            ("thTp", cfg.space_xyv(), {"t": T}, +1),
            ("thTm", cfg.space_xyv(), {"t": T}, -1),
            ("thLp", cfg.space_tyv(), {"x": L}, +1),
            ("thLm", cfg.space_tyv(), {"x": L}, -1),
            ("thRp", cfg.space_tyv(), {"x": R}, +1),
            ("thRm", cfg.space_tyv(), {"x": R}, -1),
        ]
        decls += [
            MeasureDecl(name, _lifted_set(space, sign), fixed)
            for name, space, fixed, sign in lifted
        ]
    return decls


# ---------------------------------------------------------------------------
# constraint generation helpers


def _interval_integral(lo: float, hi: float, k: int) -> Fraction:
    a, b = Fraction(lo), Fraction(hi)
    return (b ** (k + 1) - a ** (k + 1)) / (k + 1)


def _keep(integrands: dict[str, Polynomial], rhs: float) -> bool:
    """Drop constraints that reduce to 0 = 0 after substitutions."""
    return bool(integrands) or rhs != 0.0


def _clean(integrands: dict[str, Polynomial]) -> dict[str, Polynomial]:
    return {m: p for m, p in integrands.items() if not p.is_zero()}


def _make(
    integrands: dict[str, Polynomial], relation: Relation, rhs: float, tag: str, two_d: int
) -> LinearMomentConstraint | None:
    integrands = _clean(integrands)
    if not _keep(integrands, rhs):
        return None
    c = LinearMomentConstraint(integrands, relation, rhs, tag)
    if c.max_degree() > two_d:
        return None
    return c


def marginal_constraints(cfg: RiemannConfig) -> list[LinearMomentConstraint]:
    """Pin the (t, x)-marginals: Lebesgue on the box for nu, Lebesgue on the
    free coordinate (with the fixed one substituted) for the boundary
    measures."""
    two_d = 2 * cfg.order
    T, L, R = cfg.t_final, cfg.x_left, cfg.x_right
    txy, xy, ty = cfg.space_txy(), cfg.space_xy(), cfg.space_ty()
    out: list[LinearMomentConstraint] = []
    for a1, a2 in ((a1, a2) for a1 in range(two_d + 1) for a2 in range(two_d + 1 - a1)):
        rows = [
            ("nu", Polynomial.monomial(txy, (a1, a2, 0)),
             _interval_integral(0.0, T, a1) * _interval_integral(L, R, a2)),
            ("nu0", Polynomial.monomial(xy, (a2, 0), 0.0 ** a1),
             Fraction(0.0) ** a1 * _interval_integral(L, R, a2)),
            ("nuT", Polynomial.monomial(xy, (a2, 0), float(T) ** a1),
             Fraction(T) ** a1 * _interval_integral(L, R, a2)),
            ("nuL", Polynomial.monomial(ty, (a1, 0), float(L) ** a2),
             Fraction(L) ** a2 * _interval_integral(0.0, T, a1)),
            ("nuR", Polynomial.monomial(ty, (a1, 0), float(R) ** a2),
             Fraction(R) ** a2 * _interval_integral(0.0, T, a1)),
        ]
        for name, integrand, rhs in rows:
            c = _make({name: integrand}, "=", float(rhs), "marginal", two_d)
            if c is not None:
                out.append(c)
    return out


def pin_boundary(cfg: RiemannConfig) -> list[LinearMomentConstraint]:
    """Fix every moment of the boundary measures with known data: the
    initial slice carries the Riemann datum (a Dirac in y on each side of
    the discontinuity), and the imposed lateral boundaries carry Diracs at
    the adjacent state."""
    two_d = 2 * cfg.order
    T, L, R = cfg.t_final, cfg.x_left, cfg.x_right
    l, r = Fraction(cfg.left_state), Fraction(cfg.right_state)
    xy, ty = cfg.space_xy(), cfg.space_ty()
    split = min(max(0.0, L), R)
    out: list[LinearMomentConstraint] = []

    for a2, a3 in ((a, b) for a in range(two_d + 1) for b in range(two_d + 1 - a)):
        rhs = l ** a3 * _interval_integral(L, split, a2) + r ** a3 * _interval_integral(split, R, a2)
        c = _make({"nu0": Polynomial.monomial(xy, (a2, a3))}, "=", float(rhs), "pin", two_d)
        if c is not None:
            out.append(c)

    sides = []
    if cfg.boundary in ("impose-left", "both"):
        sides.append(("nuL", l))
    if cfg.boundary in ("impose-right", "both"):
        sides.append(("nuR", r))
    for name, state in sides:
        for a1, a3 in ((a, b) for a in range(two_d + 1) for b in range(two_d + 1 - a)):
            rhs = state ** a3 * _interval_integral(0.0, T, a1)
            c = _make({name: Polynomial.monomial(ty, (a1, a3))}, "=", float(rhs), "pin", two_d)
            if c is not None:
                out.append(c)
    return out


def conservation_constraints(cfg: RiemannConfig) -> list[LinearMomentConstraint]:
    """Weak form of the conservation law against the test functions
    t^a1 x^a2: with phi1 = t^a1 x^a2 y and phi2 = t^a1 x^a2 f(y),

        int (d phi1/dt + d phi2/dx) d nu + int phi1 d nu0 - int phi1 d nuT
            + int phi2 d nuL - int phi2 d nuR = 0.
    """
    two_d = 2 * cfg.order
    T, L, R = cfg.t_final, cfg.x_left, cfg.x_right
    txy = cfg.space_txy()
    f = cfg.flux(txy)
    y = Polynomial.variable(txy, "y")
    out: list[LinearMomentConstraint] = []
    for a1, a2 in ((a1, a2) for a1 in range(two_d + 1) for a2 in range(two_d + 1 - a1)):
        tx = Polynomial.monomial(txy, (a1, a2, 0))
        phi1 = tx * y
        phi2 = tx * f
        integrands = {
            "nu": phi1.differentiate("t") + phi2.differentiate("x"),
            "nu0": phi1.substitute("t", 0.0),
            "nuT": -phi1.substitute("t", T),
            "nuL": phi2.substitute("x", L),
            "nuR": -phi2.substitute("x", R),
        }
        c = _make(integrands, "=", 0.0, "conservation", two_d)
        if c is not None:
            out.append(c)
    return out


def _box_factor_powers(space: VariableSpace, name: str, lo: float, hi: float, two_d: int):
    """Powers of the two linear box factors (w - lo) and (hi - w)."""
    w = Polynomial.variable(space, name)
    low = w - Polynomial.constant(space, lo)
    high = Polynomial.constant(space, hi) - w
    lows = [Polynomial.constant(space, 1.0)]
    highs = [Polynomial.constant(space, 1.0)]
    for _ in range(two_d):
        lows.append(lows[-1] * low)
        highs.append(highs[-1] * high)
    return lows, highs


def entropy_constraints_polynomial(cfg: RiemannConfig) -> list[LinearMomentConstraint]:
    """Entropy inequalities for the convex family y^k, k = 2..k_max, against
    nonnegative test functions psi2 = t^a (T-t)^b (x-L)^c (R-x)^e."""
    two_d = 2 * cfg.order
    T, L, R = cfg.t_final, cfg.x_left, cfg.x_right
    txy = cfg.space_txy()
    t_lo, t_hi = _box_factor_powers(txy, "t", 0.0, T, two_d)
    x_lo, x_hi = _box_factor_powers(txy, "x", L, R, two_d)
    out: list[LinearMomentConstraint] = []
    for k in range(2, cfg.k_max + 1):
        eta = Polynomial.monomial(txy, (0, 0, k))
        q = flux_derivative_antiderivative(cfg.flux_coeffs, k, cfg.y_bounds).embed(txy)
        for a, b, c_, e in (
            combo
            for combo in product(range(two_d + 1), repeat=4)
            if sum(combo) + k <= two_d + 1
        ):
            psi = t_lo[a] * t_hi[b] * x_lo[c_] * x_hi[e]
            integrands = {
                "nu": psi.differentiate("t") * eta + psi.differentiate("x") * q,
                "nu0": psi.substitute("t", 0.0) * eta.substitute("t", 0.0),
                "nuT": -(psi.substitute("t", T) * eta.substitute("t", T)),
                "nuL": psi.substitute("x", L) * q.substitute("x", L),
                "nuR": -(psi.substitute("x", R) * q.substitute("x", R)),
            }
            row = _make(integrands, ">=", 0.0, "entropy", two_d)
            if row is not None:
                out.append(row)
    return out


def entropy_constraints_kruzhkov(
    cfg: RiemannConfig,
) -> tuple[list[LinearMomentConstraint], list[LinearMomentConstraint]]:
    """Lifted formulation of the |y - v| entropy family.

    Returns (lifting equalities, entropy inequalities).  The liftings force
    each plus/minus pair to add up to the base measure times the normalized
    Lebesgue measure in v; the inequalities instantiate the entropy balance
    with test functions that are products of all six box factors."""
    two_d = 2 * cfg.order
    T, L, R = cfg.t_final, cfg.x_left, cfg.x_right
    y_lo, y_hi = cfg.y_bounds
    width = Fraction(y_hi) - Fraction(y_lo)

    liftings: list[LinearMomentConstraint] = []
    pairs = [
        ("nu", "thp", "thm", cfg.space_txy(), cfg.space_txyv()),
        ("nu0", "th0p", "th0m", cfg.space_xy(), cfg.space_xyv()),
        ("nuT", "thTp", "thTm", cfg.space_xy(), cfg.space_xyv()),
        ("nuL", "thLp", "thLm", cfg.space_ty(), cfg.space_tyv()),
        ("nuR", "thRp", "thRm", cfg.space_ty(), cfg.space_tyv()),
    ]
    for base, plus, minus, base_space, lifted_space in pairs:
        for beta in monomial_basis(lifted_space.arity, two_d):
            mono = Polynomial.monomial(lifted_space, beta)
            base_exp = beta[:-1]
            v_weight = _interval_integral(y_lo, y_hi, beta[-1]) / width
            integrands = {
                plus: mono,
                minus: mono,
                base: Polynomial.monomial(base_space, base_exp, -float(v_weight)),
            }
            row = _make(integrands, "=", 0.0, "lifting", two_d)
            if row is not None:
                liftings.append(row)

    txyv = cfg.space_txyv()
    f = cfg.flux(txyv)
    fv = Polynomial(
        txyv,
        {
            (0, 0, 0, k): c
            for (k,), c in compose_flux(cfg.flux_coeffs, cfg.y_bounds).coeffs.items()
        },
    )
    y = Polynomial.variable(txyv, "y")
    v = Polynomial.variable(txyv, "v")
    t_lo, t_hi = _box_factor_powers(txyv, "t", 0.0, T, two_d)
    x_lo, x_hi = _box_factor_powers(txyv, "x", L, R, two_d)
    v_lo, v_hi = _box_factor_powers(txyv, "v", y_lo, y_hi, two_d)

    entropy: list[LinearMomentConstraint] = []
    deg_f = max(compose_flux(cfg.flux_coeffs).degree, 1)
    for alpha in product(range(two_d + 1), repeat=6):
        if sum(alpha) + deg_f > two_d + 1:
            continue
        a1, a2, a3, a4, a5, a6 = alpha
        psi = t_lo[a1] * t_hi[a2] * x_lo[a3] * x_hi[a4] * v_lo[a5] * v_hi[a6]
        phi1 = psi * (y - v)
        phi2 = psi * (f - fv)
        flow = phi1.differentiate("t") + phi2.differentiate("x")
        integrands = {
            "thp": flow,
            "thm": -flow,
            "th0p": phi1.substitute("t", 0.0),
            "th0m": -phi1.substitute("t", 0.0),
            "thTp": -phi1.substitute("t", T),
            "thTm": phi1.substitute("t", T),
            "thLp": phi2.substitute("x", L),
            "thLm": -phi2.substitute("x", L),
            "thRp": -phi2.substitute("x", R),
            "thRm": phi2.substitute("x", R),
        }
        row = _make(integrands, ">=", 0.0, "entropy", two_d)
        if row is not None:
            entropy.append(row)
    return liftings, entropy


def objective(cfg: RiemannConfig, constraints: list[LinearMomentConstraint] | None = None) -> Objective:
    """Trace minimisation (promotes low-rank, i.e. concentrated, moment
    matrices) or maximisation of the summed entropy-inequality left-hand
    sides, a single linear functional of the moments."""
    if cfg.objective == "trace-min":
        return Objective(kind="trace", sense="min")
    if constraints is None:
        constraints = _entropy_rows(cfg)
    total: dict[str, Polynomial] = {}
    for c in constraints:
        if c.tag != "entropy":
            continue
        for name, p in c.integrands.items():
            total[name] = total[name] + p if name in total else p
    return Objective(kind="linear", sense="max", integrands=_clean(total))


def linear_objective(integrands: dict[str, Polynomial], sense: Literal["min", "max"] = "min") -> Objective:
    """Generic linear objective from user-supplied per-measure integrands."""
    return Objective(kind="linear", sense=sense, integrands=_clean(dict(integrands)))


def _entropy_rows(cfg: RiemannConfig) -> list[LinearMomentConstraint]:
    if cfg.entropy_family == "polynomial":
        return entropy_constraints_polynomial(cfg)
    liftings, entropy = entropy_constraints_kruzhkov(cfg)
    return liftings + entropy


def build_gmp(cfg: RiemannConfig) -> GmpProblem:
    """Assemble the full measure problem for one Riemann configuration."""
    measures = tuple(declare_measures(cfg))
    constraints: list[LinearMomentConstraint] = []
    constraints += marginal_constraints(cfg)
    constraints += pin_boundary(cfg)
    constraints += conservation_constraints(cfg)
    if cfg.entropy_family == "polynomial":
        entropy_rows = entropy_constraints_polynomial(cfg)
        constraints += entropy_rows
    else:
        liftings, entropy_rows = entropy_constraints_kruzhkov(cfg)
        constraints += liftings
        constraints += entropy_rows
    obj = objective(cfg, entropy_rows)

    declared = {m.name for m in measures}
    two_d = 2 * cfg.order
    for c in constraints:
        missing = set(c.integrands) - declared
        if missing:
            raise ValueError(f"constraint references undeclared measures {missing}")
        if c.max_degree() > two_d:
            raise ValueError("constraint degree exceeds the relaxation truncation")
    return GmpProblem(measures, tuple(constraints), obj, cfg.order)
