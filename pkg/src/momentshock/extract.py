"""Recover the solution graph from the occupation measure's moment matrix.

The moment matrix of a measure concentrated on the graph of y(t, x) is
(near-)singular: coefficient vectors of polynomials that vanish on the
graph lie in its (near-)kernel.  Summing the squares of the eigen-
polynomials attached to the smallest eigenvalues yields a nonnegative
polynomial p_sos that is small exactly on the support, so the graph is
recovered by minimizing p_sos over a value grid at each (t, x).

A Markov-type bound quantifies this: if the selected eigenvalues add up to
s, then the measure gives mass at least 1 - beta to the sublevel set
{p_sos <= s / beta}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assemble import MomentSequence, moment_matrix_values
from .poly import Exponent, Polynomial, VariableSpace, basis_size, monomial_basis


class NotConcentratedError(RuntimeError):
    """No eigenvalue mass below the threshold: the measure is not
    concentrated at this relaxation order."""


@dataclass(frozen=True)
class ExtractionConfig:
    epsilon: float = 1e-6
    n_t: int = 101
    n_x: int = 101
    n_y: int = 101
    beta: float = 0.01

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("kernel-energy threshold must be positive")
        if min(self.n_t, self.n_x, self.n_y) < 2:
            raise ValueError("grids need at least two points per axis")
        if not (0 < self.beta < 1):
            raise ValueError("confidence parameter must lie in (0, 1)")


@dataclass
class ExtractionResult:
    t_grid: np.ndarray
    x_grid: np.ndarray
    y_grid: np.ndarray
    grid: np.ndarray  # (n_t, n_x) recovered values, entries in [y_min, y_max]
    p_sos: Polynomial
    r: int
    eigenvalues: np.ndarray
    gamma: float
    config: ExtractionConfig


def _infer_order(size: int, arity: int) -> int:
    d = 0
    while basis_size(arity, d) < size:
        d += 1
    if basis_size(arity, d) != size:
        raise ValueError(f"matrix size {size} is not a full basis size for arity {arity}")
    return d


def spectral_psos(
    M: np.ndarray, space: VariableSpace, epsilon: float
) -> tuple[Polynomial, int, np.ndarray]:
    """Spectral split of a moment matrix: eigenvalues sorted ascending,
    negatives clipped to zero, and r chosen as the largest count whose
    clipped eigenvalues sum below epsilon.  Returns the sum of squares of
    the first r eigen-polynomials (a nonnegative polynomial by
    construction), r, and the sorted eigenvalues."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("moment matrix must be square")
    if not np.allclose(M, M.T, atol=1e-10 * max(1.0, np.abs(M).max())):
        raise ValueError("moment matrix must be symmetric")
    d = _infer_order(M.shape[0], space.arity)
    eigenvalues, vectors = np.linalg.eigh(M)
    clipped = np.maximum(eigenvalues, 0.0)
    sums = np.cumsum(clipped)
    r = int(np.searchsorted(sums, epsilon, side="left"))
    p_sos = _sum_of_squares(vectors[:, :r], space, d)
    return p_sos, r, eigenvalues


def _sum_of_squares(vectors: np.ndarray, space: VariableSpace, d: int) -> Polynomial:
    basis = monomial_basis(space.arity, d)
    coeffs: dict[Exponent, float] = {}
    for col in range(vectors.shape[1]):
        p = vectors[:, col]
        nz = np.nonzero(p)[0]
        for a in nz:
            ea = basis[a]
            for b in nz:
                exp = tuple(i + j for i, j in zip(ea, basis[b]))
                coeffs[exp] = coeffs.get(exp, 0.0) + p[a] * p[b]
    return Polynomial(space, coeffs)


def concentration_level(eigenvalues: np.ndarray, r: int, beta: float) -> float:
    """gamma such that the measure puts mass >= 1 - beta on
    {p_sos <= gamma}: the clipped eigenvalue sum divided by beta."""
    if not (0 < beta < 1):
        raise ValueError("confidence parameter must lie in (0, 1)")
    if r == 0:
        return 0.0
    clipped = np.maximum(np.sort(np.asarray(eigenvalues, dtype=float)), 0.0)
    return float(np.sum(clipped[:r]) / beta)


def _eval_on_slice(p: Polynomial, t_val: float, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Evaluate a (t, x, y) polynomial on the xs x ys grid at fixed t."""
    names = p.space.names
    max_deg = max((max(e) for e in p.coeffs), default=0)
    x_pow = [np.ones_like(xs)]
    y_pow = [np.ones_like(ys)]
    for _ in range(max_deg):
        x_pow.append(x_pow[-1] * xs)
        y_pow.append(y_pow[-1] * ys)
    out = np.zeros((len(xs), len(ys)))
    for exp, c in p.coeffs.items():
        e = dict(zip(names, exp))
        term = c * t_val ** e.get("t", 0)
        out += term * x_pow[e.get("x", 0)][:, None] * y_pow[e.get("y", 0)][None, :]
    return out


def extract_grid(p_sos: Polynomial, config: ExtractionConfig):
    """Minimize p_sos over the value grid at every (t, x) grid node; ties
    go to the smallest grid index for determinism."""
    if p_sos.is_zero():
        raise NotConcentratedError("measure not concentrated at this order")
    space = p_sos.space
    (t0, t1), (x0, x1), (y0, y1) = (space.bound(n) for n in ("t", "x", "y"))
    ts = np.linspace(t0, t1, config.n_t)
    xs = np.linspace(x0, x1, config.n_x)
    ys = np.linspace(y0, y1, config.n_y)
    grid = np.empty((config.n_t, config.n_x))
    for i, t_val in enumerate(ts):
        vals = _eval_on_slice(p_sos, t_val, xs, ys)
        grid[i] = ys[np.argmin(vals, axis=1)]  # argmin takes the first minimum
    return ts, xs, ys, grid


def extract_solution(moments: MomentSequence, config: ExtractionConfig | None = None) -> ExtractionResult:
    """Full pipeline: spectral split of the moment matrix, grid recovery,
    and the concentration level at the configured confidence."""
    config = config or ExtractionConfig()
    M = moment_matrix_values(moments)
    p_sos, r, eigenvalues = spectral_psos(M, moments.space, config.epsilon)
    if r == 0:
        raise NotConcentratedError("measure not concentrated at this order")
    ts, xs, ys, grid = extract_grid(p_sos, config)
    gamma = concentration_level(eigenvalues, r, config.beta)
    return ExtractionResult(ts, xs, ys, grid, p_sos, r, eigenvalues, gamma, config)


def _row_at_time(result: ExtractionResult, t: float) -> np.ndarray:
    vals = _eval_on_slice(result.p_sos, t, result.x_grid, result.y_grid)
    return result.y_grid[np.argmin(vals, axis=1)]


def _value_at(result: ExtractionResult, t: float, x: float) -> float:
    vals = _eval_on_slice(result.p_sos, t, np.array([x]), result.y_grid)[0]
    return float(result.y_grid[int(np.argmin(vals))])


def locate_shock(result: ExtractionResult, t: float, refine: bool = True) -> float | None:
    """Locate a discontinuity of the recovered profile at time t: the cell
    where the row jumps by more than half the value range; None when the
    profile has no such jump.  With refine=True the crossing is then
    bisected inside the jump cell down to machine resolution (two-stage
    localization)."""
    space = result.p_sos.space
    t0, t1 = space.bound("t")
    if not (t0 <= t <= t1):
        raise ValueError(f"time {t} outside [{t0}, {t1}]")
    y_lo, y_hi = space.bound("y")
    threshold = 0.5 * (y_hi - y_lo)

    row = _row_at_time(result, t)
    jumps = np.abs(np.diff(row))
    if not np.any(jumps > threshold):
        return None
    j = int(np.argmax(jumps))
    x_a, x_b = float(result.x_grid[j]), float(result.x_grid[j + 1])
    if not refine:
        return 0.5 * (x_a + x_b)

    y_a, y_b = row[j], row[j + 1]
    for _ in range(200):
        mid = 0.5 * (x_a + x_b)
        if mid == x_a or mid == x_b:
            break
        y_mid = _value_at(result, t, mid)
        if abs(y_mid - y_a) <= abs(y_mid - y_b):
            x_a = mid
        else:
            x_b = mid
    return 0.5 * (x_a + x_b)
