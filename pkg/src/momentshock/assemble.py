"""Compile a measure problem at relaxation order d into a finite SDP.

The decision vector stacks the truncated moment sequences of all declared
measures, indexed by the graded-lex monomial basis up to degree 2d.  Each
measure contributes one moment-matrix block plus one localizing block per
support certificate g; each linear moment constraint becomes one sparse
row through the Riesz functional.

Symmetric matrices are stored packed, row-major over the upper triangle:
entry (i, j) with i <= j of an n x n matrix lives at

    packed(i, j) = i*n - i*(i-1)/2 + (j - i).

The problem can be serialized to a plain-text triplet format (see
``write_problem``) so external solvers can cross-check the embedded one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .gmp import GmpProblem, LinearMomentConstraint, MeasureDecl, Objective
from .poly import Exponent, Polynomial, VariableSpace, basis_index, monomial_basis


def packed_size(n: int) -> int:
    return n * (n + 1) // 2


def packed_index(i: int, j: int, n: int) -> int:
    if i > j:
        i, j = j, i
    return i * n - i * (i - 1) // 2 + (j - i)


def pack_symmetric(S: np.ndarray) -> np.ndarray:
    n = S.shape[0]
    iu, ju = np.triu_indices(n)
    return S[iu, ju]


def unpack_symmetric(vec: np.ndarray, n: int) -> np.ndarray:
    S = np.zeros((n, n))
    iu, ju = np.triu_indices(n)
    S[iu, ju] = vec
    S[ju, iu] = vec
    return S


@dataclass
class MomentSequence:
    """Truncated moments of one measure: values indexed by the graded-lex
    basis of its space up to degree 2*order; index 0 is the mass."""

    measure: str
    order: int
    space: VariableSpace
    values: np.ndarray

    def __post_init__(self) -> None:
        expected = len(monomial_basis(self.space.arity, 2 * self.order))
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (expected,):
            raise ValueError(
                f"moment vector for {self.measure} must have length {expected}, "
                f"got {self.values.shape}"
            )

    @property
    def mass(self) -> float:
        return float(self.values[0])

    def value(self, exponent: Exponent) -> float:
        idx = basis_index(self.space.arity, 2 * self.order)
        return float(self.values[idx[tuple(exponent)]])


def riesz(z: MomentSequence, p: Polynomial) -> float:
    """Pseudo-integration of p against the sequence: sum_a p_a z_a."""
    if p.degree > 2 * z.order:
        raise ValueError(f"degree {p.degree} exceeds the truncation 2d = {2 * z.order}")
    if not p.is_zero() and p.space.names != z.space.names:
        raise ValueError(f"polynomial over {p.space.names} vs measure over {z.space.names}")
    idx = basis_index(z.space.arity, 2 * z.order)
    return float(sum(c * z.values[idx[e]] for e, c in p.coeffs.items()))


def moment_matrix_values(z: MomentSequence) -> np.ndarray:
    """Dense moment matrix M_d of the sequence (size s(d))."""
    basis = monomial_basis(z.space.arity, z.order)
    idx = basis_index(z.space.arity, 2 * z.order)
    n = len(basis)
    M = np.empty((n, n))
    for i, ei in enumerate(basis):
        for j in range(i, n):
            val = z.values[idx[tuple(a + b for a, b in zip(ei, basis[j]))]]
            M[i, j] = val
            M[j, i] = val
    return M


@dataclass
class VariableLayout:
    """Stacking of all measures' truncated moment vectors."""

    order: int
    measures: tuple[MeasureDecl, ...]
    offsets: dict[str, int]
    n_vars: int

    @classmethod
    def build(cls, measures: Sequence[MeasureDecl], order: int) -> "VariableLayout":
        offsets: dict[str, int] = {}
        total = 0
        for m in measures:
            offsets[m.name] = total
            total += len(monomial_basis(m.space.arity, 2 * order))
        return cls(order, tuple(measures), offsets, total)

    def column(self, measure: str, exponent: Exponent) -> int:
        decl = next(m for m in self.measures if m.name == measure)
        idx = basis_index(decl.space.arity, 2 * self.order)
        return self.offsets[measure] + idx[tuple(exponent)]

    def slice(self, measure: str) -> slice:
        decl = next(m for m in self.measures if m.name == measure)
        start = self.offsets[measure]
        return slice(start, start + len(monomial_basis(decl.space.arity, 2 * self.order)))

    def sequences(self, z: np.ndarray) -> dict[str, MomentSequence]:
        return {
            m.name: MomentSequence(m.name, self.order, m.space, z[self.slice(m.name)])
            for m in self.measures
        }


@dataclass
class BlockMap:
    """Symmetric-matrix-valued affine map of the stacked moment vector,
    stored on packed upper-triangular entries."""

    measure: str
    label: str
    size: int
    rows: sp.csr_matrix  # (packed_size(size), n_vars)
    const: np.ndarray

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        return unpack_symmetric(self.rows @ z + self.const, self.size)

    def min_eigenvalue(self, z: np.ndarray) -> float:
        return float(np.linalg.eigvalsh(self.evaluate(z))[0])


@dataclass
class SdpProblem:
    """Moment relaxation in explicit conic form.

    Rows: ``eq @ z == eq_rhs`` and ``ineq @ z >= ineq_rhs``; every block in
    ``blocks`` must be positive semidefinite.  The objective is
    ``obj @ z + obj_const`` with the given sense.
    """

    layout: VariableLayout
    blocks: list[BlockMap]
    eq: sp.csr_matrix
    eq_rhs: np.ndarray
    ineq: sp.csr_matrix
    ineq_rhs: np.ndarray
    obj: np.ndarray
    sense: str
    obj_const: float = 0.0
    eq_tags: list[str] = field(default_factory=list)
    ineq_tags: list[str] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return self.layout.n_vars

    def objective_value(self, z: np.ndarray) -> float:
        return float(self.obj @ z + self.obj_const)


def _affine_rows_for_block(
    decl: MeasureDecl, g: Polynomial | None, order: int, n_vars: int, offset: int
) -> tuple[int, sp.csr_matrix]:
    """Sparse map from the stacked vector to the packed entries of
    M_{d-dg}(g z); entry (i, j) applies the Riesz functional to
    g * w^(e_i + e_j)."""
    arity = decl.space.arity
    if g is None:
        dg = 0
        terms = [((0,) * arity, 1.0)]
    else:
        dg = math.ceil(g.degree / 2)
        terms = list(g.coeffs.items())
    size_order = order - dg
    if size_order < 0:
        raise ValueError(f"localizing block for {decl.name} has negative order")
    basis = monomial_basis(arity, size_order)
    idx2d = basis_index(arity, 2 * order)
    n = len(basis)
    rows_i: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for i, ei in enumerate(basis):
        for j in range(i, n):
            pk = packed_index(i, j, n)
            base = tuple(a + b for a, b in zip(ei, basis[j]))
            for gexp, gc in terms:
                full = tuple(a + b for a, b in zip(base, gexp))
                rows_i.append(pk)
                cols.append(offset + idx2d[full])
                vals.append(gc)
    mat = sp.csr_matrix(
        (vals, (rows_i, cols)), shape=(packed_size(n), n_vars)
    )
    return n, mat


def moment_matrix_map(decl: MeasureDecl, order: int, layout: VariableLayout | None = None) -> BlockMap:
    """Affine map for the plain moment matrix of one measure."""
    if layout is None:
        layout = VariableLayout.build([decl], order)
    n, rows = _affine_rows_for_block(decl, None, order, layout.n_vars, layout.offsets[decl.name])
    return BlockMap(decl.name, "moment", n, rows, np.zeros(packed_size(n)))


def localizing_matrix_map(
    decl: MeasureDecl, g: Polynomial, order: int, label: str = "localizing",
    layout: VariableLayout | None = None,
) -> BlockMap:
    """Affine map for the localizing matrix of one support certificate."""
    if layout is None:
        layout = VariableLayout.build([decl], order)
    n, rows = _affine_rows_for_block(decl, g, order, layout.n_vars, layout.offsets[decl.name])
    return BlockMap(decl.name, label, n, rows, np.zeros(packed_size(n)))


def _constraint_row(
    c: LinearMomentConstraint, layout: VariableLayout
) -> tuple[list[int], list[float]]:
    cols: list[int] = []
    vals: list[float] = []
    for measure, p in c.integrands.items():
        for exp, coef in p.coeffs.items():
            cols.append(layout.column(measure, exp))
            vals.append(coef)
    return cols, vals


def _objective_vector(obj: Objective, layout: VariableLayout, order: int) -> np.ndarray:
    vec = np.zeros(layout.n_vars)
    if obj.kind == "trace":
        decl = layout.measures[0]
        assert decl.name == "nu", "trace objective targets the occupation measure"
        for e in monomial_basis(decl.space.arity, order):
            vec[layout.column("nu", tuple(2 * k for k in e))] += 1.0
        return vec
    for measure, p in obj.integrands.items():
        for exp, coef in p.coeffs.items():
            vec[layout.column(measure, exp)] += coef
    return vec


def assemble(gmp: GmpProblem, order: int | None = None) -> SdpProblem:
    """Build the order-d relaxation: one moment block per measure, one
    localizing block per support certificate, one sparse row per moment
    constraint."""
    d = gmp.order if order is None else order
    for c in gmp.constraints:
        if c.max_degree() > 2 * d:
            raise ValueError("constraint degree exceeds 2d; raise the order")
    layout = VariableLayout.build(gmp.measures, d)

    blocks: list[BlockMap] = []
    for decl in gmp.measures:
        blocks.append(moment_matrix_map(decl, d, layout))
        for g, label in zip(decl.support.inequalities, decl.support.labels):
            blocks.append(localizing_matrix_map(decl, g, d, label, layout))

    eq_cols: list[list[int]] = []
    eq_vals: list[list[float]] = []
    eq_rhs: list[float] = []
    eq_tags: list[str] = []
    ineq_cols: list[list[int]] = []
    ineq_vals: list[list[float]] = []
    ineq_rhs: list[float] = []
    ineq_tags: list[str] = []
    for c in gmp.constraints:
        cols, vals = _constraint_row(c, layout)
        if c.relation == "=":
            eq_cols.append(cols)
            eq_vals.append(vals)
            eq_rhs.append(c.rhs)
            eq_tags.append(c.tag)
        else:
            ineq_cols.append(cols)
            ineq_vals.append(vals)
            ineq_rhs.append(c.rhs)
            ineq_tags.append(c.tag)

    def to_csr(col_lists, val_lists) -> sp.csr_matrix:
        rows = [i for i, cols in enumerate(col_lists) for _ in cols]
        cols = [c for cols in col_lists for c in cols]
        vals = [v for vals in val_lists for v in vals]
        return sp.csr_matrix((vals, (rows, cols)), shape=(len(col_lists), layout.n_vars))

    return SdpProblem(
        layout=layout,
        blocks=blocks,
        eq=to_csr(eq_cols, eq_vals),
        eq_rhs=np.asarray(eq_rhs, dtype=float),
        ineq=to_csr(ineq_cols, ineq_vals),
        ineq_rhs=np.asarray(ineq_rhs, dtype=float),
        obj=_objective_vector(gmp.objective, layout, d),
        sense=gmp.objective.sense,
        eq_tags=eq_tags,
        ineq_tags=ineq_tags,
    )


# ---------------------------------------------------------------------------
# feasibility reporting (used by tests and by the solver's re-verification)


@dataclass
class FeasibilityReport:
    max_equality_violation: float
    min_inequality_slack: float
    min_block_eigenvalue: float

    def ok(self, tol_eq: float, tol_psd: float) -> bool:
        return (
            self.max_equality_violation <= tol_eq
            and self.min_inequality_slack >= -tol_eq
            and self.min_block_eigenvalue >= -tol_psd
        )


def check_feasibility(problem: SdpProblem, z: np.ndarray) -> FeasibilityReport:
    eq_gap = problem.eq @ z - problem.eq_rhs if problem.eq.shape[0] else np.zeros(0)
    ineq_gap = problem.ineq @ z - problem.ineq_rhs if problem.ineq.shape[0] else np.zeros(0)
    eigs = [b.min_eigenvalue(z) for b in problem.blocks]
    return FeasibilityReport(
        max_equality_violation=float(np.max(np.abs(eq_gap))) if eq_gap.size else 0.0,
        min_inequality_slack=float(np.min(ineq_gap)) if ineq_gap.size else 0.0,
        min_block_eigenvalue=float(min(eigs)) if eigs else 0.0,
    )


# ---------------------------------------------------------------------------
# plain-text serialization


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_problem(problem: SdpProblem, path: str) -> None:
    """Serialize to the documented text triplet format."""
    lines: list[str] = ["SDPPROBLEM v1"]
    lines.append(f"vars {problem.n_vars}")
    lines.append(f"sense {problem.sense}")
    lines.append(f"objconst {_fmt(problem.obj_const)}")
    nz = np.nonzero(problem.obj)[0]
    lines.append(f"obj {len(nz)}")
    for j in nz:
        lines.append(f"{j} {_fmt(problem.obj[j])}")
    for name, mat, rhs in (
        ("eq", problem.eq, problem.eq_rhs),
        ("ineq", problem.ineq, problem.ineq_rhs),
    ):
        coo = mat.tocoo()
        lines.append(f"{name} {mat.shape[0]} {coo.nnz}")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            lines.append(f"{i} {j} {_fmt(v)}")
        lines.append(f"{name}rhs {len(rhs)}")
        for v in rhs:
            lines.append(_fmt(v))
    lines.append(f"blocks {len(problem.blocks)}")
    for b in problem.blocks:
        coo = b.rows.tocoo()
        cz = np.nonzero(b.const)[0]
        lines.append(f"block {b.measure} {b.label} {b.size} {coo.nnz} {len(cz)}")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            lines.append(f"{i} {j} {_fmt(v)}")
        for i in cz:
            lines.append(f"{i} {_fmt(b.const[i])}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_problem(path: str) -> SdpProblem:
    """Read back a problem written by :func:`write_problem`.  The layout is
    reconstructed as a single anonymous variable bag (measure structure is
    not round-tripped, only the conic data)."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    it = iter(tokens)
    if next(it).strip() != "SDPPROBLEM v1":
        raise ValueError("not a problem file")
    n_vars = int(next(it).split()[1])
    sense = next(it).split()[1]
    obj_const = float(next(it).split()[1])
    obj = np.zeros(n_vars)
    for _ in range(int(next(it).split()[1])):
        j, v = next(it).split()
        obj[int(j)] = float(v)

    def read_rows(tag: str):
        head = next(it).split()
        assert head[0] == tag, head
        n_rows, nnz = int(head[1]), int(head[2])
        rows, cols, vals = [], [], []
        for _ in range(nnz):
            i, j, v = next(it).split()
            rows.append(int(i))
            cols.append(int(j))
            vals.append(float(v))
        head = next(it).split()
        assert head[0] == f"{tag}rhs"
        rhs = np.array([float(next(it)) for _ in range(int(head[1]))])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n_rows, n_vars)), rhs

    eq, eq_rhs = read_rows("eq")
    ineq, ineq_rhs = read_rows("ineq")
    blocks: list[BlockMap] = []
    n_blocks = int(next(it).split()[1])
    for _ in range(n_blocks):
        _, measure, label, size, nnz, nconst = next(it).split()
        size, nnz, nconst = int(size), int(nnz), int(nconst)
        rows, cols, vals = [], [], []
        for _ in range(nnz):
            i, j, v = next(it).split()
            rows.append(int(i))
            cols.append(int(j))
            vals.append(float(v))
        const = np.zeros(packed_size(size))
        for _ in range(nconst):
            i, v = next(it).split()
            const[int(i)] = float(v)
        blocks.append(
            BlockMap(
                measure,
                label,
                size,
                sp.csr_matrix((vals, (rows, cols)), shape=(packed_size(size), n_vars)),
                const,
            )
        )
    layout = VariableLayout(order=0, measures=(), offsets={}, n_vars=n_vars)
    return SdpProblem(
        layout=layout,
        blocks=blocks,
        eq=eq,
        eq_rhs=eq_rhs,
        ineq=ineq,
        ineq_rhs=ineq_rhs,
        obj=obj,
        sense=sense,
        obj_const=obj_const,
    )
