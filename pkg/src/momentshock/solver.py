"""Embedded conic solver for the assembled moment relaxations.

The algorithm is first-order operator splitting on the homogeneous
self-dual embedding of the conic pair

    min c'x  s.t.  A x + s = b,  s in K,        K = {0}^eq x R+^ineq x PSD,

which alternates a linear solve against the (cached) factorization of
I + A'A with a projection onto the cone product; PSD blocks are projected
through eigendecompositions with negative eigenvalues clipped.  The
embedding makes primal infeasibility detectable through a Farkas
certificate instead of divergence.

Before iterating, two preprocessing passes are applied:

* presolve: equality rows with a single unknown pin that variable; the
  substitution cascades, removes fully determined rows and blocks, and
  detects trivially contradictory data,
* scaling: Ruiz equilibration of the constraint matrix (uniform within
  each PSD block so cone membership is preserved) plus unit-norm scaling
  of b and c.  All reported residuals are computed on the original
  unscaled data.

The solver is deterministic: no randomness enters the iteration, so equal
(problem, config, seed) triples reproduce iterate sequences bitwise.

A plain-text problem format (``assemble.write_problem``) and solution
format (``write_solution``) allow standalone runs and external
cross-checks:  ``python -m momentshock.solver problem.txt solution.txt``.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from .assemble import SdpProblem, check_feasibility

STATUS_OPTIMAL = "Optimal"
STATUS_NOT_CONVERGED = "NotConverged"
STATUS_INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class SolverConfig:
    backend: str = "auto"  # auto | barrier | splitting
    max_iterations: int = 200_000
    tol_eq: float = 1e-7
    tol_psd: float = 1e-7
    tol_gap: float = 1e-6
    tol_infeasible: float = 1e-9
    over_relaxation: float = 1.5
    acceleration_lookback: int = 10  # 0 disables Anderson acceleration
    check_every: int = 100
    ruiz_iterations: int = 15
    newton_max_steps: int = 400
    mu_min: float = 1e-12
    seed: int = 0
    verbose: bool = False

    def __post_init__(self) -> None:
        if self.backend not in ("auto", "barrier", "splitting"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if min(self.tol_eq, self.tol_psd, self.tol_gap, self.tol_infeasible) <= 0:
            raise ValueError("tolerances must be positive")
        if not (0.0 < self.over_relaxation < 2.0):
            raise ValueError("over-relaxation parameter must lie in (0, 2)")
        if self.acceleration_lookback < 0:
            raise ValueError("acceleration lookback must be nonnegative")


@dataclass
class Residuals:
    max_equality_violation: float = math.nan
    min_inequality_slack: float = math.nan
    min_psd_eigenvalue: float = math.nan
    relative_gap: float = math.nan
    dual_residual: float = math.nan


@dataclass
class SdpSolution:
    z: np.ndarray
    objective: float
    status: str
    residuals: Residuals
    iterations: int = 0
    certificate: float = math.nan  # Farkas residual for infeasible problems
    message: str = ""


def project_psd(S: np.ndarray) -> np.ndarray:
    """Nearest (Frobenius) positive semidefinite matrix: clip negative
    eigenvalues to zero."""
    S = np.asarray(S, dtype=float)
    if not np.all(np.isfinite(S)):
        raise ValueError("non-finite entries in symmetric matrix")
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("input must be square")
    sym = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(sym)
    w = np.maximum(w, 0.0)
    out = (V * w) @ V.T
    return 0.5 * (out + out.T)


# ---------------------------------------------------------------------------
# presolve


class _Infeasible(Exception):
    def __init__(self, residual: float, message: str):
        super().__init__(message)
        self.residual = residual


@dataclass
class _Presolved:
    free: np.ndarray        # indices of remaining variables
    fixed_mask: np.ndarray
    fixed_values: np.ndarray
    eq: sp.csr_matrix
    eq_rhs: np.ndarray
    ineq: sp.csr_matrix
    ineq_rhs: np.ndarray
    blocks: list            # (size, rows csr over free vars, const vector)
    c: np.ndarray
    obj_shift: float

    def restore(self, x_free: np.ndarray) -> np.ndarray:
        z = self.fixed_values.copy()
        z[self.free] = x_free
        return z


def _presolve(problem: SdpProblem, c: np.ndarray, tol: float = 1e-9) -> _Presolved:
    n = problem.n_vars
    fixed_mask = np.zeros(n, dtype=bool)
    fixed_values = np.zeros(n)

    eq = problem.eq.tocsr()
    rhs = problem.eq_rhs
    rows = [
        ([int(j) for j in eq.indices[eq.indptr[i]:eq.indptr[i + 1]]],
         [float(v) for v in eq.data[eq.indptr[i]:eq.indptr[i + 1]]],
         float(rhs[i]))
        for i in range(eq.shape[0])
    ]
    resolved = np.zeros(len(rows), dtype=bool)
    changed = True
    while changed:
        changed = False
        for ridx, (cols, vals, b) in enumerate(rows):
            if resolved[ridx]:
                continue
            active = [(j, v) for j, v in zip(cols, vals) if not fixed_mask[j]]
            b_eff = b - sum(v * fixed_values[j] for j, v in zip(cols, vals) if fixed_mask[j])
            scale = max(1.0, abs(b), max((abs(v) for v in vals), default=1.0))
            if not active:
                if abs(b_eff) > tol * scale:
                    raise _Infeasible(abs(b_eff), "contradictory equality rows")
                resolved[ridx] = True
                changed = True
            elif len(active) == 1:
                j, v = active[0]
                fixed_mask[j] = True
                fixed_values[j] = b_eff / v
                resolved[ridx] = True
                changed = True

    free = np.where(~fixed_mask)[0]
    col_map = -np.ones(n, dtype=int)
    col_map[free] = np.arange(len(free))

    def reduce_rows(mat: sp.csr_matrix, rhs_vec: np.ndarray, is_eq: bool):
        mat = mat.tocsr()
        shifted = rhs_vec - mat[:, fixed_mask] @ fixed_values[fixed_mask] if mat.shape[0] else rhs_vec
        red = mat[:, free]
        keep = np.diff(red.indptr) > 0
        empty = ~keep
        if is_eq:
            bad = np.abs(shifted[empty]) > tol * np.maximum(1.0, np.abs(rhs_vec[empty]))
            if np.any(bad):
                raise _Infeasible(float(np.max(np.abs(shifted[empty][bad]))),
                                  "equality row contradicts pinned variables")
        else:
            bad = shifted[empty] > tol * np.maximum(1.0, np.abs(rhs_vec[empty]))
            if np.any(bad):
                raise _Infeasible(float(np.max(shifted[empty][bad])),
                                  "inequality row contradicts pinned variables")
        return red[keep], shifted[keep]

    eq_red, eq_rhs_red = reduce_rows(problem.eq, problem.eq_rhs, True)
    ineq_red, ineq_rhs_red = reduce_rows(problem.ineq, problem.ineq_rhs, False)

    blocks = []
    for blk in problem.blocks:
        const = blk.const + blk.rows[:, fixed_mask] @ fixed_values[fixed_mask]
        rows_red = blk.rows[:, free].tocsr()
        if rows_red.nnz == 0:
            from .assemble import unpack_symmetric

            w = np.linalg.eigvalsh(unpack_symmetric(const, blk.size))
            if w[0] < -1e-8 * max(1.0, np.abs(const).max()):
                raise _Infeasible(float(-w[0]), f"pinned block {blk.measure}:{blk.label} not PSD")
            continue
        blocks.append((blk.size, rows_red, const))

    return _Presolved(
        free=free,
        fixed_mask=fixed_mask,
        fixed_values=fixed_values,
        eq=eq_red,
        eq_rhs=eq_rhs_red,
        ineq=ineq_red,
        ineq_rhs=ineq_rhs_red,
        blocks=blocks,
        c=c[free],
        obj_shift=float(c[fixed_mask] @ fixed_values[fixed_mask]),
    )


# ---------------------------------------------------------------------------
# cone bookkeeping


class _Cones:
    """Slices of the stacked slack vector: zero rows, nonnegative rows,
    then packed PSD blocks (scaled so off-diagonal entries carry sqrt(2),
    making the packed cone self-dual under the Euclidean inner product)."""

    def __init__(self, n_zero: int, n_pos: int, sizes: list[int]):
        self.n_zero = n_zero
        self.n_pos = n_pos
        self.sizes = sizes
        self.m = n_zero + n_pos + sum(s * (s + 1) // 2 for s in sizes)
        self.groups: dict[int, list[int]] = {}
        offset = n_zero + n_pos
        self.offsets = []
        for s in sizes:
            self.offsets.append(offset)
            self.groups.setdefault(s, []).append(offset)
            offset += s * (s + 1) // 2
        self._tri = {
            s: np.triu_indices(s) for s in set(sizes)
        }
        self._scale = {
            s: np.where(self._tri[s][0] == self._tri[s][1], 1.0, math.sqrt(2.0))
            for s in set(sizes)
        }

    def svec_scale_vector(self) -> np.ndarray:
        out = np.ones(self.m)
        for s, offs in self.groups.items():
            w = self._scale[s]
            for o in offs:
                out[o:o + len(w)] = w
        return out

    def project_dual(self, y: np.ndarray) -> np.ndarray:
        """Projection onto the dual cone: free for equality multipliers,
        nonnegative for inequality multipliers, PSD for block multipliers."""
        out = y.copy()
        a, b = self.n_zero, self.n_zero + self.n_pos
        out[a:b] = np.maximum(out[a:b], 0.0)
        for s, offs in self.groups.items():
            iu, ju = self._tri[s]
            w = self._scale[s]
            tri_len = len(w)
            stack = np.empty((len(offs), s, s))
            for k, o in enumerate(offs):
                vals = out[o:o + tri_len] / w
                S = np.zeros((s, s))
                S[iu, ju] = vals
                S[ju, iu] = vals
                stack[k] = S
            eigvals, eigvecs = np.linalg.eigh(stack)
            eigvals = np.maximum(eigvals, 0.0)
            proj = np.einsum("kij,kj,klj->kil", eigvecs, eigvals, eigvecs)
            for k, o in enumerate(offs):
                out[o:o + tri_len] = proj[k][iu, ju] * w
        return out

    def min_psd_eig(self, svec: np.ndarray) -> float:
        best = math.inf
        for s, offs in self.groups.items():
            iu, ju = self._tri[s]
            w = self._scale[s]
            for o in offs:
                vals = svec[o:o + len(w)] / w
                S = np.zeros((s, s))
                S[iu, ju] = vals
                S[ju, iu] = vals
                best = min(best, float(np.linalg.eigvalsh(S)[0]))
        return best


def _ruiz(A: sp.csr_matrix, cones: _Cones, iterations: int) -> tuple[np.ndarray, np.ndarray]:
    """Ruiz equilibration with cone-uniform row scaling on PSD slices."""
    m, n = A.shape
    D = np.ones(m)
    E = np.ones(n)
    M = A.copy()
    for _ in range(iterations):
        M_abs = abs(M)
        row_max = np.asarray(M_abs.max(axis=1).todense()).ravel()
        col_max = np.asarray(M_abs.max(axis=0).todense()).ravel()
        row_max[row_max == 0] = 1.0
        col_max[col_max == 0] = 1.0
        dr = 1.0 / np.sqrt(row_max)
        # a PSD slice must be scaled by a single scalar to stay a cone slice
        for s, offs in cones.groups.items():
            tri_len = s * (s + 1) // 2
            for o in offs:
                dr[o:o + tri_len] = np.exp(np.mean(np.log(dr[o:o + tri_len])))
        dc = 1.0 / np.sqrt(col_max)
        M = sp.diags(dr) @ M @ sp.diags(dc)
        D *= dr
        E *= dc
    return D, E


# ---------------------------------------------------------------------------
# Anderson acceleration of the splitting fixed point


class _AndersonAccelerator:
    """Type-II Anderson acceleration with restarts.

    Keeps a short history of iterates and fixed-point residuals, combines
    them through a regularized least-squares fit, and resets the history
    whenever the residual blows up (the plain splitting step is always a
    safe fallback because the underlying map is nonexpansive)."""

    def __init__(self, lookback: int, blowup: float = 3.0, reg: float = 1e-10):
        self.lookback = lookback
        self.blowup = blowup
        self.reg = reg
        self.z_hist: list[np.ndarray] = []
        self.g_hist: list[np.ndarray] = []
        self.prev_gnorm = math.inf

    def advance(self, state: np.ndarray, step) -> np.ndarray:
        fx = step(state)
        if self.lookback == 0:
            return fx
        g = fx - state
        gnorm = float(np.linalg.norm(g))
        if gnorm > self.blowup * self.prev_gnorm:
            self.z_hist.clear()
            self.g_hist.clear()
            self.prev_gnorm = gnorm
            return fx
        self.prev_gnorm = min(gnorm, self.prev_gnorm * 1.02)
        self.z_hist.append(state)
        self.g_hist.append(g)
        if len(self.z_hist) > self.lookback + 1:
            self.z_hist.pop(0)
            self.g_hist.pop(0)
        if len(self.z_hist) < 2:
            return fx
        S = np.stack([b - a for a, b in zip(self.z_hist[:-1], self.z_hist[1:])], axis=1)
        Y = np.stack([b - a for a, b in zip(self.g_hist[:-1], self.g_hist[1:])], axis=1)
        G = Y.T @ Y
        lam = self.reg * max(float(np.trace(G)), 1.0)
        try:
            gamma = np.linalg.solve(G + lam * np.eye(G.shape[0]), Y.T @ g)
        except np.linalg.LinAlgError:
            self.z_hist.clear()
            self.g_hist.clear()
            return fx
        return state + g - (S + Y) @ gamma


# ---------------------------------------------------------------------------
# main solve


def solve(problem: SdpProblem, config: SolverConfig | None = None) -> SdpSolution:
    """Solve the relaxation; see the module docstring for the algorithms.

    Backends (config.backend):

    * ``barrier``: primal barrier interior-point method with a phase-1
      strict-feasibility stage; reaches tight tolerances on well-posed
      problems and proves infeasibility when phase 1 stalls at a positive
      margin.
    * ``splitting``: the operator-splitting method on the homogeneous
      self-dual embedding.
    * ``auto`` (default): barrier first, falling back to splitting when no
      strictly interior point can be found.

    Status semantics: ``Optimal`` means the returned point satisfies the
    configured equality/inequality/PSD tolerances and the relative
    primal-dual gap bound, all re-verified on the original problem data;
    ``Infeasible`` carries a certificate residual; ``NotConverged``
    returns the best iterate with its residuals."""
    config = config or SolverConfig()
    sense_sign = 1.0 if problem.sense == "min" else -1.0
    c_full = sense_sign * problem.obj

    try:
        red = _presolve(problem, c_full)
    except _Infeasible as exc:
        return SdpSolution(
            z=np.zeros(problem.n_vars),
            objective=math.nan,
            status=STATUS_INFEASIBLE,
            residuals=Residuals(),
            certificate=exc.residual,
            message=str(exc),
        )

    if len(red.free) == 0:
        z = red.restore(np.zeros(0))
        return _finalize(problem, z, None, 0, config, message="fully pinned by presolve")

    if config.backend in ("auto", "barrier"):
        try:
            return _solve_barrier(problem, red, config)
        except _NoInterior as exc:
            if config.backend == "barrier":
                return SdpSolution(
                    z=red.restore(np.zeros(len(red.free))),
                    objective=math.nan,
                    status=STATUS_INFEASIBLE if exc.proved else STATUS_NOT_CONVERGED,
                    residuals=Residuals(),
                    certificate=exc.margin,
                    message=str(exc),
                )
            # no strictly interior point: fall through to the splitting method
    return _solve_splitting(problem, red, config)


def _solve_splitting(problem: SdpProblem, red: _Presolved, config: SolverConfig) -> SdpSolution:
    sense_sign = 1.0 if problem.sense == "min" else -1.0
    n = len(red.free)
    n_zero = red.eq.shape[0]
    n_pos = red.ineq.shape[0]
    cones = _Cones(n_zero, n_pos, [size for size, _, _ in red.blocks])

    svec_w = cones.svec_scale_vector()
    psd_rows = [sp.diags(svec_w[o:o + size * (size + 1) // 2]) @ rows
                for (size, rows, _), o in zip(red.blocks, cones.offsets)]
    psd_consts = [svec_w[o:o + size * (size + 1) // 2] * const
                  for (size, _, const), o in zip(red.blocks, cones.offsets)]
    A = sp.vstack([red.eq, -red.ineq] + [-rows for rows in psd_rows]).tocsr() \
        if cones.m else sp.csr_matrix((0, n))
    b = np.concatenate([red.eq_rhs, -red.ineq_rhs] + psd_consts) if cones.m else np.zeros(0)
    c = red.c.copy()

    D, E = _ruiz(A, cones, config.ruiz_iterations) if A.nnz else (np.ones(A.shape[0]), np.ones(n))
    A_s = (sp.diags(D) @ A @ sp.diags(E)).tocsr()
    b_s = D * b
    c_s = E * c
    rho_b = 1.0 / max(float(np.linalg.norm(b_s)), 1e-8)
    rho_c = 1.0 / max(float(np.linalg.norm(c_s)), 1e-8)
    b_s = rho_b * b_s
    c_s = rho_c * c_s

    At = A_s.T.tocsr()
    S = np.eye(n) + (At @ A_s).toarray()
    chol = cho_factor(S, lower=True, check_finite=False)

    def solve_M(zx: np.ndarray, zy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xi_x = cho_solve(chol, zx - At @ zy, check_finite=False)
        return xi_x, zy + A_s @ xi_x

    h_x, h_y = c_s, b_s
    g_x, g_y = solve_M(h_x, h_y)
    denom = 1.0 + float(h_x @ g_x + h_y @ g_y)

    m = A_s.shape[0]
    alpha = config.over_relaxation

    # iteration state packed as (u_x, u_y, u_tau, v_y, v_kappa); the x-part
    # of v is identically zero and omitted
    def step(state: np.ndarray) -> np.ndarray:
        u_x = state[:n]
        u_y = state[n:n + m]
        u_tau = state[n + m]
        v_y = state[n + m + 1:n + 2 * m + 1]
        v_kappa = state[n + 2 * m + 1]
        # linear step: (I + Q)^-1 applied to u + v
        w_y = u_y + v_y
        w_tau = u_tau + v_kappa
        p_x, p_y = solve_M(u_x, w_y)
        tau_t = (w_tau + float(h_x @ p_x + h_y @ p_y)) / denom
        ut_x = p_x - g_x * tau_t
        ut_y = p_y - g_y * tau_t
        # over-relaxed cone step
        r_x = alpha * ut_x + (1 - alpha) * u_x
        r_y = alpha * ut_y + (1 - alpha) * u_y
        r_tau = alpha * tau_t + (1 - alpha) * u_tau
        u_y_new = cones.project_dual(r_y - v_y)
        u_tau_new = max(r_tau - v_kappa, 0.0)
        return np.concatenate([
            r_x,  # free part: projection is the identity
            u_y_new,
            [u_tau_new],
            v_y - r_y + u_y_new,
            [v_kappa - r_tau + u_tau_new],
        ])

    state = np.zeros(n + 2 * m + 2)
    state[n + m] = 1.0  # tau
    state[-1] = 1.0  # kappa
    accel = _AndersonAccelerator(config.acceleration_lookback)

    best: tuple[float, SdpSolution] | None = None
    ineq_rows = problem.ineq.shape[0]

    message = "iteration budget exhausted"
    it = 0
    for it in range(1, config.max_iterations + 1):
        state = accel.advance(state, step)

        if it % config.check_every and it != config.max_iterations:
            continue

        u_x = state[:n]
        u_y = state[n:n + m]
        u_tau = state[n + m]
        v_y = state[n + m + 1:n + 2 * m + 1]

        if u_tau > 1e-10:
            # candidate primal-dual pair in original coordinates
            x = E * u_x * (1.0 / (rho_b * u_tau))
            y = D * u_y * (1.0 / (rho_c * u_tau))
            z = red.restore(x)
            res = _residuals(problem, red, z, y, sense_sign)
            score = max(
                res.max_equality_violation,
                -res.min_inequality_slack if ineq_rows else 0.0,
                -res.min_psd_eigenvalue,
                res.relative_gap,
                res.dual_residual,
            )
            sol = SdpSolution(
                z=z,
                objective=problem.objective_value(z),
                status=STATUS_NOT_CONVERGED,
                residuals=res,
                iterations=it,
            )
            if best is None or score < best[0]:
                best = (score, sol)
            if (
                res.max_equality_violation <= config.tol_eq
                and (not ineq_rows or res.min_inequality_slack >= -config.tol_eq)
                and res.min_psd_eigenvalue >= -config.tol_psd
                and res.relative_gap <= config.tol_gap
                and res.dual_residual <= config.tol_gap
            ):
                sol.status = STATUS_OPTIMAL
                sol.message = "converged"
                return sol
        else:
            # homogeneous ray: test the Farkas certificate  A'y = 0, b'y < 0
            y_ray = D * u_y / rho_c
            b_y = float(problem_b_dot(red, y_ray))
            if b_y < -config.tol_infeasible:
                norm_aty = float(np.max(np.abs(At_original(red) @ y_ray))) if m else 0.0
                if norm_aty <= config.tol_infeasible * max(1.0, float(np.abs(y_ray).max())):
                    return SdpSolution(
                        z=red.restore(np.zeros(n)),
                        objective=math.nan,
                        status=STATUS_INFEASIBLE,
                        residuals=Residuals(),
                        iterations=it,
                        certificate=norm_aty / max(1.0, -b_y),
                        message="Farkas certificate found",
                    )

    if best is not None:
        sol = best[1]
        sol.status = STATUS_NOT_CONVERGED
        sol.message = message
        sol.iterations = it
        return sol
    z = red.restore(np.zeros(n))
    return _finalize(problem, z, None, it, config, message=message)


# ---------------------------------------------------------------------------
# barrier interior-point backend


class _NoInterior(Exception):
    def __init__(self, margin: float, proved: bool, message: str):
        super().__init__(message)
        self.margin = margin
        self.proved = proved


class _LmiBarrier:
    """Log barrier for the conic slab {x : G x >= h, mat(B_j x + d_j) PSD}:
    value, gradient, dense Hessian, and step-to-boundary computations."""

    def __init__(self, n: int, G: sp.csr_matrix, h: np.ndarray, blocks):
        self.n = n
        self.G = G.tocsr()
        self.Gt = self.G.T.tocsr()
        self.h = h
        self.blocks = []
        for size, rows, const in blocks:
            cols = np.unique(rows.tocoo().col)
            Bd = rows[:, cols].toarray()  # (tri, n_j)
            iu, ju = np.triu_indices(size)
            emats = np.zeros((len(cols), size, size))
            for p in range(len(cols)):
                emats[p][iu, ju] = Bd[:, p]
                emats[p][ju, iu] = Bd[:, p]
            pk2 = np.where(iu == ju, 1.0, 2.0)
            self.blocks.append({
                "size": size, "rows": rows.tocsr(), "const": const, "cols": cols,
                "Bd": Bd, "emats": emats, "iu": iu, "ju": ju, "pk2": pk2,
            })
        self.barrier_parameter = G.shape[0] + sum(b["size"] for b in self.blocks)

    def slack_state(self, x: np.ndarray):
        """Slacks and Cholesky factors, or None when x is not strictly
        interior."""
        sl = self.G @ x - self.h if self.G.shape[0] else np.zeros(0)
        if sl.size and np.min(sl) <= 0:
            return None
        mats, chols = [], []
        for blk in self.blocks:
            packed = blk["rows"] @ x + blk["const"]
            S = np.zeros((blk["size"], blk["size"]))
            S[blk["iu"], blk["ju"]] = packed
            S[blk["ju"], blk["iu"]] = packed
            try:
                L = np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                return None
            mats.append(S)
            chols.append(L)
        return sl, mats, chols

    def value(self, state) -> float:
        sl, _, chols = state
        val = -float(np.sum(np.log(sl))) if sl.size else 0.0
        for L in chols:
            val -= 2.0 * float(np.sum(np.log(np.diag(L))))
        return val

    def grad_hess(self, x: np.ndarray, state):
        sl, _, chols = state
        g = np.zeros(self.n)
        H = np.zeros((self.n, self.n))
        if sl.size:
            inv = 1.0 / sl
            g -= self.Gt @ inv
            H += (self.G.multiply((inv ** 2)[:, None]).T @ self.G).toarray()
        for blk, L in zip(self.blocks, chols):
            size = blk["size"]
            ident = np.eye(size)
            Linv = np.linalg.solve(L, ident)
            Sinv = Linv.T @ Linv
            packed_inv = Sinv[blk["iu"], blk["ju"]] * blk["pk2"]
            cols = blk["cols"]
            g[cols] -= blk["Bd"].T @ packed_inv
            T = np.einsum("ab,pbc,cd->pad", Sinv, blk["emats"], Sinv, optimize=True)
            nj = len(cols)
            Hj = T.reshape(nj, -1) @ blk["emats"].reshape(nj, -1).T
            H[np.ix_(cols, cols)] += Hj
        return g, H

    def grad_only(self, x: np.ndarray, state) -> np.ndarray:
        sl, _, chols = state
        g = np.zeros(self.n)
        if sl.size:
            g -= self.Gt @ (1.0 / sl)
        for blk, L in zip(self.blocks, chols):
            ident = np.eye(blk["size"])
            Linv = np.linalg.solve(L, ident)
            Sinv = Linv.T @ Linv
            g[blk["cols"]] -= blk["Bd"].T @ (Sinv[blk["iu"], blk["ju"]] * blk["pk2"])
        return g

    def max_step(self, state, dx: np.ndarray) -> float:
        """Largest alpha keeping x + alpha dx strictly inside (up to the
        boundary)."""
        sl, _, chols = state
        alpha = math.inf
        if sl.size:
            dsl = self.G @ dx
            neg = dsl < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(sl[neg] / -dsl[neg])))
        for blk, L in zip(self.blocks, chols):
            packed = blk["rows"] @ dx
            dS = np.zeros((blk["size"], blk["size"]))
            dS[blk["iu"], blk["ju"]] = packed
            dS[blk["ju"], blk["iu"]] = packed
            W = np.linalg.solve(L, dS)
            W = np.linalg.solve(L, W.T)
            wmin = float(np.linalg.eigvalsh(0.5 * (W + W.T))[0])
            if wmin < 0:
                alpha = min(alpha, 1.0 / -wmin)
        return alpha


def _independent_rows(A: sp.csr_matrix, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Select a maximal independent subset of rows (pivoted QR on A')."""
    if A.shape[0] == 0:
        return np.zeros((0, A.shape[1])), np.zeros(0)
    from scipy.linalg import qr

    Ad = A.toarray()
    _, R, piv = qr(Ad.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(Ad.shape) * np.finfo(float).eps * (diag[0] if diag.size else 1.0)
    rank = int(np.sum(diag > tol))
    keep = np.sort(piv[:rank])
    return Ad[keep], b[keep]


def _center(
    engine: _LmiBarrier,
    A: np.ndarray,
    b: np.ndarray,
    x: np.ndarray,
    c_over_mu: np.ndarray,
    tol_dec: float = 0.3,
    max_steps: int = 60,
    stop_when=None,
):
    """Damped Newton to the analytic center of c_over_mu' x + barrier,
    maintaining A x = b; returns (x, eq multiplier, state)."""
    n_eq = A.shape[0]
    w = np.zeros(n_eq)
    state = engine.slack_state(x)
    if state is None:
        raise _NoInterior(math.nan, False, "lost strict feasibility")
    for _ in range(max_steps):
        g_bar, H = engine.grad_hess(x, state)
        g = c_over_mu + g_bar
        K = np.zeros((engine.n + n_eq, engine.n + n_eq))
        K[:engine.n, :engine.n] = H
        if n_eq:
            K[:engine.n, engine.n:] = A.T
            K[engine.n:, :engine.n] = A
        rhs = np.concatenate([-g, b - A @ x if n_eq else np.zeros(0)])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            K[:engine.n, :engine.n] += 1e-11 * np.eye(engine.n)
            sol = np.linalg.solve(K, rhs)
        dx = sol[:engine.n]
        w = sol[engine.n:]
        dec2 = float(-g @ dx)
        if dec2 <= tol_dec ** 2:
            return x, w, state
        alpha = min(1.0, 0.99 * engine.max_step(state, dx))
        phi0 = float(c_over_mu @ x) + engine.value(state)
        slope = float(g @ dx)
        for _ in range(60):
            cand = x + alpha * dx
            cand_state = engine.slack_state(cand)
            if cand_state is not None:
                phi = float(c_over_mu @ cand) + engine.value(cand_state)
                if phi <= phi0 + 1e-4 * alpha * slope:
                    break
            alpha *= 0.5
        else:
            return x, w, state  # no further progress possible
        x = cand
        state = cand_state
        if stop_when is not None and stop_when(x):
            return x, w, state
    return x, w, state


def _phase1(engine_data, A: np.ndarray, b: np.ndarray, x0: np.ndarray, config: SolverConfig):
    """Find a strictly interior point by relaxing every cone constraint
    with a common margin t and driving t negative."""
    n, G, h, blocks = engine_data
    ones = np.ones((G.shape[0], 1))
    G_aug = sp.hstack([G, sp.csr_matrix(ones)]).tocsr() if G.shape[0] else sp.csr_matrix((0, n + 1))
    blocks_aug = []
    for size, rows, const in blocks:
        iu, ju = np.triu_indices(size)
        eye_packed = sp.csr_matrix(((iu == ju).astype(float)[:, None]))
        blocks_aug.append((size, sp.hstack([rows, eye_packed]).tocsr(), const))
    engine = _LmiBarrier(n + 1, G_aug, h, blocks_aug)

    # initial margin: clear every violation
    t0 = 1.0
    if G.shape[0]:
        t0 = max(t0, float(np.max(h - G @ x0)) + 1.0)
    for size, rows, const in blocks:
        packed = rows @ x0 + const
        S = np.zeros((size, size))
        S[np.triu_indices(size)] = packed
        S = S + S.T - np.diag(np.diag(S))
        t0 = max(t0, float(-np.linalg.eigvalsh(S)[0]) + 1.0)
    x = np.concatenate([x0, [t0]])
    A_aug = np.hstack([A, np.zeros((A.shape[0], 1))]) if A.shape[0] else np.zeros((0, n + 1))

    margin = 1e-7 * (1.0 + t0)
    c_t = np.zeros(n + 1)
    c_t[-1] = 1.0
    mu = max(1.0, t0)
    for _ in range(100):
        x, _, _ = _center(
            engine, A_aug, b, x, c_t / mu,
            stop_when=lambda xx: xx[-1] < -margin,
            max_steps=config.newton_max_steps,
        )
        if x[-1] < -margin:
            return x[:-1]
        if mu <= 1e-9 * (1.0 + t0):
            break
        mu = max(mu * 0.1, 1e-9 * (1.0 + t0))
    proved = x[-1] > 1e-6 * (1.0 + t0)
    raise _NoInterior(float(x[-1]), proved,
                      f"phase 1 stalled at margin {x[-1]:.3e}; no strictly interior point")


def _solve_barrier(problem: SdpProblem, red: _Presolved, config: SolverConfig) -> SdpSolution:
    n = len(red.free)
    A, b = _independent_rows(red.eq, red.eq_rhs)
    engine = _LmiBarrier(n, red.ineq, red.ineq_rhs, red.blocks)
    c = red.c

    if A.shape[0]:
        x0, *_ = np.linalg.lstsq(A, b, rcond=None)
    else:
        x0 = np.zeros(n)
    state = engine.slack_state(x0)
    if state is None:
        x = _phase1((n, red.ineq, red.ineq_rhs, red.blocks), A, b, x0, config)
    else:
        x = x0

    nu = max(engine.barrier_parameter, 1)
    mu = max(1.0, abs(float(c @ x)) / nu)
    w = np.zeros(A.shape[0])
    steps = 0
    while True:
        x, w, state = _center(engine, A, b, x, c / mu, max_steps=config.newton_max_steps)
        steps += 1
        p_obj = float(c @ x)
        gap = mu * nu
        mu_end = max(config.mu_min, config.tol_gap * (1.0 + abs(p_obj)) / (3.0 * nu))
        if mu <= mu_end or steps > 200:
            break
        mu = max(mu * 0.12, mu_end)

    z = red.restore(x)
    rep = check_feasibility(problem, z)
    g_bar = engine.grad_only(x, state)
    # at the center: c + mu*gradF + mu*A'w = 0, so this measures centering error
    stat = c + mu * g_bar
    if A.shape[0]:
        stat = stat + mu * (A.T @ w)
    c_scale = 1.0 + (float(np.max(np.abs(c))) if c.size else 0.0)
    p_obj = float(c @ x)
    d_obj = p_obj - mu * nu
    res = Residuals(
        max_equality_violation=rep.max_equality_violation,
        min_inequality_slack=rep.min_inequality_slack,
        min_psd_eigenvalue=rep.min_block_eigenvalue,
        relative_gap=mu * nu / (1.0 + abs(p_obj) + abs(d_obj)),
        dual_residual=float(np.max(np.abs(stat))) / c_scale,
    )
    ok = (
        res.max_equality_violation <= config.tol_eq
        and (problem.ineq.shape[0] == 0 or res.min_inequality_slack >= -config.tol_eq)
        and res.min_psd_eigenvalue >= -config.tol_psd
        and res.relative_gap <= config.tol_gap
    )
    return SdpSolution(
        z=z,
        objective=problem.objective_value(z),
        status=STATUS_OPTIMAL if ok else STATUS_NOT_CONVERGED,
        residuals=res,
        iterations=steps,
        message="barrier path following",
    )


def problem_b_dot(red: _Presolved, y: np.ndarray) -> float:
    parts = [red.eq_rhs, -red.ineq_rhs]
    offset = red.eq.shape[0] + red.ineq.shape[0]
    vals = float(np.concatenate(parts) @ y[:offset]) if offset else 0.0
    for size, _, const in red.blocks:
        tri = size * (size + 1) // 2
        iu, ju = np.triu_indices(size)
        w = np.where(iu == ju, 1.0, math.sqrt(2.0))
        vals += float((w * const) @ y[offset:offset + tri])
        offset += tri
    return vals


def At_original(red: _Presolved) -> sp.csr_matrix:
    mats = [red.eq, -red.ineq]
    for size, rows, _ in red.blocks:
        iu, ju = np.triu_indices(size)
        w = np.where(iu == ju, 1.0, math.sqrt(2.0))
        mats.append(-sp.diags(w) @ rows)
    return sp.vstack(mats).T.tocsr()


def _residuals(
    problem: SdpProblem, red: _Presolved, z: np.ndarray, y: np.ndarray | None, sense_sign: float
) -> Residuals:
    rep = check_feasibility(problem, z)
    res = Residuals(
        max_equality_violation=rep.max_equality_violation,
        min_inequality_slack=rep.min_inequality_slack,
        min_psd_eigenvalue=rep.min_block_eigenvalue,
    )
    if y is not None:
        c_red = red.c
        x_free = z[red.free]
        p_obj = float(c_red @ x_free)
        b_y = problem_b_dot(red, y)
        res.relative_gap = abs(p_obj + b_y) / (1.0 + abs(p_obj) + abs(b_y))
        dual_vec = At_original(red) @ y + c_red
        res.dual_residual = float(np.max(np.abs(dual_vec))) / (1.0 + float(np.max(np.abs(c_red))))
    else:
        res.relative_gap = 0.0
        res.dual_residual = 0.0
    return res


def _finalize(
    problem: SdpProblem,
    z: np.ndarray,
    y: np.ndarray | None,
    iterations: int,
    config: SolverConfig,
    message: str,
) -> SdpSolution:
    rep = check_feasibility(problem, z)
    res = Residuals(
        max_equality_violation=rep.max_equality_violation,
        min_inequality_slack=rep.min_inequality_slack,
        min_psd_eigenvalue=rep.min_block_eigenvalue,
        relative_gap=0.0,
        dual_residual=0.0,
    )
    ok = (
        res.max_equality_violation <= config.tol_eq
        and (problem.ineq.shape[0] == 0 or res.min_inequality_slack >= -config.tol_eq)
        and res.min_psd_eigenvalue >= -config.tol_psd
    )
    return SdpSolution(
        z=z,
        objective=problem.objective_value(z),
        status=STATUS_OPTIMAL if ok else STATUS_NOT_CONVERGED,
        residuals=res,
        iterations=iterations,
        message=message,
    )


# ---------------------------------------------------------------------------
# solution files


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_solution(sol: SdpSolution, path: str) -> None:
    lines = [
        "SDPSOLUTION v1",
        f"status {sol.status}",
        f"objective {_fmt(sol.objective)}",
        f"max_equality_violation {_fmt(sol.residuals.max_equality_violation)}",
        f"min_inequality_slack {_fmt(sol.residuals.min_inequality_slack)}",
        f"min_psd_eigenvalue {_fmt(sol.residuals.min_psd_eigenvalue)}",
        f"relative_gap {_fmt(sol.residuals.relative_gap)}",
        f"iterations {sol.iterations}",
        f"vars {len(sol.z)}",
    ] + [_fmt(v) for v in sol.z]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_solution(path: str) -> SdpSolution:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if lines[0] != "SDPSOLUTION v1":
        raise ValueError("not a solution file")
    kv = dict(line.split(None, 1) for line in lines[1:9])
    n = int(kv["vars"])
    z = np.array([float(v) for v in lines[9:9 + n]])
    return SdpSolution(
        z=z,
        objective=float(kv["objective"]),
        status=kv["status"],
        residuals=Residuals(
            max_equality_violation=float(kv["max_equality_violation"]),
            min_inequality_slack=float(kv["min_inequality_slack"]),
            min_psd_eigenvalue=float(kv["min_psd_eigenvalue"]),
            relative_gap=float(kv["relative_gap"]),
        ),
        iterations=int(kv["iterations"]),
    )


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) not in (2, 3):
        print("usage: python -m momentshock.solver PROBLEM OUT [MAX_ITERS]", file=sys.stderr)
        return 2
    from .assemble import read_problem

    problem = read_problem(argv[0])
    cfg = SolverConfig()
    if len(argv) == 3:
        cfg = replace(cfg, max_iterations=int(argv[2]))
    sol = solve(problem, cfg)
    write_solution(sol, argv[1])
    print(f"{sol.status} objective={sol.objective:.12g} iters={sol.iterations}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
