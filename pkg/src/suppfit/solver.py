"""Least-squares projection onto the support-function consistency cone.

Given directions X_1..X_n and observations y, the estimator solves

    min over z_1..z_n of (1/n) sum_i (y_i - <z_i, X_i>)^2
    subject to <z_i - z_j, X_i> >= 0 for all i, j
    and optionally ||z_i|| <= R,

whose fitted values are the metric projection of y onto the closed convex
cone of vectors realizable as support-function evaluations of a convex body.
The z_i are witness points (a body attaining the fit is conv{z_1..z_n}).

The solver is a two-block operator-splitting (ADMM with over-relaxation) on
the matrix of inner products M_ij = <X_i, z_j>.  One block enforces the
row-wise dominance constraints M_ii >= M_ij by exact projection; the other
ties M to the witness parametrization and carries the data term, which
splits per column into a d x d solve.  Returned fits are exactly feasible:
h_hat is the support vector of the hull of the final witnesses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from .geometry import DesignSet, Polytope, SupportVector, support_value

__all__ = [
    "Observations",
    "LseFit",
    "SolverBudget",
    "SolverFailure",
    "RiskResult",
    "fit_lse",
    "oracle_lse_2d",
    "kkt_residual",
    "risk",
    "check_vertex_bound",
]


@dataclass
class Observations:
    """Noisy support-function measurements on a design."""

    design: DesignSet
    y: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.y.shape[0] != self.design.n:
            raise ValueError("observation count does not match the design size")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("observations must be finite")
        if self.sigma < 0:
            raise ValueError("noise level must be nonnegative")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @classmethod
    def synthesize(cls, truth: Polytope, design: DesignSet, sigma: float, seed) -> "Observations":
        """Support values of a known body plus iid Gaussian noise."""
        gen = _gen(seed)
        h = support_value(truth, design.points)
        return cls(design=design, y=h + sigma * gen.standard_normal(design.n), sigma=sigma)


@dataclass
class SolverBudget:
    """Iteration and tolerance budget for fit_lse."""

    tol: float = 1e-8
    max_iter: int = 200_000
    check_every: int = 25
    rho: float = 1.0
    over_relax: float = 1.7
    init_jitter: float = 0.0
    jitter_seed: int = 0


@dataclass
class LseFit:
    """A fitted projection onto the consistency cone.

    h_hat is exactly the support vector of conv(witnesses) on the design, so
    the witness feasibility constraints hold with zero violation; the
    solver_residual field carries the operator-splitting residuals at exit.
    """

    h_hat: SupportVector
    witnesses: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool
    solver_residual: float
    restriction_radius: Optional[float] = None

    @property
    def design(self) -> DesignSet:
        return self.h_hat.design

    def witness_hull(self) -> Polytope:
        return Polytope(dim=self.design.dim, vertices=self.witnesses, mode="witnesses")

    def to_json(self) -> str:
        from .geometry import _fmt  # same float policy as the point documents

        h = ", ".join(_fmt(v) for v in self.h_hat.values)
        rows = ",\n    ".join(
            "[" + ", ".join(_fmt(v) for v in row) + "]" for row in self.witnesses
        )
        return (
            '{\n  "h_hat": [%s],\n  "witnesses": [\n    %s\n  ],\n'
            '  "objective": %s,\n  "kkt_residual": %s,\n  "iterations": %d\n}\n'
            % (h, rows, _fmt(self.objective), _fmt(self.kkt_residual), self.iterations)
        )


class SolverFailure(RuntimeError):
    """Raised when the iteration budget is exhausted; carries the best iterate."""

    def __init__(self, message: str, fit: LseFit):
        super().__init__(message)
        self.fit = fit


@dataclass
class RiskResult:
    fixed: float
    population: float
    population_se: float
    probes: int


def _gen(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def _project_dominant_rows(V: np.ndarray, top_k: int = 48) -> np.ndarray:
    """Project each row v onto {m : m_i >= m_j for all j}, i = row index."""
    return _project_anchored_rows(V, np.arange(V.shape[0]), top_k)


def _project_anchored_rows(V: np.ndarray, anchor: np.ndarray, top_k: int = 48) -> np.ndarray:
    """Project each row v onto {m : m_a >= m_j for all j}, a = anchor[row].

    The projection sets m_a = t and m_j = min(v_j, t), where t solves
    t = (v_a + sum_{j in S} v_j) / (1 + |S|) with S = {j != a : v_j > t}.
    Solved by a prefix scan over each row's sorted non-anchor entries;
    only the top entries are sorted, with an exact fallback for the rare
    rows whose active set runs deeper.
    """
    rows_n, n = V.shape
    ridx = np.arange(rows_n)
    diag = V[ridx, anchor].copy()
    Voff = V.copy()
    Voff[ridx, anchor] = -np.inf
    if n <= top_k + 2:
        W = np.sort(Voff, axis=1)[:, ::-1]
        t_star, _ = _waterfill_t(diag, W, np.full(rows_n, -np.inf))
    else:
        part = np.partition(Voff, n - top_k - 1, axis=1)
        W = np.sort(part[:, n - top_k:], axis=1)[:, ::-1]
        tail = part[:, n - top_k - 1]
        t_star, ok = _waterfill_t(diag, W, tail)
        if not ok.all():
            deep = np.where(~ok)[0]
            Wd = np.sort(Voff[deep], axis=1)[:, ::-1]
            t_star[deep], _ = _waterfill_t(diag[deep], Wd, np.full(deep.shape[0], -np.inf))
    out = np.minimum(V, t_star[:, None])
    out[ridx, anchor] = t_star
    return out


def _waterfill_t(diag: np.ndarray, W: np.ndarray, tail: np.ndarray):
    """Anchor values t for the row projection.

    W holds each row's leading off-diagonal entries in decreasing order
    (possibly padded with -inf), tail bounds the entries not included in W.
    Returns (t, ok); ok is False where the scan would need entries past W.
    """
    n, k = W.shape
    finite = np.isfinite(W)
    prefix = np.cumsum(np.where(finite, W, 0.0), axis=1)
    counts = np.cumsum(finite, axis=1)
    T = np.concatenate(
        [diag[:, None], (diag[:, None] + prefix) / (1.0 + counts)], axis=1
    )
    nxt = np.concatenate([W, tail[:, None]], axis=1)
    okm = T >= nxt
    first = okm.argmax(axis=1)
    any_ok = okm.any(axis=1)
    t = T[np.arange(n), np.where(any_ok, first, 0)]
    return t, any_ok


def fit_lse(
    obs: Observations,
    restriction_radius: Optional[float] = None,
    budget: Optional[SolverBudget] = None,
    init_witnesses: Optional[np.ndarray] = None,
) -> LseFit:
    """Project the observations onto the support-function consistency cone.

    Parameters
    ----------
    obs : design and measured values.
    restriction_radius : optional witness norm bound R (the cone of bodies
        contained in the R-ball); None fits the unrestricted cone.
    budget : solver tolerances; defaults to SolverBudget().
    init_witnesses : optional (n, d) witness warm start.  The problem is a
        convex projection, so the fixed point does not depend on it; on
        synthetic data the truth's own support witnesses cut iterations by
        an order of magnitude.

    Raises
    ------
    SolverFailure
        when the residuals have not reached budget.tol at budget.max_iter;
        the exception carries the best iterate seen.
    """
    budget = budget or SolverBudget()
    if restriction_radius is not None and restriction_radius <= 0:
        raise ValueError("restriction radius must be positive")
    X = obs.design.points
    n, d = X.shape
    if init_witnesses is not None:
        init_witnesses = np.asarray(init_witnesses, dtype=float)
        if init_witnesses.shape != (n, d):
            raise ValueError("init_witnesses must be shaped like one witness per direction")
    scale = float(np.sqrt(np.mean(obs.y**2)))
    if scale < 1e-300:
        h = SupportVector(values=np.zeros(n), design=obs.design)
        return LseFit(
            h_hat=h,
            witnesses=np.zeros((n, d)),
            objective=0.0,
            kkt_residual=0.0,
            iterations=0,
            converged=True,
            solver_residual=0.0,
            restriction_radius=restriction_radius,
        )
    y = obs.y / scale
    R = None if restriction_radius is None else restriction_radius / scale
    Z0 = None if init_witnesses is None else init_witnesses / scale

    state = _admm(X, y, R, budget, Z0)
    Z, h, iters, converged, resid = state
    if R is not None:
        norms = np.linalg.norm(Z, axis=1)
        over = norms > R
        if np.any(over):
            Z = Z.copy()
            Z[over] *= (R / norms[over])[:, None]
        h = (X @ Z.T).max(axis=1)

    h_phys = h * scale
    Z_phys = Z * scale
    witness_idx = (X @ Z.T).argmax(axis=1)
    witnesses = Z_phys[witness_idx]
    hv = SupportVector(values=h_phys, design=obs.design)
    objective = float(np.mean((obs.y - h_phys) ** 2))
    orth = _orthogonality(obs.y, h_phys)
    fit = LseFit(
        h_hat=hv,
        witnesses=witnesses,
        objective=objective,
        kkt_residual=max(orth, resid),
        iterations=iters,
        converged=converged,
        solver_residual=resid,
        restriction_radius=restriction_radius,
    )
    if not converged:
        raise SolverFailure(
            f"no convergence in {budget.max_iter} iterations (residual {max(orth, resid):.3g})",
            fit,
        )
    return fit


def _orthogonality(y: np.ndarray, h: np.ndarray) -> float:
    n = y.shape[0]
    return abs(float(np.dot(y - h, h))) / n / (1.0 + float(np.mean(y**2)))


def _admm(
    X: np.ndarray,
    y: np.ndarray,
    R: Optional[float],
    budget: SolverBudget,
    Z0: Optional[np.ndarray] = None,
):
    n, d = X.shape
    rho = budget.rho
    alpha = budget.over_relax

    G = X.T @ X
    evals, evecs = np.linalg.eigh(G)
    evals = np.maximum(evals, 1e-14)

    Z = Z0.copy() if Z0 is not None else y[:, None] * X  # default init: z_i = y_i X_i
    if budget.init_jitter > 0:
        Z = Z + budget.init_jitter * _gen(budget.jitter_seed).standard_normal(Z.shape)
    N = X @ Z.T
    U = np.zeros_like(N)

    best = None
    best_score = math.inf
    N_prev = N.copy()
    it = 0
    resid = math.inf
    converged = False
    while it < budget.max_iter:
        it += 1
        M = _project_dominant_rows(N - U)
        MR = alpha * M + (1.0 - alpha) * N
        V = MR + U
        Z = _subspace_data_prox(X, y, V, rho, R, evals, evecs)
        N = X @ Z.T
        U = V - N
        if it % budget.check_every == 0 or it == budget.max_iter:
            primal = float(np.linalg.norm(M - N) / n)
            dual = float(rho * np.linalg.norm(N - N_prev) / n)
            h = N.max(axis=1)
            orth = _orthogonality(y, h)
            resid = max(primal, dual)
            score = max(resid, orth)
            if score < best_score:
                best_score = score
                best = (Z.copy(), h.copy(), resid)
            if score <= budget.tol:
                converged = True
                break
            if primal > 10.0 * dual and rho < 1e6:
                rho *= 2.0
                U *= 0.5
            elif dual > 10.0 * primal and rho > 1e-6:
                rho *= 0.5
                U *= 2.0
        if it % budget.check_every == 1 or budget.check_every == 1:
            N_prev = N.copy()

    if converged:
        return Z, N.max(axis=1), it, True, resid
    Zb, hb, rb = best if best is not None else (Z, N.max(axis=1), resid)
    return Zb, hb, it, False, rb


def _subspace_data_prox(X, y, V, rho, R, evals, evecs):
    """Per-column solve of min (rho/2)||X z - v_j||^2 + (1/2)(<x_j,z> - y_j)^2,
    optionally subject to ||z|| <= R.  Returns the witness matrix Z (n x d)."""
    n, d = X.shape
    # (rho G + x_j x_j^T) z = rho X^T v_j + y_j x_j, via Sherman-Morrison.
    A = evecs @ np.diag(1.0 / evals) @ evecs.T / rho  # (rho G)^{-1}
    RHS = rho * (X.T @ V) + X.T * y[None, :]
    W0 = A @ RHS
    B = A @ X.T
    c = np.einsum("jd,dj->j", X, B)
    s = np.einsum("jd,dj->j", X, W0)
    Zt = W0 - B * (s / (1.0 + c))[None, :]
    Z = Zt.T
    if R is None:
        return Z
    norms = np.linalg.norm(Z, axis=1)
    over = np.where(norms > R * (1.0 + 1e-12))[0]
    for j in over:
        Z[j] = _trust_region_column(X, y[j], V[:, j], rho, R, X[j], evals, evecs)
    return Z


def _trust_region_column(X, yj, v, rho, R, xj, evals, evecs):
    """Norm-bounded version of the per-column solve by bisection on the
    Lagrange multiplier of ||z||^2 <= R^2."""
    rhs = rho * (X.T @ v) + yj * xj

    def z_of(lam):
        base = evecs @ ((evecs.T @ rhs) / (rho * evals + lam))
        bx = evecs @ ((evecs.T @ xj) / (rho * evals + lam))
        return base - bx * (xj @ base) / (1.0 + xj @ bx)

    lo, hi = 0.0, 1.0
    while np.linalg.norm(z_of(hi)) > R and hi < 1e16:
        hi *= 4.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.linalg.norm(z_of(mid)) > R:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    z = z_of(hi)
    nz = np.linalg.norm(z)
    if nz > R:
        z *= R / nz
    return z


@dataclass
class _ConeBatchState:
    """Warm-start state for _admm_batch (splitting variables and penalty)."""

    Z: np.ndarray
    N: np.ndarray
    U: np.ndarray
    rho: float


def _admm_batch(
    X: np.ndarray,
    Y: np.ndarray,
    budget: SolverBudget,
    state: Optional[_ConeBatchState] = None,
    R: Optional[float] = None,
):
    """Cone projections of every row of Y at once, sharing the design.

    Same splitting as _admm, with the consensus variables stacked along a
    leading batch axis so the per-iteration work runs as a handful of large
    BLAS calls instead of B separate small ones.  The penalty parameter is
    shared across the batch and adapted on median residuals.  Accepts and
    returns warm-start state so a caller can track a solution path where
    only Y changes between calls.

    Returns (H, resid, iters, state): H[b] is the exactly feasible support
    readout max_j <X_i, z_bj> and resid[b] the per-row residual at exit.
    """
    B, n = Y.shape
    d = X.shape[1]
    rho = state.rho if state is not None else budget.rho
    alpha = budget.over_relax
    G = X.T @ X
    evals, evecs = np.linalg.eigh(G)
    evals = np.maximum(evals, 1e-14)

    if state is None:
        Z = Y[:, :, None] * X[None, :, :]
        N = np.matmul(X, Z.transpose(0, 2, 1))
        U = np.zeros_like(N)
    else:
        Z, N, U = state.Z, state.N, state.U
    anchor = np.tile(np.arange(n), B)
    y_den = 1.0 + np.mean(Y**2, axis=1)
    Zt = Z.transpose(0, 2, 1)

    N_prev = N.copy()
    it = 0
    resid = np.full(B, np.inf)
    while it < budget.max_iter:
        it += 1
        M = _project_anchored_rows((N - U).reshape(B * n, n), anchor).reshape(B, n, n)
        V = alpha * M + (1.0 - alpha) * N + U
        Zt = _batch_data_prox(X, Y, V, rho, evals, evecs)
        if R is not None:
            Zt = _batch_trust_region(X, Y, V, rho, R, evals, evecs, Zt)
        N = np.matmul(X, Zt)
        U = V - N
        if it % budget.check_every == 0 or it == budget.max_iter:
            primal = np.linalg.norm(M - N, axis=(1, 2)) / n
            dual = rho * np.linalg.norm(N - N_prev, axis=(1, 2)) / n
            h = N.max(axis=2)
            orth = np.abs(np.einsum("bi,bi->b", Y - h, h)) / n / y_den
            resid = np.maximum(np.maximum(primal, dual), orth)
            if resid.max() <= budget.tol:
                break
            pm, dm = float(np.median(primal)), float(np.median(dual))
            if pm > 10.0 * dm and rho < 1e6:
                rho *= 2.0
                U *= 0.5
            elif dm > 10.0 * pm and rho > 1e-6:
                rho *= 0.5
                U *= 2.0
        if it % budget.check_every == 1 or budget.check_every == 1:
            N_prev = N.copy()

    Z = Zt.transpose(0, 2, 1)
    return N.max(axis=2), resid, it, _ConeBatchState(Z=Z, N=N, U=U, rho=rho)


def _batch_data_prox(X, Y, V, rho, evals, evecs):
    """Batched per-column solves; returns the stacked transposes Z^T (B,d,n)."""
    A = evecs @ np.diag(1.0 / evals) @ evecs.T / rho
    RHS = rho * np.matmul(X.T, V) + X.T[None, :, :] * Y[:, None, :]
    W0 = np.matmul(A, RHS)
    Bm = A @ X.T
    c = np.einsum("jd,dj->j", X, Bm)
    s = np.einsum("jd,bdj->bj", X, W0)
    return W0 - Bm[None, :, :] * (s / (1.0 + c))[:, None, :]


def _batch_trust_region(X, Y, V, rho, R, evals, evecs, Zt):
    norms = np.linalg.norm(Zt, axis=1)
    over = np.argwhere(norms > R * (1.0 + 1e-12))
    if over.shape[0] == 0:
        return Zt
    Zt = Zt.copy()
    for b, j in over:
        Zt[b, :, j] = _trust_region_column(
            X, Y[b, j], V[b, :, j], rho, R, X[j], evals, evecs
        )
    return Zt


def kkt_residual(fit: LseFit, obs: Observations) -> float:
    """Recomputed optimality residual of a fit.

    Takes the max of witness-equality gaps, pairwise feasibility violations,
    the normalized empirical orthogonality |<y - h, h>|/n, and the solver's
    stored splitting residual.
    """
    X = obs.design.points
    h = fit.h_hat.values
    W = fit.witnesses
    M = X @ W.T
    eq_gap = float(np.max(np.abs(np.diagonal(M) - h)))
    feas = float(np.max(M - h[:, None]))
    orth = _orthogonality(obs.y, h)
    return max(eq_gap, max(feas, 0.0), orth, fit.solver_residual)


def check_vertex_bound(fit: LseFit, bound: float) -> bool:
    """True iff every fitted witness lies in the ball of the given radius."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    return bool(np.linalg.norm(fit.witnesses, axis=1).max() <= bound + 1e-9)


def risk(fit: LseFit, truth: Polytope, fresh_probes: int, seed) -> RiskResult:
    """Fixed-design and population squared errors of a fit against a truth.

    The population term is Monte Carlo over fresh uniform directions, with
    the fitted function evaluated as the support function of the witness
    hull; its standard error is reported.
    """
    if fresh_probes < 2:
        raise ValueError("need at least two probes for a standard error")
    design = fit.design
    h_true = support_value(truth, design.points)
    fixed = float(np.mean((fit.h_hat.values - h_true) ** 2))
    gen = _gen(seed)
    probes = gen.standard_normal((int(fresh_probes), design.dim))
    probes /= np.linalg.norm(probes, axis=1, keepdims=True)
    hull = fit.witness_hull()
    diff2 = (support_value(hull, probes) - support_value(truth, probes)) ** 2
    pop = float(np.mean(diff2))
    se = float(np.std(diff2, ddof=1) / math.sqrt(diff2.shape[0]))
    return RiskResult(fixed=fixed, population=pop, population_se=se, probes=int(fresh_probes))


# ---------------------------------------------------------------------------
# Planar oracle


def oracle_lse_2d(obs: Observations) -> LseFit:
    """Exact planar solution by active-set quadratic minimization in h-space.

    In the plane the consistency cone is polyhedral: for angularly sorted
    directions, every triple (i, j, k) whose two middle arcs a = arc(i -> j)
    and b = arc(j -> k) are both below pi contributes

        sin(b) h_i - sin(a + b) h_j + sin(a) h_k >= 0.

    For a + b < pi this bounds h_j by the corner of the i and k support
    lines; for a + b > pi the same row (all coefficients positive) is the
    nonemptiness condition of the three half-planes.  The projection onto
    {A h >= 0} is solved through its dual, min ||A^T mu + y|| over mu >= 0,
    a nonnegative least-squares problem handled by an exact active-set
    method.  Restricted to d = 2 and 3 <= n <= 12.
    """
    X = obs.design.points
    n, d = X.shape
    if d != 2:
        raise ValueError("the oracle is planar only (d = 2)")
    if not (3 <= n <= 12):
        raise ValueError("the oracle handles 3 <= n <= 12")
    theta = np.mod(np.arctan2(X[:, 1], X[:, 0]), 2.0 * math.pi)
    order = np.argsort(theta)
    th = theta[order]
    if np.min(np.diff(np.concatenate([th, [th[0] + 2.0 * math.pi]]))) < 1e-9:
        raise ValueError("design angles must be pairwise distinct")

    A = _planar_cone_rows(th)
    y_s = obs.y[order]
    if A.shape[0] == 0:
        h_s = y_s.copy()
        active = 0
    else:
        mu, _ = nnls(A.T, -y_s, maxiter=max(200, 30 * A.shape[0]))
        h_s = y_s + A.T @ mu
        active = int(np.count_nonzero(mu))
    h = np.empty(n)
    h[order] = h_s
    witnesses = _planar_witnesses(X[order], h_s)[np.argsort(order)]

    hv = SupportVector(values=h, design=obs.design)
    objective = float(np.mean((obs.y - h) ** 2))
    fit = LseFit(
        h_hat=hv,
        witnesses=witnesses,
        objective=objective,
        kkt_residual=0.0,
        iterations=active,
        converged=True,
        solver_residual=0.0,
    )
    fit.kkt_residual = kkt_residual(fit, obs)
    return fit


def _planar_cone_rows(th: np.ndarray) -> np.ndarray:
    """Constraint matrix of the planar consistency cone for sorted angles."""
    n = th.shape[0]
    rows = []
    two_pi = 2.0 * math.pi
    for j in range(n):
        # arcs backward to i and forward to k, both required below pi
        for back in range(1, n):
            i = (j - back) % n
            a = (th[j] - th[i]) % two_pi
            if not (1e-12 < a < math.pi - 1e-12):
                continue
            for fwd in range(1, n - back):
                k = (j + fwd) % n
                b = (th[k] - th[j]) % two_pi
                if not (1e-12 < b < math.pi - 1e-12):
                    continue
                row = np.zeros(n)
                row[i] += math.sin(b)
                row[j] += -math.sin(a + b)
                row[k] += math.sin(a)
                rows.append(row)
    if not rows:
        return np.zeros((0, n))
    A = np.asarray(rows)
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    return A


def _planar_witnesses(Xs: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Attaining points for consistent planar support values.

    Candidate vertices are intersections of support-line pairs that satisfy
    every constraint; each direction picks the candidate attaining its value.
    """
    n = Xs.shape[0]
    cands = []
    for i in range(n):
        for j in range(i + 1, n):
            Amat = np.array([Xs[i], Xs[j]])
            det = np.linalg.det(Amat)
            if abs(det) < 1e-12:
                continue
            p = np.linalg.solve(Amat, np.array([h[i], h[j]]))
            cands.append(p)
    if not cands:
        # All support lines parallel cannot happen for n >= 3 distinct
        # angles, but guard with radial witnesses.
        return h[:, None] * Xs
    P = np.asarray(cands)
    slack = 1e-7 * (1.0 + np.max(np.abs(h)))
    feas = P[(Xs @ P.T <= h[:, None] + slack).all(axis=0)]
    if feas.shape[0] == 0:
        feas = P
    vals = Xs @ feas.T
    idx = vals.argmax(axis=1)
    return feas[idx]
