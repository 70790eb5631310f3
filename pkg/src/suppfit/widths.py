"""Monte Carlo localized Gaussian widths and the fixed-point functional.

The quantity estimated here is

    W(B(c, t)) = E sup { (1/n) sum_i g_i (h_i - c_i) :
                         h in the consistency cone, ||h - c||_{P_n} <= t }

for a center c in the cone and standard normal g (the deterministic center
term (1/n)<g, c> has zero mean and is dropped, which only reduces variance).
For each draw the inner maximizer is exactly characterized: h*(t) lies on the
solution path s -> proj_cone(c + s g), s >= 0, which starts at the center and
ascends; the path is traced once per draw by warm-started cone projections
(solver._admm_batch, all draws advancing together), and every recorded knot
is an exactly feasible point of the cone.  Width values at arbitrary t come
from chord interpolation between knots, which is again feasible by convexity,
so the estimates are honest lower bounds whose only looseness is knot
spacing and inner-solver tolerance.

Per draw, values across the t grid are tightened to satisfy the two set
inclusions exactly: W_g(t) nondecreasing (forward max over nested balls) and
W_g(t)/t nonincreasing (backward pass; shrinking a feasible point toward the
center scales its value linearly).  Both passes replace values only by values
of other feasible points, so the lower-bound property is preserved, and the
sample means inherit both monotonicities.

The profile functional is H(t) = W(B(c,t)) - t^2/2, whose maximizer t_f
sharply localizes the squared estimation error at the center (risk between
0.5 t_f^2 and 2 t_f^2 with high probability); t_f_hat is the grid argmax
refined by parabolic interpolation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import DesignSet, SupportVector, _fmt
from .solver import SolverBudget, _admm_batch, _ConeBatchState, _gen

__all__ = [
    "LocalBall",
    "WidthProfile",
    "TwoPointReport",
    "gaussian_width",
    "h_profile",
    "sandwich_check",
    "two_point_certificate",
    "sudakov_lower",
    "dudley_upper",
    "load_width_profile",
]

DEFAULT_NUM_GAUSSIANS = 64
DEFAULT_GRID_POINTS = 12

# Knot solves read out exactly feasible points whatever the residual, so a
# loose tolerance costs only a small downward bias; 1e-4 was indistinguishable
# from 2e-6 in calibration.
_INNER_BUDGET = SolverBudget(tol=1e-4, max_iter=12_000, check_every=25)


@dataclass
class LocalBall:
    """An L2(P_n) ball around a cone member, optionally with a witness bound."""

    center: SupportVector
    radius: float
    vertex_bound: Optional[float] = None

    def __post_init__(self):
        if not math.isfinite(self.radius) or self.radius < 0:
            raise ValueError("ball radius must be finite and nonnegative")
        if self.vertex_bound is not None and self.vertex_bound <= 0:
            raise ValueError("vertex bound must be positive")

    @property
    def design(self) -> DesignSet:
        return self.center.design


@dataclass
class WidthProfile:
    """Width and H = W - t^2/2 along a radius grid, with the refined argmax."""

    t_grid: np.ndarray
    width: np.ndarray
    width_se: np.ndarray
    H: np.ndarray
    t_f_hat: float
    num_gaussians: int
    t_f_se: float = 0.0
    noise_sigma: float = 1.0
    extend_grid: bool = False
    certificate_gap: float = 0.0
    ascent_failures: int = 0
    inner_iterations: int = 0
    center_label: str = "center"
    seed: int = 0

    @property
    def design(self) -> Optional[DesignSet]:
        return getattr(self, "_design", None)

    def to_csv(self) -> str:
        d = self.design
        head = {
            "center": self.center_label,
            "n": None if d is None else d.n,
            "d": None if d is None else d.dim,
            "seed": self.seed,
            "num_gaussians": self.num_gaussians,
            "t_f_hat": float(self.t_f_hat),
            "t_f_se": float(self.t_f_se),
            "noise_sigma": float(self.noise_sigma),
            "extend_grid": bool(self.extend_grid),
        }
        lines = ["# " + json.dumps(head), "t,width,width_se,H"]
        for k in range(self.t_grid.shape[0]):
            lines.append(
                ",".join(
                    _fmt(v)
                    for v in (self.t_grid[k], self.width[k], self.width_se[k], self.H[k])
                )
            )
        return "\n".join(lines) + "\n"


def load_width_profile(text: str) -> WidthProfile:
    """Inverse of WidthProfile.to_csv (the design itself is not restored)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 3 or not lines[0].startswith("# "):
        raise ValueError("not a width profile document")
    head = json.loads(lines[0][2:])
    if lines[1].split(",") != ["t", "width", "width_se", "H"]:
        raise ValueError("unexpected width profile columns")
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
    return WidthProfile(
        t_grid=rows[:, 0],
        width=rows[:, 1],
        width_se=rows[:, 2],
        H=rows[:, 3],
        t_f_hat=float(head["t_f_hat"]),
        num_gaussians=int(head["num_gaussians"]),
        t_f_se=float(head.get("t_f_se", 0.0)),
        noise_sigma=float(head.get("noise_sigma", 1.0)),
        extend_grid=bool(head.get("extend_grid", False)),
        center_label=str(head.get("center", "center")),
        seed=int(head.get("seed", 0)),
    )


def _draw_chunk(n: int) -> int:
    # keep the four (B, n, n) state arrays within ~256 MB
    return max(1, 8_388_608 // (n * n))


def _path_knots(
    center: np.ndarray,
    design: DesignSet,
    scales: np.ndarray,
    G: np.ndarray,
    budget: SolverBudget,
    vertex_bound: Optional[float],
    center_witnesses: Optional[np.ndarray],
):
    """Trace the per-draw solution paths; return knot radii/values and stats.

    scales are radius targets: the solve for scale s projects c + s ghat
    (ghat the P_n-normalized draw), whose distance from c never exceeds s.
    Returns (r, v) arrays of shape (B, len(scales)), the worst residual,
    the number of non-converged (draw, knot) solves, and total iterations.
    """
    X = design.points
    n = design.n
    B = G.shape[0]
    c = center

    gnorm = np.sqrt(np.mean(G**2, axis=1))
    ok = gnorm > 1e-12
    Ghat = np.where(ok[:, None], G / np.maximum(gnorm, 1e-12)[:, None], 0.0)

    scale = max(float(np.sqrt(np.mean(c**2))), 1e-12)
    cs = c / scale

    r = np.zeros((B, scales.shape[0]))
    v = np.zeros((B, scales.shape[0]))
    worst = 0.0
    failures = 0
    total_it = 0

    chunk = _draw_chunk(n)
    for lo in range(0, B, chunk):
        hi = min(B, lo + chunk)
        Gc = G[lo:hi]
        Gh = Ghat[lo:hi]
        state = None
        if center_witnesses is not None:
            Zw = np.broadcast_to(
                center_witnesses / scale, (hi - lo, n, X.shape[1])
            ).copy()
            N0 = np.matmul(X, Zw.transpose(0, 2, 1))
            state = _ConeBatchState(Z=Zw, N=N0, U=np.zeros_like(N0), rho=budget.rho)
        for k, s in enumerate(scales):
            Y = cs[None, :] + (s / scale) * Gh
            H, resid, it, state = _admm_batch(
                X, Y, budget, state=state, R=None if vertex_bound is None else vertex_bound / scale
            )
            total_it += it
            worst = max(worst, float(resid.max()))
            failures += int(np.count_nonzero(resid > budget.tol))
            Hp = H * scale
            diff = Hp - c[None, :]
            r[lo:hi, k] = np.sqrt(np.mean(diff**2, axis=1))
            v[lo:hi, k] = np.einsum("bi,bi->b", Gc, diff) / n
    v = np.maximum(v, 0.0)  # the center itself always achieves 0
    v[~ok] = 0.0
    r[~ok] = 0.0
    return r, v, worst, failures, total_it


def _interp_knots(t_grid: np.ndarray, r: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Per-draw chord interpolation of knot values onto the radius grid,
    then exact enforcement of the two nested-ball monotonicities."""
    B, K = r.shape
    out = np.empty((B, t_grid.shape[0]))
    for b in range(B):
        order = np.argsort(r[b], kind="stable")
        rb = np.concatenate([[0.0], r[b][order]])
        vb = np.concatenate([[0.0], np.maximum.accumulate(v[b][order])])
        out[b] = np.interp(t_grid, rb, vb)
    out = np.maximum.accumulate(out, axis=1)
    for k in range(t_grid.shape[0] - 2, -1, -1):
        np.maximum(out[:, k], out[:, k + 1] * (t_grid[k] / t_grid[k + 1]), out=out[:, k])
    return out


def _width_samples(
    center: SupportVector,
    t_grid: np.ndarray,
    num_gaussians: int,
    seed,
    budget: SolverBudget,
    vertex_bound: Optional[float],
    center_witnesses: Optional[np.ndarray],
):
    design = center.design
    gen = _gen(seed)
    G = gen.standard_normal((num_gaussians, design.n))
    # Knots at every other grid point suffice: values between knots come from
    # chord interpolation, which stays a valid lower bound.  One tail knot
    # past the grid partially covers the top grid points even when the cone
    # pulls the projection radius below the requested scale; beyond the last
    # knot the width reads flat, which only deepens the lower bias there.
    t_max = t_grid[-1]
    if t_grid.shape[0] == 1:
        scales = np.array([t_max, 2.0 * t_max])
    else:
        scales = np.unique(np.concatenate([t_grid[::2], [t_max, 2.0 * t_max]]))
    r, v, worst, failures, total_it = _path_knots(
        center.values, design, scales, G, budget, vertex_bound, center_witnesses
    )
    samples = _interp_knots(t_grid, r, v)
    return samples, worst, failures, total_it


def gaussian_width(
    ball: LocalBall,
    design: Optional[DesignSet] = None,
    num_gaussians: int = DEFAULT_NUM_GAUSSIANS,
    budget: Optional[SolverBudget] = None,
    seed=0,
    center_witnesses: Optional[np.ndarray] = None,
):
    """Estimate the Gaussian width of a localized cone ball.

    Returns (estimate, standard error) over num_gaussians draws.  A zero
    radius is the singleton case and returns (0, 0) exactly.  Inner-solver
    budget exhaustion is not fatal; it only lowers the (already lower-biased)
    estimate.  center_witnesses, when the caller knows points realizing the
    center, warm-start every path at the exact center.
    """
    if design is not None and design is not ball.design:
        if design.n != ball.design.n or design.dim != ball.design.dim or not np.array_equal(
            design.points, ball.design.points
        ):
            raise ValueError("ball center lives on a different design")
    if num_gaussians < 2:
        raise ValueError("need at least two Gaussian draws")
    if ball.radius == 0.0:
        return 0.0, 0.0
    t_grid = np.array([ball.radius])
    samples, _, _, _ = _width_samples(
        ball.center,
        t_grid,
        num_gaussians,
        seed,
        budget or _INNER_BUDGET,
        ball.vertex_bound,
        center_witnesses,
    )
    col = samples[:, 0]
    est = float(col.mean())
    se = float(col.std(ddof=1) / math.sqrt(col.shape[0]))
    return est, se


def _default_t_grid(lo: float, hi: float, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    return np.geomspace(lo, hi, points)


def h_profile(
    center: SupportVector,
    design: Optional[DesignSet] = None,
    t_grid=None,
    num_gaussians: int = DEFAULT_NUM_GAUSSIANS,
    seed=0,
    budget: Optional[SolverBudget] = None,
    vertex_bound: Optional[float] = None,
    center_witnesses: Optional[np.ndarray] = None,
    width_fn: Optional[Callable[[float], float]] = None,
    center_label: str = "center",
    noise_sigma: float = 1.0,
) -> WidthProfile:
    """Profile H(t) = sigma W(B(center,t)) - t^2/2 over a radius grid.

    All t values share the same Gaussian draws (a single solution path per
    draw serves the whole grid), so monotonicity comparisons are not noise
    dominated.  t_f_hat is the grid argmax of H refined by a three-point
    parabola; an argmax at the right edge sets extend_grid, since the true
    maximizer then lies beyond the grid.

    The width column always reports the unit-noise width; noise_sigma scales
    only the width term inside H (and hence t_f_hat), matching how a noise
    level enters the localized-complexity balance.

    width_fn substitutes an exact width oracle for the Monte Carlo machinery
    (se = 0); it exists for calibration and tests.
    """
    if noise_sigma <= 0:
        raise ValueError("noise_sigma must be positive")
    if design is not None and design is not center.design:
        if not np.array_equal(design.points, center.design.points):
            raise ValueError("center lives on a different design")
    if t_grid is None:
        scale = max(float(np.sqrt(np.mean(center.values**2))), 1e-6)
        t_grid = _default_t_grid(0.01 * scale, scale)
    t_grid = np.asarray(t_grid, dtype=float).reshape(-1)
    if t_grid.shape[0] < 3:
        raise ValueError("need at least three grid points")
    if not (np.all(np.diff(t_grid) > 0) and t_grid[0] > 0):
        raise ValueError("t_grid must be strictly increasing and positive")

    worst = 0.0
    failures = 0
    total_it = 0
    if width_fn is not None:
        width = np.array([float(width_fn(t)) for t in t_grid])
        se = np.zeros_like(width)
    else:
        samples, worst, failures, total_it = _width_samples(
            center,
            t_grid,
            num_gaussians,
            seed,
            budget or _INNER_BUDGET,
            vertex_bound,
            center_witnesses,
        )
        width = samples.mean(axis=0)
        se = samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])

    H = noise_sigma * width - 0.5 * t_grid**2
    k = int(np.argmax(H))
    t_f = _parabolic_argmax(t_grid, H, k)
    t_f_se = _parabolic_argmax_se(t_grid, H, noise_sigma * se, k)
    prof = WidthProfile(
        t_grid=t_grid,
        width=width,
        width_se=se,
        H=H,
        t_f_hat=t_f,
        t_f_se=t_f_se,
        num_gaussians=num_gaussians if width_fn is None else 0,
        noise_sigma=noise_sigma,
        extend_grid=bool(k == t_grid.shape[0] - 1),
        certificate_gap=worst,
        ascent_failures=failures,
        inner_iterations=total_it,
        center_label=center_label,
        seed=seed if isinstance(seed, int) else 0,
    )
    prof._design = center.design
    return prof


def _parabolic_argmax(t: np.ndarray, H: np.ndarray, k: int) -> float:
    """Vertex of the parabola through the argmax and its grid neighbors,
    clamped to the neighbor interval; edge argmaxes return the grid point."""
    if k == 0 or k == t.shape[0] - 1:
        return float(t[k])
    t0, t1, t2 = t[k - 1], t[k], t[k + 1]
    h0, h1, h2 = H[k - 1], H[k], H[k + 1]
    denom = (t1 - t0) * (h1 - h2) - (t1 - t2) * (h1 - h0)
    if denom <= 0:
        return float(t1)
    num = (t1 - t0) ** 2 * (h1 - h2) - (t1 - t2) ** 2 * (h1 - h0)
    t_star = t1 - 0.5 * num / denom
    return float(min(max(t_star, t0), t2))


def _parabolic_argmax_se(t: np.ndarray, H: np.ndarray, se: np.ndarray, k: int) -> float:
    """One-sided sensitivity of the refined argmax to the H standard errors
    at the three stencil points, combined in quadrature.  Edge argmaxes are
    not refined, so their sensitivity is reported as zero (the extend_grid
    flag covers the right edge)."""
    if k == 0 or k == t.shape[0] - 1:
        return 0.0
    base = _parabolic_argmax(t, H, k)
    acc = 0.0
    for j in (k - 1, k, k + 1):
        bumped = H.copy()
        bumped[j] += se[j]
        acc += (_parabolic_argmax(t, bumped, k) - base) ** 2
    return math.sqrt(acc)


def sandwich_check(risk_fixed: float, t_f_hat: float, t_f_se: float = 0.0) -> bool:
    """True iff the fixed-design risk lies in [0.5 t_f^2, 2 t_f^2], with the
    band endpoints widened by two standard errors of t_f_hat."""
    if risk_fixed < 0 or t_f_hat < 0 or t_f_se < 0:
        raise ValueError("inputs must be nonnegative")
    lo = 0.5 * max(t_f_hat - 2.0 * t_f_se, 0.0) ** 2
    hi = 2.0 * (t_f_hat + 2.0 * t_f_se) ** 2
    return bool(lo <= risk_fixed <= hi)


@dataclass
class TwoPointReport:
    """Numerical audit of the two-scale lower-bound certificate.

    The certificate needs a center f0 whose local width at scale s is at
    least r^2, a second center fm within delta of f0, and a width slope at
    fm of at most w' = max(w, r^2/(8 delta)) at the probe radius
    t2 = r^4/(16 delta^2 w'); together these force the estimation error at
    fm up to min{r^8/(delta^4 w^2), r^4/delta^2} (universal constants
    dropped).  t1 = r^2/(2 delta) is where the two H profiles cross.
    """

    r: float
    delta: float
    w: float
    s: float
    w_prime: float
    t1: float
    t2: float
    width_f0: float
    width_f0_se: float
    separation: float
    width_fm: float
    width_fm_se: float
    slope_fm: float
    bullet_width_lower: bool
    bullet_separation: bool
    bullet_slope_upper: bool
    implied_bound: float
    degenerate: bool = False

    @property
    def all_bullets(self) -> bool:
        return (
            not self.degenerate
            and self.bullet_width_lower
            and self.bullet_separation
            and self.bullet_slope_upper
        )


def two_point_certificate(
    f0: SupportVector,
    fm: SupportVector,
    design: DesignSet,
    params: dict,
    num_gaussians: int = DEFAULT_NUM_GAUSSIANS,
    seed=0,
    width_fn_f0: Optional[Callable[[float], float]] = None,
    width_fn_fm: Optional[Callable[[float], float]] = None,
) -> TwoPointReport:
    """Evaluate the two-center certificate at measured widths.

    params carries the claimed constants {r, delta, w, s}.  width_fn_f0 and
    width_fn_fm replace the Monte Carlo width estimates with exact oracles
    (test doubles).  delta <= 0 or coinciding centers make the certificate
    vacuous and are flagged degenerate rather than rejected.
    """
    for key in ("r", "delta", "w", "s"):
        if key not in params:
            raise ValueError(f"params missing {key!r}")
    r, delta, w, s = (float(params[k]) for k in ("r", "delta", "w", "s"))
    for tag, sv in (("f0", f0), ("fm", fm)):
        if sv.design is not design and not np.array_equal(sv.design.points, design.points):
            raise ValueError(f"{tag} lives on a different design")
    sep = float(np.sqrt(np.mean((f0.values - fm.values) ** 2)))
    degenerate = delta <= 0 or sep == 0.0 or r <= 0 or w <= 0 or s <= 0

    if degenerate:
        w_prime = t1 = t2 = 0.0
        wf0 = se0 = wfm = sem = slope = 0.0
        b1 = b2 = b3 = False
        bound = 0.0
    else:
        w_prime = max(w, r**2 / (8.0 * delta))
        t1 = r**2 / (2.0 * delta)
        t2 = r**4 / (16.0 * delta**2 * w_prime)
        if width_fn_f0 is not None:
            wf0, se0 = float(width_fn_f0(s)), 0.0
        else:
            wf0, se0 = gaussian_width(
                LocalBall(center=f0, radius=s), num_gaussians=num_gaussians, seed=seed
            )
        if width_fn_fm is not None:
            wfm, sem = float(width_fn_fm(t2)), 0.0
        else:
            wfm, sem = gaussian_width(
                LocalBall(center=fm, radius=t2),
                num_gaussians=num_gaussians,
                seed=_shift_seed(seed, 1),
            )
        slope = wfm / t2 if t2 > 0 else math.inf
        b1 = wf0 + 2.0 * se0 >= r**2
        b2 = sep <= delta
        b3 = wfm - 2.0 * sem <= w_prime * t2
        bound = min(r**8 / (delta**4 * w**2), r**4 / delta**2)

    return TwoPointReport(
        r=r,
        delta=delta,
        w=w,
        s=s,
        w_prime=w_prime,
        t1=t1,
        t2=t2,
        width_f0=wf0,
        width_f0_se=se0,
        separation=sep,
        width_fm=wfm,
        width_fm_se=sem,
        slope_fm=slope,
        bullet_width_lower=b1,
        bullet_separation=b2,
        bullet_slope_upper=b3,
        implied_bound=bound,
        degenerate=degenerate,
    )


def _shift_seed(seed, k: int):
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(entropy=seed.entropy, spawn_key=seed.spawn_key + (k,))
    return np.random.SeedSequence((int(seed), k))


def _entropy_arrays(packing, log_counts):
    if log_counts is None:  # EntropyCurve-like input
        eps = np.asarray(packing.eps_grid, dtype=float)
        logs = np.asarray(packing.log_packing, dtype=float)
    else:
        eps = np.asarray(packing, dtype=float).reshape(-1)
        logs = np.asarray(log_counts, dtype=float).reshape(-1)
    if eps.shape[0] == 0:
        raise ValueError("empty entropy grid")
    if eps.shape != logs.shape:
        raise ValueError("grid and log-count shapes differ")
    if np.any(eps <= 0):
        raise ValueError("entropy scales must be positive")
    order = np.argsort(eps)
    return eps[order], np.maximum(logs[order], 0.0)


def sudakov_lower(packing, log_counts=None, *, n: int) -> float:
    """sup over the grid of eps * sqrt(log N(eps)) / sqrt(n): the packing
    lower bound on the Gaussian width, universal constant dropped."""
    eps, logs = _entropy_arrays(packing, log_counts)
    if n < 1:
        raise ValueError("n must be positive")
    return float(np.max(eps * np.sqrt(logs)) / math.sqrt(n))


def dudley_upper(covering, log_counts=None, *, n: int) -> float:
    """Discretized chaining bound: min over cutoffs eps_k of
    eps_k + n^{-1/2} * integral_{eps_k}^{eps_max} sqrt(log N(u)) du,
    the integral by the trapezoid rule on the given grid."""
    eps, logs = _entropy_arrays(covering, log_counts)
    if n < 1:
        raise ValueError("n must be positive")
    root = np.sqrt(logs)
    # tail integrals from each grid point to the right end
    segs = 0.5 * (root[1:] + root[:-1]) * np.diff(eps)
    tails = np.concatenate([np.cumsum(segs[::-1])[::-1], [0.0]])
    return float(np.min(eps + tails / math.sqrt(n)))
