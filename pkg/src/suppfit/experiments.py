"""Replicated risk sweeps, rate-exponent fits, and the high-dimension
suboptimality contrast.

Reproducibility contract: every random quantity in a sweep comes from a
generator seeded by SeedSequence((master_seed, stage, d, n, replicate))
with the fixed stage table below, so a cell's result depends only on its
coordinates and never on scheduling.  Tables are sorted by
(d, n, truth, replicate) before serialization and floats are written with
17 significant digits, which makes persisted bytes identical across runs
and across worker counts.  Wall-clock timings are kept on the in-memory
rows as diagnostics but deliberately never enter the persisted bytes.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .geometry import (
    DesignSet,
    Polytope,
    SupportVector,
    _fmt,
    _rng,
    build_regular_polytope,
    build_well_separated_design,
    sample_sphere_uniform,
    support_value,
    support_witnesses,
)
from .solver import (
    Observations,
    SolverBudget,
    SolverFailure,
    check_vertex_bound,
    fit_lse,
    risk,
)
from .widths import WidthProfile, h_profile, sandwich_check

__all__ = [
    "DATA_VERSION",
    "BALL_SURROGATE_M",
    "ExperimentConfig",
    "RiskRow",
    "RiskTable",
    "ChatterjeeRow",
    "ChatterjeeTable",
    "RateFit",
    "SuboptimalityReport",
    "TableParseError",
    "DataVersionError",
    "cell_seed",
    "run_risk_sweep",
    "fit_rate",
    "chatterjee_sweep",
    "width_contrast",
    "suboptimality_report",
    "persist",
    "load",
]

DATA_VERSION = "suppfit-data-1"

# The ball has no finite vertex list; its stand-in is a dense inscribed
# polytope whose sup approximation error sits below the noise floor at the
# n values used here.
BALL_SURROGATE_M = 4096

_STAGES = {"design": 0, "noise": 1, "probes": 2, "width": 3}


class TableParseError(ValueError):
    """A persisted table failed to parse; carries 1-based line and column."""

    def __init__(self, message: str, line: int, column: Optional[int] = None):
        where = f"line {line}" + ("" if column is None else f", column {column}")
        super().__init__(f"{message} ({where})")
        self.line = line
        self.column = column


class DataVersionError(ValueError):
    """A persisted document declares a data version this code does not read."""


def cell_seed(master_seed: int, stage: str, d: int, n: int, replicate: int) -> np.random.SeedSequence:
    """Per-cell seed: SeedSequence((master, stage code, d, n, replicate))."""
    return np.random.SeedSequence(
        (int(master_seed), _STAGES[stage], int(d), int(n), int(replicate))
    )


@dataclass
class ExperimentConfig:
    """One sweep frame: dimension, sample grid, truth, noise, and budgets.

    truth_kind selects the data-generating body: "ball" is the dense
    inscribed surrogate, "polytope" is the regular m-vertex body with
    m = truth_m or ceil(sqrt(n)) when truth_m is None (clamped to d+1),
    and "file" reads a vertex list from truth_file.
    """

    d: int
    n_grid: Sequence[int]
    truth_kind: str = "ball"
    truth_m: Optional[int] = None
    truth_file: Optional[str] = None
    sigma: float = 1.0
    replicates: int = 15
    design_mode: str = "well-separated-net"
    master_seed: int = 0
    solver_tol: float = 1e-4
    solver_max_iter: int = 60_000
    probes: int = 2048
    vertex_bound: Optional[float] = None
    restriction_radius: Optional[float] = None
    warm_start: bool = True

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("dimension must be at least 2")
        self.n_grid = tuple(int(n) for n in self.n_grid)
        if len(self.n_grid) == 0:
            raise ValueError("n_grid is empty")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be strictly increasing")
        if min(self.n_grid) < self.d + 1:
            raise ValueError("every n must be at least d + 1")
        if self.truth_kind not in ("ball", "polytope", "file"):
            raise ValueError("truth_kind must be 'ball', 'polytope', or 'file'")
        if self.truth_kind == "file" and not self.truth_file:
            raise ValueError("truth_kind 'file' needs truth_file")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.design_mode not in ("well-separated-net", "iid-uniform"):
            raise ValueError("design_mode must be 'well-separated-net' or 'iid-uniform'")
        if self.probes < 2:
            raise ValueError("probes must be at least 2")

    def budget(self) -> SolverBudget:
        return SolverBudget(tol=self.solver_tol, max_iter=self.solver_max_iter)

    def witness_bound(self) -> float:
        return 4.0 * self.d if self.vertex_bound is None else float(self.vertex_bound)

    def truth_for(self, n: int) -> Polytope:
        if self.truth_kind == "ball":
            return _cached_truth("ball", self.d, BALL_SURROGATE_M, None)
        if self.truth_kind == "polytope":
            m = self.truth_m if self.truth_m is not None else math.ceil(math.sqrt(n))
            return _cached_truth("polytope", self.d, max(int(m), self.d + 1), None)
        return _cached_truth("file", self.d, 0, self.truth_file)

    def truth_label(self, n: int) -> str:
        if self.truth_kind == "ball":
            return "ball"
        if self.truth_kind == "polytope":
            m = self.truth_m if self.truth_m is not None else math.ceil(math.sqrt(n))
            return f"polytope-m{max(int(m), self.d + 1)}"
        return "file-" + os.path.basename(str(self.truth_file))

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "n_grid": list(self.n_grid),
            "truth_kind": self.truth_kind,
            "truth_m": self.truth_m,
            "truth_file": self.truth_file,
            "sigma": self.sigma,
            "replicates": self.replicates,
            "design_mode": self.design_mode,
            "master_seed": self.master_seed,
            "solver_tol": self.solver_tol,
            "solver_max_iter": self.solver_max_iter,
            "probes": self.probes,
            "vertex_bound": self.vertex_bound,
            "restriction_radius": self.restriction_radius,
            "warm_start": self.warm_start,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**doc)


@lru_cache(maxsize=16)
def _cached_truth(kind: str, d: int, m: int, path: Optional[str]) -> Polytope:
    if kind == "ball":
        return build_regular_polytope(m, d, seed=0)
    if kind == "polytope":
        return build_regular_polytope(m, d, seed=1)
    with open(path, "r", encoding="utf-8") as fh:
        body = Polytope.from_json(fh.read())
    if body.dim != d:
        raise ValueError(f"truth file has dimension {body.dim}, config says {d}")
    return body


def _make_design(config: ExperimentConfig, n: int, replicate: int) -> DesignSet:
    seed = cell_seed(config.master_seed, "design", config.d, n, replicate)
    if config.design_mode == "iid-uniform":
        return sample_sphere_uniform(n, config.d, seed)
    return build_well_separated_design(n, config.d, seed)


@dataclass
class RiskRow:
    """One (n, replicate) cell of a risk sweep.  wall_time is diagnostics
    only and is not persisted."""

    d: int
    n: int
    truth: str
    replicate: int
    risk_fixed: float
    risk_population: float
    population_se: float
    kkt_residual: float
    vertex_bound_ok: bool
    converged: bool
    wall_time: float = 0.0


_RISK_COLUMNS = (
    "d,n,truth,replicate,risk_fixed,risk_population,population_se,"
    "kkt_residual,vertex_bound_ok,converged"
)


@dataclass
class RiskTable:
    """Sorted risk-sweep rows plus the resolved config echo."""

    rows: list
    config: dict
    version: str = DATA_VERSION

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: (r.d, r.n, r.truth, r.replicate))

    @property
    def failures(self) -> int:
        return sum(1 for r in self.rows if not r.converged)

    def to_csv(self) -> str:
        head = {"version": self.version, "kind": "risk-sweep", "config": self.config}
        lines = ["# " + json.dumps(head, sort_keys=True), _RISK_COLUMNS]
        for r in self.rows:
            lines.append(
                ",".join(
                    (
                        str(r.d),
                        str(r.n),
                        r.truth,
                        str(r.replicate),
                        _fmt(r.risk_fixed),
                        _fmt(r.risk_population),
                        _fmt(r.population_se),
                        _fmt(r.kkt_residual),
                        str(int(r.vertex_bound_ok)),
                        str(int(r.converged)),
                    )
                )
            )
        return "\n".join(lines) + "\n"


def _risk_cell(payload) -> RiskRow:
    config, n, replicate = payload
    start = time.perf_counter()
    design = _make_design(config, n, replicate)
    truth = config.truth_for(n)
    h_true = support_value(truth, design.points)
    noise = _rng(cell_seed(config.master_seed, "noise", config.d, n, replicate))
    y = h_true + config.sigma * noise.standard_normal(n)
    obs = Observations(design=design, y=y, sigma=config.sigma)
    init = support_witnesses(truth, design.points) if config.warm_start else None
    try:
        fit = fit_lse(
            obs,
            restriction_radius=config.restriction_radius,
            budget=config.budget(),
            init_witnesses=init,
        )
        converged = True
    except SolverFailure as exc:
        fit = exc.fit
        converged = False
    rr = risk(
        fit, truth, config.probes, cell_seed(config.master_seed, "probes", config.d, n, replicate)
    )
    return RiskRow(
        d=config.d,
        n=n,
        truth=config.truth_label(n),
        replicate=replicate,
        risk_fixed=rr.fixed,
        risk_population=rr.population,
        population_se=rr.population_se,
        kkt_residual=fit.kkt_residual,
        vertex_bound_ok=check_vertex_bound(fit, config.witness_bound()),
        converged=converged,
        wall_time=time.perf_counter() - start,
    )


def _map_cells(fn, cells, workers: int):
    if workers <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells, chunksize=1))


def run_risk_sweep(config: ExperimentConfig, workers: int = 1) -> RiskTable:
    """Fit every (n, replicate) cell of the config and collect both risks.

    Each cell draws a fresh design and noise vector from its own seeds.
    Solver failures are recorded as rows with converged=False (carrying the
    best iterate's risks) so downstream fits can exclude and count them.
    The result is independent of the worker count.
    """
    cells = [(config, n, rep) for n in config.n_grid for rep in range(config.replicates)]
    rows = _map_cells(_risk_cell, cells, workers)
    return RiskTable(rows=rows, config=config.to_dict())


@dataclass
class RateFit:
    """OLS fit of log mean-risk against log n.

    mean_risk holds the per-n trimmed means the slope was fitted to;
    mean_risk_raw the untrimmed means (both keyed by n, reported for
    transparency since trimming is a stabilizer, not a model choice).
    """

    slope: float
    intercept: float
    stderr: float
    n_used: tuple
    target_exponent: Optional[float] = None
    mean_risk: dict = field(default_factory=dict)
    mean_risk_raw: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "n_used": list(self.n_used),
            "target_exponent": self.target_exponent,
            "mean_risk": {str(k): v for k, v in self.mean_risk.items()},
            "mean_risk_raw": {str(k): v for k, v in self.mean_risk_raw.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RateFit":
        return cls(
            slope=float(doc["slope"]),
            intercept=float(doc["intercept"]),
            stderr=float(doc["stderr"]),
            n_used=tuple(int(v) for v in doc["n_used"]),
            target_exponent=doc.get("target_exponent"),
            mean_risk={int(k): float(v) for k, v in doc.get("mean_risk", {}).items()},
            mean_risk_raw={int(k): float(v) for k, v in doc.get("mean_risk_raw", {}).items()},
        )


def _trimmed_mean(values: np.ndarray) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    k = int(0.02 * v.shape[0])
    if k > 0:
        v = v[k:-k]
    return float(v.mean())


def fit_rate(
    table: RiskTable,
    truth_filter: str,
    value: str = "risk_fixed",
    target_exponent: Optional[float] = None,
) -> RateFit:
    """Least-squares rate exponent through per-n trimmed mean risks.

    truth_filter selects rows whose truth label starts with it (so
    "polytope" collects the per-n m labels).  Requires at least three
    distinct n, each with at least two converged replicates.
    """
    if value not in ("risk_fixed", "risk_population"):
        raise ValueError("value must be risk_fixed or risk_population")
    rows = [r for r in table.rows if r.converged and r.truth.startswith(truth_filter)]
    if not truth_filter or not rows:
        raise ValueError(f"truth filter {truth_filter!r} matched no converged rows")
    by_n: dict = {}
    for r in rows:
        by_n.setdefault(r.n, []).append(getattr(r, value))
    by_n = {n: np.array(v) for n, v in by_n.items() if len(v) >= 2}
    if len(by_n) < 3:
        raise ValueError("need at least 3 distinct n with 2+ converged replicates")
    ns = np.array(sorted(by_n))
    trimmed = np.array([_trimmed_mean(by_n[n]) for n in ns])
    raw = np.array([float(by_n[n].mean()) for n in ns])
    if np.any(trimmed <= 0):
        raise ValueError("nonpositive mean risk; rate exponent undefined")
    x = np.log(ns.astype(float))
    y = np.log(trimmed)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = max(x.shape[0] - 2, 1)
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(float(np.sum(resid**2)) / dof / sxx)
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        stderr=stderr,
        n_used=tuple(int(n) for n in ns),
        target_exponent=target_exponent,
        mean_risk={int(n): float(v) for n, v in zip(ns, trimmed)},
        mean_risk_raw={int(n): float(v) for n, v in zip(ns, raw)},
    )


@dataclass
class ChatterjeeRow:
    """One replicate of the fixed-point sandwich experiment.  The width
    profile is shared by all replicates at the same n (one design per n),
    so t_f_hat repeats within an n block."""

    d: int
    n: int
    truth: str
    replicate: int
    risk_fixed: float
    t_f_hat: float
    t_f_se: float
    sandwich_pass: bool
    extend_grid: bool
    converged: bool
    wall_time: float = 0.0


_CHATTERJEE_COLUMNS = (
    "d,n,truth,replicate,risk_fixed,t_f_hat,t_f_se,sandwich_pass,extend_grid,converged"
)


@dataclass
class ChatterjeeTable:
    rows: list
    config: dict
    version: str = DATA_VERSION

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: (r.d, r.n, r.truth, r.replicate))

    @property
    def failures(self) -> int:
        return sum(1 for r in self.rows if not r.converged)

    def pass_fraction(self) -> float:
        good = [r for r in self.rows if r.converged]
        if not good:
            return 0.0
        return sum(1 for r in good if r.sandwich_pass) / len(good)

    def to_csv(self) -> str:
        head = {"version": self.version, "kind": "chatterjee-sweep", "config": self.config}
        lines = ["# " + json.dumps(head, sort_keys=True), _CHATTERJEE_COLUMNS]
        for r in self.rows:
            lines.append(
                ",".join(
                    (
                        str(r.d),
                        str(r.n),
                        r.truth,
                        str(r.replicate),
                        _fmt(r.risk_fixed),
                        _fmt(r.t_f_hat),
                        _fmt(r.t_f_se),
                        str(int(r.sandwich_pass)),
                        str(int(r.extend_grid)),
                        str(int(r.converged)),
                    )
                )
            )
        return "\n".join(lines) + "\n"


def _width_grid_for(center_values: np.ndarray, lo: Optional[float], hi: Optional[float], points: int) -> np.ndarray:
    scale = max(float(np.sqrt(np.mean(center_values**2))), 1e-6)
    lo = 0.05 * scale if lo is None else lo
    hi = 1.7 * scale if hi is None else hi
    return np.geomspace(lo, hi, points)


def truth_profile(
    config: ExperimentConfig,
    n: int,
    replicate: int = 0,
    num_gaussians: int = 16,
    width_lo: Optional[float] = None,
    width_hi: Optional[float] = None,
    width_points: int = 10,
    design: Optional[DesignSet] = None,
) -> WidthProfile:
    """Localized width profile centered at the configured truth.

    The design defaults to the cell design of (n, replicate); pass one in to
    share it across several profiles (common random numbers come from the
    width-stage seed, which depends on the replicate, not on the truth)."""
    if design is None:
        design = _make_design(config, n, replicate)
    truth = config.truth_for(n)
    h_true = support_value(truth, design.points)
    center = SupportVector(values=h_true, design=design)
    grid = _width_grid_for(h_true, width_lo, width_hi, width_points)
    return h_profile(
        center,
        t_grid=grid,
        num_gaussians=num_gaussians,
        seed=cell_seed(config.master_seed, "width", config.d, n, replicate),
        vertex_bound=config.restriction_radius,
        center_witnesses=support_witnesses(truth, design.points),
        center_label=config.truth_label(n),
        noise_sigma=config.sigma if config.sigma > 0 else 1.0,
    )


def chatterjee_sweep(
    config: ExperimentConfig,
    num_gaussians: int = 16,
    width_lo: Optional[float] = None,
    width_hi: Optional[float] = None,
    width_points: int = 10,
) -> ChatterjeeTable:
    """Risk replicates against the fixed-point prediction, one design per n.

    The sandwich bound concerns a fixed (design, truth) pair with noise as
    the only randomness, so each n uses the replicate-0 design, profiles the
    truth on it once, and then reuses t_f_hat for every noise replicate."""
    rows = []
    for n in config.n_grid:
        design = _make_design(config, n, 0)
        truth = config.truth_for(n)
        h_true = support_value(truth, design.points)
        label = config.truth_label(n)
        prof = truth_profile(
            config,
            n,
            replicate=0,
            num_gaussians=num_gaussians,
            width_lo=width_lo,
            width_hi=width_hi,
            width_points=width_points,
            design=design,
        )
        init = support_witnesses(truth, design.points) if config.warm_start else None
        for rep in range(config.replicates):
            start = time.perf_counter()
            noise = _rng(cell_seed(config.master_seed, "noise", config.d, n, rep))
            y = h_true + config.sigma * noise.standard_normal(n)
            obs = Observations(design=design, y=y, sigma=config.sigma)
            try:
                fit = fit_lse(
                    obs,
                    restriction_radius=config.restriction_radius,
                    budget=config.budget(),
                    init_witnesses=init,
                )
                converged = True
            except SolverFailure as exc:
                fit = exc.fit
                converged = False
            rf = float(np.mean((fit.h_hat.values - h_true) ** 2))
            rows.append(
                ChatterjeeRow(
                    d=config.d,
                    n=n,
                    truth=label,
                    replicate=rep,
                    risk_fixed=rf,
                    t_f_hat=prof.t_f_hat,
                    t_f_se=prof.t_f_se,
                    sandwich_pass=sandwich_check(rf, prof.t_f_hat, prof.t_f_se),
                    extend_grid=prof.extend_grid,
                    converged=converged,
                    wall_time=time.perf_counter() - start,
                )
            )
    return ChatterjeeTable(rows=rows, config=config.to_dict())


def width_contrast(
    config_a: ExperimentConfig,
    config_b: ExperimentConfig,
    n: int,
    instances: int,
    num_gaussians: int = 12,
    width_lo: Optional[float] = None,
    width_hi: Optional[float] = None,
    width_points: int = 8,
) -> list:
    """Per-instance t_f comparison of two truths on shared designs.

    Both configs must agree on d, design_mode, and master_seed so instance
    k gives the same design and the same Gaussian draws to both truths
    (common random numbers); what differs is only the profile center."""
    if (config_a.d, config_a.design_mode, config_a.master_seed) != (
        config_b.d,
        config_b.design_mode,
        config_b.master_seed,
    ):
        raise ValueError("configs must share d, design_mode, and master_seed")
    out = []
    for k in range(instances):
        design = _make_design(config_a, n, k)
        prof_a, prof_b = (
            truth_profile(
                cfg,
                n,
                replicate=k,
                num_gaussians=num_gaussians,
                width_lo=width_lo,
                width_hi=width_hi,
                width_points=width_points,
                design=design,
            )
            for cfg in (config_a, config_b)
        )
        out.append(
            {
                "n": n,
                "replicate": k,
                "truth_a": config_a.truth_label(n),
                "truth_b": config_b.truth_label(n),
                "t_f_a": prof_a.t_f_hat,
                "t_f_b": prof_b.t_f_hat,
                "extend_grid": bool(prof_a.extend_grid or prof_b.extend_grid),
            }
        )
    return out


@dataclass
class SuboptimalityReport:
    """Rate fits and risk ratios contrasting a polytope truth with the ball.

    The rate targets are the two candidate exponents for the dimension; at
    desk scale the report checks ordering and ratio growth, not the gap
    between the exponents themselves.
    """

    d: int
    target_lse: float
    target_minimax: float
    rate_ball: RateFit
    rate_polytope: RateFit
    n_common: tuple
    risk_ratio: dict
    tf_pairs: list = field(default_factory=list)
    tf_win_fraction: Optional[float] = None
    version: str = DATA_VERSION

    def to_json(self) -> str:
        doc = {
            "version": self.version,
            "kind": "suboptimality-report",
            "d": self.d,
            "target_lse": self.target_lse,
            "target_minimax": self.target_minimax,
            "rate_ball": self.rate_ball.to_dict(),
            "rate_polytope": self.rate_polytope.to_dict(),
            "n_common": list(self.n_common),
            "risk_ratio": {str(k): v for k, v in self.risk_ratio.items()},
            "tf_pairs": self.tf_pairs,
            "tf_win_fraction": self.tf_win_fraction,
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SuboptimalityReport":
        doc = json.loads(text)
        if doc.get("version") != DATA_VERSION:
            raise DataVersionError(
                f"report version {doc.get('version')!r}, expected {DATA_VERSION!r}"
            )
        return cls(
            d=int(doc["d"]),
            target_lse=float(doc["target_lse"]),
            target_minimax=float(doc["target_minimax"]),
            rate_ball=RateFit.from_dict(doc["rate_ball"]),
            rate_polytope=RateFit.from_dict(doc["rate_polytope"]),
            n_common=tuple(int(v) for v in doc["n_common"]),
            risk_ratio={int(k): float(v) for k, v in doc["risk_ratio"].items()},
            tf_pairs=list(doc.get("tf_pairs", [])),
            tf_win_fraction=doc.get("tf_win_fraction"),
        )


def suboptimality_report(
    ball_table: RiskTable,
    polytope_table: RiskTable,
    tf_pairs: Optional[list] = None,
) -> SuboptimalityReport:
    """Contrast the polytope-truth sweep against the ball-truth sweep.

    Reports both rate fits (ball against the small-dimension exponent
    -4/(d+3), polytope against -2/(d-1)), the per-n trimmed-mean risk ratio
    polytope/ball, and, when given, the per-instance t_f comparisons."""
    d = int(ball_table.config["d"])
    if int(polytope_table.config["d"]) != d:
        raise ValueError("tables have different dimensions")
    target_minimax = -4.0 / (d + 3)
    target_lse = -2.0 / (d - 1)
    rate_ball = fit_rate(ball_table, "ball", target_exponent=target_minimax)
    rate_poly = fit_rate(polytope_table, "polytope", target_exponent=target_lse)
    n_common = tuple(sorted(set(rate_ball.mean_risk) & set(rate_poly.mean_risk)))
    if not n_common:
        raise ValueError("the sweeps share no n values")
    ratio = {n: rate_poly.mean_risk[n] / rate_ball.mean_risk[n] for n in n_common}
    win = None
    pairs = list(tf_pairs or [])
    if pairs:
        win = sum(1 for p in pairs if p["t_f_b"] > p["t_f_a"]) / len(pairs)
    return SuboptimalityReport(
        d=d,
        target_lse=target_lse,
        target_minimax=target_minimax,
        rate_ball=rate_ball,
        rate_polytope=rate_poly,
        n_common=n_common,
        risk_ratio=ratio,
        tf_pairs=pairs,
        tf_win_fraction=win,
    )


def persist(obj, path: str) -> None:
    """Write a table (CSV) or report (JSON) to path."""
    if isinstance(obj, (RiskTable, ChatterjeeTable)):
        text = obj.to_csv()
    elif isinstance(obj, SuboptimalityReport):
        text = obj.to_json()
    else:
        raise TypeError(f"cannot persist {type(obj).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _parse_bool_field(token: str, line: int, column: int) -> bool:
    if token == "0":
        return False
    if token == "1":
        return True
    raise TableParseError(f"expected 0/1 flag, got {token!r}", line, column)


def _parse_float_field(token: str, line: int, column: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise TableParseError(f"not a number: {token!r}", line, column) from None


def _parse_int_field(token: str, line: int, column: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise TableParseError(f"not an integer: {token!r}", line, column) from None


def load(path: str):
    """Inverse of persist; dispatches on the document's declared kind.

    Timing diagnostics are not stored, so loaded rows carry wall_time 0.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return SuboptimalityReport.from_json(text)
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise TableParseError("missing '# ' JSON header", 1)
    try:
        head = json.loads(lines[0][2:])
    except json.JSONDecodeError as exc:
        raise TableParseError(f"bad JSON header: {exc.msg}", 1, exc.colno + 2) from None
    version = head.get("version")
    if version != DATA_VERSION:
        raise DataVersionError(f"table version {version!r}, expected {DATA_VERSION!r}")
    kind = head.get("kind")
    if kind == "risk-sweep":
        columns, row_parser = _RISK_COLUMNS, _parse_risk_row
    elif kind == "chatterjee-sweep":
        columns, row_parser = _CHATTERJEE_COLUMNS, _parse_chatterjee_row
    else:
        raise TableParseError(f"unknown table kind {kind!r}", 1)
    if len(lines) < 2 or lines[1] != columns:
        raise TableParseError("unexpected column header", 2)
    rows = []
    width = len(columns.split(","))
    for i, ln in enumerate(lines[2:], start=3):
        if not ln.strip():
            continue
        parts = ln.split(",")
        if len(parts) != width:
            raise TableParseError(f"expected {width} fields, got {len(parts)}", i)
        rows.append(row_parser(parts, i))
    config = head.get("config", {})
    if kind == "risk-sweep":
        return RiskTable(rows=rows, config=config, version=version)
    return ChatterjeeTable(rows=rows, config=config, version=version)


def _parse_risk_row(parts, line: int) -> RiskRow:
    return RiskRow(
        d=_parse_int_field(parts[0], line, 1),
        n=_parse_int_field(parts[1], line, 2),
        truth=parts[2],
        replicate=_parse_int_field(parts[3], line, 4),
        risk_fixed=_parse_float_field(parts[4], line, 5),
        risk_population=_parse_float_field(parts[5], line, 6),
        population_se=_parse_float_field(parts[6], line, 7),
        kkt_residual=_parse_float_field(parts[7], line, 8),
        vertex_bound_ok=_parse_bool_field(parts[8], line, 9),
        converged=_parse_bool_field(parts[9], line, 10),
    )


def _parse_chatterjee_row(parts, line: int) -> ChatterjeeRow:
    return ChatterjeeRow(
        d=_parse_int_field(parts[0], line, 1),
        n=_parse_int_field(parts[1], line, 2),
        truth=parts[2],
        replicate=_parse_int_field(parts[3], line, 4),
        risk_fixed=_parse_float_field(parts[4], line, 5),
        t_f_hat=_parse_float_field(parts[5], line, 6),
        t_f_se=_parse_float_field(parts[6], line, 7),
        sandwich_pass=_parse_bool_field(parts[7], line, 8),
        extend_grid=_parse_bool_field(parts[8], line, 9),
        converged=_parse_bool_field(parts[9], line, 10),
    )
