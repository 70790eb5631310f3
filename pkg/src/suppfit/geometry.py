"""Spherical designs, vertex-list polytopes, and support-function evaluation.

Conventions used throughout the package: directions live on the unit sphere
S^{d-1} in R^d, convex bodies are represented by their vertex lists, and the
support function of a body K at direction u is max over x in K of <x, u>.
Distances between directions are geodesic (arc length) unless noted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "DesignSet",
    "Polytope",
    "SphereNet",
    "SupportVector",
    "sample_sphere_uniform",
    "build_well_separated_design",
    "support_value",
    "support_vector",
    "build_sphere_net",
    "build_regular_polytope",
    "approx_error_sup",
    "min_geodesic_separation",
    "net_multiplicity",
]

# Calibrated floor for the separation of greedy net designs, as a multiple
# of n^(-1/(d-1)).  Checked at construction time for net-mode designs.
DESIGN_SEP_CONSTANT = 0.5

# Candidate pool size per requested point for greedy farthest-point passes.
POOL_FACTOR = 16

_UNIT_NORM_TOL = 1e-12
_VERTEX_DEDUP_TOL = 1e-10


def _rng(seed) -> np.random.Generator:
    """Deterministic generator; seed may be an int or a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def _as_points(points, dim: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ValueError(f"expected an (n, {dim}) point array, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    return pts


@dataclass
class DesignSet:
    """A finite set of evaluation directions on the unit sphere.

    Parameters
    ----------
    dim : ambient dimension d (directions live on S^{d-1}).
    points : (n, d) array of unit vectors.
    mode : "iid" or "net", how the directions were produced.
    seed : generator seed used to produce the points, if any.
    separation : measured minimum pairwise geodesic distance (net mode).
    sep_constant : separation * n^(1/(d-1)), recorded for net mode.
    """

    dim: int
    points: np.ndarray
    mode: str = "iid"
    seed: Optional[int] = None
    separation: Optional[float] = None
    sep_constant: Optional[float] = None

    def __post_init__(self):
        self.points = _as_points(self.points, self.dim)
        if self.n < 1:
            raise ValueError("a design needs at least one direction")
        norms = np.linalg.norm(self.points, axis=1)
        if np.max(np.abs(norms - 1.0)) > _UNIT_NORM_TOL:
            raise ValueError("design directions must be unit vectors (within 1e-12)")
        if self.mode not in ("iid", "net"):
            raise ValueError(f"unknown design mode {self.mode!r}")
        if self.mode == "net":
            sep = min_geodesic_separation(self.points)
            floor = DESIGN_SEP_CONSTANT * self.n ** (-1.0 / (self.dim - 1)) if self.dim > 1 else 0.0
            if self.n > 1 and sep < floor:
                raise ValueError(
                    f"net design separation {sep:.3g} below {DESIGN_SEP_CONSTANT} * n^(-1/(d-1)) = {floor:.3g}"
                )
            self.separation = sep
            self.sep_constant = sep * self.n ** (1.0 / (self.dim - 1)) if self.dim > 1 else math.inf

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def to_json(self) -> str:
        return _points_doc_to_json(self.dim, self.points, self.mode, self.seed)

    @classmethod
    def from_json(cls, text: str) -> "DesignSet":
        doc = _load_points_doc(text)
        return cls(dim=doc["dim"], points=doc["points"], mode=doc["mode"] or "iid", seed=doc["seed"])


@dataclass
class Polytope:
    """A convex body given by its vertex list (no facet structure kept).

    Vertices within 1e-10 of an earlier vertex are dropped at construction.
    """

    dim: int
    vertices: np.ndarray
    mode: str = "vertices"
    seed: Optional[int] = None

    def __post_init__(self):
        verts = _as_points(self.vertices, self.dim)
        if verts.shape[0] < 1:
            raise ValueError("a polytope needs at least one vertex")
        self.vertices = _dedup_rows(verts, _VERTEX_DEDUP_TOL)

    @property
    def m(self) -> int:
        return self.vertices.shape[0]

    def to_json(self) -> str:
        return _points_doc_to_json(self.dim, self.vertices, self.mode, self.seed)

    @classmethod
    def from_json(cls, text: str) -> "Polytope":
        doc = _load_points_doc(text)
        return cls(dim=doc["dim"], vertices=doc["points"], mode=doc["mode"] or "vertices", seed=doc["seed"])


@dataclass
class SphereNet:
    """A well-spread finite subset of the sphere with a probed covering radius."""

    dim: int
    points: np.ndarray
    seed: Optional[int]
    covering_radius: float
    multiplicity_bound: int
    probes_used: int

    def __post_init__(self):
        self.points = _as_points(self.points, self.dim)

    @property
    def m(self) -> int:
        return self.points.shape[0]


@dataclass
class SupportVector:
    """Support-function values of one body evaluated on one design."""

    values: np.ndarray
    design: DesignSet

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.shape[0] != self.design.n:
            raise ValueError("value count does not match the design size")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def to_json(self) -> str:
        vals = ", ".join(_fmt(v) for v in self.values)
        return '{"n": %d, "values": [%s]}' % (self.n, vals)


def _dedup_rows(rows: np.ndarray, tol: float) -> np.ndarray:
    m = rows.shape[0]
    if m <= 1:
        return rows
    if m <= 2048:
        keep = np.ones(m, dtype=bool)
        for i in range(1, m):
            if not keep[:i].any():
                continue
            d = np.linalg.norm(rows[:i][keep[:i]] - rows[i], axis=1)
            if d.min() <= tol:
                keep[i] = False
        return rows[keep]
    # Large vertex lists come from our own generators and carry no duplicates;
    # a rounding grid catches exact and near-exact repeats cheaply.
    _, idx = np.unique(np.round(rows / max(tol, 1e-12)), axis=0, return_index=True)
    return rows[np.sort(idx)]


def min_geodesic_separation(points: np.ndarray) -> float:
    """Minimum pairwise geodesic distance of a point set on the sphere."""
    n = points.shape[0]
    if n < 2:
        return math.inf
    g = np.clip(points @ points.T, -1.0, 1.0)
    np.fill_diagonal(g, -1.0)
    return float(np.arccos(np.max(g)))


def sample_sphere_uniform(n: int, d: int, seed) -> DesignSet:
    """Draw n iid uniform directions on S^{d-1}.

    Gaussian draws are normalized; the (measure-zero) event of a zero draw is
    retried so the unit-norm contract holds unconditionally.
    """
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    gen = _rng(seed)
    pts = gen.standard_normal((n, d))
    norms = np.linalg.norm(pts, axis=1)
    while np.any(norms < 1e-12):
        bad = norms < 1e-12
        pts[bad] = gen.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(pts, axis=1)
    pts /= norms[:, None]
    return DesignSet(dim=d, points=pts, mode="iid", seed=_seed_label(seed))


def _seed_label(seed) -> Optional[int]:
    return seed if isinstance(seed, int) else None


def _greedy_farthest_points(n: int, d: int, gen: np.random.Generator, pool_factor: int = POOL_FACTOR) -> np.ndarray:
    """Greedy maximin selection from a random pool, with antipodes of chosen
    points added as candidates so small configurations come out exact."""
    q = max(pool_factor * n, 256)
    pool = gen.standard_normal((q, d))
    pool /= np.linalg.norm(pool, axis=1, keepdims=True)
    chosen = np.empty((n, d))
    chosen[0] = pool[0]
    if n == 1:
        return chosen
    # mind[i] tracks the geodesic distance from pool[i] to the chosen set.
    pool = np.vstack([pool, -pool[0][None, :]])
    mind = np.arccos(np.clip(pool @ chosen[0], -1.0, 1.0))
    for k in range(1, n):
        i = int(np.argmax(mind))
        chosen[k] = pool[i]
        pool = np.vstack([pool, -pool[i][None, :]])
        anti_d = np.arccos(np.clip(chosen[:k] @ (-pool[i]), -1.0, 1.0)).min()
        mind = np.append(mind, anti_d)
        np.minimum(mind, np.arccos(np.clip(pool @ chosen[k], -1.0, 1.0)), out=mind)
    return chosen


def build_well_separated_design(n: int, d: int, seed) -> DesignSet:
    """Greedy farthest-point design of n directions on S^{d-1}.

    Requires n >= d + 1.  The measured separation and its constant relative
    to n^(-1/(d-1)) are recorded on the returned design.
    """
    if n < d + 1:
        raise ValueError(f"well-separated design needs n >= d + 1, got n={n}, d={d}")
    gen = _rng(seed)
    if d == 2:
        pts = _circle_points(n, gen)
    else:
        pts = _greedy_farthest_points(n, d, gen)
    return DesignSet(dim=d, points=pts, mode="net", seed=_seed_label(seed))


def _circle_points(m: int, gen: np.random.Generator) -> np.ndarray:
    # Equally spaced with a random rotation; the planar optimum is closed form.
    theta = gen.uniform(0.0, 2.0 * math.pi) + 2.0 * math.pi * np.arange(m) / m
    return np.column_stack([np.cos(theta), np.sin(theta)])


def support_value(body: Polytope, directions: np.ndarray) -> np.ndarray:
    """Support function of the body at each direction, max over vertices."""
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    if dirs.shape[1] != body.dim:
        raise ValueError("direction dimension does not match the body")
    out = np.empty(dirs.shape[0])
    chunk = max(1, int(4_000_000 // max(body.m, 1)))
    for lo in range(0, dirs.shape[0], chunk):
        hi = min(lo + chunk, dirs.shape[0])
        out[lo:hi] = (dirs[lo:hi] @ body.vertices.T).max(axis=1)
    return out


def support_vector(body: Polytope, design: DesignSet) -> SupportVector:
    """Evaluate the body's support function on a design."""
    return SupportVector(values=support_value(body, design.points), design=design)


def support_witnesses(body: Polytope, directions: np.ndarray) -> np.ndarray:
    """Vertices attaining the support value at each direction."""
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    idx = np.empty(dirs.shape[0], dtype=int)
    chunk = max(1, int(4_000_000 // max(body.m, 1)))
    for lo in range(0, dirs.shape[0], chunk):
        hi = min(lo + chunk, dirs.shape[0])
        idx[lo:hi] = (dirs[lo:hi] @ body.vertices.T).argmax(axis=1)
    return body.vertices[idx]


def build_sphere_net(m: int, d: int, seed, probes: Optional[int] = None) -> SphereNet:
    """Construct an m-point net on S^{d-1} and certify it by probing.

    Parameters
    ----------
    m, d : net size and ambient dimension, m >= 2, d >= 2.
    seed : generator seed.
    probes : probe directions used to measure the covering radius and the
        multiplicity bound; defaults to 100 * m.

    The covering radius is the largest probed distance to the net, and the
    multiplicity bound is the largest number of net points inside one
    covering radius of any probe.  Both are measured, not asserted.
    """
    if m < 2 or d < 2:
        raise ValueError("need m >= 2 and d >= 2")
    gen = _rng(seed)
    if d == 2:
        pts = _circle_points(m, gen)
    else:
        pts = _greedy_farthest_points(m, d, gen)
    n_probes = int(probes) if probes is not None else 100 * m
    if n_probes < 100 * m and probes is None:
        n_probes = 100 * m
    cover, mult = _probe_covering(pts, n_probes, gen)
    return SphereNet(
        dim=d,
        points=pts,
        seed=_seed_label(seed),
        covering_radius=cover,
        multiplicity_bound=mult,
        probes_used=n_probes,
    )


def _probe_covering(pts: np.ndarray, n_probes: int, gen: np.random.Generator):
    d = pts.shape[1]
    cover = 0.0
    cos_rows = []
    chunk = max(1, int(8_000_000 // max(pts.shape[0], 1)))
    remaining = n_probes
    while remaining > 0:
        k = min(chunk, remaining)
        probes = gen.standard_normal((k, d))
        probes /= np.linalg.norm(probes, axis=1, keepdims=True)
        cosm = np.clip(probes @ pts.T, -1.0, 1.0)
        near = cosm.max(axis=1)
        cover = max(cover, float(np.arccos(near.min())))
        cos_rows.append(cosm)
        remaining -= k
    # Second pass for the multiplicity count at the final covering radius.
    thr = math.cos(cover) - 1e-12
    mult = 1
    for cosm in cos_rows:
        mult = max(mult, int((cosm >= thr).sum(axis=1).max()))
    return cover, mult


def build_regular_polytope(m: int, d: int, seed) -> Polytope:
    """Inscribed polytopal ball approximant with m well-spread unit vertices.

    The vertex set is the same construction as build_sphere_net but without
    the probing pass, which matters when m runs to thousands.
    """
    if m < d + 1:
        raise ValueError(f"need m >= d + 1 vertices to approximate the ball, got m={m}, d={d}")
    gen = _rng(seed)
    if d == 2:
        verts = _circle_points(m, gen)
    else:
        verts = _greedy_farthest_points(m, d, gen)
    # Guard against drift from arithmetic: vertex norms exactly 1 up to fp.
    verts = verts / np.linalg.norm(verts, axis=1, keepdims=True)
    return Polytope(dim=d, vertices=verts, mode="ball-net", seed=_seed_label(seed))


def approx_error_sup(body: Polytope, probes: int, seed) -> float:
    """Probed sup-norm error of an inscribed body against the unit ball.

    Returns max over probe directions u of (1 - h_body(u)).  Rejects bodies
    with a vertex outside the unit ball by more than 1e-9, since for those
    the quantity no longer measures an inscribed approximation.
    """
    norms = np.linalg.norm(body.vertices, axis=1)
    if norms.max() > 1.0 + 1e-9:
        raise ValueError(f"vertex norm {norms.max():.12g} exceeds 1 + 1e-9; body is not inscribed")
    gen = _rng(seed)
    worst = -math.inf
    chunk = max(1, int(8_000_000 // max(body.m, 1)))
    remaining = int(probes)
    if remaining < 1:
        raise ValueError("need at least one probe")
    while remaining > 0:
        k = min(chunk, remaining)
        dirs = gen.standard_normal((k, body.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        h = (dirs @ body.vertices.T).max(axis=1)
        worst = max(worst, float((1.0 - h).max()))
        remaining -= k
    return worst


def net_multiplicity(net: SphereNet, radius: float) -> int:
    """Largest number of net points within geodesic `radius` of any net point."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    g = np.clip(net.points @ net.points.T, -1.0, 1.0)
    return int((np.arccos(g) <= radius + 1e-12).sum(axis=1).max())


def _fmt(x: float) -> str:
    if isinstance(x, float) and (math.isnan(x) or math.isinf(x)):
        raise ValueError("cannot serialize non-finite floats")
    return format(float(x), ".17g")


def _points_doc_to_json(dim: int, points: np.ndarray, mode: Optional[str], seed: Optional[int]) -> str:
    # Floats written with 17 significant digits so parsing round-trips exactly.
    rows = ",\n    ".join("[" + ", ".join(_fmt(v) for v in row) + "]" for row in points)
    seed_s = "null" if seed is None else str(int(seed))
    mode_s = "null" if mode is None else json.dumps(mode)
    return '{\n  "dim": %d,\n  "points": [\n    %s\n  ],\n  "mode": %s,\n  "seed": %s\n}\n' % (
        dim,
        rows,
        mode_s,
        seed_s,
    )


def _load_points_doc(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"malformed point document: {e}") from None
    for key in ("dim", "points"):
        if key not in doc:
            raise ValueError(f"point document is missing key {key!r}")
    pts = np.asarray(doc["points"], dtype=float)
    return {
        "dim": int(doc["dim"]),
        "points": pts,
        "mode": doc.get("mode"),
        "seed": doc.get("seed"),
    }
