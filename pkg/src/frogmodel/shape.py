"""Rescaled visited sets, time-constant estimates and shape diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial import ConvexHull, cKDTree

from ._parallel import starmap_ordered
from .engine import IDENTITY, PassageRecord, run, visited_at
from .lattice import apply_group_element, as_site, diamond_size, l1_norm, octahedral_group
from .randomness import InitialConfigSpec, eta_array

Z95 = 1.959963984540054
UNRELIABLE_CENSORED_FRACTION = 0.2


class EstimationError(ValueError):
    """Raised when every sample needed for an estimate is censored."""


# rescaled sets ------------------------------------------------------------

@dataclass(frozen=True)
class RescaledSet:
    """Visited set at time `scale`; each cell y stands for the cube (y + (-1/2, 1/2]^d) / scale."""

    scale: int
    cells: np.ndarray

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError("rescaling needs n >= 1")
        cells = np.ascontiguousarray(np.asarray(self.cells, dtype=np.int64))
        if cells.ndim != 2:
            raise ValueError("cells must be an (N, d) array")
        object.__setattr__(self, "cells", cells)

    @property
    def dimension(self) -> int:
        return self.cells.shape[1]

    @property
    def points(self) -> np.ndarray:
        """Cell centres in rescaled coordinates."""
        return self.cells / float(self.scale)

    def __len__(self):
        return self.cells.shape[0]


def rescale(record: PassageRecord, n: int) -> RescaledSet:
    """xi_n / n, expressed relative to the record's source."""
    if n < 1:
        raise ValueError("n = 0 cannot be rescaled")
    cells = visited_at(record, n) - np.asarray(record.source, dtype=np.int64)
    return RescaledSet(int(n), cells)


def _as_rescaled(obj, n=None) -> RescaledSet:
    if isinstance(obj, RescaledSet):
        return obj
    if n is None:
        raise ValueError("a raw visited set needs its time n")
    cells = np.asarray(list(obj) if not isinstance(obj, np.ndarray) else obj, dtype=np.int64)
    return RescaledSet(int(n), cells.reshape(len(cells), -1))


# time constant --------------------------------------------------------------

@dataclass
class MuEstimate:
    """Estimate of mu(x) from T(0, n x) / n over replicas.

    `samples[r, j]` is T(0, n_j x) / n_j for replica r, NaN when censored.
    The point estimate and its normal 95% interval use the largest n.
    `ray_point` estimates mu'(x) from the occupied multiples of x; with
    p1 * ray_point close to `point` when both are reliable.
    """

    direction: tuple[int, ...]
    n_schedule: tuple[int, ...]
    replicas: int
    horizon: int
    samples: np.ndarray
    point: float
    ci_low: float
    ci_high: float
    censored: dict = field(default_factory=dict)
    unreliable: bool = False
    p1: float = 1.0
    ray_point: float | None = None
    ray_ci: tuple[float, float] | None = None
    ray_censored: int = 0
    first_replica: int = 0

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2.0

    @property
    def ray_ratio(self) -> float | None:
        """p1 * mu'-hat / mu-hat; near 1 when the two estimators agree."""
        if self.ray_point is None or not self.point:
            return None
        return self.p1 * self.ray_point / self.point

    def mean_at(self, n: int) -> float:
        col = self.samples[:, self.n_schedule.index(n)]
        col = col[~np.isnan(col)]
        return float(col.mean()) if col.size else math.nan

    def to_dict(self) -> dict:
        return {
            "direction": list(self.direction),
            "n_schedule": list(self.n_schedule),
            "replicas": self.replicas,
            "first_replica": self.first_replica,
            "horizon": self.horizon,
            "point": self.point,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "censored": {str(n): c for n, c in self.censored.items()},
            "unreliable": self.unreliable,
            "per_n_mean": {str(n): self.mean_at(n) for n in self.n_schedule},
            "p1": self.p1,
            "ray_point": self.ray_point,
            "ray_ci": list(self.ray_ci) if self.ray_ci else None,
            "ray_censored": self.ray_censored,
            "ray_ratio": self.ray_ratio,
        }


def mean_ci(values: np.ndarray) -> tuple[float, float, float]:
    """Mean with a normal-approximation 95% interval (infinite for a single value)."""
    values = np.asarray(values, dtype=float)
    m = float(values.mean())
    if values.size < 2:
        return m, -math.inf, math.inf
    half = Z95 * float(values.std(ddof=1)) / math.sqrt(values.size)
    return m, m - half, m + half


def _ray_site(spec: InitialConfigSpec, x: np.ndarray, n_max: int):
    """Largest occupied multiple v_K <= n_max of x and the count K."""
    mult = np.arange(1, n_max + 1, dtype=np.int64)
    occ = eta_array(spec, mult[:, None] * x[None, :]) >= 1
    k = int(occ.sum())
    if k == 0:
        return 0, 0
    return int(mult[occ][-1]), k


def _mu_replica(spec_dict: dict, directions: list, n_schedule: list, horizon: int, mode: str, ray: bool):
    spec = InitialConfigSpec.from_dict(spec_dict)
    d = spec.dimension
    origin = np.zeros(d, dtype=np.int64)
    dirs = [np.asarray(x, dtype=np.int64) for x in directions]
    targets = [tuple(n * x) for x in dirs for n in n_schedule]
    ray_sites = []
    if ray:
        for x in dirs:
            v, k = _ray_site(spec, x, max(n_schedule))
            ray_sites.append((tuple(v * x), k))
            if k:
                targets.append(tuple(v * x))
    if eta_array(spec, origin[None, :])[0] == 0:
        times = np.full((len(dirs), len(n_schedule)), -1, dtype=np.int64)
        rays = [(-1, k) for _, k in ray_sites]
        return times, rays
    record = run(spec, origin, horizon, mode, targets=targets)
    fp = record.first_passage
    times = np.array([[fp.get(tuple(int(c) for c in n * x), -1) for n in n_schedule] for x in dirs],
                     dtype=np.int64)
    rays = [(fp.get(tuple(int(c) for c in site), -1) if k else -1, k) for site, k in ray_sites]
    return times, rays


def estimate_mu_many(spec: InitialConfigSpec, directions: Sequence, n_schedule: Sequence[int],
                     replicas: int, horizon: int, *, mode: str = IDENTITY, ray: bool = True,
                     workers: int | None = 1, first_replica: int = 0) -> list[MuEstimate]:
    """mu-hat for several directions, sharing one run per replica.

    Replica r uses the seed derived from (master_seed, r); each run stops once
    every target n x has been visited or at the horizon.
    """
    d = spec.dimension
    directions = [as_site(x, d) for x in directions]
    for x in directions:
        if not any(x):
            raise ValueError("direction must be nonzero")
    n_schedule = [int(n) for n in n_schedule]
    if not n_schedule or any(b <= a for a, b in zip(n_schedule, n_schedule[1:])) or n_schedule[0] < 1:
        raise ValueError("n_schedule must be a strictly increasing list of positive integers")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    tasks = [(spec.for_replica(first_replica + r).to_dict(), directions, n_schedule, int(horizon), mode, ray)
             for r in range(replicas)]
    results = starmap_ordered(_mu_replica, tasks, workers)
    out = []
    for i, x in enumerate(directions):
        times = np.stack([res[0][i] for res in results])
        rays = [res[1][i] for res in results] if ray else None
        out.append(build_mu_estimate(x, n_schedule, times, horizon, spec.p1, rays, first_replica))
    return out


def build_mu_estimate(x, n_schedule: Sequence[int], times: np.ndarray, horizon: int, p1: float = 1.0,
                      rays: Sequence[tuple[int, int]] | None = None, first_replica: int = 0) -> MuEstimate:
    """MuEstimate from a (replicas, len(n_schedule)) matrix of passage times, -1 meaning censored.

    `rays` holds one (T(0, v_K x), K) pair per replica for the ray estimator.
    """
    n_schedule = [int(n) for n in n_schedule]
    times = np.asarray(times, dtype=np.int64).reshape(-1, len(n_schedule))
    replicas = times.shape[0]
    samples = np.where(times >= 0, times / np.asarray(n_schedule, dtype=float)[None, :], np.nan)
    censored = {n: int((times[:, j] < 0).sum()) for j, n in enumerate(n_schedule)}
    last = samples[:, -1]
    last = last[~np.isnan(last)]
    if last.size == 0:
        raise EstimationError(f"all samples censored for direction {tuple(x)} at n={n_schedule[-1]}")
    point, lo, hi = mean_ci(last)
    est = MuEstimate(
        direction=tuple(int(c) for c in x), n_schedule=tuple(n_schedule), replicas=replicas,
        horizon=int(horizon), samples=samples, point=point, ci_low=lo, ci_high=hi, censored=censored,
        unreliable=censored[n_schedule[-1]] > UNRELIABLE_CENSORED_FRACTION * replicas,
        p1=float(p1), first_replica=first_replica,
    )
    if rays is not None:
        vals = [t / k for t, k in rays if t >= 0 and k > 0]
        est.ray_censored = replicas - len(vals)
        if vals:
            rp, rlo, rhi = mean_ci(np.asarray(vals))
            est.ray_point, est.ray_ci = rp, (rlo, rhi)
    return est


def estimate_mu(spec: InitialConfigSpec, x, n_schedule: Sequence[int], replicas: int, horizon: int,
                **kw) -> MuEstimate:
    return estimate_mu_many(spec, [x], n_schedule, replicas, horizon, **kw)[0]


# limit shape ----------------------------------------------------------------

@dataclass(frozen=True)
class Polytope:
    """Empirical limit shape {mu-hat <= 1}.

    d = 1: the interval [vertices[0], vertices[1]]. d = 2: the star-shaped
    polygon through `vertices` (sorted by angle). d >= 3: the convex hull of
    `vertices`.
    """

    dimension: int
    vertices: np.ndarray

    def gauge(self, pts) -> np.ndarray:
        """The function whose unit sublevel set is the shape (positively homogeneous)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.dimension == 1:
            lo, hi = float(self.vertices[0, 0]), float(self.vertices[1, 0])
            x = pts[:, 0]
            return np.where(x >= 0, x / hi, x / lo)
        if self.dimension == 2:
            return self._gauge_2d(pts)
        hull = ConvexHull(self.vertices)
        a, b = hull.equations[:, :-1], hull.equations[:, -1]
        return np.maximum((pts @ a.T / -b[None, :]).max(axis=1), 0.0)

    def _gauge_2d(self, pts):
        v = self.vertices
        ang = np.arctan2(v[:, 1], v[:, 0])
        theta = np.arctan2(pts[:, 1], pts[:, 0])
        i = (np.searchsorted(ang, theta, side="right") - 1) % len(v)
        j = (i + 1) % len(v)
        a, b = v[i], v[j]
        det = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        s = (pts[:, 0] * b[:, 1] - pts[:, 1] * b[:, 0]) / det
        t = (a[:, 0] * pts[:, 1] - a[:, 1] * pts[:, 0]) / det
        out = s + t
        out[np.all(pts == 0, axis=1)] = 0.0
        return out

    def contains(self, pts, tol: float = 1e-12) -> np.ndarray:
        return self.gauge(pts) <= 1.0 + tol

    def to_dict(self) -> dict:
        return {"dimension": self.dimension, "vertices": self.vertices.tolist()}


def _direction_values(estimates) -> list[tuple[np.ndarray, float]]:
    items = estimates.items() if isinstance(estimates, Mapping) else estimates
    out = []
    for e in items:
        if isinstance(e, MuEstimate):
            x, mu = e.direction, e.point
        else:
            x, mu = e
        mu = float(mu)
        if not math.isfinite(mu) or mu <= 0:
            raise ValueError(f"estimate for {x} must be finite and positive, got {mu}")
        out.append((np.asarray(x, dtype=float), mu))
    return out


def shape_from_mu(estimates) -> Polytope:
    """Boundary points x / mu-hat(x), symmetrised over the hyperoctahedral group.

    Accepts MuEstimate objects or (direction, mu) pairs. Boundary radii of
    directions in the same orbit are averaged.
    """
    pairs = _direction_values(estimates)
    if not pairs:
        raise ValueError("no estimates given")
    d = pairs[0][0].size
    if np.linalg.matrix_rank(np.stack([x for x, _ in pairs])) < d:
        raise ValueError("directions do not span R^d")
    radii: dict[tuple, list[float]] = {}
    for x, mu in pairs:
        u = x / np.linalg.norm(x)
        r = np.linalg.norm(x) / mu
        for g in octahedral_group(d):
            key = tuple(np.round(apply_group_element(g, u), 12) + 0.0)
            radii.setdefault(key, []).append(r)
    dirs = np.array(list(radii), dtype=float)
    r = np.array([np.mean(v) for v in radii.values()])
    pts = dirs * r[:, None]
    if d == 1:
        return Polytope(1, np.array([[pts.min()], [pts.max()]]))
    if d == 2:
        order = np.argsort(np.arctan2(pts[:, 1], pts[:, 0]), kind="stable")
        return Polytope(2, pts[order])
    hull = ConvexHull(pts)
    return Polytope(d, pts[np.sort(hull.vertices)])


# metrics ----------------------------------------------------------------------

@dataclass
class ShapeMetrics:
    scale: int
    size: int
    coverage: float
    symmetry_defect: float
    convexity_defect: float
    hausdorff_to_reference: float | None = None

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "size": self.size,
            "coverage": self.coverage,
            "symmetry_defect": self.symmetry_defect,
            "convexity_defect": self.convexity_defect,
            "hausdorff_to_reference": self.hausdorff_to_reference,
        }


def _encode(cells: np.ndarray, radius: int) -> np.ndarray:
    base = 2 * radius + 1
    keys = np.zeros(cells.shape[0], dtype=np.int64)
    for j in range(cells.shape[1]):
        keys = keys * base + (cells[:, j] + radius)
    return keys


def coverage(rs: RescaledSet) -> float:
    """|xi_n intersected with D_n| / |D_n|."""
    inside = int((l1_norm(rs.cells) <= rs.scale).sum()) if len(rs) else 0
    return inside / diamond_size(rs.dimension, rs.scale)


def symmetry_defect(cells: np.ndarray) -> float:
    """max over the hyperoctahedral group of |g xi symmetric-difference xi| / |xi|."""
    cells = np.asarray(cells, dtype=np.int64)
    if cells.shape[0] == 0:
        raise ValueError("empty set")
    radius = int(np.abs(cells).max())
    keys = np.unique(_encode(cells, radius))
    size = keys.size
    worst = 0
    for g in octahedral_group(cells.shape[1]):
        gk = _encode(apply_group_element(g, cells), radius)
        common = np.isin(gk, keys, assume_unique=False).sum()
        worst = max(worst, 2 * (size - int(common)))
    return worst / size


def _affine_frame(pts: np.ndarray):
    p0 = pts.mean(axis=0)
    centred = pts - p0
    if not centred.any():
        return p0, np.zeros((pts.shape[1], 0))
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    rank = int((s > 1e-9 * max(1.0, s[0])).sum())
    return p0, vt[:rank].T


def hull_lattice_points(cells: np.ndarray) -> np.ndarray:
    """All lattice points in the convex hull of the cell centres (handles degenerate hulls)."""
    cells = np.unique(np.asarray(cells, dtype=np.int64), axis=0)
    lo, hi = cells.min(axis=0), cells.max(axis=0)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    box = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, cells.shape[1])
    p0, basis = _affine_frame(cells.astype(float))
    k = basis.shape[1]
    if k == 0:
        return cells
    rel = box - p0
    proj = rel @ basis
    in_span = np.abs(rel - proj @ basis.T).max(axis=1) < 1e-7
    q = (cells - p0) @ basis
    eps = 1e-9
    if k == 1:
        inside = (proj[:, 0] >= q.min() - eps) & (proj[:, 0] <= q.max() + eps)
    else:
        hull = ConvexHull(q)
        a, b = hull.equations[:, :-1], hull.equations[:, -1]
        inside = (proj @ a.T + b[None, :] <= eps).all(axis=1)
    return box[in_span & inside]


def convexity_defect(cells: np.ndarray) -> float:
    """Fraction of lattice points in the hull of xi that are not in xi."""
    cells = np.unique(np.asarray(cells, dtype=np.int64), axis=0)
    if cells.shape[0] == 0:
        raise ValueError("empty set")
    hull_pts = hull_lattice_points(cells)
    radius = int(max(np.abs(hull_pts).max(), np.abs(cells).max()))
    missing = ~np.isin(_encode(hull_pts, radius), _encode(cells, radius))
    return float(missing.sum()) / hull_pts.shape[0]


def hausdorff_l1(a: RescaledSet, b: RescaledSet) -> float:
    """Symmetric Hausdorff distance, in L1, between the rescaled cell-centre sets."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("hausdorff distance of an empty set")
    if a.scale == b.scale:
        pa, pb, div = a.cells.astype(float), b.cells.astype(float), float(a.scale)
    else:
        pa, pb, div = a.points, b.points, 1.0
    ab = cKDTree(pb).query(pa, p=1)[0].max()
    ba = cKDTree(pa).query(pb, p=1)[0].max()
    return float(max(ab, ba)) / div


def metrics(obj, n: int | None = None, reference: RescaledSet | None = None) -> ShapeMetrics:
    """Shape diagnostics of a RescaledSet, or of a raw visited set at time n."""
    rs = _as_rescaled(obj, n)
    if len(rs) == 0:
        raise ValueError("metrics of an empty set")
    return ShapeMetrics(
        scale=rs.scale,
        size=len(rs),
        coverage=coverage(rs),
        symmetry_defect=symmetry_defect(rs.cells),
        convexity_defect=convexity_defect(rs.cells),
        hausdorff_to_reference=None if reference is None else hausdorff_l1(rs, reference),
    )


# SVG ----------------------------------------------------------------------------

def _row_runs(cells: np.ndarray) -> Iterable[tuple[int, int, int]]:
    """(y, x_start, x_end) runs of horizontally adjacent cells."""
    if cells.shape[0] == 0:
        return
    order = np.lexsort((cells[:, 0], cells[:, 1]))
    c = cells[order]
    start = 0
    for i in range(1, c.shape[0] + 1):
        if i == c.shape[0] or c[i, 1] != c[start, 1] or c[i, 0] != c[i - 1, 0] + 1:
            yield int(c[start, 1]), int(c[start, 0]), int(c[i - 1, 0])
            start = i


def shape_svg(rs: RescaledSet | None = None, polytope: Polytope | None = None, size: int = 480) -> str:
    """SVG of a 2-D rescaled set and/or limit-shape polygon over the unit diamond."""
    half = size / 2.0
    k = half / 1.1

    def px(x, y):
        return f"{half + k * x:.3f},{half - k * y:.3f}"

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>']
    if rs is not None:
        if rs.dimension != 2:
            raise ValueError("SVG output is only defined for d = 2")
        n = float(rs.scale)
        rects = []
        for y, x0, x1 in _row_runs(rs.cells):
            left, top = half + k * (x0 - 0.5) / n, half - k * (y + 0.5) / n
            rects.append(f'<rect x="{left:.3f}" y="{top:.3f}" width="{k * (x1 - x0 + 1) / n:.3f}" '
                         f'height="{k / n:.3f}"/>')
        parts.append('<g fill="#3b6ea5" shape-rendering="crispEdges">' + "".join(rects) + "</g>")
    if polytope is not None:
        if polytope.dimension != 2:
            raise ValueError("SVG output is only defined for d = 2")
        pts = " ".join(px(x, y) for x, y in polytope.vertices)
        parts.append(f'<polygon points="{pts}" fill="none" stroke="#d1495b" stroke-width="2"/>')
    diamond = " ".join(px(x, y) for x, y in ((1, 0), (0, 1), (-1, 0), (0, -1)))
    parts.append(f'<polygon points="{diamond}" fill="none" stroke="black" stroke-width="1" '
                 f'stroke-dasharray="4 3"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
