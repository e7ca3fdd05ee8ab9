"""Reproducible experiment procedures driven by manifests.

Each procedure is a pure function of its manifest: replicas use seeds derived
from the master seed and their index, results are assembled in replica order,
and every output file is written atomically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.stats import binomtest

from . import _io
from ._parallel import starmap_ordered
from .engine import (IDENTITY, InvariantViolation, PassageRecord, ResourceLimitError, check_record, run,
                     visited_at)
from .lattice import as_site, diamond_points, diamond_size, l1_norm
from .manifest import ExperimentManifest, validate_manifest
from .oracle import FiniteConfig, enumerate_outcomes
from .passage import Verdict, passage_times, subadditivity_verdict
from .randomness import InitialConfigSpec, derive_seed, eta_array
from .shape import (EstimationError, RescaledSet, build_mu_estimate, estimate_mu_many, hausdorff_l1, metrics,
                    rescale, shape_from_mu, shape_svg)


@dataclass
class Report:
    """A JSON summary plus CSV tables and SVG files, all written under one directory."""

    summary: dict
    tables: dict = field(default_factory=dict)
    svgs: dict = field(default_factory=dict)
    lines: list = field(default_factory=list)
    record: PassageRecord | None = None
    violated: bool = False
    output_dir: Path | None = None

    def write(self, directory, manifest: ExperimentManifest | None = None) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        summary = dict(self.summary)
        if manifest is not None:
            summary["manifest"] = manifest.to_dict()
            _io.write_json(directory / "manifest.json", manifest.to_dict())
        for name, (header, rows) in sorted(self.tables.items()):
            _io.write_csv(directory / f"{name}.csv", header, rows)
        for name, text in sorted(self.svgs.items()):
            _io.atomic_write_text(directory / f"{name}.svg", text)
        _io.write_json(directory / "report.json", summary)
        return directory


def _summary_stats(values) -> dict:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"mean": None, "sd": None, "min": None, "max": None}
    return {"mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
            "min": float(v.min()), "max": float(v.max())}


def record_coverage(record: PassageRecord, n: int, big_n: int | None = None) -> float:
    """|xi_n intersected with D_N| / |D_N| (N defaults to n), D_N centred at the source."""
    big_n = n if big_n is None else big_n
    cells = visited_at(record, n) - np.asarray(record.source, dtype=np.int64)
    inside = int((l1_norm(cells) <= big_n).sum()) if cells.size else 0
    return inside / diamond_size(record.dimension, big_n)


# shape ------------------------------------------------------------------------

def _shape_replica(spec_dict, n_schedule, mu_schedule, directions, horizon, mode, want_cells):
    spec = InitialConfigSpec.from_dict(spec_dict)
    d = spec.dimension
    try:
        record = run(spec, None, horizon, mode)
    except ResourceLimitError as exc:
        return {"error": str(exc)}
    check_record(record)
    sets = {n: rescale(record, n) for n in n_schedule}
    per_n = {n: metrics(sets[n]).to_dict() for n in n_schedule}
    pairs = [(a, b, hausdorff_l1(sets[a], sets[b])) for a, b in zip(n_schedule, n_schedule[1:])]
    times = np.array([record.times_at(np.outer(mu_schedule, x)) for x in directions], dtype=np.int64)
    out = {"error": None, "per_n": per_n, "hausdorff": pairs, "times": times}
    if want_cells and d == 2:
        out["cells"] = {n: sets[n].cells for n in n_schedule}
    return out


def default_mu_schedule(n_schedule: Sequence[int], directions) -> list[int]:
    """n values whose targets n x are typically reached before the horizon max(n_schedule)."""
    reach = 2 * max(l1_norm(x) for x in directions)
    return sorted({max(1, n // reach) for n in n_schedule})


def shape_experiment(manifest: ExperimentManifest, workers: int | None = 1) -> Report:
    spec = manifest.spec()
    n_schedule = list(manifest["n_schedule"])
    directions = [as_site(x, spec.dimension) for x in manifest["directions"]]
    mu_schedule = list(manifest.get("mu_schedule") or default_mu_schedule(n_schedule, directions))
    horizon = int(manifest["horizon"])
    first = int(manifest.get("first_replica", 0))
    replicas = int(manifest["replicas"])
    tasks = [(spec.for_replica(first + r).to_dict(), n_schedule, mu_schedule, directions, horizon,
              manifest["mode"], r == 0) for r in range(replicas)]
    results = starmap_ordered(_shape_replica, tasks, workers)
    ok = [(r, res) for r, res in enumerate(results) if res["error"] is None]
    errors = [{"replica": first + r, "error": res["error"]} for r, res in enumerate(results) if res["error"]]
    if not ok:
        raise ResourceLimitError(f"every replica failed: {errors[0]['error']}")

    metric_rows, per_n = [], []
    for n in n_schedule:
        vals = {k: [res["per_n"][n][k] for _, res in ok] for k in ("coverage", "symmetry_defect", "convexity_defect")}
        per_n.append({"n": n, **{k: _summary_stats(v) for k, v in vals.items()}})
        for r, res in ok:
            m = res["per_n"][n]
            metric_rows.append([first + r, n, m["size"], m["coverage"], m["symmetry_defect"], m["convexity_defect"]])
    haus_rows, haus = [], []
    for j, (a, b) in enumerate(zip(n_schedule, n_schedule[1:])):
        vals = [res["hausdorff"][j][2] for _, res in ok]
        haus.append({"n_a": a, "n_b": b, **_summary_stats(vals)})
        haus_rows.extend([first + r, a, b, res["hausdorff"][j][2]] for r, res in ok)

    estimates, mu_rows, mu_errors = [], [], []
    for i, x in enumerate(directions):
        times = np.stack([res["times"][i] for _, res in ok])
        for (r, _), row in zip(ok, times):
            mu_rows.extend([list(x), n, first + r, int(t)] for n, t in zip(mu_schedule, row))
        try:
            estimates.append(build_mu_estimate(x, mu_schedule, times, horizon, spec.p1, None, first))
        except EstimationError as exc:
            mu_errors.append({"direction": list(x), "error": str(exc)})
    polytope = None
    if estimates and not mu_errors:
        try:
            polytope = shape_from_mu(estimates)
        except ValueError as exc:
            mu_errors.append({"direction": None, "error": str(exc)})

    summary = {
        "kind": "shape",
        "spec_digest": spec.digest(),
        "heavy_cap": spec.heavy_cap,
        "replicas_ok": len(ok),
        "errors": errors,
        "metrics": per_n,
        "hausdorff_successive": haus,
        "mu_schedule": mu_schedule,
        "mu": [e.to_dict() for e in estimates],
        "mu_errors": mu_errors,
        "censored": {",".join(map(str, e.direction)): e.censored[mu_schedule[-1]] for e in estimates},
        "polytope": polytope.to_dict() if polytope else None,
    }
    rep = Report(summary)
    rep.tables["metrics"] = (["replica", "n", "size", "coverage", "symmetry_defect", "convexity_defect"], metric_rows)
    rep.tables["hausdorff"] = (["replica", "n_a", "n_b", "hausdorff_l1"], haus_rows)
    rep.tables["mu_samples"] = (["direction", "n", "replica", "passage_time"],
                                [[" ".join(map(str, x)), n, r, t] for x, n, r, t in mu_rows])
    if spec.dimension == 2:
        first_ok = results[0] if results[0]["error"] is None else None
        if first_ok is not None:
            for n in n_schedule:
                rs = RescaledSet(n, first_ok["cells"][n])
                rep.svgs[f"shape_n{n}"] = shape_svg(rs, polytope)
        if polytope is not None:
            rep.svgs["polytope"] = shape_svg(None, polytope)
    for row in per_n:
        rep.lines.append(f"n={row['n']}: coverage {row['coverage']['mean']:.4f}, "
                         f"symmetry_defect {row['symmetry_defect']['mean']:.4f}, "
                         f"convexity_defect {row['convexity_defect']['mean']:.4f}")
    for e in estimates:
        rep.lines.append(f"mu{e.direction}: {e.point:.4f} [{e.ci_low:.4f}, {e.ci_high:.4f}] "
                         f"censored={e.censored[mu_schedule[-1]]}")
    return rep


# time constant ------------------------------------------------------------------

def mu_experiment(manifest: ExperimentManifest, workers: int | None = 1) -> Report:
    spec = manifest.spec()
    est = estimate_mu_many(spec, manifest["directions"], manifest["n_schedule"], manifest["replicas"],
                           manifest["horizon"], mode=manifest["mode"], ray=manifest["ray"], workers=workers,
                           first_replica=manifest["first_replica"])
    rows = []
    for e in est:
        for r in range(e.replicas):
            for j, n in enumerate(e.n_schedule):
                v = e.samples[r, j]
                rows.append([" ".join(map(str, e.direction)), n, e.first_replica + r,
                             "" if math.isnan(v) else int(round(v * n))])
    rep = Report({"kind": "mu", "spec_digest": spec.digest(), "heavy_cap": spec.heavy_cap,
                  "estimates": [e.to_dict() for e in est]})
    rep.tables["mu_samples"] = (["direction", "n", "replica", "passage_time"], rows)
    rep.lines = [f"mu{e.direction}: {e.point:.4f} [{e.ci_low:.4f}, {e.ci_high:.4f}]"
                 + (f", p1*mu' ratio {e.ray_ratio:.4f}" if e.ray_ratio is not None else "") for e in est]
    return rep


# full diamond -------------------------------------------------------------------

def _diamond_replica(heavy_dict, base_dict, n_schedule, mode):
    out = []
    for sd in (heavy_dict, base_dict):
        spec = InitialConfigSpec.from_dict(sd)
        try:
            rec = run(spec, None, max(n_schedule), mode)
        except ResourceLimitError as exc:
            return {"error": str(exc)}
        check_record(rec)
        out.append([record_coverage(rec, n) for n in n_schedule])
    return {"error": None, "heavy": out[0], "baseline": out[1]}


def full_diamond_experiment(manifest: ExperimentManifest, workers: int | None = 1) -> Report:
    """Seed-paired replicas under the heavy-tailed law and the matched baseline."""
    heavy = manifest.heavy_spec()
    base = manifest.baseline_spec()
    d = heavy.dimension
    if not heavy.params["delta"] < d:
        raise ValueError(f"tail_delta must be < d = {d}")
    n_schedule = [int(n) for n in manifest["n_schedule"]]
    first = int(manifest.get("first_replica", 0))
    replicas = int(manifest["replicas"])
    tasks = [(heavy.for_replica(first + r).to_dict(), base.for_replica(first + r).to_dict(), n_schedule,
              manifest["mode"]) for r in range(replicas)]
    results = starmap_ordered(_diamond_replica, tasks, workers)
    ok = [(r, res) for r, res in enumerate(results) if res["error"] is None]
    errors = [{"replica": first + r, "error": res["error"]} for r, res in enumerate(results) if res["error"]]
    if not ok:
        raise ResourceLimitError(f"every replica failed: {errors[0]['error']}")
    per_n, rows = [], []
    for j, n in enumerate(n_schedule):
        h = np.array([res["heavy"][j] for _, res in ok])
        b = np.array([res["baseline"][j] for _, res in ok])
        per_n.append({"n": n, "heavy": _summary_stats(h), "baseline": _summary_stats(b),
                      "fraction_heavy_larger": float((h > b).mean())})
        rows.extend([first + r, n, res["heavy"][j], res["baseline"][j]] for r, res in ok)
    summary = {
        "kind": "full_diamond",
        "tail_delta": heavy.params["delta"],
        "heavy_cap": heavy.heavy_cap,
        "heavy_spec": heavy.to_dict(),
        "baseline_spec": base.to_dict(),
        "replicas_ok": len(ok),
        "errors": errors,
        "coverage": per_n,
    }
    rep = Report(summary)
    rep.tables["coverage"] = (["replica", "n", "heavy_coverage", "baseline_coverage"], rows)
    rep.lines = [f"n={p['n']}: heavy {p['heavy']['mean']:.4f} vs baseline {p['baseline']['mean']:.4f}, "
                 f"heavy larger in {p['fraction_heavy_larger']:.3f} of pairs" for p in per_n]
    return rep


# m-good -------------------------------------------------------------------------

@dataclass(frozen=True)
class MGoodParams:
    """Scale parameters of the m-good occupancy condition."""

    d: int
    m: float
    h_d: float = 1.0
    p1: float | None = None

    @property
    def eps(self) -> float | None:
        return 1.0 / (6.0 * (self.d - 2)) if self.d >= 3 else None

    @property
    def n_d(self) -> float:
        if self.d >= 3:
            return (self.m / self.h_d) ** (1.0 / (1.0 + 2.0 * self.eps))
        return (self.m / self.h_d) ** 0.5

    @property
    def n_hat(self) -> float:
        if self.d >= 3:
            return self.n_d ** ((1.0 - self.eps) / 3.0)
        return self.n_d ** 0.125

    def to_dict(self) -> dict:
        return {"d": self.d, "m": self.m, "h_d": self.h_d, "p1": self.p1, "eps_d": self.eps,
                "n_d": self.n_d, "n_hat_d": self.n_hat}


@dataclass
class MGoodResult:
    good: bool
    threshold: float
    min_ratio: dict
    params: MGoodParams
    balls_tested: int = 0

    def to_dict(self) -> dict:
        return {"good": self.good, "threshold": self.threshold, "min_ratio": self.min_ratio,
                "balls_tested": self.balls_tested, "params": self.params.to_dict()}


def _ball_offsets(radius: float, d: int) -> np.ndarray:
    r = int(math.floor(radius))
    axes = np.arange(-r, r + 1)
    grid = np.stack(np.meshgrid(*([axes] * d), indexing="ij"), axis=-1)
    return (grid ** 2).sum(axis=-1) <= radius * radius + 1e-9


def m_good_check(spec: InitialConfigSpec, m: float, params: MGoodParams | None = None,
                 window: int = 5_000_000) -> MGoodResult:
    """Evaluate the m-good clauses on the configuration of `spec`.

    Balls are Euclidean and centred on a lattice of spacing max(1, floor(r/2))
    (a covering grid rather than every centre). `window` bounds the number of
    lattice points materialised.
    """
    d = spec.dimension
    params = params or MGoodParams(d, m)
    if params.d != d:
        raise ValueError("parameter dimension does not match the spec")
    p1 = spec.p1 if params.p1 is None else params.p1
    params = MGoodParams(d, params.m, params.h_d, p1)
    n = params.n_d
    if n < 1:
        raise ValueError(f"n_d(m) = {n:.4g} < 1: m is too small for h_d = {params.h_d}")
    if d <= 2:
        r = n ** 0.25
        centre_radius, region = n, n + r
    else:
        r = n ** ((1.0 - params.eps) / 2.0)
        big_r = n ** (0.5 + params.eps)
        if big_r < r:
            raise ValueError("no ball of the required radius fits in the first region")
        centre_radius, region = big_r - r, big_r * (d // 2 if d >= 4 else 1)
    half = int(math.ceil(region))
    side = 2 * half + 1
    if side ** d > window:
        raise ValueError(f"region of {side ** d} lattice points exceeds the window {window}")
    axes = np.arange(-half, half + 1, dtype=np.int64)
    pts = np.stack(np.meshgrid(*([axes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    occ = (eta_array(spec, pts) >= 1).astype(np.int32).reshape((side,) * d)
    kernel = _ball_offsets(r, d)
    ball_size = int(kernel.sum())
    counts = ndimage.correlate(occ, kernel.astype(np.int32), mode="constant", cval=0)
    step = max(1, int(math.floor(r / 2)))
    c_axes = np.arange(-(half // step) * step, half + 1, step)
    centres = np.stack(np.meshgrid(*([c_axes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    norms = np.sqrt((centres.astype(float) ** 2).sum(axis=1))
    centres = centres[norms <= centre_radius + 1e-9]
    if centres.size == 0:
        centres = np.zeros((1, d), dtype=np.int64)
    ratios = counts[tuple((centres + half).T)] / ball_size
    min_ratio = {"ball": float(ratios.min())}
    if d >= 4:
        radii = np.sqrt((pts.astype(float) ** 2).sum(axis=1))
        flat = occ.reshape(-1)
        for i in range(2, d // 2 + 1):
            sel = (radii <= i * big_r) & (radii > (i - 1) * big_r)
            min_ratio[f"annulus_{i}"] = float(flat[sel].mean()) if sel.any() else 1.0
    threshold = p1 / 2.0
    good = all(v >= threshold for v in min_ratio.values())
    return MGoodResult(good, threshold, min_ratio, params, int(centres.shape[0]))


def m_good_experiment(manifest: ExperimentManifest, workers: int | None = 1) -> Report:
    spec = manifest.spec()
    ms = manifest["m"] if isinstance(manifest["m"], list) else [manifest["m"]]
    rows, results = [], []
    for m in ms:
        goods = 0
        for r in range(int(manifest["replicas"])):
            s = spec if manifest["replicas"] == 1 else spec.for_replica(r)
            res = m_good_check(s, m, MGoodParams(spec.dimension, m, float(manifest["h_d"])), manifest["window"])
            goods += res.good
            rows.append([m, r, int(res.good)] + [res.min_ratio[k] for k in sorted(res.min_ratio)])
            if r == 0:
                results.append(res.to_dict())
        results[-1]["fraction_good"] = goods / int(manifest["replicas"])
    clause_names = sorted(results[0]["min_ratio"]) if results else []
    rep = Report({"kind": "m_good", "spec_digest": spec.digest(), "results": results})
    rep.tables["m_good"] = (["m", "replica", "good"] + [f"min_ratio_{c}" for c in clause_names], rows)
    rep.lines = [f"m={res['params']['m']}: n_d={res['params']['n_d']:.4f}, good in "
                 f"{res['fraction_good']:.3f} of configurations" for res in results]
    return rep


# growth probe ---------------------------------------------------------------------

def _probe_replica(spec_dict, probe_points, n_schedule, delta_grid, horizon, mode):
    spec = InitialConfigSpec.from_dict(spec_dict)
    d = spec.dimension
    n_max = max(n_schedule)
    rec = run(spec, None, horizon, mode, targets=probe_points, extra_after=n_max)
    hits = np.zeros((len(probe_points), len(n_schedule), len(delta_grid)), dtype=bool)
    for i, x in enumerate(probe_points):
        t0 = rec.time_of(x)
        if t0 is None:
            continue
        x = np.asarray(x, dtype=np.int64)
        for j, n in enumerate(n_schedule):
            for k, dl in enumerate(delta_grid):
                ball = diamond_points(d, int(math.floor(n * dl))) + x
                t = rec.times_at(ball)
                hits[i, j, k] = bool((t >= 0).all() and t.max() <= t0 + n)
    return hits


def growth_probe(spec: InitialConfigSpec, probe_points, n_schedule, replicas: int, horizon: int, *,
                 delta_grid: Sequence[float] | None = None, threshold: float = 0.99, mode: str = IDENTITY,
                 workers: int | None = 1, first_replica: int = 0) -> dict:
    """Frequency of {the L1 ball of radius n*delta around x is visited by T(0,x) + n}.

    Returns the per-(n, delta) frequencies over replicas and probe points, and
    the largest delta whose frequency at the largest n reaches `threshold`
    (None when no grid value does).
    """
    if not spec.condition_origin:
        raise ValueError("the growth probe needs an origin-conditioned spec")
    d = spec.dimension
    probe_points = [as_site(x, d) for x in probe_points]
    delta_grid = sorted(delta_grid or [round(0.05 * i, 2) for i in range(1, 20)])
    if any(not 0 < g < 1 for g in delta_grid):
        raise ValueError("delta grid values must lie in (0, 1)")
    n_schedule = [int(n) for n in n_schedule]
    tasks = [(spec.for_replica(first_replica + r).to_dict(), probe_points, n_schedule, delta_grid, int(horizon),
              mode) for r in range(replicas)]
    hits = np.stack(starmap_ordered(_probe_replica, tasks, workers))
    freq = hits.mean(axis=(0, 1))
    passing = [g for k, g in enumerate(delta_grid) if freq[-1, k] >= threshold]
    return {
        "delta_hat": max(passing) if passing else None,
        "threshold": threshold,
        "n_schedule": n_schedule,
        "delta_grid": list(delta_grid),
        "frequency": freq.tolist(),
        "replicas": replicas,
        "probe_points": [list(x) for x in probe_points],
    }


def growth_probe_experiment(manifest: ExperimentManifest, workers: int | None = 1) -> Report:
    spec = manifest.spec()
    res = growth_probe(spec, manifest["probe_points"], manifest["n_schedule"], manifest["replicas"],
                       manifest["horizon"], delta_grid=manifest["delta_grid"], threshold=manifest["threshold"],
                       mode=manifest["mode"], workers=workers)
    rows = [[n, g, res["frequency"][j][k]] for j, n in enumerate(res["n_schedule"])
            for k, g in enumerate(res["delta_grid"])]
    rep = Report({"kind": "growth_probe", "spec_digest": spec.digest(), **res})
    rep.tables["growth_frequency"] = (["n", "growth_delta", "frequency"], rows)
    rep.lines = [f"growth_delta estimate: {res['delta_hat']}"]
    return rep


# tail curve -------------------------------------------------------------------------

def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ci = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def _tail_replica(spec_dict, x0, horizon, mode):
    spec = InitialConfigSpec.from_dict(spec_dict)
    rec = run(spec, None, horizon, mode, targets=[x0])
    t = rec.time_of(x0)
    return -1 if t is None else t


def tail_curve(spec: InitialConfigSpec, x0, m_grid: Sequence[int], replicas: int, *, mode: str = IDENTITY,
               workers: int | None = 1, first_replica: int = 0) -> dict:
    """Empirical P[T(0, x0) >= m] with Wilson intervals; runs are censored at max(m_grid)."""
    if not spec.condition_origin:
        raise ValueError("tail curves need an origin-conditioned spec")
    x0 = as_site(x0, spec.dimension)
    m_grid = sorted(int(m) for m in m_grid)
    horizon = max(m_grid)
    tasks = [(spec.for_replica(first_replica + r).to_dict(), x0, horizon, mode) for r in range(replicas)]
    times = np.asarray(starmap_ordered(_tail_replica, tasks, workers), dtype=np.int64)
    censored = times < 0
    curve = []
    for m in m_grid:
        k = int((censored | (times >= m)).sum())
        lo, hi = wilson_interval(k, replicas)
        curve.append({"m": m, "survival": k / replicas, "ci_low": lo, "ci_high": hi})
    return {"x0": list(x0), "replicas": replicas, "censored": int(censored.sum()), "horizon": horizon,
            "curve": curve, "times": times.tolist()}


def tail_curve_experiment(manifest: ExperimentManifest, workers: int | None = 1) -> Report:
    spec = manifest.spec()
    res = tail_curve(spec, manifest["x0"], manifest["m_grid"], manifest["replicas"], mode=manifest["mode"],
                     workers=workers)
    times = res.pop("times")
    rep = Report({"kind": "tail_curve", "spec_digest": spec.digest(), **res})
    rep.tables["survival"] = (["m", "survival", "ci_low", "ci_high"],
                              [[c["m"], c["survival"], c["ci_low"], c["ci_high"]] for c in res["curve"]])
    rep.tables["passage_times"] = (["replica", "passage_time"], [[r, t] for r, t in enumerate(times)])
    rep.lines = [f"P[T >= {c['m']}] = {c['survival']:.4f} [{c['ci_low']:.4f}, {c['ci_high']:.4f}]"
                 for c in res["curve"]]
    return rep


# single run and oracle -------------------------------------------------------------

def run_experiment(manifest: ExperimentManifest, workers: int | None = 1) -> Report:
    spec = manifest.spec()
    source = manifest.get("source") or [0] * spec.dimension
    rec = run(spec, source, manifest["horizon"], manifest["mode"], validate=True)
    rep = Report({"kind": "run", **rec.metadata(), "visited": len(rec),
                  "active_final": int(rec.active_sizes[-1]) if len(rec.active_sizes) else 0})
    rep.record = rec
    rep.lines = [f"visited {len(rec)} sites by time {rec.horizon}"]
    return rep


def oracle_experiment(manifest: ExperimentManifest, workers: int | None = 1) -> Report:
    occ = {tuple(row[:-1]): row[-1] for row in manifest["occupancy"]}
    d = len(next(iter(occ)))
    config = FiniteConfig(d, occ, manifest.get("source"))
    law = enumerate_outcomes(config, manifest["horizon"], manifest["budget"])
    dist = law.distribution()
    rows = [list(y) + [p.numerator, p.denominator, float(p)] for y, p in dist.items()]
    summary = {
        "kind": "oracle",
        "horizon": law.horizon,
        "leaves": law.leaves,
        "total_probability": str(law.total),
        "prob_within_horizon": {",".join(map(str, y)): str(p) for y, p in dist.items()},
        "visited_size_law": {str(k): str(p) for k, p in law.visited_size.items()},
    }
    rep = Report(summary)
    rep.tables["passage_distribution"] = ([f"x{i + 1}" for i in range(d)]
                                          + ["numerator", "denominator", "probability"], rows)
    rep.lines = [f"T(source, {y}) <= {law.horizon}: {p}" for y, p in dist.items()]
    return rep


# invariant suite ---------------------------------------------------------------------

def sample_occupied(spec: InitialConfigSpec, rng: np.random.Generator, radius: int, count: int) -> np.ndarray:
    """`count` uniform draws from the occupied sites of the box [-radius, radius]^d."""
    d = spec.dimension
    out = np.empty((0, d), dtype=np.int64)
    tries = 0
    while out.shape[0] < count:
        cand = rng.integers(-radius, radius + 1, size=(max(64, 4 * count), d))
        out = np.vstack([out, cand[eta_array(spec, cand) >= 1]])
        tries += 1
        if tries > 1000:
            raise ValueError("could not find occupied sites in the sampling box")
    return out[:count]


def subadditivity_suite(spec: InitialConfigSpec, triples: int, horizon: int, radius: int | None = None,
                        mode: str = IDENTITY) -> dict:
    """Check T(x,z) <= T(x,y) + T(y,z) on random triples; x and y are drawn among occupied sites."""
    d = spec.dimension
    radius = radius or (30 if d == 1 else 15)
    rng = np.random.default_rng(derive_seed(spec.master_seed, 0x5AB))
    xs = sample_occupied(spec, rng, radius, triples)
    ys = sample_occupied(spec, rng, radius, triples)
    zs = rng.integers(-radius, radius + 1, size=(triples, d))
    counts = {v.value: 0 for v in Verdict}
    violations = []
    for x, y, z in zip(xs, ys, zs):
        t_xy, t_xz = passage_times(spec, x, [y, z], horizon, mode)
        (t_yz,) = passage_times(spec, y, [z], horizon, mode)
        v = subadditivity_verdict(t_xz, t_xy, t_yz, horizon)
        counts[v.value] += 1
        if v is Verdict.VIOLATED:
            violations.append([x.tolist(), y.tolist(), z.tolist()])
    return {"triples": triples, "verdicts": counts, "violations": violations}


def monotone_pair(spec: InitialConfigSpec, horizon: int, mode: str = IDENTITY) -> bool:
    """xi_n(omega) within xi_n(omega + one extra particle at the origin) for every n <= horizon."""
    d = spec.dimension
    plus = spec.replace(extra=[[0] * d + [1]])
    a = run(spec, None, horizon, mode)
    b = run(plus, None, horizon, mode)
    tb = b.times_at(a.sites)
    return bool(((tb >= 0) & (tb <= a.times)).all())


def monotone_suite(spec: InitialConfigSpec, pairs: int, horizon: int, first_replica: int = 0,
                   workers: int | None = 1) -> dict:
    tasks = [(spec.for_replica(first_replica + r), horizon) for r in range(pairs)]
    ok = starmap_ordered(monotone_pair, tasks, workers)
    return {"pairs": pairs, "contained": int(sum(ok)),
            "failures": [first_replica + r for r, v in enumerate(ok) if not v]}


def record_subadditivity(records: Sequence[PassageRecord]) -> list[dict]:
    """Cross-check T(x,z) <= T(x,y) + T(y,z) between records of one spec started at x and y."""
    bad = []
    for rx in records:
        for ry in records:
            if rx is ry or rx.config_digest != ry.config_digest:
                continue
            t_xy = rx.time_of(ry.source)
            if t_xy is None or len(ry) == 0:
                continue
            rhs = t_xy + ry.times
            lhs = rx.times_at(ry.sites)
            viol = ((lhs >= 0) & (lhs > rhs)) | ((lhs < 0) & (rhs <= rx.horizon))
            for i in np.nonzero(viol)[0][:10]:
                bad.append({"x": list(rx.source), "y": list(ry.source), "z": ry.sites[i].tolist(),
                            "t_xz": int(lhs[i]) if lhs[i] >= 0 else None, "t_xy": t_xy,
                            "t_yz": int(ry.times[i])})
    return bad


def check_records(records: Sequence[PassageRecord]) -> dict:
    problems = []
    for rec in records:
        try:
            check_record(rec)
        except InvariantViolation as exc:
            problems.append({"source": list(rec.source), "error": str(exc)})
    return {"records": len(records), "record_errors": problems,
            "subadditivity_violations": record_subadditivity(records)}


def check_experiment(manifest: ExperimentManifest, workers: int | None = 1) -> Report:
    spec = manifest.spec()
    horizon = int(manifest["horizon"])
    sub = subadditivity_suite(spec, int(manifest["triples"]), horizon, mode=manifest["mode"])
    mono = monotone_suite(spec, int(manifest["pairs"]), horizon, workers=workers)
    rec = run(spec, None, horizon, manifest["mode"])
    containment = "ok"
    try:
        check_record(rec)
    except InvariantViolation as exc:
        containment = str(exc)
    summary = {"kind": "check", "spec_digest": spec.digest(), "subadditivity": sub, "monotone": mono,
               "containment_conservation": containment}
    rep = Report(summary)
    rep.lines = [f"subadditivity: {sub['verdicts']}",
                 f"monotone coupling: {mono['contained']}/{mono['pairs']} pairs contained",
                 f"containment and conservation: {containment}"]
    rep.violated = bool(sub["violations"] or mono["failures"] or containment != "ok")
    return rep


PROCEDURES = {
    "run": run_experiment,
    "mu": mu_experiment,
    "shape": shape_experiment,
    "full_diamond": full_diamond_experiment,
    "m_good": m_good_experiment,
    "growth_probe": growth_probe_experiment,
    "tail_curve": tail_curve_experiment,
    "oracle": oracle_experiment,
    "check": check_experiment,
}


def execute(manifest, workers: int | None = 1, write: bool = True) -> Report:
    """Run the procedure named by the manifest and (by default) write its outputs."""
    if not isinstance(manifest, ExperimentManifest):
        manifest = validate_manifest(manifest)
    rep = PROCEDURES[manifest.kind](manifest, workers=workers)
    if write:
        out = manifest.output_dir()
        rep.write(out, manifest)
        record = getattr(rep, "record", None)
        if record is not None:
            record.to_csv(out / "record.csv")
        rep.output_dir = out
    return rep
