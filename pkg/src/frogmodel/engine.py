"""Forward simulation of the frog dynamics and first-passage records."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as K
from ._io import atomic_write_text, read_commented_csv, write_commented_csv
from .lattice import as_site
from .randomness import InitialConfigSpec, eta_array, eta_at, kernel_config

MAX_HORIZON = 2**30
IDENTITY = "identity"
AGGREGATE = "aggregate"
DEFAULT_MAX_SITES = 50_000_000
DEFAULT_MAX_PARTICLES = 50_000_000
# dense lookup boxes are used while (2r + 1)^d stays under these cell counts
DENSE_CELLS = {"identity": 2**27, "aggregate": 2**24}
# any value other than "" or "0" makes run() call check_record on every record
VALIDATE_ENV = "FROGMODEL_VALIDATE"


class InvariantViolation(AssertionError):
    """A pathwise property that must hold for every realisation failed."""


class ResourceLimitError(RuntimeError):
    """The memory budget was exhausted; `snapshot_path` holds the partial state if one was written."""

    def __init__(self, message, state=None, snapshot_path=None):
        super().__init__(message)
        self.state = state
        self.snapshot_path = snapshot_path


def check_horizon(spec_or_d, horizon: int) -> int:
    d = spec_or_d.dimension if hasattr(spec_or_d, "dimension") else int(spec_or_d)
    horizon = int(horizon)
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if horizon >= MAX_HORIZON:
        raise ValueError(f"horizon must be < 2^30, got {horizon}")
    if horizon > K.max_offset(d):
        raise ResourceLimitError(
            f"horizon {horizon} exceeds the packed-coordinate range {K.max_offset(d)} for d={d}"
        )
    return horizon


@dataclass
class PassageRecord:
    """First-passage times T(source, y) for every y reached by `horizon`.

    `sites` and `times` are parallel arrays in order of first visit; `eta` holds
    the initial particle count of each visited site. `frontier_sizes[n]` is the
    number of sites first visited at step n and `active_sizes[n]` the number of
    active particles right after the wake-ups of step n.
    """

    spec: InitialConfigSpec
    source: tuple[int, ...]
    horizon: int
    mode: str
    sites: np.ndarray
    times: np.ndarray
    eta: np.ndarray
    frontier_sizes: np.ndarray
    active_sizes: np.ndarray
    _lookup: dict = field(default=None, init=False, repr=False)
    _sorted: tuple = field(default=None, init=False, repr=False)

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    @property
    def config_digest(self) -> str:
        return self.spec.digest()

    @property
    def first_passage(self) -> dict[tuple[int, ...], int]:
        if self._lookup is None:
            self._lookup = {tuple(int(c) for c in s): int(t) for s, t in zip(self.sites, self.times)}
        return self._lookup

    def time_of(self, y) -> int | None:
        """T(source, y) if y was reached by the horizon, else None."""
        return self.first_passage.get(as_site(y, self.dimension))

    def __len__(self):
        return len(self.times)

    def times_at(self, pts) -> np.ndarray:
        """Vectorised T(source, y) for an (N, d) array of sites; -1 where not reached."""
        d = self.dimension
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, d) - np.asarray(self.source, dtype=np.int64)
        if self._sorted is None:
            rel = self.sites.reshape(-1, d) - np.asarray(self.source, dtype=np.int64)
            keys = _encode_rel(rel, self.horizon)
            order = np.argsort(keys, kind="stable")
            self._sorted = (keys[order], self.times[order])
        keys, times = self._sorted
        out = np.full(pts.shape[0], -1, dtype=np.int64)
        ok = np.abs(pts).max(axis=1, initial=0) <= self.horizon if pts.size else np.zeros(0, bool)
        if keys.size and ok.any():
            q = _encode_rel(pts[ok], self.horizon)
            i = np.minimum(np.searchsorted(keys, q), keys.size - 1)
            hit = keys[i] == q
            sub = np.full(q.size, -1, dtype=np.int64)
            sub[hit] = times[i[hit]]
            out[ok] = sub
        return out

    def metadata(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "config_digest": self.config_digest,
            "source": list(self.source),
            "horizon": self.horizon,
            "mode": self.mode,
            "frontier_sizes": [int(v) for v in self.frontier_sizes],
            "active_sizes": [int(v) for v in self.active_sizes],
        }

    def to_csv(self, path) -> None:
        d = self.dimension
        header = [f"x{i + 1}" for i in range(d)] + ["first_passage"]
        rows = np.column_stack([self.sites.reshape(-1, d), self.times]) if len(self) else np.zeros((0, d + 1), np.int64)
        write_commented_csv(path, self.metadata(), header, rows)

    @classmethod
    def from_csv(cls, path) -> "PassageRecord":
        meta, header, rows = read_commented_csv(path)
        spec = InitialConfigSpec.from_dict(meta["spec"])
        d = spec.dimension
        rows = np.asarray(rows, dtype=np.int64).reshape(-1, d + 1)
        sites = np.ascontiguousarray(rows[:, :d])
        return cls(
            spec=spec,
            source=tuple(meta["source"]),
            horizon=int(meta["horizon"]),
            mode=meta["mode"],
            sites=sites,
            times=np.ascontiguousarray(rows[:, d]),
            eta=eta_array(spec, sites) if len(sites) else np.zeros(0, np.int64),
            frontier_sizes=np.asarray(meta["frontier_sizes"], dtype=np.int64),
            active_sizes=np.asarray(meta["active_sizes"], dtype=np.int64),
        )


def _encode_rel(rel: np.ndarray, radius: int) -> np.ndarray:
    # mixed-radix key; exact since (2r+1)^d < 2^63 for every supported horizon
    base = 2 * int(radius) + 1
    keys = np.zeros(rel.shape[0], dtype=np.int64)
    for j in range(rel.shape[1]):
        keys = keys * base + (rel[:, j] + radius)
    return keys


def visited_at(record: PassageRecord, n: int) -> np.ndarray:
    """Sites with T(source, y) <= n, as an (N, d) array."""
    if n > record.horizon:
        raise ValueError(f"n={n} exceeds the record horizon {record.horizon}")
    return record.sites[record.times <= n]


def active_count(record_or_state, n: int | None = None) -> int:
    """Number of active particles at time n: the sum of eta over the sites visited by n."""
    if isinstance(record_or_state, FrogState):
        state = record_or_state
        if n is None or n == state.clock:
            return state.n_active()
        return active_count(state.to_record(), n)
    record = record_or_state
    if n is None:
        n = record.horizon
    if n > record.horizon:
        raise ValueError(f"n={n} exceeds the record horizon {record.horizon}")
    return int(record.eta[record.times <= n].sum())


class FrogState:
    """Mutable simulation state; advance() runs the synchronous dynamics forward."""

    def __init__(self, spec: InitialConfigSpec, source: Sequence[int], mode: str = IDENTITY,
                 max_sites: int = DEFAULT_MAX_SITES, max_particles: int = DEFAULT_MAX_PARTICLES):
        if mode not in (IDENTITY, AGGREGATE):
            raise ValueError(f"mode must be {IDENTITY!r} or {AGGREGATE!r}")
        self.spec = spec
        self.mode = mode
        self.source = as_site(source, spec.dimension)
        self.max_sites = int(max_sites)
        self.max_particles = int(max_particles)
        d = spec.dimension
        self._src = np.asarray(self.source, dtype=np.int64)
        self._w = K.key_bits(d)
        self.clock = 0
        self.ht_keys = np.full(64, -1, dtype=np.int64)
        self.ht_vals = np.empty(64, dtype=np.int64)
        self.site_xy = np.empty((16, d), dtype=np.int64)
        self.site_fp = np.empty(16, dtype=np.int64)
        self.site_eta = np.empty(16, dtype=np.int64)
        self.n_sites = 0
        self.pending = 0
        self.frontier = np.zeros(1, dtype=np.int64)
        self.active = np.zeros(1, dtype=np.int64)
        # identity actives
        self.part_pos = np.empty((16, d), dtype=np.int64)
        self.part_key = np.empty(16, dtype=np.uint64)
        self.part_age = np.empty(16, dtype=np.int64)
        self.part_site = np.empty(16, dtype=np.int64)
        self.part_idx = np.empty(16, dtype=np.int64)
        self.n_part = 0
        # aggregate actives
        self.pos_xy = np.empty((16, d), dtype=np.int64)
        self.pos_count = np.empty(16, dtype=np.int64)
        self.n_pos = 0
        self._no_grid()
        e0 = eta_at(spec, self.source)
        if e0 >= 1:
            key = K.pack(self._src, self._src, self._w)
            slot = K.ht_slot(self.ht_keys, key)
            self.ht_keys[slot] = key
            self.ht_vals[slot] = 0
            self.site_xy[0] = self._src
            self.site_fp[0] = 0
            self.site_eta[0] = e0
            self.n_sites = 1
            self.frontier[0] = 1
            self.active[0] = e0

    def n_active(self) -> int:
        """Active particles now, counting sleepers of sites visited at the current step."""
        moving = int(self.n_part) if self.mode == IDENTITY else int(self.pos_count[: self.n_pos].sum())
        waking = self.site_eta[self.pending: self.n_sites]
        if (waking < 0).any():
            waking = eta_array(self.spec, self.site_xy[self.pending: self.n_sites])
        return moving + int(waking.sum())

    def _grow_logs(self, n_end):
        if self.frontier.shape[0] < n_end + 1:
            f = np.zeros(n_end + 1, dtype=np.int64)
            a = np.zeros(n_end + 1, dtype=np.int64)
            f[: self.frontier.shape[0]] = self.frontier
            a[: self.active.shape[0]] = self.active
            self.frontier, self.active = f, a

    def _no_grid(self):
        self.grid_r = -1
        self.grid = np.zeros(1, dtype=np.uint8)
        self.gstamp = np.zeros(1, dtype=np.int32)
        self.gslot = np.zeros(1, dtype=np.int32)

    def _ensure_grid(self, n_end: int) -> int:
        """Make the dense box cover the walk up to the returned time (<= n_end)."""
        if self.grid_r < 0 and self.grid.shape[0] == 0:
            return n_end
        if self.grid_r >= n_end:
            return n_end
        d = self.spec.dimension
        limit = DENSE_CELLS[self.mode]
        r = n_end
        while r > self.clock and (2 * r + 1) ** d > limit:
            r = (r + self.clock) // 2 if r - self.clock > 1 else self.clock
        if r <= self.clock or r <= self.grid_r:
            # no room for a useful box: fall back to the hash table for good
            self._no_grid()
            self.grid = np.zeros(0, dtype=np.uint8)
            return n_end
        side = 2 * r + 1
        cells = side**d
        grid = np.zeros(cells, dtype=np.uint8)
        if self.n_sites:
            rel = self.site_xy[: self.n_sites] - self._src + r
            grid[np.ravel_multi_index(rel.T, (side,) * d)] = 1
        self.grid = grid
        self.grid_r = r
        if self.mode == AGGREGATE:
            self.gstamp = np.full(cells, -1, dtype=np.int32)
            self.gslot = np.zeros(cells, dtype=np.int32)
        return r

    def advance(self, n_end: int, targets: Sequence[Sequence[int]] | None = None,
                extra_after: int = 0) -> "FrogState":
        """Run up to time n_end, or stop `extra_after` steps after all targets are visited."""
        n_end = check_horizon(self.spec, n_end)
        if n_end < self.clock:
            raise ValueError(f"cannot advance backwards from {self.clock} to {n_end}")
        self._grow_logs(n_end)
        d = self.spec.dimension
        tkeys = np.zeros(0, dtype=np.int64)
        if targets:
            tgt = np.asarray([as_site(t, d) for t in targets], dtype=np.int64).reshape(-1, d)
            # a target beyond the speed bound can never stop the run early
            if np.abs(tgt - self._src).sum(axis=1).max() <= n_end:
                tkeys = np.array([K.pack(t, self._src, self._w) for t in tgt], dtype=np.int64)
        cfg = kernel_config(self.spec)
        t_done = -1
        extra_after = int(extra_after)
        while True:
            chunk_end = self._ensure_grid(n_end)
            if self.mode == IDENTITY:
                out = K.identity_advance(
                    cfg, self._src, self.clock, n_end,
                    self.ht_keys, self.ht_vals, self.site_xy, self.site_fp, self.site_eta,
                    self.n_sites, self.pending,
                    self.part_pos, self.part_key, self.part_age, self.part_site, self.part_idx, self.n_part,
                    self.frontier, self.active, tkeys, extra_after, self.max_sites, self.max_particles,
                    self.grid, self.grid_r, chunk_end, t_done,
                )
                (status, self.clock, self.pending, self.n_sites, self.n_part, t_done,
                 self.ht_keys, self.ht_vals, self.site_xy, self.site_fp, self.site_eta,
                 self.part_pos, self.part_key, self.part_age, self.part_site, self.part_idx) = out
            else:
                out = K.aggregate_advance(
                    cfg, self._src, self.clock, n_end,
                    self.ht_keys, self.ht_vals, self.site_xy, self.site_fp, self.site_eta,
                    self.n_sites, self.pending,
                    self.pos_xy, self.pos_count, self.n_pos,
                    self.frontier, self.active, tkeys, extra_after, self.max_sites,
                    self.grid, self.grid_r, self.gstamp, self.gslot, chunk_end, t_done,
                )
                (status, self.clock, self.pending, self.n_sites, self.n_pos, t_done,
                 self.ht_keys, self.ht_vals, self.site_xy, self.site_fp, self.site_eta,
                 self.pos_xy, self.pos_count) = out
            if status == K.STOP_RESOURCE:
                raise ResourceLimitError(
                    f"memory budget exhausted at step {self.clock} "
                    f"({self.n_sites} sites, {self.n_active()} active particles)",
                    state=self,
                )
            stop = n_end if t_done < 0 else min(n_end, t_done + extra_after)
            if self.clock >= stop:
                break
        return self

    def to_record(self) -> PassageRecord:
        n = self.n_sites
        horizon = self.clock
        return PassageRecord(
            spec=self.spec,
            source=self.source,
            horizon=horizon,
            mode=self.mode,
            sites=self.site_xy[:n].copy(),
            times=self.site_fp[:n].copy(),
            eta=self.site_eta[:n].copy(),
            frontier_sizes=self.frontier[: horizon + 1].copy(),
            active_sizes=self.active[: horizon + 1].copy(),
        )

    def particles_at(self, y) -> list[tuple[tuple[int, ...], int, int]]:
        """Identity mode: (origin, index, age) of the active particles currently at y."""
        if self.mode != IDENTITY:
            raise ValueError("particle identities exist only in identity mode")
        y = np.asarray(as_site(y, self.spec.dimension), dtype=np.int64)
        hit = np.nonzero((self.part_pos[: self.n_part] == y).all(axis=1))[0]
        out = []
        for i in hit:
            origin = tuple(int(c) for c in self.site_xy[self.part_site[i]])
            out.append((origin, int(self.part_idx[i]), int(self.part_age[i])))
        return sorted(out)

    # snapshot / resume ---------------------------------------------------
    def save(self, directory) -> Path:
        """Write record.csv (first passages, metadata header) and actives.csv."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        rec = self.to_record()
        rec.to_csv(directory / "record.csv")
        d = self.spec.dimension
        meta = {
            "mode": self.mode,
            "clock": self.clock,
            "pending": self.pending,
            "max_sites": self.max_sites,
            "max_particles": self.max_particles,
        }
        if self.mode == IDENTITY:
            n = self.n_part
            header = ([f"origin{i + 1}" for i in range(d)] + ["particle_index"]
                      + [f"x{i + 1}" for i in range(d)] + ["age"])
            rows = np.column_stack([
                self.site_xy[self.part_site[:n]].reshape(-1, d), self.part_idx[:n],
                self.part_pos[:n].reshape(-1, d), self.part_age[:n],
            ]) if n else np.zeros((0, 2 * d + 2), dtype=np.int64)
        else:
            n = self.n_pos
            header = [f"x{i + 1}" for i in range(d)] + ["count"]
            rows = np.column_stack([self.pos_xy[:n].reshape(-1, d), self.pos_count[:n]]) if n \
                else np.zeros((0, d + 1), dtype=np.int64)
        write_commented_csv(directory / "actives.csv", meta, header, rows)
        return directory

    @classmethod
    def load(cls, directory) -> "FrogState":
        directory = Path(directory)
        rec = PassageRecord.from_csv(directory / "record.csv")
        meta, _, rows = read_commented_csv(directory / "actives.csv")
        st = cls(rec.spec, rec.source, meta["mode"], meta["max_sites"], meta["max_particles"])
        d = rec.dimension
        st.clock = int(meta["clock"])
        st.pending = int(meta["pending"])
        n = len(rec)
        st.site_xy = rec.sites.copy() if n else np.empty((16, d), np.int64)
        st.site_fp = rec.times.copy() if n else np.empty(16, np.int64)
        eta = rec.eta.copy() if n else np.empty(16, np.int64)
        eta[st.pending:n] = -1
        st.site_eta = eta
        st.n_sites = n
        cap = 64
        while cap < 2 * n + 2:
            cap *= 2
        st.ht_keys = np.full(cap, -1, dtype=np.int64)
        st.ht_vals = np.empty(cap, dtype=np.int64)
        for i in range(n):
            key = K.pack(st.site_xy[i], st._src, st._w)
            slot = K.ht_slot(st.ht_keys, key)
            st.ht_keys[slot] = key
            st.ht_vals[slot] = i
        st.frontier = rec.frontier_sizes.copy()
        st.active = rec.active_sizes.copy()
        rows = np.asarray(rows, dtype=np.int64)
        if st.mode == IDENTITY:
            rows = rows.reshape(-1, 2 * d + 2)
            index = {tuple(int(c) for c in s): i for i, s in enumerate(st.site_xy[:n])}
            m = rows.shape[0]
            st.part_pos = np.ascontiguousarray(rows[:, d + 1: 2 * d + 1]) if m else np.empty((16, d), np.int64)
            st.part_idx = np.ascontiguousarray(rows[:, d]) if m else np.empty(16, np.int64)
            st.part_age = np.ascontiguousarray(rows[:, 2 * d + 1]) if m else np.empty(16, np.int64)
            st.part_site = np.array([index[tuple(int(c) for c in r[:d])] for r in rows], dtype=np.int64) \
                if m else np.empty(16, np.int64)
            seed = np.uint64(rec.spec.master_seed)
            st.part_key = np.array(
                [K.particle_key(seed, np.ascontiguousarray(r[:d]), int(r[d])) for r in rows], dtype=np.uint64
            ) if m else np.empty(16, np.uint64)
            st.n_part = m
        else:
            rows = rows.reshape(-1, d + 1)
            m = rows.shape[0]
            st.pos_xy = np.ascontiguousarray(rows[:, :d]) if m else np.empty((16, d), np.int64)
            st.pos_count = np.ascontiguousarray(rows[:, d]) if m else np.empty(16, np.int64)
            st.n_pos = m
        return st


def run(spec: InitialConfigSpec, source: Sequence[int] | None = None, horizon: int = 0,
        mode: str = IDENTITY, *, targets=None, extra_after: int = 0,
        max_sites: int = DEFAULT_MAX_SITES, max_particles: int = DEFAULT_MAX_PARTICLES,
        snapshot_dir=None, validate: bool = False) -> PassageRecord:
    """Simulate the frog model from `source` for `horizon` synchronous steps.

    With `targets`, the run stops `extra_after` steps after every target has
    been visited (or at the horizon); the returned record's horizon is the
    time actually reached. On a resource error the partial state is written to
    `snapshot_dir` when given. Setting FROGMODEL_VALIDATE=1 validates every run.
    """
    if source is None:
        source = (0,) * spec.dimension
    horizon = check_horizon(spec, horizon)
    state = FrogState(spec, source, mode, max_sites=max_sites, max_particles=max_particles)
    try:
        state.advance(horizon, targets=targets, extra_after=extra_after)
    except ResourceLimitError as err:
        if snapshot_dir is not None:
            err.snapshot_path = str(state.save(snapshot_dir))
        raise
    record = state.to_record()
    if validate or os.environ.get(VALIDATE_ENV, "") not in ("", "0"):
        check_record(record)
    return record


def resume(snapshot_dir, horizon: int, *, max_sites: int | None = None, max_particles: int | None = None,
           **advance_kw) -> FrogState:
    """Continue a saved state up to `horizon`, optionally with larger memory budgets."""
    state = FrogState.load(snapshot_dir)
    if max_sites is not None:
        state.max_sites = int(max_sites)
    if max_particles is not None:
        state.max_particles = int(max_particles)
    return state.advance(horizon, **advance_kw)


def check_record(record: PassageRecord, spec: InitialConfigSpec | None = None) -> None:
    """Raise InvariantViolation unless the record obeys the hard pathwise constraints.

    Checks: speed bound T(source, y) >= ||y - source||_1 (so every xi_n lies in
    the radius-n diamond), times within [0, horizon], unique sites, the source
    at time 0 iff it is occupied, frontier sizes consistent with the times,
    and particle conservation active(n) = sum of eta over xi_n.
    """
    spec = spec or record.spec
    src = np.asarray(record.source, dtype=np.int64)
    n = len(record)
    if n == 0:
        if eta_at(spec, record.source) >= 1:
            raise InvariantViolation("occupied source but empty record")
        if record.active_sizes.size and record.active_sizes.any():
            raise InvariantViolation("active particles in an empty record")
        return
    dist = np.abs(record.sites - src).sum(axis=1)
    if (record.times < dist).any():
        i = int(np.argmax(record.times < dist))
        raise InvariantViolation(
            f"speed bound violated at {tuple(record.sites[i])}: T={record.times[i]} < {dist[i]}"
        )
    if record.times.min() < 0 or record.times.max() > record.horizon:
        raise InvariantViolation("first-passage time outside [0, horizon]")
    if (record.times == 0).sum() != 1 or not (record.sites[record.times == 0] == src).all():
        raise InvariantViolation("xi_0 must be exactly the source")
    # the checks above bound every coordinate of sites - src by the horizon
    if np.unique(_encode_rel(record.sites - src, record.horizon)).size != n:
        raise InvariantViolation("duplicate sites in record")
    counts = np.bincount(record.times, minlength=record.horizon + 1)
    if not np.array_equal(counts, record.frontier_sizes[: record.horizon + 1]):
        raise InvariantViolation("frontier sizes disagree with first-passage times")
    if (record.eta < 0).any():
        raise InvariantViolation("unresolved site occupation")
    per_step = np.zeros(record.horizon + 1, dtype=np.int64)
    np.add.at(per_step, record.times, record.eta)
    expected = np.cumsum(per_step)
    if not np.array_equal(expected, record.active_sizes[: record.horizon + 1]):
        bad = int(np.argmax(expected != record.active_sizes[: record.horizon + 1]))
        raise InvariantViolation(
            f"conservation violated at n={bad}: active={record.active_sizes[bad]}, sum eta={int(expected[bad])}"
        )
    fresh = eta_array(spec, record.sites)
    if not np.array_equal(fresh, record.eta):
        raise InvariantViolation("recorded occupation differs from the configuration")
