"""Passage times between arbitrary sites on one shared realisation.

T(x, y) is obtained by re-running the process from x alone on the same
trajectory streams; because every particle walks its own fixed path once
awake, this run realises the infimum over chains of single-hop times.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as K
from .engine import IDENTITY, PassageRecord, run
from .lattice import as_site, cell_of
from .randomness import TAG_WAKE_CHOICE, InitialConfigSpec, U64, eta_array, eta_at, kernel_config, site_hash


@functools.total_ordering
@dataclass(frozen=True)
class CensoredTime:
    """A passage time that may be censored at a horizon (or infinite when the start is empty).

    Censored values compare greater than every finite value.
    """

    value: int | None
    horizon: int | None = None
    infinite: bool = False

    @classmethod
    def censored(cls, horizon, infinite=False):
        return cls(None, horizon, infinite)

    @property
    def finite(self) -> bool:
        return self.value is not None

    def _key(self):
        return (0, self.value) if self.finite else (1, 0)

    def __eq__(self, other):
        if isinstance(other, CensoredTime):
            return self._key() == other._key()
        if isinstance(other, (int, np.integer)):
            return self.finite and self.value == other
        return NotImplemented

    def __lt__(self, other):
        if isinstance(other, CensoredTime):
            return self._key() < other._key()
        if isinstance(other, (int, np.integer)):
            return self.finite and self.value < other
        return NotImplemented

    def __hash__(self):
        return hash(self._key())

    def __int__(self):
        if not self.finite:
            raise ValueError("censored time has no finite value")
        return int(self.value)

    def __repr__(self):
        if self.finite:
            return f"CensoredTime({self.value})"
        return "CensoredTime(inf)" if self.infinite else f"CensoredTime(>{self.horizon})"


def _from_record(record: PassageRecord, y, horizon) -> CensoredTime:
    t = record.time_of(y)
    if t is None:
        return CensoredTime.censored(horizon)
    return CensoredTime(t, horizon)


def passage_time(spec: InitialConfigSpec, x, y, horizon: int, mode: str = IDENTITY) -> CensoredTime:
    """T(x, y): first time the process started from x alone visits y, censored at `horizon`."""
    x = as_site(x, spec.dimension)
    y = as_site(y, spec.dimension)
    if eta_at(spec, x) == 0:
        return CensoredTime.censored(horizon, infinite=True)
    record = run(spec, x, horizon, mode, targets=[y])
    return _from_record(record, y, horizon)


def passage_times(spec: InitialConfigSpec, x, ys: Sequence, horizon: int, mode: str = IDENTITY):
    """T(x, y) for several targets from a single run started at x."""
    x = as_site(x, spec.dimension)
    ys = [as_site(y, spec.dimension) for y in ys]
    if eta_at(spec, x) == 0:
        return [CensoredTime.censored(horizon, infinite=True) for _ in ys]
    record = run(spec, x, horizon, mode, targets=ys)
    return [_from_record(record, y, horizon) for y in ys]


def passage_time_real(spec: InitialConfigSpec, x, y, horizon: int) -> CensoredTime:
    """T(x, y) for real points: x is replaced by the lattice site whose unit cell contains it,
    and y counts as visited once its containing cell is."""
    return passage_time(spec, cell_of(x), cell_of(y), horizon)


def t_single(spec: InitialConfigSpec, x, z, horizon: int) -> CensoredTime:
    """First time any of the eta(x) particles born at x, walking their own streams, stands on z.

    No waking is involved. Infinite when x is empty.
    """
    x = as_site(x, spec.dimension)
    z = as_site(z, spec.dimension)
    count = eta_at(spec, x)
    if count == 0:
        return CensoredTime.censored(horizon, infinite=True)
    t = K.first_hit_single(U64(spec.master_seed), np.asarray(x, np.int64), count,
                           np.asarray(z, np.int64), int(horizon))
    if t < 0:
        return CensoredTime.censored(horizon)
    return CensoredTime(int(t), horizon)


class Verdict(str, enum.Enum):
    HOLDS = "holds"
    VACUOUS = "vacuous"
    VIOLATED = "violated"


@dataclass(frozen=True)
class SubadditivityResult:
    verdict: Verdict
    t_xz: CensoredTime
    t_xy: CensoredTime
    t_yz: CensoredTime


def subadditivity_verdict(t_xz: CensoredTime, t_xy: CensoredTime, t_yz: CensoredTime,
                          horizon: int) -> Verdict:
    if not (t_xy.finite and t_yz.finite):
        return Verdict.VACUOUS
    rhs = t_xy.value + t_yz.value
    if t_xz.finite:
        return Verdict.HOLDS if t_xz.value <= rhs else Verdict.VIOLATED
    # T(x, z) was not reached by the horizon: only decidable if the bound is within it
    return Verdict.VIOLATED if rhs <= horizon else Verdict.VACUOUS


def subadditivity_check(spec: InitialConfigSpec, x, y, z, horizon: int,
                        mode: str = IDENTITY) -> SubadditivityResult:
    """Compare T(x, z) with T(x, y) + T(y, z) on the shared streams."""
    t_xy, t_xz = passage_times(spec, x, [y, z], horizon, mode)
    t_yz = passage_time(spec, y, z, horizon, mode)
    return SubadditivityResult(subadditivity_verdict(t_xz, t_xy, t_yz, horizon), t_xz, t_xy, t_yz)


def occupied_ray(spec: InitialConfigSpec, x, count: int, max_scan: int = 10**7) -> list[int]:
    """Multipliers v_0 = 0 < v_1 < ... < v_count with eta(v_i * x) >= 1 for i >= 1."""
    x = np.asarray(as_site(x, spec.dimension), dtype=np.int64)
    if not x.any():
        raise ValueError("the ray direction must be nonzero")
    if spec.overrides is None and spec.extra is None and spec.p1 == 0.0:
        raise ValueError("p1 = 0: the ray is never occupied")
    out = [0]
    start = 1
    chunk = max(64, 4 * count)
    while len(out) <= count:
        if start > max_scan:
            raise ValueError(f"fewer than {count} occupied sites among the first {max_scan} multiples")
        mult = np.arange(start, start + chunk, dtype=np.int64)
        occ = eta_array(spec, mult[:, None] * x[None, :]) >= 1
        out.extend(int(m) for m in mult[occ])
        start += chunk
    return out[: count + 1]


def wake_transit(spec: InitialConfigSpec, record: PassageRecord, y, horizon: int):
    """U_y and the landing site: time the particle found at y at time T(source, y) needs to
    reach an initially occupied site, following its own stream.

    Ties among several particles arriving together are broken by a keyed draw.
    Returns (CensoredTime, landing site).
    """
    y = as_site(y, spec.dimension)
    t0 = record.time_of(y)
    if t0 is None:
        raise ValueError(f"{y} is not in the visited set of the record")
    if eta_at(spec, y) >= 1:
        return CensoredTime(0, horizon), y
    from .engine import FrogState

    state = FrogState(spec, record.source, IDENTITY).advance(t0)
    candidates = state.particles_at(y)
    if not candidates:
        raise RuntimeError(f"no particle at {y} at time {t0}; record and spec disagree")
    h = site_hash(U64(spec.master_seed), TAG_WAKE_CHOICE, np.asarray(y, np.int64), 0)
    origin, k, age = candidates[int(h % U64(len(candidates)))]
    u, pos = K.walk_until_occupied(kernel_config(spec), np.asarray(origin, np.int64), k, age,
                                   np.asarray(y, np.int64), int(horizon))
    landing = tuple(int(c) for c in pos)
    if u < 0:
        return CensoredTime.censored(horizon), landing
    return CensoredTime(int(u), horizon), landing
