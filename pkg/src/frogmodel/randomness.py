"""Keyed counter-based randomness.

Every random quantity of a simulation is a pure function of the master seed
and a key: the particle count at a site, the n-th step of the k-th particle
born at a site, the multinomial split used by the aggregate engine. Nothing
is streamed, so any particle's trajectory can be regenerated on demand and
sub-processes started from different sources share the same walks.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .lattice import as_site, check_dimension

U64 = np.uint64
GOLDEN = U64(0x9E3779B97F4A7C15)
_M1 = U64(0xBF58476D1CE4E5B9)
_M2 = U64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0

# domain tags keep the different uses of the PRF apart
TAG_ETA = 1
TAG_STEP = 2
TAG_AGGREGATE = 3
TAG_WAKE_CHOICE = 4
TAG_REPLICA = 5
TAG_SAMPLE = 6

FAM_CONSTANT = 0
FAM_BERNOULLI = 1
FAM_GEOMETRIC = 2
FAM_POISSON = 3
FAM_HEAVY_TAIL = 4

FAMILY_CODES = {
    "constant": FAM_CONSTANT,
    "bernoulli": FAM_BERNOULLI,
    "geometric": FAM_GEOMETRIC,
    "poisson": FAM_POISSON,
    "heavy_tail": FAM_HEAVY_TAIL,
}

DEFAULT_HEAVY_CAP = 2**32
POISSON_MAX_LAMBDA = 700.0


@njit(cache=True)
def mix64(z):
    """splitmix64 finaliser on a uint64."""
    z = (z ^ (z >> U64(30))) * _M1
    z = (z ^ (z >> U64(27))) * _M2
    return z ^ (z >> U64(31))


@njit(cache=True)
def absorb(h, w):
    return mix64(h ^ (U64(w) + GOLDEN + (h << U64(6)) + (h >> U64(2))))


@njit(cache=True)
def site_hash(seed, tag, coords, extra):
    """Hash of (seed, tag, coords..., extra)."""
    h = mix64(U64(seed) ^ (U64(tag) * GOLDEN))
    for i in range(coords.shape[0]):
        h = absorb(h, coords[i])
    return absorb(h, extra)


@njit(cache=True)
def to_unit(h):
    """Map a uint64 to a double in (0, 1]."""
    return (float(h >> U64(11)) + 1.0) * _INV53


@njit(cache=True)
def particle_key(seed, coords, k):
    return site_hash(seed, TAG_STEP, coords, k)


@njit(cache=True)
def step_direction(pkey, n, two_d):
    """Index in [0, 2d) of the n-th step (n >= 1) of the particle with key pkey."""
    h = mix64(pkey + U64(n) * GOLDEN)
    return np.int64(((h >> U64(32)) * U64(two_d)) >> U64(32))


@njit(cache=True)
def heavy_tail_value(u, delta, cap):
    t = u ** (-1.0 / delta)
    if t >= math.log(cap):
        return int(cap)
    v = math.ceil(math.exp(t))
    if v > cap:
        return int(cap)
    return int(v)


@njit(cache=True)
def draw_count(fam, par, u):
    if fam == FAM_CONSTANT:
        return int(par[0])
    if fam == FAM_BERNOULLI:
        return 1 if u <= par[0] else 0
    if fam == FAM_GEOMETRIC:
        p = par[0]
        if p >= 1.0:
            return 0
        return int(math.floor(math.log(u) / math.log1p(-p)))
    if fam == FAM_POISSON:
        lam = par[0]
        k = 0
        pk = math.exp(-lam)
        cdf = pk
        limit = lam + 40.0 * math.sqrt(lam) + 100.0
        while u > cdf and k < limit:
            k += 1
            pk *= lam / k
            cdf += pk
        return k
    return heavy_tail_value(u, par[0], par[1])


@njit(cache=True)
def lookup_count(table_coords, table_counts, coords):
    d = coords.shape[0]
    for i in range(table_coords.shape[0]):
        same = True
        for j in range(d):
            if table_coords[i, j] != coords[j]:
                same = False
                break
        if same:
            return table_counts[i]
    return -1


@njit(cache=True)
def eta_kernel(cfg, coords):
    """Particle count at a site; cfg is the tuple built by InitialConfigSpec.kernel_config."""
    seed, fam, par, cond, ov_mode, ov_coords, ov_counts, ex_coords, ex_counts = cfg
    if ov_mode == 1:
        base = lookup_count(ov_coords, ov_counts, coords)
        if base < 0:
            base = 0
    else:
        origin = True
        for j in range(coords.shape[0]):
            if coords[j] != 0:
                origin = False
                break
        attempt = 0
        while True:
            u = to_unit(site_hash(seed, TAG_ETA, coords, attempt))
            base = draw_count(fam, par, u)
            if base > 0 or not (cond and origin):
                break
            attempt += 1
    if ex_coords.shape[0] > 0:
        add = lookup_count(ex_coords, ex_counts, coords)
        if add > 0:
            base += add
    return base


@njit(cache=True)
def eta_many(cfg, pts):
    out = np.empty(pts.shape[0], dtype=np.int64)
    for i in range(pts.shape[0]):
        out[i] = eta_kernel(cfg, pts[i])
    return out


@njit(cache=True)
def occupied_many(cfg, pts):
    out = np.empty(pts.shape[0], dtype=np.bool_)
    for i in range(pts.shape[0]):
        out[i] = eta_kernel(cfg, pts[i]) >= 1
    return out


def heavy_tail_quantile(u: float, delta: float, cap: int = DEFAULT_HEAVY_CAP) -> int:
    """min(cap, ceil(exp(u^(-1/delta)))): inverse-transform draw for P[eta >= n] ~ (ln n)^(-delta)."""
    if not 0.0 < u <= 1.0:
        raise ValueError("u must lie in (0, 1]")
    if delta <= 0:
        raise ValueError("delta must be positive")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    return heavy_tail_value(float(u), float(delta), float(cap))


def heavy_tail_survival(n: int, delta: float, cap: int = DEFAULT_HEAVY_CAP) -> float:
    """Exact P[eta >= n] for the heavy-tail sampler under uniform u.

    ceil(exp(t)) >= n iff t > ln(n - 1), so the survival is (ln(n-1))^(-delta)
    for 3 < n <= cap, 1 for n <= 3 and 0 above the cap.
    """
    if n <= 3:
        return 1.0
    if n > cap:
        return 0.0
    return min(1.0, math.log(n - 1) ** (-delta))


def derive_seed(master_seed: int, *words: int) -> int:
    """Child seed for replica / sub-experiment `words` of a master seed."""
    key = np.asarray(words, dtype=np.int64)
    return int(site_hash(U64(master_seed % 2**64), TAG_REPLICA, key, 0))


def _check_family(name: str, params: Mapping[str, float], d: int) -> None:
    if name not in FAMILY_CODES:
        raise ValueError(f"unknown family {name!r}; expected one of {sorted(FAMILY_CODES)}")
    need = {
        "constant": ("c",),
        "bernoulli": ("p",),
        "geometric": ("p",),
        "poisson": ("lam",),
        "heavy_tail": ("delta",),
    }[name]
    for key in need:
        if key not in params:
            raise ValueError(f"family {name!r} requires parameter {key!r}")
    if name == "constant":
        c = params["c"]
        if c < 0 or int(c) != c:
            raise ValueError("constant family needs an integer c >= 0")
    elif name in ("bernoulli", "geometric"):
        if not 0.0 < params["p"] <= 1.0:
            raise ValueError("p must satisfy 0 < p <= 1")
    elif name == "poisson":
        if not 0.0 < params["lam"] <= POISSON_MAX_LAMBDA:
            raise ValueError(f"lam must satisfy 0 < lam <= {POISSON_MAX_LAMBDA}")
    elif name == "heavy_tail":
        delta = params["delta"]
        cap = params.get("cap", DEFAULT_HEAVY_CAP)
        if not 0.0 < delta < d:
            raise ValueError(f"heavy_tail needs 0 < delta < d (= {d}), got {delta}")
        if cap < 1 or int(cap) != cap:
            raise ValueError("cap must be an integer >= 1")


def _site_table(entries: Mapping | Sequence | None, d: int) -> tuple[tuple[tuple[int, ...], int], ...] | None:
    if entries is None:
        return None
    if isinstance(entries, Mapping):
        items = entries.items()
    else:
        items = [(row[:-1], row[-1]) for row in entries]
    table = {}
    for site, count in items:
        site = as_site(site, d)
        count = int(count)
        if count < 0:
            raise ValueError("particle counts must be >= 0")
        table[site] = table.get(site, 0) + count
    return tuple(sorted(table.items()))


@dataclass(frozen=True)
class InitialConfigSpec:
    """Law of the initial configuration plus the seed that fixes one realisation.

    `overrides`, when given, replaces the random field by a finite configuration
    (unlisted sites empty). `extra` adds particles on top of whatever the field
    or the overrides put there; added particles get the highest indices at their
    site, so the walks of the original particles are unchanged.
    """

    dimension: int
    family: str = "constant"
    params: Mapping[str, float] = field(default_factory=lambda: {"c": 1})
    master_seed: int = 0
    condition_origin: bool = True
    overrides: tuple | None = None
    extra: tuple | None = None

    def __post_init__(self):
        d = check_dimension(self.dimension)
        object.__setattr__(self, "dimension", d)
        params = {k: float(v) for k, v in dict(self.params).items()}
        if self.family == "heavy_tail":
            params.setdefault("cap", float(DEFAULT_HEAVY_CAP))
        _check_family(self.family, params, d)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "master_seed", int(self.master_seed) % 2**64)
        object.__setattr__(self, "overrides", _site_table(self.overrides, d))
        object.__setattr__(self, "extra", _site_table(self.extra, d))
        if (
            self.condition_origin
            and self.overrides is None
            and self.family == "constant"
            and params["c"] == 0
        ):
            raise ValueError("cannot condition on an occupied origin when every site is empty")

    def __hash__(self):
        key = self.__dict__.get("_hash_key")
        if key is None:
            key = json.dumps(self.to_dict(), sort_keys=True)
            object.__setattr__(self, "_hash_key", key)
        return hash(key)

    # constructors --------------------------------------------------------
    @classmethod
    def constant(cls, d, c=1, **kw):
        return cls(d, "constant", {"c": c}, **kw)

    @classmethod
    def bernoulli(cls, d, p, **kw):
        return cls(d, "bernoulli", {"p": p}, **kw)

    @classmethod
    def geometric(cls, d, p, **kw):
        return cls(d, "geometric", {"p": p}, **kw)

    @classmethod
    def poisson(cls, d, lam, **kw):
        return cls(d, "poisson", {"lam": lam}, **kw)

    @classmethod
    def heavy_tail(cls, d, delta, cap=DEFAULT_HEAVY_CAP, **kw):
        return cls(d, "heavy_tail", {"delta": delta, "cap": cap}, **kw)

    @classmethod
    def finite(cls, d, occupancy, master_seed=0):
        """Finite configuration: exactly the listed particles, nothing else."""
        return cls(d, "constant", {"c": 0}, master_seed=master_seed, condition_origin=False,
                   overrides=occupancy)

    def with_seed(self, seed: int) -> "InitialConfigSpec":
        return self.replace(master_seed=seed)

    def replace(self, **changes) -> "InitialConfigSpec":
        kw = self.to_dict()
        kw.update(changes)
        return InitialConfigSpec.from_dict(kw)

    def for_replica(self, r: int) -> "InitialConfigSpec":
        return self.with_seed(derive_seed(self.master_seed, r))

    # derived attributes -------------------------------------------------
    @property
    def p1(self) -> float:
        """P[eta(0) >= 1] under the family law (ignores overrides and conditioning)."""
        p = self.params
        if self.family == "constant":
            return 1.0 if p["c"] >= 1 else 0.0
        if self.family == "bernoulli":
            return p["p"]
        if self.family == "geometric":
            return 1.0 - p["p"]
        if self.family == "poisson":
            return -math.expm1(-p["lam"])
        return 1.0

    @property
    def heavy_cap(self) -> int | None:
        return int(self.params["cap"]) if self.family == "heavy_tail" else None

    # serialisation ------------------------------------------------------
    def to_dict(self) -> dict:
        out = {
            "dimension": self.dimension,
            "family": self.family,
            "params": {k: _jsonable_number(v) for k, v in sorted(self.params.items())},
            "master_seed": self.master_seed,
            "condition_origin": bool(self.condition_origin),
        }
        if self.overrides is not None:
            out["overrides"] = [list(site) + [c] for site, c in self.overrides]
        if self.extra is not None:
            out["extra"] = [list(site) + [c] for site, c in self.extra]
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "InitialConfigSpec":
        return cls(
            dimension=data["dimension"],
            family=data.get("family", "constant"),
            params=data.get("params", {"c": 1}),
            master_seed=data.get("master_seed", 0),
            condition_origin=data.get("condition_origin", True),
            overrides=data.get("overrides"),
            extra=data.get("extra"),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # kernel view ----------------------------------------------------------
    def kernel_config(self):
        d = self.dimension
        p = self.params
        fam = FAMILY_CODES[self.family]
        if fam == FAM_CONSTANT:
            par = [p["c"], 0.0]
        elif fam in (FAM_BERNOULLI, FAM_GEOMETRIC):
            par = [p["p"], 0.0]
        elif fam == FAM_POISSON:
            par = [p["lam"], 0.0]
        else:
            par = [p["delta"], p["cap"]]

        def table(entries):
            if not entries:
                return np.zeros((0, d), dtype=np.int64), np.zeros(0, dtype=np.int64)
            coords = np.array([s for s, _ in entries], dtype=np.int64).reshape(-1, d)
            counts = np.array([c for _, c in entries], dtype=np.int64)
            return coords, counts

        ov_c, ov_n = table(self.overrides)
        ex_c, ex_n = table(self.extra)
        return (
            U64(self.master_seed),
            np.int64(fam),
            np.asarray(par, dtype=np.float64),
            bool(self.condition_origin),
            np.int64(1 if self.overrides is not None else 0),
            ov_c,
            ov_n,
            ex_c,
            ex_n,
        )


def _jsonable_number(v: float):
    return int(v) if float(v).is_integer() else float(v)


_CFG_CACHE: dict[InitialConfigSpec, tuple] = {}


def kernel_config(spec: InitialConfigSpec):
    cfg = _CFG_CACHE.get(spec)
    if cfg is None:
        if len(_CFG_CACHE) > 4096:
            _CFG_CACHE.clear()
        cfg = spec.kernel_config()
        _CFG_CACHE[spec] = cfg
    return cfg


def eta_at(spec: InitialConfigSpec, x: Sequence[int]) -> int:
    """Number of particles initially at site x."""
    coords = np.asarray(as_site(x, spec.dimension), dtype=np.int64)
    return int(eta_kernel(kernel_config(spec), coords))


def eta_array(spec: InitialConfigSpec, pts: np.ndarray) -> np.ndarray:
    pts = np.ascontiguousarray(pts, dtype=np.int64).reshape(-1, spec.dimension)
    return eta_many(kernel_config(spec), pts)


def step_index(spec: InitialConfigSpec, origin: Sequence[int], k: int, n: int) -> int:
    """Direction index in [0, 2d) of step n of particle k born at origin (+e1, -e1, +e2, ...)."""
    if k < 1 or n < 1:
        raise ValueError("particle and step indices start at 1")
    coords = np.asarray(as_site(origin, spec.dimension), dtype=np.int64)
    pkey = particle_key(U64(spec.master_seed), coords, k)
    return step_direction(pkey, n, 2 * spec.dimension)


def step_at(spec: InitialConfigSpec, origin: Sequence[int], k: int, n: int) -> tuple[int, ...]:
    """Unit step taken at time n (n >= 1 counts from the particle's wake-up) by particle k of origin."""
    j = step_index(spec, origin, k, n)
    out = [0] * spec.dimension
    out[j // 2] = 1 if j % 2 == 0 else -1
    return tuple(out)


@njit(cache=True)
def walk_positions(seed, origin, k, n_steps):
    """Positions S_0..S_n of particle k of origin along its fixed stream."""
    d = origin.shape[0]
    out = np.empty((n_steps + 1, d), dtype=np.int64)
    out[0] = origin
    pkey = particle_key(seed, origin, k)
    for n in range(1, n_steps + 1):
        j = step_direction(pkey, n, 2 * d)
        out[n] = out[n - 1]
        out[n, j >> 1] += 1 if (j & 1) == 0 else -1
    return out


def trajectory(spec: InitialConfigSpec, origin: Sequence[int], k: int, n_steps: int) -> np.ndarray:
    coords = np.asarray(as_site(origin, spec.dimension), dtype=np.int64)
    return walk_positions(U64(spec.master_seed), coords, int(k), int(n_steps))
