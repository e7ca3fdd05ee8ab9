"""Integer-lattice geometry: L1 norm, lattice diamonds, hyperoctahedral group."""

from __future__ import annotations

import itertools
from math import comb
from typing import Iterator, Sequence

import numpy as np

MAX_DIM = 4
INT64_MAX = np.iinfo(np.int64).max


def check_dimension(d: int) -> int:
    d = int(d)
    if not 1 <= d <= MAX_DIM:
        raise ValueError(f"dimension must be in 1..{MAX_DIM}, got {d}")
    return d


def as_site(x: Sequence[int], d: int | None = None) -> tuple[int, ...]:
    """Normalise a coordinate sequence to a tuple of Python ints."""
    site = tuple(int(c) for c in x)
    if d is not None and len(site) != d:
        raise ValueError(f"expected a {d}-dimensional site, got {site}")
    return site


def l1_norm(x) -> int:
    """Sum of absolute coordinates. Works on a single site or row-wise on an (N, d) array."""
    arr = np.asarray(x, dtype=np.int64)
    if arr.ndim == 2:
        return np.abs(arr).sum(axis=1)
    return int(np.abs(arr).sum())


def diamond_size(d: int, n: int) -> int:
    """Number of lattice points x in Z^d with ||x||_1 <= n.

    Uses the closed form sum_k 2^k C(d, k) C(n, k); raises OverflowError if the
    count does not fit in a signed 64-bit integer.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if n < 0:
        raise ValueError("n must be >= 0")
    total = sum(2**k * comb(d, k) * comb(n, k) for k in range(min(d, n) + 1))
    if total > INT64_MAX:
        raise OverflowError(f"diamond_size({d}, {n}) = {total} exceeds int64")
    return total


def iter_diamond(d: int, n: int) -> Iterator[tuple[int, ...]]:
    """Yield the members of the radius-n lattice diamond in lexicographic order."""
    if n < 0:
        return
    if d == 1:
        yield from ((i,) for i in range(-n, n + 1))
        return
    for head in range(-n, n + 1):
        for tail in iter_diamond(d - 1, n - abs(head)):
            yield (head,) + tail


def diamond_points(d: int, n: int) -> np.ndarray:
    """Members of the radius-n diamond as an (N, d) int64 array."""
    axes = np.arange(-n, n + 1, dtype=np.int64)
    grid = np.stack(np.meshgrid(*([axes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return grid[np.abs(grid).sum(axis=1) <= n]


def octahedral_group(d: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """All (permutation, signs) pairs; element g acts as (g x)_i = signs[i] * x[perm[i]]."""
    perms = itertools.permutations(range(d))
    signs = list(itertools.product((1, -1), repeat=d))
    return [(p, s) for p in perms for s in signs]


def apply_group_element(g, pts: np.ndarray) -> np.ndarray:
    perm, signs = g
    pts = np.asarray(pts)
    return pts[..., list(perm)] * np.asarray(signs, dtype=pts.dtype)


def octahedral_orbit(x: Sequence[int]) -> set[tuple[int, ...]]:
    """Images of x under coordinate permutations and sign flips."""
    x = as_site(x)
    out = set()
    for perm in itertools.permutations(x):
        for signs in itertools.product((1, -1), repeat=len(x)):
            out.add(tuple(s * c for s, c in zip(signs, perm)))
    return out


def unit_steps(d: int) -> np.ndarray:
    """The 2d unit steps, ordered +e1, -e1, +e2, -e2, ..."""
    steps = np.zeros((2 * d, d), dtype=np.int64)
    for j in range(2 * d):
        steps[j, j // 2] = 1 if j % 2 == 0 else -1
    return steps


def default_directions(d: int) -> list[tuple[int, ...]]:
    """Axis and diagonal directions with nonnegative entries (one representative per sign class)."""
    out = []
    for v in itertools.product((0, 1), repeat=d):
        if any(v):
            out.append(tuple(v))
    out.sort(key=lambda v: (sum(v), tuple(-c for c in v)))
    return out


def cell_of(point: Sequence[float]) -> tuple[int, ...]:
    """Lattice site y whose cell y + (-1/2, 1/2]^d contains the real point."""
    return tuple(int(np.ceil(float(c) - 0.5)) for c in point)
