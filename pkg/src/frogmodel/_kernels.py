"""Compiled inner loops for the forward simulation.

Sites are stored in an open-addressing table keyed by a packed, source-relative
coordinate (w = 63 // d bits per axis). All state lives in flat arrays so a
FrogState can be snapshotted, reloaded and advanced again bit-for-bit.
"""

import math

import numpy as np
from numba import njit

from .randomness import (
    GOLDEN,
    TAG_AGGREGATE,
    U64,
    eta_kernel,
    mix64,
    particle_key,
    site_hash,
    step_direction,
    to_unit,
)

OK = 0
STOP_RESOURCE = 3

_LOG_2PI_HALF = 0.5 * math.log(2.0 * math.pi)
_STIRLING_TABLE = np.array(
    [math.lgamma(k + 1) - (k + 0.5) * math.log(k + 1) + (k + 1) - _LOG_2PI_HALF for k in range(10)]
)


def key_bits(d):
    return 63 // d


def max_offset(d):
    """Largest |coordinate - source| the packed key can hold."""
    return (1 << (key_bits(d) - 1)) - 1


@njit(cache=True)
def pack(coords, src, w):
    off = 1 << (w - 1)
    key = 0
    for i in range(coords.shape[0]):
        key |= (coords[i] - src[i] + off) << (w * i)
    return key


@njit(cache=True)
def unpack(key, src, w, out):
    off = 1 << (w - 1)
    mask = (1 << w) - 1
    for i in range(out.shape[0]):
        out[i] = ((key >> (w * i)) & mask) - off + src[i]


@njit(cache=True)
def cell(coords, src, r):
    """Flat index of coords in the dense box of radius r around src."""
    side = 2 * r + 1
    idx = 0
    for i in range(coords.shape[0]):
        idx = idx * side + (coords[i] - src[i] + r)
    return idx


@njit(cache=True)
def ht_slot(keys, key):
    mask = keys.shape[0] - 1
    i = np.int64(mix64(U64(key)) & U64(mask))
    while True:
        k = keys[i]
        if k == key or k == -1:
            return i
        i = (i + 1) & mask


@njit(cache=True)
def ht_get(keys, vals, key):
    i = ht_slot(keys, key)
    if keys[i] == -1:
        return -1
    return vals[i]


@njit(cache=True)
def ht_rehash(keys, vals, new_cap):
    nk = np.full(new_cap, -1, dtype=np.int64)
    nv = np.empty(new_cap, dtype=np.int64)
    for i in range(keys.shape[0]):
        if keys[i] != -1:
            j = ht_slot(nk, keys[i])
            nk[j] = keys[i]
            nv[j] = vals[i]
    return nk, nv


@njit(cache=True)
def grow_rows(a, n_needed):
    cap = a.shape[0]
    if n_needed <= cap:
        return a
    new_cap = max(2 * cap, n_needed, 16)
    out = np.empty((new_cap,) + a.shape[1:], dtype=a.dtype)
    out[:cap] = a
    return out


@njit(cache=True)
def stirling_tail(k):
    if k < 10:
        return _STIRLING_TABLE[int(k)]
    kp1 = k + 1.0
    kp1sq = kp1 * kp1
    return (1.0 / 12 - (1.0 / 360 - 1.0 / 1260 / kp1sq) / kp1sq) / kp1


@njit(cache=True)
def uniform_at(h, ctr):
    return to_unit(mix64(h + U64(ctr) * GOLDEN))


@njit(cache=True)
def binomial(n, p, h, ctr):
    """Exact Binomial(n, p) draw from the uniform stream (h, ctr, ctr+1, ...).

    Inversion when n*min(p, 1-p) < 10, otherwise Hormann's BTRS rejection
    sampler. Returns (draw, next counter).
    """
    if n <= 0 or p <= 0.0:
        return 0, ctr
    if p >= 1.0:
        return n, ctr
    flip = p > 0.5
    if flip:
        p = 1.0 - p
    q = 1.0 - p
    nf = float(n)
    if nf * p < 10.0:
        qn = math.exp(nf * math.log(q))
        bound = min(nf, nf * p + 10.0 * math.sqrt(nf * p * q + 1.0))
        x = 0
        px = qn
        u = uniform_at(h, ctr)
        ctr += 1
        while u > px:
            x += 1
            if x > bound:
                x = 0
                px = qn
                u = uniform_at(h, ctr)
                ctr += 1
            else:
                u -= px
                px = ((nf - x + 1.0) * p * px) / (x * q)
        k = x
    else:
        spq = math.sqrt(nf * p * q)
        b = 1.15 + 2.53 * spq
        a = -0.0873 + 0.0248 * b + 0.01 * p
        c = nf * p + 0.5
        vr = 0.92 - 4.2 / b
        r = p / q
        alpha = (2.83 + 5.1 / b) * spq
        m = math.floor((nf + 1.0) * p)
        while True:
            u = uniform_at(h, ctr) - 0.5
            v = uniform_at(h, ctr + 1)
            ctr += 2
            us = 0.5 - abs(u)
            kf = math.floor((2.0 * a / us + b) * u + c)
            if kf < 0.0 or kf > nf:
                continue
            if us >= 0.07 and v <= vr:
                break
            v = math.log(v * alpha / (a / (us * us) + b))
            ub = (
                (m + 0.5) * math.log((m + 1.0) / (r * (nf - m + 1.0)))
                + (nf + 1.0) * math.log1p((kf - m) / (nf - kf + 1.0))
                + (kf + 0.5) * math.log(r * (nf - kf + 1.0) / (kf + 1.0))
                + stirling_tail(m)
                + stirling_tail(nf - m)
                - stirling_tail(kf)
                - stirling_tail(nf - kf)
            )
            if v <= ub:
                break
        k = int(kf)
    if flip:
        k = n - k
    return k, ctr


# --------------------------------------------------------------------------
# identity mode: every particle is tracked with its own keyed step stream


@njit(cache=True)
def _insert_site(ht_keys, ht_vals, n_ht, site_xy, site_fp, site_eta, n_sites, key, coords, t):
    slot = ht_slot(ht_keys, key)
    ht_keys[slot] = key
    ht_vals[slot] = n_sites
    site_xy = grow_rows(site_xy, n_sites + 1)
    site_fp = grow_rows(site_fp, n_sites + 1)
    site_eta = grow_rows(site_eta, n_sites + 1)
    site_xy[n_sites] = coords
    site_fp[n_sites] = t
    site_eta[n_sites] = -1
    n_sites += 1
    n_ht += 1
    if 2 * n_ht > ht_keys.shape[0]:
        ht_keys, ht_vals = ht_rehash(ht_keys, ht_vals, 2 * ht_keys.shape[0])
    return ht_keys, ht_vals, n_ht, site_xy, site_fp, site_eta, n_sites


@njit(cache=True)
def _targets_done(ht_keys, ht_vals, target_keys):
    for i in range(target_keys.shape[0]):
        if ht_get(ht_keys, ht_vals, target_keys[i]) < 0:
            return False
    return True


@njit(cache=True)
def identity_advance(
    cfg,
    src,
    clock,
    n_end,
    ht_keys,
    ht_vals,
    site_xy,
    site_fp,
    site_eta,
    n_sites,
    pending,
    part_pos,
    part_key,
    part_age,
    part_site,
    part_idx,
    n_part,
    frontier,
    active,
    target_keys,
    extra_after,
    max_sites,
    max_particles,
    grid,
    grid_r,
    chunk_end,
    t_done,
):
    seed = cfg[0]
    d = src.shape[0]
    two_d = 2 * d
    w = 63 // d
    n_ht = n_sites
    status = OK
    stop = n_end
    if target_keys.shape[0] > 0:
        if t_done < 0 and _targets_done(ht_keys, ht_vals, target_keys):
            t_done = clock
        if t_done >= 0:
            stop = min(n_end, t_done + extra_after)
    while True:
        # wake the sleepers of sites first visited at `clock`
        if pending < n_sites:
            total = 0
            for s in range(pending, n_sites):
                if site_eta[s] < 0:
                    site_eta[s] = eta_kernel(cfg, site_xy[s])
                total += site_eta[s]
            if n_part + total > max_particles:
                status = STOP_RESOURCE
                break
            part_pos = grow_rows(part_pos, n_part + total)
            part_key = grow_rows(part_key, n_part + total)
            part_age = grow_rows(part_age, n_part + total)
            part_site = grow_rows(part_site, n_part + total)
            part_idx = grow_rows(part_idx, n_part + total)
            for s in range(pending, n_sites):
                for k in range(1, site_eta[s] + 1):
                    part_pos[n_part] = site_xy[s]
                    part_key[n_part] = particle_key(seed, site_xy[s], k)
                    part_age[n_part] = 0
                    part_site[n_part] = s
                    part_idx[n_part] = k
                    n_part += 1
            pending = n_sites
            active[clock] = n_part
        if clock >= stop or clock >= chunk_end:
            break
        if n_part == 0:
            for t in range(clock + 1, stop + 1):
                frontier[t] = 0
                active[t] = 0
            clock = stop
            break
        if n_sites + n_part > max_sites:
            status = STOP_RESOURCE
            break
        clock += 1
        before = n_sites
        for i in range(n_part):
            a = part_age[i] + 1
            part_age[i] = a
            j = step_direction(part_key[i], a, two_d)
            if (j & 1) == 0:
                part_pos[i, j >> 1] += 1
            else:
                part_pos[i, j >> 1] -= 1
            if grid_r >= 0:
                g = cell(part_pos[i], src, grid_r)
                if grid[g] != 0:
                    continue
                grid[g] = 1
            key = pack(part_pos[i], src, w)
            slot = ht_slot(ht_keys, key)
            if ht_keys[slot] == -1:
                ht_keys, ht_vals, n_ht, site_xy, site_fp, site_eta, n_sites = _insert_site(
                    ht_keys, ht_vals, n_ht, site_xy, site_fp, site_eta, n_sites, key, part_pos[i], clock
                )
        frontier[clock] = n_sites - before
        active[clock] = n_part
        if t_done < 0 and target_keys.shape[0] > 0 and _targets_done(ht_keys, ht_vals, target_keys):
            t_done = clock
            stop = min(n_end, clock + extra_after)
    return (
        status, clock, pending, n_sites, n_part, t_done,
        ht_keys, ht_vals, site_xy, site_fp, site_eta,
        part_pos, part_key, part_age, part_site, part_idx,
    )


# --------------------------------------------------------------------------
# aggregate mode: occupied positions with particle counts, multinomial moves


@njit(cache=True)
def aggregate_advance(
    cfg,
    src,
    clock,
    n_end,
    ht_keys,
    ht_vals,
    site_xy,
    site_fp,
    site_eta,
    n_sites,
    pending,
    pos_xy,
    pos_count,
    n_pos,
    frontier,
    active,
    target_keys,
    extra_after,
    max_sites,
    grid,
    grid_r,
    gstamp,
    gslot,
    chunk_end,
    t_done,
):
    seed = cfg[0]
    d = src.shape[0]
    two_d = 2 * d
    w = 63 // d
    n_ht = n_sites
    status = OK
    stop = n_end
    if target_keys.shape[0] > 0:
        if t_done < 0 and _targets_done(ht_keys, ht_vals, target_keys):
            t_done = clock
        if t_done >= 0:
            stop = min(n_end, t_done + extra_after)
    # initial wake (fresh state): sleepers join the active count at their site
    if pending < n_sites:
        pk = np.full(16, -1, dtype=np.int64)
        pv = np.empty(16, dtype=np.int64)
        n_pk = 0
        for i in range(n_pos):
            slot = ht_slot(pk, pack(pos_xy[i], src, w))
            pk[slot] = pack(pos_xy[i], src, w)
            pv[slot] = i
            n_pk += 1
            if 2 * n_pk > pk.shape[0]:
                pk, pv = ht_rehash(pk, pv, 2 * pk.shape[0])
        for s in range(pending, n_sites):
            if site_eta[s] < 0:
                site_eta[s] = eta_kernel(cfg, site_xy[s])
            if site_eta[s] > 0:
                key = pack(site_xy[s], src, w)
                slot = ht_slot(pk, key)
                if pk[slot] == -1:
                    pos_xy = grow_rows(pos_xy, n_pos + 1)
                    pos_count = grow_rows(pos_count, n_pos + 1)
                    pos_xy[n_pos] = site_xy[s]
                    pos_count[n_pos] = site_eta[s]
                    pk[slot] = key
                    pv[slot] = n_pos
                    n_pos += 1
                    n_pk += 1
                    if 2 * n_pk > pk.shape[0]:
                        pk, pv = ht_rehash(pk, pv, 2 * pk.shape[0])
                else:
                    pos_count[pv[slot]] += site_eta[s]
        pending = n_sites
        tot = 0
        for i in range(n_pos):
            tot += pos_count[i]
        active[clock] = tot
    moved = np.empty(d, dtype=np.int64)
    while clock < stop and clock < chunk_end:
        if n_pos == 0:
            for t in range(clock + 1, stop + 1):
                frontier[t] = 0
                active[t] = 0
            clock = stop
            break
        if n_sites + two_d * n_pos > max_sites:
            status = STOP_RESOURCE
            break
        clock += 1
        cap = 16
        if grid_r < 0:
            while cap < 4 * two_d * n_pos:
                cap *= 2
        nk = np.full(cap, -1, dtype=np.int64)
        nv = np.empty(cap, dtype=np.int64)
        new_xy = np.empty((two_d * n_pos, d), dtype=np.int64)
        new_count = np.empty(two_d * n_pos, dtype=np.int64)
        n_new = 0
        for i in range(n_pos):
            h = site_hash(seed, TAG_AGGREGATE, pos_xy[i], clock)
            ctr = 1
            remaining = pos_count[i]
            for j in range(two_d):
                if j == two_d - 1:
                    k = remaining
                else:
                    k, ctr = binomial(remaining, 1.0 / (two_d - j), h, ctr)
                remaining -= k
                if k == 0:
                    continue
                for c in range(d):
                    moved[c] = pos_xy[i, c]
                if (j & 1) == 0:
                    moved[j >> 1] += 1
                else:
                    moved[j >> 1] -= 1
                if grid_r >= 0:
                    g = cell(moved, src, grid_r)
                    if gstamp[g] == clock:
                        new_count[gslot[g]] += k
                    else:
                        gstamp[g] = clock
                        gslot[g] = n_new
                        new_xy[n_new] = moved
                        new_count[n_new] = k
                        n_new += 1
                else:
                    key = pack(moved, src, w)
                    slot = ht_slot(nk, key)
                    if nk[slot] == -1:
                        nk[slot] = key
                        nv[slot] = n_new
                        new_xy[n_new] = moved
                        new_count[n_new] = k
                        n_new += 1
                    else:
                        new_count[nv[slot]] += k
                if remaining == 0:
                    break
        before = n_sites
        for i in range(n_new):
            if grid_r >= 0:
                g = cell(new_xy[i], src, grid_r)
                if grid[g] != 0:
                    continue
                grid[g] = 1
            key = pack(new_xy[i], src, w)
            slot = ht_slot(ht_keys, key)
            if ht_keys[slot] == -1:
                ht_keys, ht_vals, n_ht, site_xy, site_fp, site_eta, n_sites = _insert_site(
                    ht_keys, ht_vals, n_ht, site_xy, site_fp, site_eta, n_sites, key, new_xy[i], clock
                )
                e = eta_kernel(cfg, new_xy[i])
                site_eta[n_sites - 1] = e
                new_count[i] += e
        pending = n_sites
        pos_xy = new_xy
        pos_count = new_count
        n_pos = n_new
        tot = 0
        for i in range(n_pos):
            tot += pos_count[i]
        frontier[clock] = n_sites - before
        active[clock] = tot
        if t_done < 0 and target_keys.shape[0] > 0 and _targets_done(ht_keys, ht_vals, target_keys):
            t_done = clock
            stop = min(n_end, clock + extra_after)
    return (
        status, clock, pending, n_sites, n_pos, t_done,
        ht_keys, ht_vals, site_xy, site_fp, site_eta,
        pos_xy, pos_count,
    )


@njit(cache=True)
def first_hit_single(seed, origin, count, z, horizon):
    """min over the `count` particles born at origin of the first n <= horizon with S_n = z; -1 if none."""
    d = origin.shape[0]
    best = horizon + 1
    dist0 = 0
    for c in range(d):
        dist0 += abs(origin[c] - z[c])
    if dist0 == 0:
        return 0 if count > 0 else -1
    pos = np.empty(d, dtype=np.int64)
    for k in range(1, count + 1):
        pkey = particle_key(seed, origin, k)
        pos[:] = origin
        dist = dist0
        for n in range(1, best):
            j = step_direction(pkey, n, 2 * d)
            axis = j >> 1
            before = abs(pos[axis] - z[axis])
            if (j & 1) == 0:
                pos[axis] += 1
            else:
                pos[axis] -= 1
            dist += abs(pos[axis] - z[axis]) - before
            if dist == 0:
                best = n
                break
            if dist > best - 1 - n:
                # cannot reach z before the current best
                break
    return best if best <= horizon else -1


@njit(cache=True)
def walk_until_occupied(cfg, origin, k, age, start, max_steps):
    """Follow particle k of origin from `start` (already `age` steps taken) until it
    stands on an initially occupied site. Returns (steps taken or -1, final position)."""
    seed = cfg[0]
    d = origin.shape[0]
    pos = start.copy()
    pkey = particle_key(seed, origin, k)
    for u in range(1, max_steps + 1):
        j = step_direction(pkey, age + u, 2 * d)
        if (j & 1) == 0:
            pos[j >> 1] += 1
        else:
            pos[j >> 1] -= 1
        if eta_kernel(cfg, pos) >= 1:
            return u, pos
    return -1, pos
