import numpy as np
import pytest

from frogmodel.engine import run, visited_at
from frogmodel.passage import (CensoredTime, Verdict, occupied_ray, passage_time, passage_time_real,
                               passage_times, subadditivity_check, subadditivity_verdict, t_single,
                               wake_transit)
from frogmodel.randomness import InitialConfigSpec, eta_at
from conftest import sigma3


def test_censored_ordering():
    assert CensoredTime(5, 10) < CensoredTime.censored(10)
    assert CensoredTime.censored(10) > 10
    assert CensoredTime(3) == 3 and CensoredTime(3) < 4
    assert CensoredTime.censored(10) == CensoredTime.censored(20, infinite=True)
    with pytest.raises(ValueError):
        int(CensoredTime.censored(1))


def test_passage_to_self_is_zero(bern2):
    x = (0, 0)
    assert passage_time(bern2, x, x, 0) == 0


def test_speed_bound_censors():
    spec = InitialConfigSpec.constant(2, 3, master_seed=1)
    assert not passage_time(spec, (0, 0), (4, 3), 6).finite
    assert passage_time(spec, (0, 0), (4, 3), 500) >= 7


def test_first_step_law():
    n = 4000
    hits = sum(passage_time(InitialConfigSpec.constant(1, 1, master_seed=s), (0,), (1,), 1) == 1
               for s in range(n))
    assert abs(hits / n - 0.5) <= sigma3(0.5, n)


def test_t_single_examples():
    spec = InitialConfigSpec.finite(1, {(0,): 2})
    assert t_single(spec, (0,), (0,), 10) == 0
    empty = InitialConfigSpec.finite(1, {(0,): 2})
    for h in (0, 10, 1000):
        t = t_single(empty, (5,), (6,), h)
        assert not t.finite and t.infinite
    n = 4000
    hits = sum(t_single(InitialConfigSpec.finite(1, {(0,): 2}, master_seed=s), (0,), (1,), 1) == 1
               for s in range(n))
    assert abs(hits / n - 0.75) <= sigma3(0.75, n)


def test_subadditivity_examples(bern2):
    occupied = [x for x in [(i, j) for i in range(-3, 4) for j in range(-3, 4)] if eta_at(bern2, x)]
    empty = next(x for x in [(i, 0) for i in range(1, 50)] if not eta_at(bern2, x))
    x = occupied[0]
    assert subadditivity_check(bern2, x, x, x, 10).verdict is Verdict.HOLDS
    assert subadditivity_check(bern2, (0, 0), empty, (2, 2), 200).verdict is Verdict.VACUOUS


def test_subadditivity_random_triples_one_per_site():
    spec = InitialConfigSpec.constant(1, 1, master_seed=42)
    rng = np.random.default_rng(0)
    for _ in range(300):
        x, y, z = rng.integers(-25, 26, size=3)
        assert subadditivity_check(spec, (x,), (y,), (z,), 1000).verdict is not Verdict.VIOLATED


def test_verdict_logic():
    c = CensoredTime.censored(10)
    assert subadditivity_verdict(CensoredTime(4), CensoredTime(2), CensoredTime(3), 10) is Verdict.HOLDS
    assert subadditivity_verdict(CensoredTime(6), CensoredTime(2), CensoredTime(3), 10) is Verdict.VIOLATED
    assert subadditivity_verdict(c, CensoredTime(2), CensoredTime(3), 10) is Verdict.VIOLATED
    assert subadditivity_verdict(c, CensoredTime(6), CensoredTime(6), 10) is Verdict.VACUOUS
    assert subadditivity_verdict(CensoredTime(1), c, CensoredTime(3), 10) is Verdict.VACUOUS


def test_consistency_with_engine_record(bern2):
    rec = run(bern2, None, 80)
    for y in rec.sites[::97]:
        assert passage_time(bern2, (0, 0), tuple(y), 80) == rec.time_of(y)


def test_coupled_monotonicity_with_added_particles():
    base = InitialConfigSpec.bernoulli(2, 0.3, master_seed=9)
    richer = base.replace(extra=[[1, 0, 2], [0, 0, 1], [-3, 2, 1]])
    a, b = run(base, None, 150), run(richer, None, 150)
    tb = b.times_at(a.sites)
    assert (tb >= 0).all() and (tb <= a.times).all()


def test_chain_upper_bound(bern2):
    occupied = [x for x in [(i, j) for i in range(-4, 5) for j in range(-4, 5)] if eta_at(bern2, x)]
    rng = np.random.default_rng(3)
    for _ in range(30):
        chain = [occupied[i] for i in rng.choice(len(occupied), size=4)]
        hops = [t_single(bern2, a, b, 400) for a, b in zip(chain, chain[1:])]
        if not all(h.finite for h in hops):
            continue
        total = sum(h.value for h in hops)
        assert passage_time(bern2, chain[0], chain[-1], 400) <= total


def test_occupied_ray_examples():
    assert occupied_ray(InitialConfigSpec.constant(2, 1), (1, 1), 10) == list(range(11))
    spec = InitialConfigSpec.bernoulli(2, 0.5, master_seed=12)
    v = occupied_ray(spec, (1, 0), 10_000)
    assert v[0] == 0
    gaps = np.diff(v)
    assert abs(gaps.mean() - 2.0) <= 3 * np.sqrt(0.5) / 0.5 / np.sqrt(gaps.size)
    assert all(eta_at(spec, (k, 0)) >= 1 for k in v[1:50])
    with pytest.raises(ValueError):
        occupied_ray(InitialConfigSpec.constant(2, 0, condition_origin=False), (1, 0), 3)


def test_wake_transit_examples(bern2):
    rec = run(bern2, None, 40)
    seen_positive = False
    for y in map(tuple, rec.sites[:200]):
        u, landing = wake_transit(bern2, rec, y, 500)
        if eta_at(bern2, y) >= 1:
            assert u == 0 and landing == y
        else:
            assert u >= 1
            if u.finite:
                seen_positive = True
                assert eta_at(bern2, landing) >= 1
    assert seen_positive
    ones = InitialConfigSpec.constant(2, 1, master_seed=5)
    rec1 = run(ones, None, 20)
    assert all(wake_transit(ones, rec1, tuple(y), 10)[0] == 0 for y in rec1.sites[:50])
    with pytest.raises(ValueError):
        wake_transit(bern2, rec, (100, 100), 10)


def test_real_points_map_to_cells(bern2):
    assert passage_time_real(bern2, (0.2, -0.4), (2.4, 0.6), 200) == passage_time(bern2, (0, 0), (2, 1), 200)


def test_empty_start_is_infinite():
    spec = InitialConfigSpec.finite(1, {(1,): 1})
    t = passage_time(spec, (0,), (1,), 100)
    assert not t.finite and t.infinite
    assert all(not t.finite for t in passage_times(spec, (0,), [(1,), (2,)], 5))
