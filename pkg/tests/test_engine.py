import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2_contingency

from frogmodel import engine
from frogmodel.engine import (AGGREGATE, IDENTITY, FrogState, InvariantViolation, PassageRecord,
                              ResourceLimitError, active_count, check_record, resume, run, visited_at)
from frogmodel.lattice import l1_norm
from frogmodel.randomness import InitialConfigSpec, eta_array
from conftest import sigma3


@pytest.mark.parametrize("mode", [IDENTITY, AGGREGATE])
def test_horizon_zero(mode):
    spec = InitialConfigSpec.poisson(2, 2.0, master_seed=4)
    rec = run(spec, (3, -1), 0, mode)
    assert rec.first_passage == {(3, -1): 0} or eta_array(spec, np.array([[3, -1]]))[0] == 0


@pytest.mark.parametrize("mode", [IDENTITY, AGGREGATE])
def test_empty_source_gives_empty_record(mode):
    spec = InitialConfigSpec.finite(1, {(1,): 3, (2,): 1})
    for h in (0, 1, 5, 50):
        rec = run(spec, (0,), h, mode)
        assert len(rec) == 0
        assert active_count(rec, h) == 0


def test_one_per_site_two_steps_law():
    counts = {2: 0, 3: 0}
    n = 4000
    for seed in range(n):
        rec = run(InitialConfigSpec.constant(1, 1, master_seed=seed), None, 2)
        counts[len(visited_at(rec, 2))] += 1
    assert abs(counts[2] / n - 0.25) <= sigma3(0.25, n)
    assert abs(counts[3] / n - 0.75) <= sigma3(0.75, n)


def test_visited_at_examples(bern2):
    rec = run(bern2, None, 60)
    assert visited_at(rec, 0).tolist() == [[0, 0]]
    for n in range(60):
        a = {tuple(x) for x in visited_at(rec, n)}
        b = {tuple(x) for x in visited_at(rec, n + 1)}
        assert a <= b
        assert all(l1_norm(x) <= n for x in a)
    with pytest.raises(ValueError):
        visited_at(rec, 61)


def test_active_count_examples():
    spec = InitialConfigSpec.constant(2, 1, master_seed=2)
    rec = run(spec, None, 40)
    assert active_count(rec, 0) == 1
    for n in range(41):
        assert active_count(rec, n) == len(visited_at(rec, n)) == rec.active_sizes[n]
    poisson = InitialConfigSpec.poisson(1, 4.0, master_seed=5)
    assert active_count(run(poisson, None, 0), 0) == eta_array(poisson, np.zeros((1, 1), np.int64))[0]
    assert active_count(FrogState(poisson, (0,))) == active_count(run(poisson, None, 0), 0)


@pytest.mark.parametrize("mode", [IDENTITY, AGGREGATE])
def test_determinism(mode, bern2):
    a = run(bern2, None, 150, mode)
    b = run(bern2, None, 150, mode)
    assert np.array_equal(a.sites, b.sites) and np.array_equal(a.times, b.times)


@settings(max_examples=25, deadline=None)
@given(d=st.integers(1, 4), seed=st.integers(0, 2**32), h=st.integers(0, 40),
       family=st.sampled_from(["bernoulli", "poisson", "geometric", "heavy_tail"]),
       mode=st.sampled_from([IDENTITY, AGGREGATE]))
def test_containment_and_conservation(d, seed, h, family, mode):
    params = {"bernoulli": {"p": 0.4}, "poisson": {"lam": 0.7}, "geometric": {"p": 0.6},
              "heavy_tail": {"delta": 0.9, "cap": 50}}[family]
    spec = InitialConfigSpec(d, family, params, master_seed=seed)
    rec = run(spec, None, h, mode)
    check_record(rec)
    assert (l1_norm(rec.sites) <= rec.times).all()
    for n in range(h + 1):
        assert active_count(rec, n) == int(rec.eta[rec.times <= n].sum()) == rec.active_sizes[n]


def test_mode_equivalence_chi_square():
    n = 4000
    tables = []
    for mode in (IDENTITY, AGGREGATE):
        sizes = [len(run(InitialConfigSpec.constant(1, 1, master_seed=s), None, 3, mode)) for s in range(n)]
        tables.append(np.bincount(sizes, minlength=6)[2:6])
    table = np.array(tables)
    table = table[:, table.sum(axis=0) > 0]
    assert chi2_contingency(table)[1] > 0.001


def test_no_interaction_with_unwoken_sleepers(bern2):
    h = 30
    rec = run(bern2, None, h)
    box = np.stack(np.meshgrid(np.arange(-h - 1, h + 2), np.arange(-h - 1, h + 2)), -1).reshape(-1, 2)
    eta = eta_array(bern2, box)
    visited = {tuple(x) for x in rec.sites}
    field = {tuple(x): int(c) for x, c in zip(box, eta) if c}
    unwoken = next(x for x in field if x not in visited)
    copy = InitialConfigSpec.finite(2, field, master_seed=bern2.master_seed)
    pruned = dict(field)
    del pruned[unwoken]
    pruned_spec = InitialConfigSpec.finite(2, pruned, master_seed=bern2.master_seed)
    for other in (copy, pruned_spec):
        r2 = run(other, None, h)
        assert r2.first_passage == rec.first_passage


@pytest.mark.parametrize("mode", [IDENTITY, AGGREGATE])
def test_dense_grid_and_hash_paths_agree(mode, monkeypatch, bern2):
    ref = run(bern2, None, 120, mode)
    monkeypatch.setitem(engine.DENSE_CELLS, mode, 0)
    hashed = run(bern2, None, 120, mode)
    monkeypatch.setitem(engine.DENSE_CELLS, mode, 41**2)  # box of radius 20: forces chunked growth
    chunked = run(bern2, None, 120, mode)
    for other in (hashed, chunked):
        assert np.array_equal(ref.sites, other.sites) and np.array_equal(ref.times, other.times)


def test_targets_stop_early(bern2):
    rec = run(bern2, None, 1000, targets=[(5, 5)], extra_after=3)
    t = rec.time_of((5, 5))
    assert t is not None and rec.horizon == t + 3


def test_horizon_guard():
    spec = InitialConfigSpec.constant(1)
    with pytest.raises(ValueError):
        run(spec, None, 2**30)
    with pytest.raises(ResourceLimitError):
        run(InitialConfigSpec.constant(4), None, 20_000)


@pytest.mark.parametrize("mode", [IDENTITY, AGGREGATE])
def test_snapshot_resume_matches_straight_run(mode, tmp_path, bern2):
    full = run(bern2, None, 90, mode)
    FrogState(bern2, (0, 0), mode).advance(40).save(tmp_path / "snap")
    resumed = resume(tmp_path / "snap", 90).to_record()
    assert np.array_equal(full.sites, resumed.sites) and np.array_equal(full.times, resumed.times)


def test_resource_limit_writes_snapshot(tmp_path, bern2):
    with pytest.raises(ResourceLimitError) as err:
        run(bern2, None, 200, max_sites=500, snapshot_dir=tmp_path / "partial")
    assert err.value.snapshot_path is not None
    state = resume(err.value.snapshot_path, 200, max_sites=10**6)
    full = run(bern2, None, 200)
    assert state.to_record().first_passage == full.first_passage


def test_csv_roundtrip(tmp_path, bern2):
    rec = run(bern2, (2, -1), 50)
    rec.to_csv(tmp_path / "r.csv")
    back = PassageRecord.from_csv(tmp_path / "r.csv")
    assert back.first_passage == rec.first_passage
    assert back.source == (2, -1) and back.config_digest == rec.config_digest
    assert np.array_equal(back.eta, rec.eta)


def test_check_record_detects_corruption(bern2):
    rec = run(bern2, None, 50)
    rec.times[5] = 0
    with pytest.raises(InvariantViolation):
        check_record(rec)


def test_particles_at_lists_identities():
    spec = InitialConfigSpec.constant(1, 2, master_seed=3)
    state = FrogState(spec, (0,)).advance(1)
    where = [p for y in (-1, 1) for p in state.particles_at((y,))]
    moved = sorted((o, k) for o, k, age in where if age == 1)
    assert moved == [((0,), 1), ((0,), 2)]
    # sleepers woken at step 1 sit at their own site and have not moved yet
    woken = sorted((o, k) for o, k, age in where if age == 0)
    visited = [(y,) for y in (-1, 1) if state.to_record().time_of((y,)) == 1]
    assert woken == sorted((y, k) for y in visited for k in (1, 2))
