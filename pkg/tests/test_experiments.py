import json

import numpy as np
import pytest

from frogmodel.engine import run
from frogmodel.experiments import (MGoodParams, execute, growth_probe, m_good_check, monotone_suite,
                                   record_coverage, subadditivity_suite, tail_curve, wilson_interval)
from frogmodel.manifest import ManifestError, validate_manifest
from frogmodel.randomness import InitialConfigSpec


def test_manifest_errors_name_the_field():
    with pytest.raises(ManifestError, match=r"\$\.spec\.dimension"):
        validate_manifest({"kind": "run", "spec": {"dimension": 9}, "horizon": 5})
    with pytest.raises(ManifestError, match=r"\$\.replicas"):
        validate_manifest({"kind": "mu", "spec": {"dimension": 2}, "n_schedule": [5], "replicas": 0,
                           "horizon": 10})
    with pytest.raises(ManifestError, match="horizon"):
        validate_manifest({"kind": "run", "spec": {"dimension": 2}})
    with pytest.raises(ManifestError, match=r"\$\.n_schedule"):
        validate_manifest({"kind": "shape", "spec": {"dimension": 2}, "n_schedule": [10, 5], "replicas": 1,
                           "horizon": 20})
    with pytest.raises(ManifestError, match=r"\$\.directions\[0\]"):
        validate_manifest({"kind": "mu", "spec": {"dimension": 2}, "n_schedule": [5], "replicas": 1,
                           "horizon": 10, "directions": [[1, 0, 0]]})


def test_manifest_defaults():
    m = validate_manifest({"kind": "shape", "spec": {"dimension": 2}, "n_schedule": [10], "replicas": 1,
                           "horizon": 10})
    assert m["mode"] == "identity" and m["directions"] == [[1, 0], [0, 1], [1, 1]]


@pytest.mark.parametrize("delta", [2, 2.5])
def test_tail_delta_must_be_below_dimension(delta):
    with pytest.raises(ManifestError, match="tail_delta"):
        validate_manifest({"kind": "full_diamond", "spec": {"dimension": 2}, "n_schedule": [5],
                           "replicas": 1, "tail_delta": delta})


def test_m_good_examples():
    for d in (1, 2, 3, 4):
        res = m_good_check(InitialConfigSpec.constant(d, 1), 100 if d < 4 else 20)
        assert res.good and res.threshold == 0.5
    empty = InitialConfigSpec.finite(2, {})
    assert not m_good_check(empty, 100, MGoodParams(2, 100, p1=0.5)).good
    assert MGoodParams(1, 100).n_d == pytest.approx(10.0)
    with pytest.raises(ValueError, match="too small"):
        m_good_check(InitialConfigSpec.constant(2, 1), 0.5)
    with pytest.raises(ValueError, match="window"):
        m_good_check(InitialConfigSpec.constant(2, 1), 10**8, window=1000)


def test_growth_probe_examples():
    spec = InitialConfigSpec.constant(2, 1, master_seed=3)
    res = growth_probe(spec, [(1, 0)], [5, 10, 20], 10, 200, delta_grid=[0.05, 0.1, 0.2], threshold=0.8)
    assert res["delta_hat"] is None or 0 < res["delta_hat"] < 1
    freq = np.array(res["frequency"])
    assert ((0 <= freq) & (freq <= 1)).all()
    # a smaller ball is visited whenever a larger one is
    assert (np.diff(freq, axis=1) <= 1e-12).all()
    none = growth_probe(spec, [(1, 0)], [3], 5, 50, delta_grid=[0.99], threshold=1.0)
    assert none["delta_hat"] is None
    with pytest.raises(ValueError):
        growth_probe(spec.replace(condition_origin=False), [(1, 0)], [3], 1, 10)


def test_tail_curve_examples():
    spec = InitialConfigSpec.bernoulli(2, 0.5, master_seed=6)
    res = tail_curve(spec, (3, 0), [0, 3, 5, 8, 12, 40], 200)
    surv = [c["survival"] for c in res["curve"]]
    assert surv[0] == 1.0 and surv[1] == 1.0
    assert all(a >= b for a, b in zip(surv, surv[1:]))
    times = np.array(res["times"])
    for c in res["curve"]:
        assert c["ci_low"] <= c["survival"] <= c["ci_high"]
        k = int(((times < 0) | (times >= c["m"])).sum())
        assert c["survival"] == k / 200
    lo, hi = wilson_interval(0, 10)
    assert lo == 0.0 and 0.2 < hi < 0.35


def test_full_diamond_coverage_examples():
    spec = InitialConfigSpec.bernoulli(2, 0.5, master_seed=2)
    rec = run(spec, None, 30)
    assert record_coverage(rec, 0) == 1.0
    cov = [record_coverage(rec, n, 30) for n in range(0, 31, 5)]
    assert all(0 <= c <= 1 for c in cov) and cov == sorted(cov)
    m = {"kind": "full_diamond", "spec": {"dimension": 1, "master_seed": 4}, "n_schedule": [5, 20],
         "replicas": 4, "tail_delta": 0.5}
    rep = execute(m, write=False)
    for row in rep.summary["coverage"]:
        assert 0 <= row["heavy"]["mean"] <= 1 and 0 <= row["baseline"]["mean"] <= 1
    assert rep.summary["baseline_spec"]["family"] == "bernoulli"


def test_invariant_suites_small():
    spec = InitialConfigSpec.bernoulli(2, 0.5, master_seed=5)
    sub = subadditivity_suite(spec, 40, 200)
    assert sub["verdicts"]["violated"] == 0 and sum(sub["verdicts"].values()) == 40
    mono = monotone_suite(spec, 10, 60)
    assert mono["contained"] == 10


def test_shape_report_is_reproducible(tmp_path):
    m = {"kind": "shape", "spec": {"family": "bernoulli", "dimension": 2, "params": {"p": 0.5},
                                   "master_seed": 1},
         "n_schedule": [10, 20], "replicas": 3, "horizon": 20}
    m["output_dir"] = str(tmp_path / "a")
    a = execute(m)
    first = {p.name: p.read_bytes() for p in sorted(a.output_dir.iterdir())}
    b = execute(m, workers=2)
    assert {p.name: p.read_bytes() for p in sorted(b.output_dir.iterdir())} == first
    assert {"report.json", "manifest.json"} <= set(first)
    summary = json.loads((a.output_dir / "report.json").read_text())
    assert "censored" in json.dumps(summary["mu"])
    assert summary["manifest"]["kind"] == "shape"


def test_oracle_and_check_through_execute(tmp_path):
    rep = execute({"kind": "oracle", "occupancy": [[x, 1] for x in range(-3, 4)], "horizon": 2,
                   "output_dir": str(tmp_path / "o")})
    assert rep.summary["prob_within_horizon"]["2"] == "3/8"
    rep = execute({"kind": "check", "spec": {"dimension": 1, "master_seed": 2}, "horizon": 100,
                   "triples": 20, "pairs": 3}, write=False)
    assert not rep.violated
