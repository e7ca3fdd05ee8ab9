import math

import numpy as np
import pytest

from frogmodel.engine import run
from frogmodel.lattice import diamond_points, diamond_size
from frogmodel.randomness import InitialConfigSpec
from frogmodel.shape import (EstimationError, RescaledSet, build_mu_estimate, convexity_defect, coverage,
                             estimate_mu, estimate_mu_many, hausdorff_l1, hull_lattice_points, metrics,
                             rescale, shape_from_mu, shape_svg, symmetry_defect)


@pytest.fixture(scope="module")
def rec2():
    return run(InitialConfigSpec.bernoulli(2, 0.5, master_seed=11), None, 60)


def test_rescale_examples(rec2):
    rs = rescale(rec2, 30)
    assert rs.scale == 30 and rs.dimension == 2
    assert np.abs(rs.points).sum(axis=1).max() <= 1.0
    assert len(rs) == int((rec2.times <= 30).sum())
    with pytest.raises(ValueError):
        rescale(rec2, 0)
    moved = run(InitialConfigSpec.bernoulli(2, 0.5, master_seed=11), (5, -2), 10)
    assert (rescale(moved, 10).cells == 0).all(axis=1).any()


def test_mu_lower_bound_and_determinism():
    spec = InitialConfigSpec.bernoulli(2, 0.5, master_seed=4)
    a = estimate_mu(spec, (1, 0), [5, 10, 20], 8, 200)
    b = estimate_mu(spec, (1, 0), [5, 10, 20], 8, 200)
    assert np.array_equal(a.samples, b.samples, equal_nan=True)
    assert a.point == b.point
    assert np.nanmin(a.samples) >= 1.0
    assert a.ci_low <= a.point <= a.ci_high
    assert not a.unreliable and a.censored == {5: 0, 10: 0, 20: 0}


def test_disjoint_seed_sets_agree():
    spec = InitialConfigSpec.constant(2, 1, master_seed=0)
    a = estimate_mu(spec, (1, 1), [10, 20], 15, 200, first_replica=0)
    b = estimate_mu(spec, (1, 1), [10, 20], 15, 200, first_replica=1000)
    assert a.ci_low <= b.ci_high and b.ci_low <= a.ci_high


def test_censoring_is_reported():
    spec = InitialConfigSpec.bernoulli(2, 0.5, master_seed=4)
    with pytest.raises(EstimationError):
        estimate_mu(spec, (1, 0), [50], 4, 30, ray=False)
    est = build_mu_estimate((1, 0), [10], np.array([[12], [-1], [-1], [15]]), 20)
    assert est.censored == {10: 2} and est.unreliable
    assert est.point == pytest.approx(1.35)


def test_ray_estimator_ratio_near_one():
    spec = InitialConfigSpec.bernoulli(1, 0.5, master_seed=2)
    est = estimate_mu(spec, (1,), [20, 40], 30, 400)
    assert est.ray_point is not None
    assert 0.7 < est.ray_ratio < 1.3


def test_mu_homogeneity_and_symmetry_small_scale():
    spec = InitialConfigSpec.constant(2, 1, master_seed=8)
    e1, e2, e11, e22 = estimate_mu_many(spec, [(1, 0), (0, 1), (1, 1), (2, 2)], [15, 30], 20, 300, ray=False)
    # symmetry: mu(e1) = mu(e2) up to sampling error
    assert abs(e1.point - e2.point) <= 3 * math.hypot(e1.half_width, e2.half_width) / 1.96
    # homogeneity: T(0, n (2x)) / n = 2 T(0, (2n) x) / (2n), sample by sample
    assert np.allclose(e22.samples[:, 0], 2 * e11.samples[:, 1])
    # T/n decreases towards mu, so the finite-n estimates are ordered
    assert e11.mean_at(30) <= e11.mean_at(15)
    # subadditivity: mu(e1 + e2) <= mu(e1) + mu(e2)
    assert e11.ci_low <= e1.ci_high + e2.ci_high


def test_shape_from_mu_diamond_and_interval():
    pairs = [((1, 0), 1.0), ((0, 1), 1.0), ((1, 1), 2.0)]
    poly = shape_from_mu(pairs)
    pts = diamond_points(2, 10) / 10.0
    assert np.allclose(poly.gauge(pts), np.abs(pts).sum(axis=1))
    assert poly.contains([[0.5, 0.5]])[0] and not poly.contains([[0.6, 0.5]])[0]
    line = shape_from_mu([((1,), 1.25)])
    assert np.allclose(line.vertices.ravel(), [-0.8, 0.8])
    cube = shape_from_mu([((1, 0, 0), 1.0), ((0, 1, 0), 1.0), ((0, 0, 1), 1.0)])
    q = np.array([[0.2, 0.3, 0.1], [-0.5, 0.25, 0.25]])
    assert np.allclose(cube.gauge(q), np.abs(q).sum(axis=1))


def test_shape_from_mu_symmetrises():
    poly = shape_from_mu([((1, 0), 1.0), ((0, 1), 1.5), ((1, 1), 2.0)])
    # e1 and e2 radii are averaged: 1/1.0 and 1/1.5 -> 5/6 each
    g = poly.gauge([[1, 0], [0, 1], [-1, 0], [0, -1]])
    assert np.allclose(g, 1.2)


def test_shape_from_mu_rejects_bad_input():
    with pytest.raises(ValueError):
        shape_from_mu([((1, 0), 1.0), ((2, 0), 2.0)])
    with pytest.raises(ValueError):
        shape_from_mu([((1, 0), 0.0), ((0, 1), 1.0)])


def test_metrics_full_and_singleton():
    full = RescaledSet(7, diamond_points(2, 7))
    m = metrics(full)
    assert (m.coverage, m.symmetry_defect, m.convexity_defect) == (1.0, 0.0, 0.0)
    single = metrics([(0, 0)], n=7)
    assert single.coverage == pytest.approx(1 / diamond_size(2, 7))
    assert single.symmetry_defect == 0.0 and single.convexity_defect == 0.0


def test_symmetry_and_convexity_examples():
    assert symmetry_defect(np.array([[0, 0], [1, 0]])) == pytest.approx(1.0)
    assert convexity_defect(np.array([[0, 0], [2, 0]])) == pytest.approx(1 / 3)
    assert convexity_defect(np.array([[0, 0], [1, 0], [0, 1], [1, 1]])) == 0.0
    hull = hull_lattice_points(np.array([[0, 0], [2, 2]]))
    assert sorted(map(tuple, hull)) == [(0, 0), (1, 1), (2, 2)]


def test_hausdorff_examples():
    a = RescaledSet(7, [[0, 0]])
    b = RescaledSet(7, [[0, 0], [1, 0]])
    assert hausdorff_l1(a, b) == pytest.approx(1 / 7)
    assert hausdorff_l1(b, b) == 0.0
    c = RescaledSet(14, [[0, 0], [2, 0]])
    assert hausdorff_l1(b, c) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        hausdorff_l1(a, RescaledSet(7, np.zeros((0, 2))))


def test_metrics_of_simulated_set_are_in_range(rec2):
    m = metrics(rescale(rec2, 60), reference=rescale(rec2, 30))
    assert 0 < m.coverage <= 1
    assert 0 <= m.symmetry_defect <= 2
    assert 0 <= m.convexity_defect < 1
    assert m.hausdorff_to_reference >= 0


def test_svg_output(rec2):
    poly = shape_from_mu([((1, 0), 1.3), ((0, 1), 1.3), ((1, 1), 2.4)])
    svg = shape_svg(rescale(rec2, 40), poly)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert "<rect" in svg and "polygon" in svg
    assert shape_svg(rescale(rec2, 40), poly) == svg
