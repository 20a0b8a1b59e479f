import math

import numpy as np
import pytest

from dynlab import InsufficientDepth
from dynlab import dynamics as dyn
from dynlab import transversality as tv
from dynlab import unstable as un
from dynlab.dynamics import Itinerary, Point


def _shifted(curve, dz):
    s = curve.samples.copy()
    s[:, 2] += dz
    return tv.UnstableCurve(curve.backward, curve.depth, s, curve.length)


@pytest.fixture
def curve1(ex1, rng):
    word = Itinerary(tuple(rng.integers(1, 4, 40)), "backward")
    return tv.unstable_curve(word, ex1, x0=0.1, span=0.5)


def test_stable_distance_self(curve1):
    assert tv.stable_distance(curve1, curve1) == 0.0


def test_stable_distance_parallel(curve1):
    assert tv.stable_distance(curve1, _shifted(curve1, 0.3)) == pytest.approx(0.3, abs=1e-15)


def test_stable_distance_disjoint(ex1):
    a = tv.unstable_curve(Itinerary.constant(2, 40), ex1, x0=0.0, span=0.2)
    b = tv.unstable_curve(Itinerary.constant(2, 40), ex1, x0=0.5, span=0.2)
    assert tv.stable_distance(a, b) == math.inf


def test_stable_distance_contracts_by_lambda_ss(ex1, curve1):
    c2 = _shifted(curve1, 0.25)
    d0 = tv.stable_distance(curve1, c2)
    img1 = dyn.step(curve1.samples, ex1)
    img2 = dyn.step(c2.samples, ex1)
    f1 = tv.UnstableCurve(curve1.backward, curve1.depth, img1, 0.0)
    f2 = tv.UnstableCurve(c2.backward, c2.depth, img2, 0.0)
    assert tv.stable_distance(f1, f2) == pytest.approx(ex1.lambda_ss * d0, rel=1e-12)


@pytest.mark.parametrize("name", ["ex1", "ex2"])
def test_curve_in_cone_and_flat(name, request, rng):
    params = request.getfixturevalue(name)
    word = Itinerary(tuple(rng.integers(1, params.l + 1, 40)), "backward")
    c = tv.unstable_curve(word, params, x0=0.2, span=0.5, n_samples=501)
    assert np.ptp(c.samples[:, 2]) == 0.0
    seg = np.diff(c.samples[:, :2], axis=0)
    mids = 0.5 * (c.samples[1:, 0] + c.samples[:-1, 0])
    words = np.tile(word.symbols, (len(mids), 1))
    slopes = un.alpha_uu_batch(words, params, mids)
    dev = np.abs(np.arctan2(seg[:, 1], seg[:, 0]) - np.arctan(slopes))
    assert dev.max() < 1e-3
    assert c.length > 0.5


def test_curve_rejects_wrap(ex1):
    with pytest.raises(ValueError):
        tv.unstable_curve(Itinerary.constant(1, 40), ex1, x0=0.8, span=0.5)


def test_projection_properties(rng):
    p = Point(0.3, -0.2, 0.4)
    assert tv.project_stable(p, 0.4) == p
    pts = rng.random((100, 3))
    a = tv.project_stable(pts, 0.1)
    assert np.array_equal(a[:, :2], pts[:, :2])
    assert np.array_equal(tv.project_stable(a, 0.1), a)
    assert tv.project_stable(p, 0.4, flip=True).z == -0.4


@pytest.mark.parametrize("eps", [0.1, 0.05, 0.01])
def test_exhaustive_depth6(ex1, eps):
    rep = tv.exhaustive_floor(ex1, 6, eps)
    assert rep["n_cylinders"] == 3 ** 6
    assert rep["pass"]
    assert rep["slope_gap_min"] >= rep["closed_form_floor"]


def test_exhaustive_floor_by_first_difference(ex1):
    depth = 7
    words = un.all_words(3, depth)
    vals = un.alpha_uu_batch(words, ex1)
    i, j = np.triu_indices(len(words), k=1)
    j0 = np.argmax(words[i] != words[j], axis=1)
    gap = np.abs(vals[i] - vals[j])
    rho, S, a3 = ex1.rho, un.sup_bound(ex1), ex1.alpha / 3
    s1 = words[i][np.arange(len(i)), j0]
    s2 = words[j][np.arange(len(j)), j0]
    outer = np.abs(s1 - s2) == 2
    for k in range(depth):
        sel = j0 == k
        far = (2 * a3) * rho ** k - 2 * S * rho ** (k + 1) / (1 - rho)
        near = a3 * rho ** k - 2 * a3 * rho ** (k + 1) / (1 - rho)
        assert gap[sel & outer].min() >= far
        assert gap[sel & ~outer].min() >= near
        # the two-symbol-step floor does not hold for adjacent symbols
        assert gap[sel & ~outer].min() < far


def test_identical_words_only_pairs_with_zero_gap(ex1):
    words = un.all_words(3, 6)
    vals = un.alpha_uu_batch(words, ex1)
    z = dyn.attractor_points(words, ex1, np.zeros(len(words)))[:, 2]
    i, j = np.triu_indices(len(words), k=1)
    assert np.min(np.abs(vals[i] - vals[j])) > 0
    assert np.min(np.abs(z[i] - z[j])) > 0


def test_audit_ex1(ex1):
    rep = tv.audit_H1(ex1, [0.1, 0.05, 0.01], n_pairs=5000, seed=1)
    assert [r["epsilon"] for r in rep["results"]] == [0.1, 0.05, 0.01]
    for row in rep["results"]:
        assert row["pass"]
        assert row["theta_hat"] >= row["angle_floor"]
        assert row["theta_hat_monotone"]
    thetas = [r["theta_hat"] for r in rep["results"]]
    assert thetas == sorted(thetas, reverse=True)
    assert rep["fundamental_domain"] == pytest.approx([0.005, 0.05])
    assert len(rep["worst_pairs"]) == 20


def test_audit_seeded(ex1):
    a = tv.audit_H1(ex1, [0.05], n_pairs=500, seed=4)
    b = tv.audit_H1(ex1, [0.05], n_pairs=500, seed=4)
    assert a == b


def test_audit_ex2(ex2):
    rep = tv.audit_H1(ex2, [0.5, 0.25], n_pairs=5000, seed=2)
    assert rep["example2_constants"]["K_positive"]
    assert all(r["pass"] for r in rep["results"])


def test_audit_insufficient_depth(ex1):
    with pytest.raises(InsufficientDepth):
        tv.audit_H1(ex1, [0.001], depth=5)


def test_audit_deformed_half_floor(ex1):
    params = ex1.replace(mu=1.0, n_power=8)
    a = 0.005
    rep = tv.audit_H1(params, [a], n_pairs=2000, seed=0, depth=16)
    theta_a = tv.angle_floor(params, a)
    assert rep["results"][0]["theta_hat"] >= theta_a / 2


def test_cone_margin_mu_zero(ex1):
    rep = tv.cone_family_margin(ex1, mu=0.0, n=4, n_samples=300)
    assert rep["omega_required"] < 1e-12


def test_cone_margin_trend(ex1):
    omegas = [tv.cone_family_margin(ex1, mu=1.0, n=n, n_samples=500)["omega_required"]
              for n in range(2, 9)]
    assert all(b < a for a, b in zip(omegas, omegas[1:]))


def test_cone_margin_positive_at_n8(ex1):
    rep = tv.cone_family_margin(ex1, mu=1.0, n=8, n_samples=2000)
    assert rep["margin"] > 0
    assert rep["omega_required"] <= rep["bound_rhs"]
