import inspect
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynlab import EX1, BranchMiss, DepthTooSmall, default_params
from dynlab import dynamics as dyn
from dynlab.dynamics import Itinerary, Point


def test_step_ex1_origin(ex1):
    d1 = ex1.d[0]
    assert dyn.step(Point(0.0, 0.0, 0.0), ex1) == Point(0.0, -ex1.alpha, d1)


def test_step_ex2_origin(ex2):
    assert dyn.step(Point(0.0, 0.0, 0.0), ex2) == Point(0.0, 0.0, 0.5)


def test_step_z_contraction(ex1):
    a = dyn.step(Point(0.2, 0.1, 0.3), ex1)
    b = dyn.step(Point(0.2, 0.1, 0.5), ex1)
    assert b.z - a.z == pytest.approx(ex1.lambda_ss * 0.2, abs=1e-15)


def test_step_vectorised_matches_scalar(ex2, rng):
    pts = np.column_stack([rng.random(50), rng.uniform(-1, 1, 50), rng.uniform(-1, 1, 50)])
    arr = dyn.step(pts, ex2)
    for p, q in zip(pts, arr):
        assert np.allclose(dyn.step(Point(*p), ex2), q, atol=0, rtol=0)


def test_cell_tie_break(ex1):
    # left-closed cells: 1/3 belongs to the second rectangle
    assert dyn.cell_index(1 / 3, 3) == 1
    assert dyn.cell_index(np.nextafter(1 / 3, 0), 3) == 0
    assert dyn.cell_index(0.0, 3) == 0


def test_ex2_flip_on_wraparound(ex2):
    # second half of the circle: lift of 2x crosses 1, z flips
    a = dyn.step(Point(0.75, 0.0, 0.2), ex2)
    assert a.z == pytest.approx(-ex2.lambda_ss * 0.2 - 0.5)
    b = dyn.step(Point(0.25, 0.0, 0.2), ex2)
    assert b.z == pytest.approx(ex2.lambda_ss * 0.2 + 0.5)


@pytest.mark.parametrize("name", ["ex1", "ex2"])
def test_inverse_roundtrip(name, request, rng):
    params = request.getfixturevalue(name)
    Y = params.y_bound
    q = np.column_stack([rng.random(10_000), rng.uniform(-Y, Y, 10_000),
                         rng.uniform(-1, 1, 10_000)])
    img = dyn.step(q, params)
    branch = dyn.cell_index(q[:, 0], params.l) + 1
    for b in range(1, params.l + 1):
        sel = branch == b
        back = dyn.inverse_step(img[sel], b, params)
        assert np.max(np.abs(back - q[sel])) < 1e-12


def test_inverse_branch2_affine(ex1):
    p = Point(0.3, 0.2, 0.05)
    q = dyn.inverse_step(p, 2, ex1)
    assert q.y == pytest.approx((0.2 - ex1.c[1]) / ex1.lambda_c)
    assert q.z == pytest.approx((0.05 - ex1.d[1]) / ex1.lambda_ss)
    assert q.x == pytest.approx((0.3 + 1) / 3)


def test_inverse_branch_miss(ex1):
    with pytest.raises(BranchMiss):
        dyn.inverse_step(Point(0.3, 0.0, 0.0), 1, ex1)
    with pytest.raises(BranchMiss):
        dyn.inverse_step(Point(0.3, 0.0, 0.0), 4, ex1)


def test_attractor_point_all_twos(ex1):
    p, err = dyn.attractor_point(Itinerary.constant(2, 50), ex1, 50)
    assert p.y == 0.0 and p.z == 0.0
    assert p.x == pytest.approx(0.5)
    assert err == pytest.approx(0.5 * 0.4 ** 50 / 0.6)


def test_attractor_point_all_ones_forward_oracle(ex1, rng):
    p, err = dyn.attractor_point(Itinerary.constant(1, 60), ex1, 60, x=0.0)
    # forward orbits of arbitrary seeds on the fixed leaf x=0 land on p
    seeds = np.column_stack([np.zeros(1000), rng.uniform(-1, 1, 1000), rng.uniform(-1, 1, 1000)])
    cur = seeds
    for _ in range(1000):
        cur = dyn.step(cur, ex1)
    assert np.max(np.abs(cur[:, 1] - p.y)) <= err + 1e-15
    assert np.max(np.abs(cur[:, 2] - p.z)) < 1e-15
    closed = -ex1.alpha / (1 - ex1.lambda_c)
    assert p.y == pytest.approx(closed, abs=err + 1e-15)


def test_attractor_point_depth_doubling(ex1, rng):
    word = Itinerary(tuple(rng.integers(1, 4, 80)), "backward")
    for depth in (5, 10, 20):
        a, err = dyn.attractor_point(word, ex1, depth, x=0.3)
        b, _ = dyn.attractor_point(word, ex1, 2 * depth, x=0.3)
        assert abs(a.y - b.y) <= err
        assert err == pytest.approx(ex1.g_sup * ex1.lambda_c ** depth / (1 - ex1.lambda_c))


def test_attractor_point_errors(ex1):
    with pytest.raises(DepthTooSmall):
        dyn.attractor_point(Itinerary.constant(1, 3), ex1, 5)
    with pytest.raises(DepthTooSmall):
        dyn.attractor_point(Itinerary.constant(1, 10), ex1, 5, tol=1e-9)
    d = dyn.depth_for_tolerance(ex1, 1e-9)
    dyn.attractor_point(Itinerary.constant(1, d), ex1, d, tol=1e-9)


def test_attractor_point_is_invariant(ex1, ex2, rng):
    for params in (ex1, ex2):
        words = rng.integers(1, params.l + 1, size=(200, 61))
        xs = rng.random(200)
        pts = dyn.attractor_points(words[:, 1:], params, dyn.backward_x(xs, words[:, :1], params.l)[:, 0])
        img = dyn.step(pts, params)
        direct = dyn.attractor_points(words[:, :60], params, xs)
        assert np.max(np.abs(img - direct)) < 1e-12


@pytest.mark.parametrize("name", ["ex1", "ex2"])
@pytest.mark.parametrize("n", [1, 2, 5])
def test_mu_zero_degeneracy(name, n, request, rng):
    params = request.getfixturevalue(name).replace(n_power=n)
    Y = params.y_bound
    pts = np.column_stack([rng.random(10_000), rng.uniform(-Y, Y, 10_000),
                           rng.uniform(-1, 1, 10_000)])
    a = dyn.step_deformed(pts, params)
    b = dyn.compose_step(pts, params, n)
    dx = np.abs(a[:, 0] - b[:, 0])
    dx = np.minimum(dx, 1 - dx)
    assert dx.max() < 1e-10
    assert np.max(np.abs(a[:, 1:] - b[:, 1:])) < 1e-10


@pytest.mark.parametrize("name", ["ex1", "ex2"])
@pytest.mark.parametrize("mu", [0.0, 0.3, 1.0])
def test_centre_derivative_at_q(name, mu, request):
    params = request.getfixturevalue(name).replace(mu=mu, n_power=2)
    q = dyn.deformation_center(params)
    hstep = 1e-7
    up = dyn.step_deformed(Point(q.q.x, q.q.y + hstep, q.q.z), params, q)
    dn = dyn.step_deformed(Point(q.q.x, q.q.y - hstep, q.q.z), params, q)
    fd = (up.y - dn.y) / (2 * hstep)
    lcn = params.lambda_c ** 2
    analytic = lcn + mu * (params.lambda_c_plus - lcn)
    assert abs(fd - analytic) / analytic < 1e-6
    if mu == 1.0:
        assert analytic == pytest.approx(params.lambda_c_plus)


def test_deformation_center_is_fixed(ex1, ex2):
    for params in (ex1, ex2):
        d = dyn.deformation_center(params)
        img = dyn.step(d.q, params)
        assert np.allclose(img, d.q, atol=1e-12)
    assert dyn.deformation_center(ex1).q == Point(0.5, 0.0, 0.0)


def test_outside_bump_equals_base(ex1, rng):
    params = ex1.replace(mu=1.0, n_power=3)
    d = dyn.deformation_center(params)
    pts = np.column_stack([rng.random(5000), rng.uniform(-1, 1, 5000), rng.uniform(-1, 1, 5000)])
    far = np.linalg.norm(dyn.psi0(pts[:, 0], pts[:, 1], d), axis=1) >= 2 * params.delta_bump / 3
    a = dyn.step_deformed(pts[far], params, d)
    b = dyn.step_deformed(pts[far], params.replace(mu=0.0), d)
    assert np.array_equal(a, b)


def test_bump_values():
    delta = 0.03
    assert dyn.bump_psi1(np.array([0.0, 0.0]), delta) == 1.0
    assert dyn.bump_psi1(np.array([delta, 0.0]), delta) == 0.0
    assert dyn.bump_psi1(np.array([0.0, delta / 3]), delta) == 1.0
    r = np.linspace(delta / 3, 2 * delta / 3, 1000)[1:-1]
    vals = dyn.bump_psi1(np.column_stack([r, np.zeros_like(r)]), delta)
    assert np.all((vals >= 0) & (vals <= 1))
    assert np.all(np.diff(vals) <= 0)
    # exp(-1/t) saturates in double precision right at the plateau edges
    inner = (r > 0.36 * delta) & (r < 0.64 * delta)
    assert np.all((vals[inner] > 0) & (vals[inner] < 1))
    assert np.all(np.diff(vals[inner]) < 0)


def test_bump_gradient_matches_fd(rng):
    delta = 0.03
    u = rng.uniform(-0.02, 0.02, size=(200, 2))
    h = 1e-8
    grad = dyn.bump_psi1_grad(u, delta)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (dyn.bump_psi1(u + e, delta) - dyn.bump_psi1(u - e, delta)) / (2 * h)
        assert np.max(np.abs(fd - grad[:, i])) < 1e-4


def test_bump_c1_norm_reported():
    # slope must be at least 3/delta by the mean value theorem
    delta = 0.03
    c1 = dyn.bump_c1_norm(delta)
    assert c1 >= 3 / delta
    assert c1 < 10 / delta


def test_phi_partials_match_fd(ex1, rng):
    params = ex1.replace(mu=0.7, n_power=2)
    d = dyn.deformation_center(params)
    x = d.q.x + rng.uniform(-0.02, 0.02, 300)
    y = d.q.y + rng.uniform(-0.02, 0.02, 300)
    px, py = dyn.phi_partials(x, y, params, d)
    h = 1e-7
    fx = (dyn.phi(x + h, y, params, d) - dyn.phi(x - h, y, params, d)) / (2 * h)
    fy = (dyn.phi(x, y + h, params, d) - dyn.phi(x, y - h, params, d)) / (2 * h)
    assert np.max(np.abs(fx - px)) < 1e-5
    assert np.max(np.abs(fy - py)) < 1e-5


def test_itinerary_zero(ex1, ex2):
    assert dyn.itinerary_of(0.0, 30, ex1).symbols == (1,) * 30
    assert dyn.itinerary_of(0.0, 30, ex2).symbols == (1,) * 30


def test_itinerary_half_exact(ex2):
    exact = dyn.itinerary_of(Fraction(1, 2), 100, ex2, exact=True)
    assert exact.symbols == (2,) + (1,) * 99
    assert dyn.itinerary_of(0.5, 100, ex2).symbols == exact.symbols


@settings(max_examples=200, deadline=None)
@given(num=st.integers(0, 10 ** 12), den=st.integers(1, 10 ** 12), d=st.integers(1, 80))
def test_itinerary_shift_exact(num, den, d):
    params = default_params(EX1)
    x = Fraction(num % den, den)
    full = dyn.itinerary_of(x, d + 1, params, exact=True)
    shifted = dyn.itinerary_of((3 * x) % 1, d, params, exact=True)
    assert shifted.symbols == full.shift().symbols


def test_itinerary_shift_float(ex1, rng):
    xs = rng.random(2000)
    for x in xs:
        if min(abs(x * 3 ** j % 1 - 0) for j in range(13)) < 1e-6:
            continue
        full = dyn.itinerary_of(x, 13, ex1)
        assert dyn.itinerary_of(float(dyn.tau(x, 3)), 12, ex1).symbols == full.symbols[1:]


def test_itinerary_type():
    w = Itinerary((1, 2, 3), "backward")
    assert len(w) == 3 and w[0] == 1
    assert w.prepend(2).symbols == (2, 1, 2, 3)
    with pytest.raises(ValueError):
        Itinerary((1,), "sideways")


def test_skew_structure(ex2, rng):
    x = rng.random(100)
    a = np.column_stack([x, rng.uniform(-1, 1, 100), rng.uniform(-1, 1, 100)])
    b = a.copy()
    b[:, 1] = rng.uniform(-1, 1, 100)
    c = b.copy()
    c[:, 2] = rng.uniform(-1, 1, 100)
    fa, fb, fc = (dyn.step(v, ex2) for v in (a, b, c))
    assert np.array_equal(fa[:, 0], fc[:, 0])
    assert np.array_equal(fa[:, 2], fb[:, 2])
    # the x-update in step never reads y or z
    src = inspect.getsource(dyn.step)
    assert "x1 = lx - k" in src


def test_closed_forms(ex1, ex2, rng):
    for params in (ex1, ex2):
        x = rng.random(1000)
        for n in (1, 3, 6):
            p = np.column_stack([x, np.zeros(1000), np.zeros(1000)])
            img = dyn.compose_step(p, params, n)
            assert np.allclose(dyn.g_n(x, params, n), img[:, 1], atol=1e-12)
            sign, off = dyn.h_n(x, params, n)
            assert np.allclose(off, img[:, 2], atol=1e-12)
            xm = np.where((x * params.l ** np.arange(n)[:, None] % 1 > 1e-6).all(axis=0))[0]
            h = 1e-9
            fd = (dyn.g_n(x[xm] + h, params, n) - dyn.g_n(x[xm] - h, params, n)) / (2 * h)
            assert np.allclose(fd, dyn.dg_n(x[xm], params, n), rtol=1e-4, atol=1e-4)


@pytest.mark.parametrize("name", ["ex1", "ex2"])
def test_forward_invariance(name, request):
    params = request.getfixturevalue(name)
    rng = np.random.default_rng(7)
    Y = params.y_bound
    for _ in range(10):
        pts = np.column_stack([rng.random(100_000), rng.uniform(-Y, Y, 100_000),
                               rng.uniform(-1, 1, 100_000)])
        for _ in range(1000):
            pts = dyn.step(pts, params)
        assert np.all((pts[:, 0] >= 0) & (pts[:, 0] < 1))
        assert np.max(np.abs(pts[:, 1])) <= Y
        assert np.max(np.abs(pts[:, 2])) <= 1.0


def test_forward_invariance_every_step(ex1, ex2, rng):
    for params in (ex1, ex2):
        Y = params.y_bound
        pts = np.column_stack([rng.random(5000), rng.uniform(-Y, Y, 5000), rng.uniform(-1, 1, 5000)])
        for _ in range(300):
            pts = dyn.step(pts, params)
            assert np.max(np.abs(pts[:, 1])) <= Y and np.max(np.abs(pts[:, 2])) <= 1.0
            assert pts[:, 0].min() >= 0 and pts[:, 0].max() < 1


def test_orbit_determinism_and_exactness(ex1):
    a = dyn.orbit((0.1234, 0.2, -0.3), 500, ex1, seed=3)
    b = dyn.orbit((0.1234, 0.2, -0.3), 500, ex1, seed=3)
    assert np.array_equal(a, b)
    assert a.shape == (500, 3)
    # consecutive rows obey F0 up to the one-digit loss of the circle map
    img = dyn.step(a[:-1], ex1)
    dx = np.abs(img[:, 0] - a[1:, 0])
    assert np.minimum(dx, 1 - dx).max() < 1e-9
    assert np.max(np.abs(img[:, 1:] - a[1:, 1:])) < 1e-9


def test_orbit_does_not_collapse(ex2):
    # naive doubling in floats reaches 0 after ~53 steps
    a = dyn.orbit((0.3, 0.0, 0.0), 2000, ex2, seed=1)
    assert np.count_nonzero(a[100:, 0] == 0.0) == 0
    assert abs(a[:, 0].mean() - 0.5) < 0.05


def test_deformed_orbit_follows_map(ex1):
    params = ex1.replace(mu=1.0, n_power=2)
    d = dyn.deformation_center(params)
    a = dyn.orbit((0.4, 0.1, 0.1), 200, params, seed=2, deformed=True)
    img = dyn.step_deformed(a[:-1], params, d)
    assert np.max(np.abs(img[:, 1:] - a[1:, 1:])) < 1e-9
