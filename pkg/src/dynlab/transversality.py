"""Stable distance, vertical projection and audits of the transversality condition.

Stable leaves of the skew models are vertical z-segments and centre-unstable
leaves are horizontal planes, so the stable projection is (x, y, z) -> (x, y,
z0) and the stable distance between two unstable curves is a z-gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .dynamics import Itinerary, Point, attractor_points, deformation_center
from .errors import InsufficientDepth
from .params import EX1, MapParams
from .unstable import (
    alpha_uu_batch,
    alpha_uu_fixed_point,
    all_words,
    build_chains,
    example2_constants,
    perturbation_audit,
    sup_bound,
    transversality_constant,
)


@dataclass
class UnstableCurve:
    """Samples along one unstable leaf, parametrised by x."""

    backward: Itinerary
    depth: int
    samples: np.ndarray
    length: float

    @property
    def z(self) -> float:
        return float(self.samples[0, 2])


def unstable_curve(backward: Itinerary, params: MapParams, x0: float = 0.0, span: float = 0.5,
                   n_samples: int = 101, depth: int = 40) -> UnstableCurve:
    """Leaf of the attractor with a fixed backward word, over x in [x0, x0 + span].

    The leaf is the graph of y(x) = sum lambda_c^{i-1} g(x_{-i}(x)); it stays
    on one leaf only while x does not wrap, so x0 + span must be <= 1.
    """
    if x0 < 0 or x0 + span > 1.0 + 1e-15:
        raise ValueError("the curve must satisfy 0 <= x0 and x0 + span <= 1")
    xs = np.linspace(x0, x0 + span, n_samples)
    xs = np.minimum(xs, np.nextafter(1.0, 0.0))
    words = np.tile(np.asarray(backward.symbols[:depth]), (n_samples, 1))
    pts = attractor_points(words, params, xs)
    seg = np.diff(pts[:, :2], axis=0)
    length = float(np.sum(np.hypot(seg[:, 0], seg[:, 1])))
    return UnstableCurve(backward=backward, depth=depth, samples=pts, length=length)


def project_stable(p, target_z: float, flip: bool = False):
    """Slide p along its vertical stable leaf to height target_z.

    ``flip`` applies the Ex2 gluing z -> -z, used when the chart crosses x = 0.
    """
    tz = -target_z if flip else target_z
    if isinstance(p, Point):
        return Point(p.x, p.y, float(tz))
    a = np.array(p, dtype=float)
    a[..., 2] = tz
    return a


def stable_distance(c1: UnstableCurve, c2: UnstableCurve, reach: float = 0.05,
                    periodic: bool = True) -> float:
    """Vertical distance from c1 to the centre-unstable plane of c2.

    Only samples of c1 whose (x, y) footprint lies within ``reach`` of c2's
    footprint count; returns inf when the footprints are disjoint.
    """
    a = c1.samples[:, :2].copy()
    b = c2.samples[:, :2].copy()
    if periodic:
        lo = min(a[:, 1].min(), b[:, 1].min()) - 1.0
        a[:, 1] -= lo
        b[:, 1] -= lo
        span = max(a[:, 1].max(), b[:, 1].max()) + 2.0
        a[:, 0] %= 1.0
        tree = cKDTree(np.column_stack([b[:, 0] % 1.0, b[:, 1]]), boxsize=[1.0, span])
    else:
        tree = cKDTree(b)
    dist, idx = tree.query(a, distance_upper_bound=reach)
    ok = np.isfinite(dist)
    if not np.any(ok):
        return math.inf
    return float(np.min(np.abs(c1.samples[ok, 2] - c2.samples[idx[ok], 2])))


def angle_between_slopes(a, b):
    """Angle between (1, a) and (1, b)."""
    return np.abs(np.arctan(a) - np.arctan(b))


def angle_floor(params: MapParams, epsilon: float) -> float:
    """Angle lower bound implied by a slope-gap bound and |slopes| <= sup_bound."""
    s = sup_bound(params)
    if params.example == EX1:
        gap = transversality_constant(epsilon, params)
    else:
        gap = example2_constants(params)["K"]
    return gap / (1.0 + s * s)


def fundamental_domain(params: MapParams, a: float | None = None):
    """J = [a, a / lambda_ss]; default a = lambda_ss / 20 (Ex1) or 1/4 (Ex2)."""
    if a is None:
        a = params.lambda_ss / 20.0 if params.example == EX1 else 0.25
    return a, a / params.lambda_ss


def exhaustive_floor(params: MapParams, depth: int, epsilon: float) -> dict:
    """Minimum slope gap over all pairs of depth-d Ex1 cylinders with d^ss > eps.

    Each cylinder is represented by its word continued with the zero-slope,
    zero-offset symbol, a genuine attractor point whose slope and height are
    the depth-d partial sums.
    """
    if params.example != EX1:
        raise ValueError("exhaustive enumeration is for Ex1")
    words = all_words(params.l, depth)
    slopes = alpha_uu_batch(words, params)
    z = attractor_points(words, params, np.zeros(len(words)))[:, 2]
    dz = np.abs(z[:, None] - z[None, :])
    gap = np.abs(slopes[:, None] - slopes[None, :])
    iu = np.triu_indices(len(words), k=1)
    dz, gap = dz[iu], gap[iu]
    keep = dz > epsilon
    first_diff = np.argmax(words[iu[0]] != words[iu[1]], axis=1)
    C = transversality_constant(epsilon, params)
    min_gap = float(gap[keep].min()) if np.any(keep) else math.inf
    return {"epsilon": epsilon, "depth": depth, "n_cylinders": len(words),
            "n_pairs": int(keep.sum()), "slope_gap_min": min_gap, "closed_form_floor": C,
            "max_first_difference": int(first_diff[keep].max()) if np.any(keep) else -1,
            "pass": bool(min_gap >= C)}


def _pair_words(params, n_pairs, depth, jmax, rng):
    """Pairs of backward words sharing a random prefix of length j0 <= jmax."""
    w1 = rng.integers(1, params.l + 1, size=(n_pairs, depth))
    w2 = rng.integers(1, params.l + 1, size=(n_pairs, depth))
    j0 = rng.integers(0, jmax + 1, size=n_pairs)
    share = np.arange(depth)[None, :] < j0[:, None]
    w2[share] = w1[share]
    # force a difference at j0
    rows = np.arange(n_pairs)
    same = w2[rows, j0] == w1[rows, j0]
    w2[rows[same], j0[same]] = (w1[rows[same], j0[same]] % params.l) + 1
    return w1, w2


def audit_H1(params: MapParams, epsilons, n_pairs: int = 20000, depth: int | None = None,
             seed: int = 0, a: float | None = None, worst: int = 20) -> dict:
    """Empirical check of the transversality floor.

    For each eps, pairs of attractor points at the same x are drawn with a
    shared backward prefix of random length (so small stable distances are
    well represented), pairs with d^ss <= eps are dropped, and the minimum
    slope gap and projected angle are compared with the closed-form floor:
    C(eps) for Ex1, K for Ex2 (an Ex2 pair also passes when the projected
    points are at least K2/2 apart; Ex2 pairs always differ in their first
    backward symbol, the premise of those bounds). When mu > 0 slopes come from the
    fixed point of the deformed operator.
    """
    epsilons = sorted((float(e) for e in epsilons), reverse=True)
    need = math.ceil(math.log(min(epsilons)) / math.log(params.lambda_ss)) + 4
    if depth is None:
        depth = max(need, 24)
    if depth < need:
        raise InsufficientDepth(f"depth {depth} < {need} required for eps={min(epsilons)}")
    n = params.n_power
    deformed = params.mu > 0
    if deformed:
        depth = n * math.ceil(depth / n)
    rng = np.random.Generator(np.random.Philox(seed))
    # Ex2 bounds hold for leaves in different first images F0(R_i).
    jmax = need if params.example == EX1 else 0
    w1, w2 = _pair_words(params, n_pairs, depth, jmax, rng)
    xs = rng.random(n_pairs)
    if deformed:
        deform = deformation_center(params)
        s1 = alpha_uu_fixed_point(params, build_chains(params, w1, xs, deform), deform=deform)
        s2 = alpha_uu_fixed_point(params, build_chains(params, w2, xs, deform), deform=deform)
        p1 = s1.chains.points[:, -1]
        p2 = s2.chains.points[:, -1]
        a1, a2 = s1.values, s2.values
    else:
        p1 = attractor_points(w1, params, xs)
        p2 = attractor_points(w2, params, xs)
        a1 = alpha_uu_batch(w1, params, xs)
        a2 = alpha_uu_batch(w2, params, xs)
    dss = np.abs(p1[:, 2] - p2[:, 2])
    gap = np.abs(a1 - a2)
    ang = angle_between_slopes(a1, a2)
    dy = np.abs(p1[:, 1] - p2[:, 1])
    J = fundamental_domain(params, a)
    ex2 = example2_constants(params) if params.example != EX1 else None

    rows = []
    prev_theta = math.inf
    for eps in epsilons:
        keep = dss > eps
        if params.example == EX1:
            floor = transversality_constant(eps, params)
            ok = gap[keep] >= floor
        else:
            floor = ex2["K"]
            ok = (gap[keep] >= floor) | (dy[keep] >= ex2["K2"] / 2)
        theta_hat = float(ang[keep].min()) if np.any(keep) else math.inf
        gap_min = float(gap[keep].min()) if np.any(keep) else math.inf
        a_floor = floor / (1.0 + sup_bound(params) ** 2)
        row = {"epsilon": eps, "n_pairs": int(keep.sum()), "theta_hat": theta_hat,
               "slope_gap_min": gap_min, "closed_form_floor": floor, "angle_floor": a_floor,
               "pass": bool(np.all(ok)),
               "n_in_fundamental_domain": int(np.sum((dss >= J[0]) & (dss <= J[1]))),
               "theta_hat_monotone": bool(theta_hat <= prev_theta + 1e-15)}
        prev_theta = theta_hat
        rows.append(row)
    order = np.argsort(gap + np.where(dss > min(epsilons), 0.0, np.inf))[:worst]
    worst_rows = [{"word1": "".join(map(str, w1[i, :12])), "word2": "".join(map(str, w2[i, :12])),
                   "x": float(xs[i]), "d_ss": float(dss[i]), "slope_gap": float(gap[i]),
                   "angle": float(ang[i])} for i in order if np.isfinite(gap[i])]
    return {"example": params.example, "mu": params.mu, "n_power": n, "depth": depth,
            "seed": seed, "fundamental_domain": list(J), "results": rows,
            "worst_pairs": worst_rows, "example2_constants": ex2}


def cone_family_margin(params: MapParams, mu: float | None = None, n: int | None = None,
                       a: float | None = None, n_samples: int = 2000, chain_length: int = 8,
                       seed: int = 0) -> dict:
    """Cone width needed to hold the deformed unstable directions, and the angle margin.

    omega = sup |a_{mu,n} - a_{0,n}|. The angular displacement of each
    direction is at most max |atan a_mu - atan a_0|; two displaced
    directions keep an angle of at least theta(a) - 2 * displacement, so
    margin = theta(a)/2 - 2 * displacement > 0 certifies theta(a)/2
    transversality.
    """
    changes = {}
    if mu is not None:
        changes["mu"] = mu
    if n is not None:
        changes["n_power"] = n
    p = params.replace(**changes) if changes else params
    audit = perturbation_audit(p, n_samples=n_samples, chain_length=chain_length, seed=seed)
    deform = deformation_center(p)
    words, xs = _same_samples(p, n_samples, chain_length, seed, deform)
    f_mu = alpha_uu_fixed_point(p, build_chains(p, words, xs, deform), deform=deform, tol=1e-13)
    base = p.replace(mu=0.0)
    f_0 = alpha_uu_fixed_point(base, build_chains(base, words, xs, deform), deform=deform,
                               tol=1e-13)
    half = chain_length // 2
    disp = float(np.max(np.abs(np.arctan(f_mu.chain_values[:, half:])
                               - np.arctan(f_0.chain_values[:, half:]))))
    J = fundamental_domain(p, a)
    theta = angle_floor(p, J[0])
    return {"mu": p.mu, "n": p.n_power, "omega_required": audit["sup_diff"],
            "angle_displacement": disp, "theta_a": theta, "a": J[0],
            "margin": theta / 2.0 - 2.0 * disp, "bound_rhs": audit["bound_rhs"]}


def _same_samples(p, n_samples, chain_length, seed, deform):
    from .unstable import sample_words

    return sample_words(p, n_samples, chain_length * p.n_power, seed, deform=deform)
