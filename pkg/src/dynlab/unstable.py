"""Unstable direction fields.

For F0 the unstable direction at p is (1, a(p), 0) with

    a(p) = sum_{j>=0} l^{-1} rho^j alpha(F0^{-(j+1)} p),   rho = lambda_c / l,

where alpha is dg/dx at the preimage (the cell slope for Ex1,
2 pi cos(2 pi x) for Ex2). For the deformed family the slope is the fixed
point of the affine operator

    T(a)(p) = l^{-n} [g_n'(x_{-1}) + dPhi/dx(p_{-1}) + (lambda_c^n + dPhi/dy(p_{-1})) a(p_{-1})]

with p_{-1} = F_{mu,n}^{-1}(p), evaluated along stored backward chains.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    Deformation,
    Itinerary,
    backward_x,
    deformation_center,
    dg_n,
    dg_of,
    g_n,
    h_n,
    phi,
    phi_partials,
)
from .errors import DepthTooSmall, InvalidRho, NoConvergence, NotContracting
from .params import EX1, EX2, MapParams


def sup_bound(params: MapParams) -> float:
    """A-priori bound sup|alpha| / (lambda_uu - lambda_c) on |a|."""
    return params.dg_sup / (params.l - params.lambda_c)


def series_tail(params: MapParams, depth: int) -> float:
    """Truncation error of the depth-limited series."""
    return params.dg_sup * params.rho ** depth / (params.l * (1.0 - params.rho))


def alpha_uu_batch(words, params: MapParams, xs=None, depth=None):
    """Truncated series for many backward words at once.

    ``words``: int array (N, D), 1-based. ``xs`` is needed for Ex2 (the
    slope depends on the preimage positions); for Ex1 it is ignored.
    """
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    depth = words.shape[1] if depth is None else depth
    if words.shape[1] < depth:
        raise DepthTooSmall(f"words of length {words.shape[1]} < depth {depth}")
    words = words[:, :depth]
    if params.example == EX1:
        slopes = np.asarray(params.slopes)[words - 1]
    else:
        if xs is None:
            raise ValueError("Ex2 slopes depend on x; pass xs")
        bx = backward_x(np.asarray(xs, dtype=float), words, params.l)
        slopes = dg_of(bx, words - 1, params)
    weights = params.rho ** np.arange(depth) / params.l
    # Sum smallest terms first.
    return (slopes * weights)[:, ::-1].sum(axis=1)


def alpha_uu_series(backward: Itinerary, params: MapParams, depth: int, x=None):
    """Slope a(p) from the backward itinerary; returns (value, truncation bound)."""
    if depth < 1 or len(backward) < depth:
        raise DepthTooSmall(f"need a word of length >= {depth}")
    if x is None:
        x = ((backward[0] - 1) / (params.l - 1)) % 1.0
    val = alpha_uu_batch([backward.symbols[:depth]], params, [x], depth)[0]
    return float(val), series_tail(params, depth)


def unstable_vector(p, params: MapParams, depth: int, x=None):
    """Unnormalised E^uu = (1, a, 0) at a point given by its backward word."""
    a, _ = alpha_uu_series(p, params, depth, x=x)
    return np.array([1.0, a, 0.0])


def recursion_residual(words, params: MapParams, xs=None):
    """|a(F0 p) - (l^{-1} alpha(p) + rho a(p))| for points with backward words.

    F0(p) has backward word (k, w) where k is the cell of p. The series for
    F0(p) is evaluated on that word truncated to the same depth.
    """
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    n, depth = words.shape
    if params.example == EX1:
        k = np.full(n, 1) if xs is None else np.floor(np.asarray(xs) * params.l).astype(int) + 1
        ahere = alpha_uu_batch(words, params)
        ahead = alpha_uu_batch(np.concatenate([k[:, None], words[:, :-1]], axis=1), params)
        alpha_p = np.asarray(params.slopes)[k - 1]
    else:
        xs = np.asarray(xs, dtype=float)
        k = np.floor(xs * params.l).astype(int) + 1
        ahere = alpha_uu_batch(words, params, xs)
        x1 = np.mod(xs * params.l, 1.0)
        ahead = alpha_uu_batch(np.concatenate([k[:, None], words[:, :-1]], axis=1), params, x1)
        alpha_p = dg_of(xs, k - 1, params)
    return np.abs(ahead - (alpha_p / params.l + params.rho * ahere))


@dataclass
class SlopeField:
    """Slope values on a sample of the attractor.

    For F0 the samples are depth-d cylinders of symbol space, each
    represented by its word padded with the zero-slope symbol.
    """

    words: np.ndarray
    values: np.ndarray
    depth: int
    sup_bound: float
    xs: np.ndarray | None = None
    residuals: np.ndarray | None = None
    iterations: int = 0
    final_change: float = 0.0
    history: list = field(default_factory=list)
    chains: "ChainSample | None" = None
    chain_values: np.ndarray | None = None
    eta: float = float("nan")

    def to_rows(self):
        res = self.residuals if self.residuals is not None else np.zeros(len(self.values))
        for w, v, r in zip(self.words, self.values, res):
            yield "".join(str(int(s)) for s in w), float(v), float(r)


def all_words(l: int, depth: int) -> np.ndarray:
    return np.array(list(itertools.product(range(1, l + 1), repeat=depth)), dtype=np.int64)


def cylinder_field(params: MapParams, depth: int) -> SlopeField:
    """Slope on every depth-d cylinder of the Ex1 symbol space."""
    if params.example != EX1:
        raise ValueError("cylinder fields are defined for Ex1, whose slope depends on symbols only")
    words = all_words(params.l, depth)
    vals = alpha_uu_batch(words, params)
    res = recursion_residual(words, params)
    return SlopeField(words=words, values=vals, depth=depth, sup_bound=sup_bound(params),
                      residuals=res)


# ---------------------------------------------------------------------------
# Closed-form transversality constants


def transversality_constant(epsilon: float, params: MapParams) -> float:
    """Lower bound C(eps) on |a(p) - a(p')| for Ex1 leaves at stable distance > eps.

    C(eps) = l^{-1} rho^{log eps / log lambda_ss} alpha (1 - 3 rho) / (1 - rho).
    """
    if params.example != EX1:
        raise ValueError("C(eps) is the Example 1 bound")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    rho = params.rho
    if rho >= 1.0 / 3.0:
        raise InvalidRho(f"rho={rho:.4g} >= 1/3 makes the bound vacuous")
    expo = math.log(epsilon) / math.log(params.lambda_ss)
    return (1.0 / params.l) * rho ** expo * params.alpha * (1.0 - 3.0 * rho) / (1.0 - rho)


def example2_constants(params: MapParams) -> dict:
    """The two Example 2 lower bounds K (slopes) and K2 (projected distance).

    The bare lambda in the K formula is read as lambda_c.
    """
    lam = params.lambda_c
    pi = math.pi
    K = 2 * pi * (math.cos(2 * pi / 5)
                  - lam / 4 * (math.cos(pi / 5) + math.cos(pi / 2 - pi / 5))
                  - lam ** 2 / 4 * 2 / (2 - lam))
    K2 = 2 * (math.sin(2 * pi / 5) - lam * math.sin(3 * pi / 10) - lam ** 2 / (1 - lam))
    return {"K": K, "K2": K2, "K_positive": K > 0, "K2_positive": K2 > 0,
            "lambda_symbol": "lambda_c", "lambda_c": lam}


# ---------------------------------------------------------------------------
# Deformed family: fixed point of T_{mu,n} along backward chains


@dataclass
class ChainSample:
    """Backward chains p_{-m}, ..., p_0 of F_{mu,n} for a set of samples.

    ``points`` has shape (N, m+1, 3); index 0 is the deepest point. ``words``
    are base-map backward words of length m*n; the chain of F_{mu,n}
    consumes n base symbols per step.
    """

    words: np.ndarray
    xs: np.ndarray
    points: np.ndarray


def sample_words(params: MapParams, n_samples: int, length: int, seed: int,
                 targeted_fraction: float = 0.5, deform: Deformation | None = None):
    """Random backward words and x values; part of them aimed at the bump.

    Targeted samples start near the deformed point q (x within delta of
    q_x) and repeat q's branch for a random number of leading symbols, so
    their chains pass through the bump support.
    """
    rng = np.random.default_rng(seed)
    deform = deformation_center(params) if deform is None else deform
    words = rng.integers(1, params.l + 1, size=(n_samples, length))
    xs = rng.random(n_samples)
    n_t = int(round(targeted_fraction * n_samples))
    if n_t:
        xs[:n_t] = (deform.q.x + params.delta_bump * (2 * rng.random(n_t) - 1)) % 1.0
        lead = rng.integers(0, min(length, 8 * params.n_power) + 1, size=n_t)
        mask = np.arange(length)[None, :] < lead[:, None]
        words[:n_t][mask] = deform.branch
    return words, xs


def build_chains(params: MapParams, words, xs, deform: Deformation | None = None) -> ChainSample:
    """Reconstruct backward chains of F_{mu,n} from base words.

    The deepest point starts at (x_{-D}, 0, 0); each forward step uses the
    exactly known backward x-coordinates, so no inverse of F_{mu,n} is
    needed.
    """
    deform = deformation_center(params) if deform is None else deform
    words = np.asarray(words, dtype=np.int64)
    xs = np.asarray(xs, dtype=float)
    n = params.n_power
    D = words.shape[1]
    if D % n:
        raise ValueError("word length must be a multiple of n_power")
    m = D // n
    bx = backward_x(xs, words, params.l)
    # chain_x[:, i] is the x of p_{-(m-i)}
    chain_x = np.concatenate([bx[:, [D - 1 - j * n for j in range(m)]], xs[:, None]], axis=1)
    pts = np.empty((len(xs), m + 1, 3))
    y = np.zeros(len(xs))
    z = np.zeros(len(xs))
    pts[:, 0] = np.stack([chain_x[:, 0], y, z], axis=-1)
    lcn = params.lambda_c ** n
    lssn = params.lambda_ss ** n
    for i in range(m):
        x0 = chain_x[:, i]
        y = lcn * y + g_n(x0, params) + phi(x0, y, params, deform)
        sign, off = h_n(x0, params)
        z = sign * lssn * z + off
        pts[:, i + 1] = np.stack([chain_x[:, i + 1], y, z], axis=-1)
    return ChainSample(words=words, xs=xs, points=pts)


def operator_terms(params: MapParams, chains: ChainSample, deform: Deformation):
    """Affine pieces of T along chains: T(a)_i = A_i + lam_i a_{i-1} (i >= 1)."""
    pts = chains.points[:, :-1]
    n = params.n_power
    px, py = phi_partials(pts[..., 0], pts[..., 1], params, deform)
    scale = float(params.l) ** (-n)
    A = scale * (dg_n(pts[..., 0], params) + px)
    lam = scale * (params.lambda_c ** n + py)
    return A, lam, scale * px, scale * py


def contraction_factor(params: MapParams, deform: Deformation | None = None, grid: int = 401):
    """eta = sup l^{-n} |lambda_c^n + dPhi/dy| over the bump support (and outside it)."""
    deform = deformation_center(params) if deform is None else deform
    n = params.n_power
    base = params.lambda_c ** n
    rad = 2.0 * params.delta_bump / 3.0
    # Bump support in the chart is the disc |psi0| < rad; sample a box around it.
    u1 = np.linspace(-rad, rad, grid)
    U1, U2 = np.meshgrid(u1, u1, indexing="ij")
    x = deform.q.x + U1
    y = deform.q.y + U2 + deform.slope * U1
    _, py = phi_partials(x, y, params, deform)
    sup_inside = np.max(np.abs(base + py))
    return float(params.l) ** (-n) * max(base, sup_inside)


def alpha_uu_fixed_point(params: MapParams, chains: ChainSample | None = None, tol: float = 1e-12,
                         max_iters: int = 500, deform: Deformation | None = None,
                         n_samples: int = 1000, chain_length: int = 12, seed: int = 0) -> SlopeField:
    """Fixed point of T_{mu,n} on sampled backward chains.

    Each sweep applies T once to the whole chain (bulk synchronous). The
    deepest point of every chain keeps the initial value 0, so after k
    sweeps the first k links are exact images; iteration stops when the
    sup change drops below ``tol``. ``history`` records the sup change per
    sweep.
    """
    deform = deformation_center(params) if deform is None else deform
    eta = contraction_factor(params, deform)
    if eta >= 1.0:
        raise NotContracting(eta)
    if chains is None:
        words, xs = sample_words(params, n_samples, chain_length * params.n_power, seed,
                                 deform=deform)
        chains = build_chains(params, words, xs, deform)
    A, lam, _, _ = operator_terms(params, chains, deform)
    npts = chains.points.shape[1]
    a = np.zeros((chains.points.shape[0], npts))
    history = []
    for it in range(1, max_iters + 1):
        new = a.copy()
        new[:, 1:] = A + lam * a[:, :-1]
        change = float(np.max(np.abs(new - a)))
        history.append(change)
        a = new
        if change < tol:
            break
    else:
        raise NoConvergence(max_iters, history[-1])
    return SlopeField(words=chains.words, values=a[:, -1], depth=chains.words.shape[1],
                      sup_bound=sup_bound(params), xs=chains.xs, iterations=it,
                      final_change=history[-1], history=history, chains=chains,
                      chain_values=a, eta=eta)


def perturbation_audit(params: MapParams, n_samples: int = 2000, chain_length: int = 8,
                       seed: int = 0, tol: float = 1e-13) -> dict:
    """Compare the deformed slope field with the undeformed one.

    Both fields are computed on the same words and x values. The bound is
    (sup|A_mu - A_0| + sup|lam_mu - lam_0| sup|a_0|) / (1 - eta), each sup
    taken over the chain points used. The measured difference is the sup
    over the second half of every chain, where the fixed point has
    converged to within eta^(m/2) sup_bound.
    """
    deform = deformation_center(params)
    base = params.replace(mu=0.0)
    words, xs = sample_words(params, n_samples, chain_length * params.n_power, seed,
                             deform=deform)
    ch_mu = build_chains(params, words, xs, deform)
    ch_0 = build_chains(base, words, xs, deform)
    f_mu = alpha_uu_fixed_point(params, ch_mu, tol=tol, deform=deform)
    f_0 = alpha_uu_fixed_point(base, ch_0, tol=tol, deform=deform)
    _, _, px_mu, py_mu = operator_terms(params, ch_mu, deform)
    half = chain_length // 2
    diff = np.abs(f_mu.chain_values - f_0.chain_values)[:, half:]
    eta = f_mu.eta
    d1 = float(np.max(np.abs(px_mu)))
    lam1 = float(np.max(np.abs(py_mu)))
    a0 = float(np.max(np.abs(f_0.chain_values)))
    rhs = (d1 + lam1 * a0) / (1.0 - eta)
    return {"n": params.n_power, "mu": params.mu, "eta": eta, "sup_diff": float(np.max(diff)),
            "bound_rhs": rhs, "D1": d1, "lambda1": lam1, "sup_alpha0": a0,
            "iterations_mu": f_mu.iterations, "iterations_0": f_0.iterations,
            "n_samples": int(n_samples), "chain_length": int(chain_length), "seed": int(seed)}
