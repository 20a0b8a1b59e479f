"""Phase space, the two explicit skew-product maps F0, and the deformed family.

M = S^1 x [-1,1]^2 with x in [0, 1). F0(x, y, z) = (l x, lambda_c y + g(x),
lambda_ss z + h(x)) where, on the cell [(k-1)/l, k/l) (symbol k):

* Ex1 (l = 3): g(x) = alpha_k x + c_k, h(x) = d_k, slopes (alpha, 0, -alpha),
  c_k = -alpha_k;
* Ex2 (l = 2): g(x) = sin(2 pi x), h = +1/2 on the first half, -1/2 on the
  second, and the fibre coordinate z is flipped each time the lift of the
  image crosses an integer.

Cells are half-open on the right, matching R_1 = [0, 1/3). Every function
accepts scalars or numpy arrays; arrays broadcast elementwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy.signal import lfilter

from .errors import BranchMiss, DepthTooSmall
from .params import EX1, MapParams


class Point(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class Itinerary:
    """Finite word over {1, ..., l}.

    A forward itinerary lists the cells visited by x, tau(x), tau^2(x), ...
    A backward itinerary lists the branches of F^{-1}(p), F^{-2}(p), ...
    """

    symbols: tuple
    orientation: str = "forward"

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))
        if self.orientation not in ("forward", "backward"):
            raise ValueError(f"bad orientation {self.orientation!r}")

    def __len__(self):
        return len(self.symbols)

    def __getitem__(self, i):
        return self.symbols[i]

    def shift(self, k: int = 1) -> "Itinerary":
        return Itinerary(self.symbols[k:], self.orientation)

    def prepend(self, symbol: int) -> "Itinerary":
        return Itinerary((int(symbol),) + self.symbols, self.orientation)

    @classmethod
    def constant(cls, symbol: int, length: int, orientation: str = "backward"):
        return cls((int(symbol),) * length, orientation)


def _as_arrays(p):
    if isinstance(p, Point):
        return np.float64(p.x), np.float64(p.y), np.float64(p.z), True
    a = np.asarray(p, dtype=float)
    return a[..., 0], a[..., 1], a[..., 2], False


def _pack(x, y, z, scalar):
    if scalar:
        return Point(float(x), float(y), float(z))
    return np.stack([x, y, z], axis=-1)


def cell_index(x, l):
    """0-based cell k with x in [k/l, (k+1)/l)."""
    k = np.floor(np.asarray(x, dtype=float) * l).astype(np.int64)
    return np.clip(k, 0, l - 1)


def g_of(x, k, params: MapParams):
    """g evaluated at x known to lie in 0-based cell k."""
    x = np.asarray(x, dtype=float)
    if params.example == EX1:
        a = np.asarray(params.slopes)[k]
        return a * x - a
    return np.sin(2.0 * np.pi * x)


def dg_of(x, k, params: MapParams):
    """dg/dx at x in 0-based cell k (the cell slope for Ex1)."""
    if params.example == EX1:
        return np.asarray(params.slopes)[k] + 0.0 * np.asarray(x, dtype=float)
    return 2.0 * np.pi * np.cos(2.0 * np.pi * np.asarray(x, dtype=float))


def h_of(k, params: MapParams):
    return np.asarray(params.h_values)[k]


def flip_of(k, params: MapParams):
    """Sign applied to z: -1 when the lift of l*x crosses an odd number of integers (Ex2)."""
    k = np.asarray(k)
    if params.example == EX1:
        return np.ones(k.shape)
    return np.where(k % 2 == 1, -1.0, 1.0)


def g(x, params: MapParams):
    return g_of(x, cell_index(x, params.l), params)


def h(x, params: MapParams):
    return h_of(cell_index(x, params.l), params)


def tau(x, l, n: int = 1):
    """Degree-l circle expansion iterated n times."""
    return np.mod(np.asarray(x, dtype=float) * float(l) ** n, 1.0)


def step(p, params: MapParams):
    """One step of F0."""
    x, y, z, scalar = _as_arrays(p)
    k = cell_index(x, params.l)
    lx = x * params.l
    x1 = lx - k
    x1 = np.where(x1 >= 1.0, x1 - 1.0, x1)
    y1 = params.lambda_c * y + g_of(x, k, params)
    z1 = flip_of(k, params) * params.lambda_ss * z + h_of(k, params)
    return _pack(x1, y1, z1, scalar)


def slab_branch(z, params: MapParams):
    """1-based branch b with z in the z-slab of F0(R_b)."""
    z = np.asarray(z, dtype=float)
    hv = np.asarray(params.h_values)
    return np.argmin(np.abs(z[..., None] - hv), axis=-1) + 1


def inverse_step(p, branch: int, params: MapParams, tol: float = 1e-12):
    """Inverse of F0 restricted to R_branch.

    Raises BranchMiss when p is not in F0(R_branch) up to ``tol``.
    """
    x, y, z, scalar = _as_arrays(p)
    b = int(branch)
    if not 1 <= b <= params.l:
        raise BranchMiss(f"branch {b} outside 1..{params.l}")
    k = b - 1
    x0 = (x + k) / params.l
    off = z - params.h_values[k]
    if np.any(np.abs(off) > params.lambda_ss + tol):
        raise BranchMiss(f"z outside the image slab of branch {b}")
    y0 = (y - g_of(x0, np.full(np.shape(x0), k), params)) / params.lambda_c
    if np.any(np.abs(y0) > params.y_bound + tol / params.lambda_c):
        raise BranchMiss(f"y outside the image of branch {b}")
    z0 = flip_of(k, params) * off / params.lambda_ss
    return _pack(x0, y0, z0, scalar)


def itinerary_of(x, depth: int, params: MapParams, exact: bool = False) -> Itinerary:
    """Forward itinerary of x: symbol k at step j iff tau^j(x) in [(k-1)/l, k/l).

    With ``exact=True`` the orbit is followed in rational arithmetic, so
    arbitrarily long words are correct for the given (float or Fraction) x.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    l = params.l
    syms = []
    if exact:
        q = Fraction(x) % 1
        for _ in range(depth):
            q = q * l
            k = int(q)  # floor for q >= 0
            syms.append(k + 1)
            q -= k
    else:
        v = float(x) % 1.0
        for _ in range(depth):
            k = min(int(v * l), l - 1)
            syms.append(k + 1)
            v = v * l - k
            if v >= 1.0:
                v -= 1.0
    return Itinerary(tuple(syms), "forward")


def backward_x(x, words, l):
    """x-coordinates of F^{-1}(p), ..., F^{-D}(p) along 1-based backward words.

    ``words`` has shape (..., D); the result has the same shape.
    """
    words = np.asarray(words, dtype=np.int64)
    out = np.empty(words.shape, dtype=float)
    cur = np.asarray(x, dtype=float) + np.zeros(words.shape[:-1])
    for i in range(words.shape[-1]):
        cur = (cur + words[..., i] - 1) / l
        out[..., i] = cur
    return out


def default_leaf_x(backward, l):
    """Fixed point of the first inverse branch, used when no x is given."""
    k = int(backward[0])
    return ((k - 1) / (l - 1)) % 1.0


def attractor_points(words, params: MapParams, xs):
    """Vectorised :func:`attractor_point`: points with backward words ``words``.

    ``words`` is an int array (N, D) of 1-based symbols and ``xs`` an array
    (N,). The point is the image under D forward steps of
    (x_{-D}, 0, 0) along the prescribed branches, which equals the series
    y = sum lambda_c^{i-1} g(x_{-i}) (and likewise z) truncated at depth D.
    """
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    xs = np.broadcast_to(np.asarray(xs, dtype=float), words.shape[:1])
    bx = backward_x(xs, words, params.l)
    y = np.zeros(words.shape[0])
    z = np.zeros(words.shape[0])
    for i in range(words.shape[1] - 1, -1, -1):
        k = words[:, i] - 1
        y = params.lambda_c * y + g_of(bx[:, i], k, params)
        z = flip_of(k, params) * params.lambda_ss * z + h_of(k, params)
    return np.stack([np.array(xs, dtype=float), y, z], axis=-1)


def attractor_point(backward: Itinerary, params: MapParams, depth: int, x=None, tol=None):
    """Point of the attractor with the given backward itinerary.

    Returns ``(point, y_error_bound)`` with bound sup|g| lambda_c^depth /
    (1 - lambda_c). ``x`` defaults to the fixed point of the first inverse
    branch. Raises DepthTooSmall if the word is shorter than ``depth``,
    ``depth < 1``, or ``tol`` is given and the bound exceeds it.
    """
    if depth < 1 or len(backward) < depth:
        raise DepthTooSmall(f"need a word of length >= depth={depth} (got {len(backward)})")
    err = params.g_sup * params.lambda_c ** depth / (1.0 - params.lambda_c)
    if tol is not None and err > tol:
        raise DepthTooSmall(f"depth {depth} gives y error bound {err:.3g} > tol {tol:.3g}")
    if x is None:
        x = default_leaf_x(backward.symbols, params.l)
    pts = attractor_points([backward.symbols[:depth]], params, [x])
    return Point(*map(float, pts[0])), err


def depth_for_tolerance(params: MapParams, tol: float) -> int:
    """Smallest depth whose y truncation bound is <= tol."""
    c = params.g_sup / (1.0 - params.lambda_c)
    if c <= tol:
        return 1
    return max(1, math.ceil(math.log(tol / c) / math.log(params.lambda_c)))


# ---------------------------------------------------------------------------
# n-fold closed forms and the deformation


def g_n(x, params: MapParams, n=None):
    """y-offset of F0^n: sum_{j<n} lambda_c^{n-j-1} g(tau^j x)."""
    n = params.n_power if n is None else n
    x = np.asarray(x, dtype=float)
    acc = np.zeros(x.shape)
    cur = x
    for _ in range(n):
        k = cell_index(cur, params.l)
        acc = params.lambda_c * acc + g_of(cur, k, params)
        cur = np.mod(cur * params.l - k, 1.0)
    return acc


def dg_n(x, params: MapParams, n=None):
    """d g_n / dx = sum_j lambda_c^{n-j-1} g'(tau^j x) l^j."""
    n = params.n_power if n is None else n
    x = np.asarray(x, dtype=float)
    acc = np.zeros(x.shape)
    cur = x
    for j in range(n):
        k = cell_index(cur, params.l)
        acc = acc + params.lambda_c ** (n - j - 1) * dg_of(cur, k, params) * float(params.l) ** j
        cur = np.mod(cur * params.l - k, 1.0)
    return acc


def h_n(x, params: MapParams, n=None):
    """z-map of F0^n as (sign, offset): z -> sign * lambda_ss^n z + offset.

    For Ex1 sign is 1 and offset = sum_j lambda_ss^{n-j-1} h(tau^j x).
    """
    n = params.n_power if n is None else n
    x = np.asarray(x, dtype=float)
    sign = np.ones(x.shape)
    off = np.zeros(x.shape)
    cur = x
    for _ in range(n):
        k = cell_index(cur, params.l)
        s = flip_of(k, params)
        off = s * params.lambda_ss * off + h_of(k, params)
        sign = sign * s
        cur = np.mod(cur * params.l - k, 1.0)
    return sign, off


def bump_profile(t):
    """Smooth step: 0 for t <= 0, 1 for t >= 1, C-infinity in between."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    s = 1.0 - t
    b = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return a / (a + b)


def bump_profile_deriv(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    tt = np.where(inside, t, 0.5)
    a = np.exp(-1.0 / tt)
    b = np.exp(-1.0 / (1.0 - tt))
    da = a / tt ** 2
    db = -b / (1.0 - tt) ** 2
    d = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return np.where(inside, d, 0.0)


def bump_psi1(u, delta):
    """Radial C-infinity bump: 1 on |u| <= delta/3, 0 on |u| >= 2 delta/3.

    ``u`` has shape (..., 2).
    """
    r = np.linalg.norm(np.asarray(u, dtype=float), axis=-1)
    return bump_profile((2.0 * delta / 3.0 - r) / (delta / 3.0))


def bump_psi1_grad(u, delta):
    u = np.asarray(u, dtype=float)
    r = np.linalg.norm(u, axis=-1)
    dpdr = -bump_profile_deriv((2.0 * delta / 3.0 - r) / (delta / 3.0)) * 3.0 / delta
    safe = np.where(r > 0, r, 1.0)
    return (dpdr / safe)[..., None] * u * (r > 0)[..., None]


def bump_c1_norm(delta, samples: int = 20001):
    """sup |grad psi1|, the actual C^1 constant of the bump (about 6/delta)."""
    t = np.linspace(0.0, 1.0, samples)
    return float(np.max(bump_profile_deriv(t))) * 3.0 / delta


@dataclass(frozen=True)
class Deformation:
    """Chart data of the local deformation around a fixed point q of F0.

    psi0(x, y) = A @ (x - q_x (wrapped), y - q_y) with A sending the
    unstable direction (1, slope) to e1 and the centre direction to e2.
    """

    q: Point
    branch: int
    slope: float

    @property
    def matrix(self):
        return np.array([[1.0, 0.0], [-self.slope, 1.0]])


def deformation_center(params: MapParams) -> Deformation:
    """Fixed point q of F0 carrying the bump: branch 2 for Ex1, branch 1 for Ex2."""
    from .unstable import alpha_uu_series  # the unstable field lives there

    branch = 2 if params.example == EX1 else 1
    word = Itinerary.constant(branch, 80)
    q, _ = attractor_point(word, params, 80)
    slope, _ = alpha_uu_series(word, params, 80, x=q.x)
    return Deformation(q=q, branch=branch, slope=float(slope))


def psi0(x, y, deform: Deformation):
    dx = np.asarray(x, dtype=float) - deform.q.x
    dx = dx - np.round(dx)
    dy = np.asarray(y, dtype=float) - deform.q.y
    return np.stack([dx, dy - deform.slope * dx], axis=-1)


def phi(x, y, params: MapParams, deform: Deformation):
    """Phi_{mu,n}(x, y) = mu psi1(psi0(x, y)) (lambda_c^+ - lambda_c^n) y."""
    amp = params.mu * (params.lambda_c_plus - params.lambda_c ** params.n_power)
    return amp * bump_psi1(psi0(x, y, deform), params.delta_bump) * np.asarray(y, dtype=float)


def phi_partials(x, y, params: MapParams, deform: Deformation):
    """Analytic (dPhi/dx, dPhi/dy) via the chain rule through psi0."""
    y = np.asarray(y, dtype=float)
    amp = params.mu * (params.lambda_c_plus - params.lambda_c ** params.n_power)
    u = psi0(x, y, deform)
    b = bump_psi1(u, params.delta_bump)
    gb = bump_psi1_grad(u, params.delta_bump)
    A = deform.matrix
    dbdx = gb[..., 0] * A[0, 0] + gb[..., 1] * A[1, 0]
    dbdy = gb[..., 0] * A[0, 1] + gb[..., 1] * A[1, 1]
    return amp * y * dbdx, amp * (b + y * dbdy)


def step_deformed(p, params: MapParams, deform: Deformation | None = None):
    """One step of F_{mu,n}: F0^n plus Phi_{mu,n} in the y-coordinate."""
    deform = deformation_center(params) if deform is None else deform
    x, y, z, scalar = _as_arrays(p)
    n = params.n_power
    x1 = tau(x, params.l, n)
    y1 = params.lambda_c ** n * y + g_n(x, params) + phi(x, y, params, deform)
    sign, off = h_n(x, params)
    z1 = sign * params.lambda_ss ** n * z + off
    return _pack(x1, y1, z1, scalar)


def compose_step(p, params: MapParams, n: int):
    """F0 applied n times (reference for the closed forms)."""
    for _ in range(n):
        p = step(p, params)
    return p


# ---------------------------------------------------------------------------
# Long orbits through symbol streams
#
# Iterating x -> l x mod 1 in floating point sheds one base-l digit per step
# (for l = 2 every orbit reaches 0 after ~53 steps). Orbits are generated
# instead from the base-l expansion of x0: its first ``lookahead`` digits are
# exact, later digits are drawn from the RNG. Each x_j is then recovered by
# the contracting inverse branches, so the orbit is the exact orbit of a
# point within l^-lookahead of x0.


def _leading_digits(x0, l, count):
    num, den = float(x0 % 1.0).as_integer_ratio()
    out = np.empty(count, dtype=np.int8)
    for i in range(count):
        num *= l
        d = num // den
        out[i] = d
        num -= d * den
    return out


class SymbolStream:
    """Blocks of circle-map orbits for many starting points at once."""

    def __init__(self, x0, l: int, rng: np.random.Generator, lookahead=None):
        self.x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        self.l = int(l)
        self.rng = rng
        self.lookahead = lookahead or math.ceil(60 / math.log2(l))
        self.buf = np.stack([_leading_digits(v, self.l, self.lookahead) for v in self.x0])

    def next_block(self, size: int):
        """Return (x, k): arrays (N, size) of positions and 0-based cells."""
        n = self.x0.size
        fresh = self.rng.integers(0, self.l, size=(n, size), dtype=np.int8)
        digits = np.concatenate([self.buf, fresh], axis=1)
        total = digits.shape[1]
        xs = np.empty((n, size))
        t = np.full(n, 0.5)
        for j in range(total - 1, -1, -1):
            t = (digits[:, j] + t) / self.l
            if j < size:
                xs[:, j] = t
        self.buf = digits[:, size:size + self.lookahead].copy()
        return xs, digits[:, :size].astype(np.int64)


def _affine_run(coef, start, forcing):
    """v_{j+1} = coef v_j + forcing_j along axis 1; returns (v_0..v_{B-1}, v_B)."""
    out, _ = lfilter([1.0], [1.0, -coef], forcing, axis=1, zi=(coef * start)[:, None])
    seq = np.concatenate([start[:, None], out[:, :-1]], axis=1)
    return seq, out[:, -1]


def orbit_blocks(p0, n_steps: int, params: MapParams, rng, block: int = 256,
                 deformed: bool = False, deform: Deformation | None = None):
    """Yield (x, y, z) arrays of shape (N, B) covering steps 0..n_steps-1.

    Step 0 is the starting point. Base orbits use a vectorised linear
    recursion along time; the deformed family (nonlinear in y) is stepped
    one iterate at a time.
    """
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    if deformed:
        yield from _deformed_blocks(p0, n_steps, params, rng, block, deform)
        return
    stream = SymbolStream(p0[:, 0], params.l, rng)
    y = p0[:, 1].copy()
    w = p0[:, 2].copy()
    sgn = np.ones(p0.shape[0])
    done = 0
    while done < n_steps:
        b = min(block, n_steps - done)
        xs, ks = stream.next_block(b)
        if done == 0:
            xs[:, 0] = p0[:, 0]
        ys, y = _affine_run(params.lambda_c, y, g_of(xs, ks, params))
        # z_{j+1} = s_j lss z_j + h_j; with w_j = z_j * prod_{i<j} s_i this is affine.
        s = flip_of(ks, params)
        cum = sgn[:, None] * np.cumprod(s, axis=1)
        prev = np.concatenate([sgn[:, None], cum[:, :-1]], axis=1)
        ws, w = _affine_run(params.lambda_ss, w, h_of(ks, params) * cum)
        zs = ws * prev
        sgn = cum[:, -1]
        done += b
        yield xs, ys, zs


def _deformed_blocks(p0, n_steps, params, rng, block, deform):
    deform = deformation_center(params) if deform is None else deform
    n = params.n_power
    stream = SymbolStream(p0[:, 0], params.l, rng)
    cur = p0.copy()
    done = 0
    while done < n_steps:
        b = min(block, n_steps - done)
        xs_base, _ = stream.next_block(b * n)
        if done == 0:
            xs_base[:, 0] = p0[:, 0]
        out = np.empty((3, p0.shape[0], b))
        for j in range(b):
            xj = xs_base[:, j * n]
            cur = np.stack([xj, cur[:, 1], cur[:, 2]], axis=-1)
            out[:, :, j] = cur.T
            cur = step_deformed(cur, params, deform)
        done += b
        yield out[0], out[1], out[2]


def orbit(p0, n_steps: int, params: MapParams, seed: int = 0, deformed: bool = False):
    """Orbit of a single point as an array (n_steps, 3); row 0 is p0."""
    rng = np.random.default_rng(seed)
    rows = [np.stack([x[0], y[0], z[0]], axis=-1)
            for x, y, z in orbit_blocks([tuple(p0)], n_steps, params, rng, deformed=deformed)]
    return np.concatenate(rows, axis=0)
