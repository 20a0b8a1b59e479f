"""Atomic measures, their stable projection and the r-scale norm.

The r-scale bilinear form of two measures on a centre-unstable chart is

    <mu1, mu2>_{X,r} = r^-4 * integral over X of mu1(B(z,r)) mu2(B(z,r)) dz.

Three evaluation routes are provided:

* ``grid``: exact ball masses at the nodes of a regular grid over X
  (midpoint rule, spacing r/4 by default). Each atom is scattered to the
  nodes within distance r, so the cost is independent of r.
* ``montecarlo``: ball masses at random points of X through a uniform-grid
  spatial hash with cell size r.
* ``exact``: when X contains the r-neighbourhood of both supports the
  integral equals r^-4 * sum_{a,b} w_a w_b |B(a,r) & B(b,r)|, a sum over
  atom pairs closer than 2r. No quadrature at all; used for curve
  measures at very small r.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dynamics import Itinerary, attractor_points, orbit_blocks, step, step_deformed
from .errors import AtomStarvation, FitDegenerate
from .params import EX1, MapParams
from .transversality import UnstableCurve, unstable_curve


# ---------------------------------------------------------------------------
# Measures


@dataclass
class EmpiricalMeasure:
    """Weighted atoms in M. ``iterate`` records the Birkhoff time index of each atom."""

    points: np.ndarray
    weights: np.ndarray
    iterate: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.weights.shape[0] != self.points.shape[0]:
            raise ValueError("one weight per atom is required")
        if np.any(self.weights < 0):
            raise ValueError("weights must be non-negative")

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.weights))

    def __len__(self):
        return self.points.shape[0]

    def restrict(self, mask) -> "EmpiricalMeasure":
        mask = np.asarray(mask, dtype=bool)
        return EmpiricalMeasure(self.points[mask], self.weights[mask],
                                None if self.iterate is None else self.iterate[mask],
                                None if self.labels is None else self.labels[mask])

    def scaled(self, c: float) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.points, self.weights * c, self.iterate, self.labels)

    def integrate(self, func) -> float:
        """Integral of func(points) -> (N,) against the measure."""
        return float(np.dot(self.weights, func(self.points)))

    def to_rows(self):
        for (x, y, z), w in zip(self.points, self.weights):
            yield (float(x), float(y), float(z), float(w))


@dataclass(frozen=True)
class Chart:
    """Target centre-unstable plane {z = z_level} with its coordinate rules.

    The chart coordinates are (x, y). ``periodic_x`` treats x as a circle
    coordinate; a non-periodic chart is a plane. ``flip`` records the Ex2
    gluing z -> -z across x = 0, which moves nothing in (x, y).
    """

    z_level: float = 0.0
    periodic_x: bool = True
    example: str = EX1

    @property
    def flip(self) -> bool:
        return self.example != EX1


@dataclass
class ProjectedMeasure:
    xy: np.ndarray
    weights: np.ndarray
    chart: Chart = field(default_factory=Chart)
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.weights))

    def __len__(self):
        return self.xy.shape[0]

    def restrict(self, mask) -> "ProjectedMeasure":
        mask = np.asarray(mask, dtype=bool)
        return ProjectedMeasure(self.xy[mask], self.weights[mask], self.chart,
                                None if self.labels is None else self.labels[mask])

    def combine(self, other: "ProjectedMeasure", a: float = 1.0, b: float = 1.0):
        """a*self + b*other as one atom cloud; weights may become negative."""
        return ProjectedMeasure(np.concatenate([self.xy, other.xy]),
                                np.concatenate([a * self.weights, b * other.weights]),
                                self.chart)


def lebesgue_on_curve(curve, n_atoms: int, params: MapParams | None = None) -> EmpiricalMeasure:
    """Normalised arc-length measure on a curve, by the midpoint rule.

    ``curve`` is an :class:`UnstableCurve` (atoms are re-evaluated on the
    exact leaf) or an (M, 3) polyline.
    """
    if n_atoms < 2:
        raise ValueError("n_atoms must be >= 2")
    pts = curve.samples if isinstance(curve, UnstableCurve) else np.asarray(curve, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    target = (np.arange(n_atoms) + 0.5) / n_atoms * s[-1]
    atoms = np.column_stack([np.interp(target, s, pts[:, i]) for i in range(3)])
    if isinstance(curve, UnstableCurve) and params is not None:
        words = np.tile(np.asarray(curve.backward.symbols[:curve.depth]), (n_atoms, 1))
        atoms = attractor_points(words, params, atoms[:, 0])
    return EmpiricalMeasure(atoms, np.full(n_atoms, 1.0 / n_atoms))


def default_curve(params: MapParams, span: float = 1.0, n_samples: int = 2001,
                  depth: int = 40) -> UnstableCurve:
    """The leaf with constant backward word on the zero-offset branch (the line y = z = 0 in Ex1)."""
    sym = 2 if params.example == EX1 else 1
    return unstable_curve(Itinerary.constant(sym, depth), params, 0.0, span, n_samples, depth)


def push_forward(mu: EmpiricalMeasure, params: MapParams, n: int = 1,
                 deformed: bool = False) -> EmpiricalMeasure:
    """F_* applied n times; weights are untouched, so mass is preserved exactly."""
    pts = mu.points
    f = step_deformed if deformed else step
    for _ in range(n):
        pts = f(pts, params)
    return EmpiricalMeasure(pts, mu.weights.copy(), mu.iterate, mu.labels)


def birkhoff_measure(curve, n_iters: int, params: MapParams, n_atoms: int = 100,
                     seed: int = 0, deformed: bool = False) -> EmpiricalMeasure:
    """(1/n) sum_{j<n} F^j_* m_curve as one atom cloud.

    ``curve`` is an UnstableCurve, a polyline, or an EmpiricalMeasure used
    as the starting measure. Orbits come from the symbol-stream generator,
    so expansion does not erase the x-coordinate in floating point.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    m0 = curve if isinstance(curve, EmpiricalMeasure) else lebesgue_on_curve(curve, n_atoms, params)
    if n_iters == 1:
        return EmpiricalMeasure(m0.points.copy(), m0.weights.copy(),
                                np.zeros(len(m0), dtype=np.int64))
    rng = np.random.default_rng(seed)
    chunks = []
    for xs, ys, zs in orbit_blocks(m0.points, n_iters, params, rng, block=512,
                                   deformed=deformed):
        chunks.append(np.stack([xs, ys, zs], axis=-1))
    orb = np.concatenate(chunks, axis=1)  # (atoms, n_iters, 3)
    pts = orb.reshape(-1, 3)
    w = np.repeat(m0.weights / n_iters, n_iters)
    it = np.tile(np.arange(n_iters), len(m0))
    return EmpiricalMeasure(pts, w, it)


def project_measure(mu: EmpiricalMeasure, chart: Chart | None = None) -> ProjectedMeasure:
    """Vertical (stable) projection onto the chart plane; weights carried over unchanged."""
    chart = Chart() if chart is None else chart
    xy = mu.points[:, :2].copy()
    if chart.periodic_x:
        xy[:, 0] %= 1.0
    return ProjectedMeasure(xy, mu.weights.copy(), chart, mu.labels)


# ---------------------------------------------------------------------------
# Integration domain and configuration


@dataclass(frozen=True)
class Domain:
    """Rectangle X = [x0, x1] x [y0, y1] in chart coordinates."""

    x0: float
    x1: float
    y0: float
    y1: float
    periodic_x: bool = False

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @classmethod
    def unit_square(cls):
        return cls(0.0, 1.0, 0.0, 1.0, False)

    @classmethod
    def covering(cls, mu: ProjectedMeasure, r: float):
        """Smallest domain containing the r-neighbourhood of the support (the whole chart)."""
        y0 = float(mu.xy[:, 1].min()) - r
        y1 = float(mu.xy[:, 1].max()) + r
        if mu.chart.periodic_x:
            return cls(0.0, 1.0, y0, y1, True)
        return cls(float(mu.xy[:, 0].min()) - r, float(mu.xy[:, 0].max()) + r, y0, y1, False)


INTEGRATIONS = ("grid", "montecarlo", "exact")


@dataclass(frozen=True)
class NormConfig:
    r: float
    integration: str = "grid"
    h: float | None = None
    n_mc: int = 200_000
    seed: int = 0
    min_atoms: float = 10.0

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be positive")
        if self.r >= 0.25:
            raise ValueError("r must be below 1/4, the injectivity bound of the periodic chart")
        if self.integration not in INTEGRATIONS:
            raise ValueError(f"integration must be one of {INTEGRATIONS}")

    @property
    def spacing(self) -> float:
        return self.r / 4.0 if self.h is None else self.h


def lens_area(d, r):
    """Area of B(a, r) & B(b, r) for |a - b| = d."""
    d = np.minimum(np.abs(np.asarray(d, dtype=float)), 2.0 * r)
    return 2.0 * r * r * np.arccos(d / (2.0 * r)) - 0.5 * d * np.sqrt(np.maximum(4.0 * r * r - d * d, 0.0))


# ---------------------------------------------------------------------------
# Ball masses


class SpatialHash:
    """Uniform-grid hash of weighted atoms with cell size >= r; exact ball masses.

    The index is built once and never mutated, so concurrent reads are safe.
    """

    def __init__(self, xy, weights, r: float, periodic_x: bool = True):
        self.r = float(r)
        self.periodic = periodic_x
        xy = np.asarray(xy, dtype=float)
        self.x = xy[:, 0] % 1.0 if periodic_x else xy[:, 0].copy()
        self.y = xy[:, 1].copy()
        self.w = np.asarray(weights, dtype=float)
        if periodic_x:
            self.nx = max(1, int(math.floor(1.0 / self.r)))
            self.cw = 1.0 / self.nx
            self.xmin = 0.0
        else:
            self.cw = self.r
            self.xmin = float(self.x.min()) if len(self.x) else 0.0
            self.nx = int((self.x.max() - self.xmin) // self.cw) + 1 if len(self.x) else 1
        self.ymin = float(self.y.min()) if len(self.y) else 0.0
        self.ny = int((self.y.max() - self.ymin) // self.r) + 1 if len(self.y) else 1
        cx, cy = self._cells(self.x, self.y)
        key = cx * self.ny + cy
        order = np.argsort(key, kind="stable")
        self.key = key[order]
        self.x, self.y, self.w = self.x[order], self.y[order], self.w[order]

    def _cells(self, x, y):
        cx = np.floor((x - self.xmin) / self.cw).astype(np.int64)
        cy = np.floor((y - self.ymin) / self.r).astype(np.int64)
        if self.periodic:
            cx %= self.nx
        return cx, cy

    def _offsets_x(self):
        if self.periodic:
            return sorted({d % self.nx for d in (-1, 0, 1)})
        return (-1, 0, 1)

    def ball_mass(self, pts, chunk_pairs: int = 8_000_000, count_only: bool = False):
        """mu(B(p, r)) for every query point (open balls)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        qx = pts[:, 0] % 1.0 if self.periodic else pts[:, 0]
        qy = pts[:, 1]
        out = np.zeros(len(pts))
        if len(self.key) == 0:
            return out
        qcx, qcy = self._cells(qx, qy)
        r2 = self.r * self.r
        w = np.ones_like(self.w) if count_only else self.w
        for dx in self._offsets_x():
            for dy in (-1, 0, 1):
                cx = qcx + dx
                cy = qcy + dy
                if self.periodic:
                    cx %= self.nx
                valid = (cx >= 0) & (cx < self.nx) & (cy >= 0) & (cy < self.ny)
                key = cx * self.ny + cy
                lo = np.searchsorted(self.key, key, "left")
                hi = np.searchsorted(self.key, key, "right")
                cnt = np.where(valid, hi - lo, 0)
                # ragged expansion in chunks
                csum = np.cumsum(cnt)
                start = 0
                while start < len(pts):
                    base = csum[start - 1] if start else 0
                    stop = int(np.searchsorted(csum, base + chunk_pairs, "right"))
                    stop = max(stop, start + 1)
                    c = cnt[start:stop]
                    tot = int(c.sum())
                    if tot:
                        qi = np.repeat(np.arange(start, stop), c)
                        first = np.repeat(lo[start:stop], c)
                        offs = np.arange(tot) - np.repeat(np.cumsum(c) - c, c)
                        ai = first + offs
                        ddx = qx[qi] - self.x[ai]
                        if self.periodic:
                            ddx -= np.round(ddx)
                        ddy = qy[qi] - self.y[ai]
                        inside = ddx * ddx + ddy * ddy < r2
                        out[start:stop] += np.bincount(qi[inside] - start,
                                                       weights=w[ai[inside]],
                                                       minlength=stop - start)
                    start = stop
        return out

    def mean_neighbours(self, sample: int = 2000, seed: int = 0) -> float:
        """Average number of atoms in B(a, r) over atoms a (a itself included)."""
        n = len(self.x)
        if n == 0:
            return 0.0
        rng = np.random.default_rng(seed)
        idx = rng.choice(n, size=min(sample, n), replace=False)
        return float(np.mean(self.ball_mass(np.column_stack([self.x[idx], self.y[idx]]),
                                            count_only=True)))


@dataclass
class GridNodes:
    xs: np.ndarray
    ys: np.ndarray
    hx: float
    hy: float

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    def points(self):
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])


def grid_nodes(domain: Domain, h: float) -> GridNodes:
    nx = max(1, int(round((domain.x1 - domain.x0) / h)))
    ny = max(1, int(round((domain.y1 - domain.y0) / h)))
    hx = (domain.x1 - domain.x0) / nx
    hy = (domain.y1 - domain.y0) / ny
    xs = domain.x0 + (np.arange(nx) + 0.5) * hx
    ys = domain.y0 + (np.arange(ny) + 0.5) * hy
    return GridNodes(xs, ys, hx, hy)


def ball_masses_on_grid(mu: ProjectedMeasure, r: float, domain: Domain, h: float,
                        chunk: int = 200_000):
    """mu(B(z, r)) at every grid node of the domain, as an (nx, ny) array."""
    nodes = grid_nodes(domain, h)
    nx, ny = len(nodes.xs), len(nodes.ys)
    acc = np.zeros(nx * ny)
    if len(mu) == 0:
        return acc.reshape(nx, ny), nodes
    kx = int(math.ceil(r / nodes.hx)) + 1
    ky = int(math.ceil(r / nodes.hy)) + 1
    r2 = r * r
    shifts = (-1.0, 0.0, 1.0) if mu.chart.periodic_x else (0.0,)
    for s in shifts:
        ax_all = mu.xy[:, 0] + s
        keep = (ax_all > domain.x0 - r) & (ax_all < domain.x1 + r) & \
               (mu.xy[:, 1] > domain.y0 - r) & (mu.xy[:, 1] < domain.y1 + r)
        ax_all, ay_all, w_all = ax_all[keep], mu.xy[keep, 1], mu.weights[keep]
        for c0 in range(0, len(ax_all), chunk):
            ax, ay, w = ax_all[c0:c0 + chunk], ay_all[c0:c0 + chunk], w_all[c0:c0 + chunk]
            i0 = np.floor((ax - domain.x0) / nodes.hx - 0.5).astype(np.int64)
            j0 = np.floor((ay - domain.y0) / nodes.hy - 0.5).astype(np.int64)
            for di in range(-kx + 1, kx + 1):
                i = i0 + di
                dx = domain.x0 + (i + 0.5) * nodes.hx - ax
                okx = (i >= 0) & (i < nx) & (np.abs(dx) < r)
                for dj in range(-ky + 1, ky + 1):
                    j = j0 + dj
                    dy = domain.y0 + (j + 0.5) * nodes.hy - ay
                    ok = okx & (j >= 0) & (j < ny) & (dx * dx + dy * dy < r2)
                    if np.any(ok):
                        acc += np.bincount(i[ok] * ny + j[ok], weights=w[ok], minlength=nx * ny)
    return acc.reshape(nx, ny), nodes


def pair_sum(xy, weights, r: float, periodic_x: bool = True, labels=None,
             max_pairs: int = 6_000_000):
    """Sum over ordered atom pairs (diagonal included) of w_a w_b |B(a,r) & B(b,r)|.

    Returns (total, same_label); with labels=None both are equal. Pairs are
    found with a k-d tree in x-strips of width >= 2r, each strip carrying a
    2r margin from its right neighbour; a pair is kept when at least one
    atom lies in the strip core, so each pair is seen exactly once.
    """
    xy = np.asarray(xy, dtype=float)
    w = np.asarray(weights, dtype=float)
    lab = None if labels is None else np.asarray(labels)
    x = xy[:, 0] % 1.0 if periodic_x else xy[:, 0]
    order = np.argsort(x, kind="stable")
    x, y, w = x[order], xy[order, 1], w[order]
    if lab is not None:
        lab = lab[order]
    diag = math.pi * r * r * float(np.dot(w, w))
    total = [diag]
    same = [diag]
    cut = 2.0 * r
    if len(x) < 2:
        return diag, diag
    lo_all = 0.0 if periodic_x else float(x[0])
    hi_all = 1.0 if periodic_x else float(x[-1]) + 1e-12
    if periodic_x and 1.0 < 2.0 * cut:
        raise ValueError("r too large for the periodic chart")

    def strip_arrays(lo, hi):
        a = np.searchsorted(x, lo, "left")
        b = np.searchsorted(x, hi, "left")
        c = np.searchsorted(x, hi + cut, "left")
        idx = np.arange(a, c)
        sx = x[a:c]
        core = np.zeros(c - a, dtype=bool)
        core[: b - a] = True
        if periodic_x and hi + cut > 1.0:
            e = np.searchsorted(x, hi + cut - 1.0, "left")
            wrap = np.arange(0, e)
            idx = np.concatenate([idx, wrap])
            sx = np.concatenate([sx, x[:e] + 1.0])
            core = np.concatenate([core, np.zeros(e, dtype=bool)])
        return idx, sx, core

    def process(lo, hi):
        idx, sx, core = strip_arrays(lo, hi)
        if not core.any():
            return
        pts = np.column_stack([sx, y[idx]])
        tree = cKDTree(pts)
        ncore = int(core.sum())
        probe = np.flatnonzero(core)[:: max(1, ncore // 256)]
        k = float(np.mean(tree.query_ball_point(pts[probe], cut, return_length=True)))
        if ncore * k / 2 > max_pairs and (hi - lo) / 2 >= cut:
            mid = 0.5 * (lo + hi)
            process(lo, mid)
            process(mid, hi)
            return
        pairs = tree.query_pairs(cut, output_type="ndarray")
        if len(pairs) == 0:
            return
        i, j = pairs[:, 0], pairs[:, 1]
        keep = core[i] | core[j]
        i, j = i[keep], j[keep]
        d = np.hypot(pts[i, 0] - pts[j, 0], pts[i, 1] - pts[j, 1])
        gi, gj = idx[i], idx[j]
        contrib = 2.0 * w[gi] * w[gj] * lens_area(d, r)
        total.append(float(contrib.sum()))
        if lab is not None:
            same.append(float(contrib[lab[gi] == lab[gj]].sum()))

    n_strips = max(1, min(int((hi_all - lo_all) / cut), int(math.ceil(len(x) / 200_000))))
    edges = np.linspace(lo_all, hi_all, n_strips + 1)
    for lo, hi in zip(edges[:-1], edges[1:]):
        process(lo, hi)
    t = math.fsum(total)
    return t, (math.fsum(same) if lab is not None else t)


# ---------------------------------------------------------------------------
# Norms


def _check_atoms(mu: ProjectedMeasure, cfg: NormConfig):
    if len(mu) == 0 or cfg.integration == "exact":
        return
    k = SpatialHash(mu.xy, mu.weights, cfg.r, mu.chart.periodic_x).mean_neighbours(seed=cfg.seed)
    if k < cfg.min_atoms:
        raise AtomStarvation(k, cfg.r, cfg.min_atoms)


def expected_atoms_per_ball(mu: ProjectedMeasure, r: float, seed: int = 0) -> float:
    if len(mu) == 0:
        return 0.0
    return SpatialHash(mu.xy, mu.weights, r, mu.chart.periodic_x).mean_neighbours(seed=seed)


def r_inner(mu1: ProjectedMeasure, mu2: ProjectedMeasure, cfg: NormConfig,
            domain: Domain | None = None) -> float:
    """<mu1, mu2>_{X,r}. ``domain=None`` means the whole chart.

    The ``exact`` route needs the whole chart (X containing both
    r-neighbourhoods) and evaluates the inner product by polarisation of
    the pair-sum identity.
    """
    if len(mu1) == 0 or len(mu2) == 0:
        return 0.0
    r = cfg.r
    if cfg.integration == "exact":
        if domain is not None:
            raise ValueError("the exact route integrates over the whole chart; pass domain=None")
        per = mu1.chart.periodic_x
        plus = mu1.combine(mu2, 1.0, 1.0)
        minus = mu1.combine(mu2, 1.0, -1.0)
        a, _ = pair_sum(plus.xy, plus.weights, r, per)
        b, _ = pair_sum(minus.xy, minus.weights, r, per)
        return (a - b) / 4.0 / r ** 4
    if domain is None:
        both = mu1.combine(mu2)
        domain = Domain.covering(both, r)
    if cfg.integration == "grid":
        m1, nodes = ball_masses_on_grid(mu1, r, domain, cfg.spacing)
        m2 = m1 if mu2 is mu1 else ball_masses_on_grid(mu2, r, domain, cfg.spacing)[0]
        return float(np.sum(m1 * m2) * nodes.cell_area / r ** 4)
    rng = np.random.default_rng(cfg.seed)
    z = np.column_stack([rng.uniform(domain.x0, domain.x1, cfg.n_mc),
                         rng.uniform(domain.y0, domain.y1, cfg.n_mc)])
    m1 = SpatialHash(mu1.xy, mu1.weights, r, mu1.chart.periodic_x).ball_mass(z)
    m2 = m1 if mu2 is mu1 else SpatialHash(mu2.xy, mu2.weights, r,
                                          mu2.chart.periodic_x).ball_mass(z)
    return float(domain.area * np.mean(m1 * m2) / r ** 4)


def r_norm(mu: ProjectedMeasure, cfg: NormConfig, domain: Domain | None = None,
           check_atoms: bool = False) -> float:
    if check_atoms:
        _check_atoms(mu, cfg)
    return math.sqrt(max(r_inner(mu, mu, cfg, domain), 0.0))


def covering_constant(r1: float, r2: float) -> float:
    """C0 with ||nu||_{r2} <= C0 ||nu||_{r1} on the flat chart.

    B(0, r2) is covered by k^2 balls of radius r1 centred on a square
    lattice of pitch sqrt(2) r1, k = ceil(sqrt(2) r2 / r1) + 1. Then
    nu(B(z,r2))^2 <= k^2 sum_k nu(B(z+z_k,r1))^2, which gives
    C0^2 = k^4 (r1/r2)^4.
    """
    k = math.ceil(math.sqrt(2.0) * r2 / r1) + 1
    return k * k * (r1 / r2) ** 2


@dataclass
class DensityField:
    values: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    r: float
    l2: float
    mass: float


def density_estimate(mu: ProjectedMeasure, r: float, domain: Domain | None = None,
                     h: float | None = None) -> DensityField:
    """J_r nu(z) = nu(B(z,r)) / (pi r^2) on grid nodes, with its L2 norm and integral."""
    if not r > 0:
        raise ValueError("r must be positive")
    domain = Domain.covering(mu, r) if domain is None else domain
    h = r / 4.0 if h is None else h
    masses, nodes = ball_masses_on_grid(mu, r, domain, h)
    J = masses / (math.pi * r * r)
    return DensityField(values=J, xs=nodes.xs, ys=nodes.ys, r=r,
                        l2=float(math.sqrt(np.sum(J * J) * nodes.cell_area)),
                        mass=float(np.sum(J) * nodes.cell_area))


@dataclass
class ScanReport:
    r_values: list
    norms: list
    atoms_per_ball: list
    ratio_last_decade: float
    threshold: float
    bounded: bool
    fitted_exponent: float
    integration: str

    def to_dict(self):
        return asdict(self)


def abs_continuity_scan(mu: ProjectedMeasure, r_sequence, domain: Domain | None = None,
                        threshold: float = 2.0, integration: str = "grid",
                        min_atoms: float = 10.0, seed: int = 0) -> ScanReport:
    """||mu||_{X,r} along a decreasing sequence of radii.

    The scan is flagged L2-bounded when max/min of the norms over the last
    decade of radii is below ``threshold``. ``fitted_exponent`` is the
    least-squares slope of log ||mu||_r against log r (about -1/2 for a
    measure on a single curve, about 0 for an L2 density).
    """
    rs = [float(v) for v in r_sequence]
    if len(rs) < 4 or any(b >= a for a, b in zip(rs, rs[1:])) or rs[0] < 10 * rs[-1] * (1 - 1e-12):
        raise ValueError("r_sequence must be decreasing, with >= 4 entries spanning a decade")
    k_min = expected_atoms_per_ball(mu, rs[-1], seed)
    if k_min < min_atoms:
        raise AtomStarvation(k_min, rs[-1], min_atoms)
    norms, kk = [], []
    for r in rs:
        cfg = NormConfig(r=r, integration=integration, seed=seed)
        norms.append(r_norm(mu, cfg, domain))
        kk.append(expected_atoms_per_ball(mu, r, seed) if r != rs[-1] else k_min)
    last = [n for r, n in zip(rs, norms) if r <= 10 * rs[-1] * (1 + 1e-12)]
    ratio = max(last) / min(last) if min(last) > 0 else math.inf
    slope = float(np.polyfit(np.log(rs), np.log(np.maximum(norms, 1e-300)), 1)[0])
    return ScanReport(r_values=rs, norms=norms, atoms_per_ball=kk, ratio_last_decade=ratio,
                      threshold=threshold, bounded=bool(ratio < threshold),
                      fitted_exponent=slope, integration=integration)


# ---------------------------------------------------------------------------
# Boxes and the family norm


@dataclass(frozen=True)
class Box:
    """C = [x0, x1) x [-Y, Y] x [z0, z1); W is its (x, y) footprint, W~ the r0-collar of W."""

    x0: float
    x1: float
    z0: float
    z1: float
    y_half: float
    r0: float

    def contains(self, pts) -> np.ndarray:
        x = np.mod(pts[:, 0], 1.0)
        return (x >= self.x0) & (x < self.x1) & (pts[:, 2] >= self.z0) & (pts[:, 2] < self.z1)

    @property
    def W(self) -> Domain:
        return Domain(self.x0, self.x1, -self.y_half, self.y_half, False)

    @property
    def W_tilde(self) -> Domain:
        return Domain(self.x0 - self.r0, self.x1 + self.r0,
                      -self.y_half - self.r0, self.y_half + self.r0, False)


@dataclass(frozen=True)
class BoxFamily:
    boxes: tuple

    @property
    def s0(self) -> int:
        return len(self.boxes)

    @classmethod
    def default(cls, params: MapParams, z_slabs: int = 2, r0: float = 0.05):
        """l x-cells times ``z_slabs`` equal z-slabs of [-1, 1]; s0 = l * z_slabs."""
        l = params.l
        zs = np.linspace(-1.0, 1.0, z_slabs + 1)
        zs[-1] = np.nextafter(1.0, 2.0)
        boxes = tuple(Box(k / l, (k + 1) / l, float(zs[j]), float(zs[j + 1]),
                          params.y_bound, r0)
                      for k in range(l) for j in range(z_slabs))
        return cls(boxes)

    @classmethod
    def single(cls, params: MapParams):
        """One box over the whole periodic chart (used by the inequality audit)."""
        return cls((Box(0.0, 1.0, -1.0, float(np.nextafter(1.0, 2.0)), params.y_bound, 0.0),))

    def project(self, mu: EmpiricalMeasure, i: int) -> ProjectedMeasure:
        box = self.boxes[i]
        sub = mu.restrict(box.contains(mu.points))
        return project_measure(sub, Chart(z_level=0.5 * (box.z0 + box.z1), periodic_x=False))

    def norms(self, mu: EmpiricalMeasure, cfg: NormConfig, tilde: bool = False) -> list:
        out = []
        for i, box in enumerate(self.boxes):
            nu = self.project(mu, i)
            out.append(r_norm(nu, cfg, box.W_tilde if tilde else box.W) if len(nu) else 0.0)
        return out

    def family_norm(self, mu: EmpiricalMeasure, cfg: NormConfig, tilde: bool = False) -> float:
        """|||mu|||_r: the largest per-box norm of the projected restrictions."""
        return max(self.norms(mu, cfg, tilde))


# ---------------------------------------------------------------------------
# Main inequality audit


@dataclass
class InequalityReport:
    n_values: list
    r: float
    c_policy: float
    c_n: list
    lhs: list
    self_term: list
    floor: list
    mid: list
    log_ratio: list
    sigma_hat: float
    log_B: float
    passed: bool
    n_atoms: list
    spacing: float
    boxes: str = "single whole-chart box"

    def to_dict(self):
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def _curve_atoms(curve: UnstableCurve, params: MapParams, spacing: float):
    x0 = float(curve.samples[0, 0])
    span = float(curve.samples[-1, 0] - x0)
    n_atoms = max(2, int(math.ceil(span / spacing)))
    xs = x0 + (np.arange(n_atoms) + 0.5) * span / n_atoms
    word = np.asarray(curve.backward.symbols[:curve.depth])
    pts = np.empty((n_atoms, 3))
    chunk = 250_000
    for a in range(0, n_atoms, chunk):
        b = min(a + chunk, n_atoms)
        pts[a:b] = attractor_points(np.broadcast_to(word, (b - a, len(word))), params, xs[a:b])
    return pts, np.full(n_atoms, 1.0 / n_atoms)


def main_inequality_audit(curve: UnstableCurve | None, params: MapParams, n_list=range(1, 7),
                          r: float = 1e-4, c_policy: float = 10.0, spacing: float = 0.5,
                          deformed: bool = False) -> InequalityReport:
    """Decay of the regular part of |||F^n_* mu|||_r^2 against |||mu|||^2_{c_n r}.

    mu is normalised arc length on an unstable curve (default: the full
    leaf y = z = 0 of Ex1). F^n_* mu is carried by l^n image pieces, one
    per n-step cell word; atoms are placed so that the image pieces have
    spacing ``spacing * r``. The squared norm splits exactly into
    same-piece pair terms (self_term) and cross-piece terms; the cross
    terms are intersections of transversal pieces and form the floor
    D_n |mu|^2, so log(self_term / mid) is fitted against n. mid is
    |||mu|||^2 at radius c_n r with c_n = c_policy * lambda_c^-n.
    Norms are taken on the single whole-chart box with the exact
    pair-sum route; the chart is periodic in x when every c_n r < 1/4 and
    planar (x in [0, 1)) otherwise.
    """
    curve = default_curve(params) if curve is None else curve
    n_list = [int(n) for n in n_list]
    lp = float(params.l) ** (params.n_power if deformed else 1)
    lc = params.lambda_c ** (params.n_power if deformed else 1)
    x0 = float(curve.samples[0, 0])
    span = float(curve.samples[-1, 0] - x0)
    f = step_deformed if deformed else step
    # Discs wider than the quarter circle overlap themselves on the periodic
    # chart; the audit then falls back to the planar chart of one box.
    periodic = c_policy * lc ** (-max(n_list)) * r < 0.25
    lhs, selfs, floors, mids, cns, counts = [], [], [], [], [], []
    for n in n_list:
        cn = c_policy * lc ** (-n)
        R = cn * r
        pts, w = _curve_atoms(curve, params, spacing * r / lp ** n)
        labels = np.floor((pts[:, 0] - x0) / span * lp ** n).astype(np.int64)
        for _ in range(n):
            pts = f(pts, params)
        xy = pts[:, :2].copy()
        del pts
        xy[:, 0] %= 1.0
        tot, same = pair_sum(xy, w, r, periodic, labels)
        del xy
        lhs.append(tot / r ** 4)
        selfs.append(same / r ** 4)
        floors.append((tot - same) / r ** 4)
        mpts, mw = _curve_atoms(curve, params, R / 8.0)
        mid_val, _ = pair_sum(mpts[:, :2], mw, R, periodic)
        mids.append(mid_val / R ** 4)
        cns.append(cn)
        counts.append(len(w))
    usable = [(n, s / m) for n, s, m in zip(n_list, selfs, mids) if n > 0 and s > 0 and m > 0]
    if len(usable) < 3:
        raise FitDegenerate(f"only {len(usable)} usable n values")
    ns = np.array([u[0] for u in usable], dtype=float)
    ys = np.log([u[1] for u in usable])
    slope, icpt = np.polyfit(ns, ys, 1)
    sigma = float(math.exp(-slope))
    return InequalityReport(n_values=n_list, r=r, c_policy=c_policy, c_n=cns, lhs=lhs,
                            self_term=selfs, floor=floors, mid=mids,
                            log_ratio=[float(math.log(s / m)) if s > 0 and m > 0 else None
                                       for s, m in zip(selfs, mids)],
                            sigma_hat=sigma, log_B=float(icpt), passed=bool(sigma > 1.0),
                            n_atoms=counts, spacing=spacing,
                            boxes="single whole-chart box" + ("" if periodic else " (planar chart)"))
