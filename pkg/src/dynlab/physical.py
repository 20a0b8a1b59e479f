"""Birkhoff averages over grids of initial conditions and their clustering into basins."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .dynamics import orbit_blocks
from .params import MapParams


@dataclass(frozen=True)
class ObservableDictionary:
    """Fixed smooth test functions on M, each bounded by 1 in sup norm.

    ``funcs`` map (x, y, z, Y) arrays to values, where Y is the half-height
    of the invariant y-interval used for normalisation.
    """

    names: tuple
    funcs: tuple

    def __len__(self):
        return len(self.names)

    def evaluate(self, x, y, z, params: MapParams):
        Y = params.y_bound
        return [f(x, y, z, Y) for f in self.funcs]

    @classmethod
    def default(cls):
        two_pi = 2.0 * math.pi
        return cls(
            names=("sin2pix", "cos2pix", "y", "y2", "z", "yz"),
            funcs=(
                lambda x, y, z, Y: np.sin(two_pi * x),
                lambda x, y, z, Y: np.cos(two_pi * x),
                lambda x, y, z, Y: y / Y,
                lambda x, y, z, Y: (y / Y) ** 2,
                lambda x, y, z, Y: z,
                lambda x, y, z, Y: y * z / Y,
            ),
        )

    @classmethod
    def constant(cls, c: float):
        return cls(names=("const",), funcs=(lambda x, y, z, Y: np.full(np.shape(x), float(c)),))


def birkhoff_batch(p0, dictionary: ObservableDictionary, n_iters: int, burn_in: int,
                   params: MapParams, rng, deformed: bool = False, block: int = 512):
    """Time averages over iterates burn_in..n_iters-1 for many starting points.

    Returns (averages (N, k), conv_gap (N,)); conv_gap is the sup over
    observables of |first-half average - full average|. Sums are taken of
    deviations from each orbit's first used value, so a constant
    observable averages to itself exactly.
    """
    if n_iters < 10 * burn_in or n_iters < 2:
        raise ValueError("n_iters must be at least 10 * burn_in")
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    k = len(dictionary)
    n_used = n_iters - burn_in
    half_end = burn_in + n_used // 2
    full = np.zeros((p0.shape[0], k))
    half = np.zeros((p0.shape[0], k))
    ref = None
    t = 0
    for xs, ys, zs in orbit_blocks(p0, n_iters, params, rng, block=block, deformed=deformed):
        b = xs.shape[1]
        idx = np.arange(t, t + b)
        use = idx >= burn_in
        if np.any(use):
            first = use & (idx < half_end)
            vals = dictionary.evaluate(xs[:, use], ys[:, use], zs[:, use], params)
            if ref is None:
                ref = np.column_stack([v[:, 0] for v in vals])
            fh = first[use]
            for j, v in enumerate(vals):
                dv = v - ref[:, j:j + 1]
                full[:, j] += dv.sum(axis=1)
                if np.any(fh):
                    half[:, j] += dv[:, fh].sum(axis=1)
        t += b
    full = ref + full / n_used
    half = ref + half / (half_end - burn_in)
    return full, np.max(np.abs(half - full), axis=1)


def birkhoff_averages(p0, dictionary: ObservableDictionary, n_iters: int, burn_in: int,
                      params: MapParams, seed: int = 0, deformed: bool = False):
    """Birkhoff averages of one point: (vector, conv_gap)."""
    rng = np.random.default_rng(seed)
    avg, gap = birkhoff_batch([tuple(p0)], dictionary, n_iters, burn_in, params, rng, deformed)
    return avg[0], float(gap[0])


def parse_grid(spec) -> tuple:
    """'32x32x8' -> (32, 32, 8)."""
    if isinstance(spec, str):
        parts = tuple(int(v) for v in spec.lower().split("x"))
    else:
        parts = tuple(int(v) for v in spec)
    if len(parts) != 3 or min(parts) < 1:
        raise ValueError(f"grid must be three positive sizes, got {spec!r}")
    return parts


def grid_points(shape, params: MapParams, box=None) -> np.ndarray:
    """Cell centres of a regular grid over M (or over box = ((x0,x1),(y0,y1),(z0,z1)))."""
    nx, ny, nz = shape
    Y = params.y_bound
    box = box or ((0.0, 1.0), (-Y, Y), (-1.0, 1.0))
    axes = [lo + (np.arange(n) + 0.5) * (hi - lo) / n for n, (lo, hi) in zip(shape, box)]
    X, Yg, Z = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([X.ravel(), Yg.ravel(), Z.ravel()])


def single_linkage(vectors: np.ndarray, tol: float) -> np.ndarray:
    """Connected components of the graph joining vectors at sup-distance <= tol."""
    n = len(vectors)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    pairs = cKDTree(vectors).query_pairs(tol, p=np.inf, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    # relabel by decreasing size, ties by first occurrence
    sizes = np.bincount(labels)
    first = np.full(len(sizes), n)
    np.minimum.at(first, labels, np.arange(n))
    order = sorted(range(len(sizes)), key=lambda c: (-sizes[c], first[c]))
    remap = np.empty(len(sizes), dtype=np.int64)
    remap[order] = np.arange(len(sizes))
    return remap[labels]


@dataclass
class BasinReport:
    k_clusters: int
    cluster_centers: list
    basin_fractions: list
    unresolved_fraction: float
    params_echo: dict
    grid: tuple
    n_iters: int
    burn_in: int
    cluster_tol: float
    seed: int
    observables: tuple
    points: np.ndarray = field(repr=False, default=None)
    averages: np.ndarray = field(repr=False, default=None)
    conv_gap: np.ndarray = field(repr=False, default=None)
    cluster_id: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {"k_clusters": self.k_clusters, "cluster_centers": self.cluster_centers,
                "basin_fractions": self.basin_fractions,
                "unresolved_fraction": self.unresolved_fraction, "params": self.params_echo,
                "grid": list(self.grid), "n_iters": self.n_iters, "burn_in": self.burn_in,
                "cluster_tol": self.cluster_tol, "seed": self.seed,
                "observables": list(self.observables)}

    def rows(self):
        """Per-point rows x0,y0,z0,avg_1..avg_k,conv_gap,cluster_id (-1 = unresolved)."""
        for p, a, g, c in zip(self.points, self.averages, self.conv_gap, self.cluster_id):
            yield [float(v) for v in p] + [float(v) for v in a] + [float(g), int(c)]


def resolve_threads(threads=None) -> int:
    if threads in (None, "auto", 0):
        env = os.environ.get("DYNLAB_THREADS")
        if env and env != "auto":
            return max(1, int(env))
        return os.cpu_count() or 1
    return max(1, int(threads))


def survey_basins(grid_spec, dictionary: ObservableDictionary | None, n_iters: int, burn_in: int,
                  cluster_tol: float, params: MapParams, seed: int = 0, threads=None,
                  deformed: bool = False, box=None, chunk: int = 1024,
                  points: np.ndarray | None = None) -> BasinReport:
    """Cluster the Birkhoff averages of a grid of initial conditions.

    Grid cells have equal Lebesgue weight. Points whose convergence gap
    exceeds cluster_tol/2 are unresolved and never assigned. Each chunk of
    ``chunk`` points draws from its own spawned seed, so the result does
    not depend on the number of threads.
    """
    dictionary = ObservableDictionary.default() if dictionary is None else dictionary
    shape = parse_grid(grid_spec) if points is None else (len(points), 1, 1)
    pts = grid_points(shape, params, box) if points is None else np.atleast_2d(points)
    n = len(pts)
    starts = list(range(0, n, chunk))
    seeds = np.random.SeedSequence(seed).spawn(len(starts))

    def work(i):
        a = starts[i]
        rng = np.random.default_rng(seeds[i])
        return birkhoff_batch(pts[a:a + chunk], dictionary, n_iters, burn_in, params, rng,
                              deformed)

    nthreads = resolve_threads(threads)
    if nthreads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as ex:
            results = list(ex.map(work, range(len(starts))))
    else:
        results = [work(i) for i in range(len(starts))]
    avgs = np.concatenate([r[0] for r in results])
    gaps = np.concatenate([r[1] for r in results])
    resolved = gaps <= cluster_tol / 2.0
    cid = np.full(n, -1, dtype=np.int64)
    cid[resolved] = single_linkage(avgs[resolved], cluster_tol)
    k = int(cid.max()) + 1 if np.any(resolved) else 0
    counts = np.bincount(cid[resolved], minlength=k) if k else np.zeros(0, dtype=np.int64)
    fractions = [float(c) / n for c in counts]
    unresolved = float(n - int(resolved.sum())) / n
    centers = [avgs[cid == c].mean(axis=0).tolist() for c in range(k)]
    return BasinReport(k_clusters=k, cluster_centers=centers, basin_fractions=fractions,
                       unresolved_fraction=unresolved, params_echo=params.to_dict(),
                       grid=shape, n_iters=n_iters, burn_in=burn_in, cluster_tol=cluster_tol,
                       seed=seed, observables=dictionary.names, points=pts, averages=avgs,
                       conv_gap=gaps, cluster_id=cid)
