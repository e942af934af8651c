"""Boundary observation points, noise, and empirical quadrature.

Measurements live on the boundary loop at arclengths s_i = (i - 1/2)|Gamma|/n.
Each point gets a local quadrature weight from the spacing of the points
inside its boundary element, and a global weight

    alpha_j = omega_j * |F_E'(t_j)|,

so that sum_j alpha_j u(x_j) v(x_j) approximates the L2(Gamma) pairing.
Noise is generated with a counter-based RNG in fixed-size blocks, so the
value attached to point i depends only on (seed, i); large observation
sets can therefore be built in streaming chunks (and in parallel) without
changing a single bit of the result.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .mesh import TriMesh, boundary_point

logger = logging.getLogger(__name__)

# Fixed block size for counter-based noise generation.  Changing this
# constant changes every stream, so it is part of the data format.
_NOISE_BLOCK = 1 << 20

# Points closer than this to an element endpoint are nudged inward.
_ENDPOINT_TOL = 1e-12
_ENDPOINT_NUDGE = 1e-9


@dataclass(frozen=True)
class NoiseModel:
    """Observation noise law: none, Gaussian(sigma), or a two-component
    Gaussian scale mixture (component 1 with prob p, else component 2)."""

    kind: str
    sigma: float = 0.0
    sigma1: float = 0.0
    sigma2: float = 0.0
    p: float = 0.5

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "mixture"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian" and self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.kind == "mixture" and not (0.0 <= self.p <= 1.0):
            raise ValueError("mixture probability must lie in [0, 1]")

    @staticmethod
    def none() -> "NoiseModel":
        return NoiseModel("none")

    @staticmethod
    def gaussian(sigma: float) -> "NoiseModel":
        return NoiseModel("gaussian", sigma=sigma)

    @staticmethod
    def mixture(sigma1: float, sigma2: float, p: float = 0.5) -> "NoiseModel":
        return NoiseModel("mixture", sigma1=sigma1, sigma2=sigma2, p=p)

    @property
    def std(self) -> float:
        """Standard deviation of one noise draw."""
        if self.kind == "none":
            return 0.0
        if self.kind == "gaussian":
            return self.sigma
        return math.sqrt(self.p * self.sigma1**2 + (1.0 - self.p) * self.sigma2**2)


def _noise_block(model: NoiseModel, seed: int, block: int, count: int) -> np.ndarray:
    """Noise values for positions [block*B, block*B + count) of the stream."""
    key = (int(seed) & 0xFFFFFFFFFFFFFFFF) | (block << 64)
    rng = np.random.Generator(np.random.Philox(key=key))
    if model.kind == "gaussian":
        return model.sigma * rng.standard_normal(count)
    # mixture: component indicator first, then one normal per point
    pick = rng.random(count) < model.p
    scale = np.where(pick, model.sigma1, model.sigma2)
    return scale * rng.standard_normal(count)


def sample_noise(model: Optional[NoiseModel], count: int, seed: int) -> np.ndarray:
    """Draw `count` noise values; entry i depends only on (seed, i)."""
    return sample_noise_range(model, seed, 0, count)


def sample_noise_range(model: Optional[NoiseModel], seed: int, start: int, stop: int) -> np.ndarray:
    """Entries [start, stop) of the noise stream for this (model, seed)."""
    if stop < start:
        raise ValueError("empty or inverted range")
    out = np.zeros(stop - start)
    if model is None or model.kind == "none" or stop == start:
        return out
    pos = start
    while pos < stop:
        block = pos // _NOISE_BLOCK
        hi = min(stop, (block + 1) * _NOISE_BLOCK)
        vals = _noise_block(model, seed, block, hi - block * _NOISE_BLOCK)
        out[pos - start : hi - start] = vals[pos - block * _NOISE_BLOCK :]
        pos = hi
    return out


@dataclass
class UniformityReport:
    """Spread statistics of boundary points: s_min is the smallest
    arclength gap between neighbours, s_max the largest distance from any
    boundary point to the set (half the widest gap on a closed loop)."""

    s_min: float
    s_max: float
    ratio: float  # s_max / s_min, 1/2 for perfectly equispaced points


@dataclass
class Placement:
    """Observation sites on the boundary loop, bucketed by element.

    Points are stored element by element in loop order: element e owns
    the slice [offsets[e], offsets[e+1]) of the flat arrays.  Within an
    element the local parameters t are strictly increasing.
    """

    mesh: TriMesh
    n: int
    offsets: np.ndarray  # (NB+1,) int
    t: np.ndarray  # (n,) local parameters
    alpha: np.ndarray  # (n,) global quadrature weights

    def element_slice(self, e: int) -> slice:
        return slice(self.offsets[e], self.offsets[e + 1])

    def positions(self, e: int) -> np.ndarray:
        pts, _ = boundary_point(self.mesh, e, self.t[self.element_slice(e)])
        return pts

    def omega(self, e: int) -> np.ndarray:
        """Local (parameter-space) weights of element e."""
        _, speed = boundary_point(self.mesh, e, 0.0)
        return self.alpha[self.element_slice(e)] / speed

    def arclengths(self) -> np.ndarray:
        """Global arclength coordinate of every point, in storage order."""
        h = self.mesh.boundary_lengths
        starts = np.concatenate([[0.0], np.cumsum(h)])[:-1]
        counts = np.diff(self.offsets)
        return np.repeat(starts, counts) + self.t * np.repeat(h, counts)

    @property
    def alpha_bounds(self) -> tuple[float, float]:
        """Empirical constants (B3, B4) with B3/n <= alpha_j <= B4/n."""
        return float(self.n * self.alpha.min()), float(self.n * self.alpha.max())


def quadrature_weights(t: np.ndarray) -> np.ndarray:
    """Empirical quadrature weights on [0, 1] for ordered points t.

    With gaps dt_j = t_j - t_{j-1} (conventions t_0 = 0, t_{m+1} = 1):

        w_1 = dt_1 + dt_2 / 2
        w_j = (dt_j + dt_{j+1}) / 2     for 1 < j < m
        w_m = dt_m / 2 + dt_{m+1}

    A single point gets weight 1, no points give an empty array; the
    weights always sum to 1.
    """
    t = np.asarray(t, dtype=float)
    m = len(t)
    if m == 0:
        return np.zeros(0)
    if np.any(t <= 0.0) or np.any(t >= 1.0):
        raise ValueError("points must lie strictly inside (0, 1)")
    if m == 1:
        return np.ones(1)
    dt = np.diff(t)
    if np.any(dt <= 0.0):
        raise ValueError("points must be strictly increasing")
    w = np.empty(m)
    w[1:-1] = 0.5 * (dt[:-1] + dt[1:])
    w[0] = t[0] + 0.5 * dt[0]
    w[-1] = 0.5 * dt[-1] + (1.0 - t[-1])
    return w


def place_measurements(mesh: TriMesh, n: int):
    """Place n measurement sites at arclengths (i - 1/2)|Gamma|/n.

    Returns (element_index, t, positions).  Sites that would land within
    1e-12 of an element endpoint are nudged forward by 1e-9 |Gamma|/n so
    every site is interior to exactly one element.
    """
    placement = place_points(mesh, n)
    counts = np.diff(placement.offsets)
    elem = np.repeat(np.arange(len(mesh.boundary)), counts)
    pos = np.vstack([placement.positions(e) for e in range(len(mesh.boundary)) if counts[e]])
    return elem, placement.t, pos


def place_points(mesh: TriMesh, n: int) -> Placement:
    """Compute the Placement (element buckets, parameters, weights)."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    h = mesh.boundary_lengths
    total = float(h.sum())
    starts = np.concatenate([[0.0], np.cumsum(h)])
    spacing = total / n

    nb = len(mesh.boundary)
    counts = np.zeros(nb, dtype=np.int64)
    t = np.empty(n)
    nudged = 0
    # Chunked so that n ~ 1e8 never materializes more than a few work
    # arrays at once; sites are generated in arclength order, so each
    # element owns one contiguous run.
    chunk = _NOISE_BLOCK
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        s = (np.arange(lo, hi, dtype=float) + 0.5) * spacing
        e = np.minimum(np.searchsorted(starts, s, side="right") - 1, nb - 1)
        tt = (s - starts[e]) / h[e]
        near = (tt * h[e] < _ENDPOINT_TOL) | ((1.0 - tt) * h[e] < _ENDPOINT_TOL)
        if np.any(near):
            nudged += int(near.sum())
            s = s + near * (_ENDPOINT_NUDGE * spacing)
            e = np.minimum(np.searchsorted(starts, s, side="right") - 1, nb - 1)
            tt = (s - starts[e]) / h[e]
            tt = np.clip(tt, 1e-15, 1.0 - 1e-15)
        t[lo:hi] = tt
        counts += np.bincount(e, minlength=nb)
    if nudged:
        logger.warning("nudged %d observation sites off element endpoints", nudged)
    offsets = np.concatenate([[0], np.cumsum(counts)])

    alpha = np.empty(n)
    for e in range(nb):
        sl = slice(offsets[e], offsets[e + 1])
        alpha[sl] = quadrature_weights(t[sl]) * h[e]
    return Placement(mesh, n, offsets, t, alpha)


def uniformity_report(mesh: TriMesh, arclengths: np.ndarray) -> UniformityReport:
    """Gap statistics of points given by arclength along the loop."""
    s = np.sort(np.asarray(arclengths, dtype=float))
    if len(s) < 2:
        raise ValueError("need at least two points")
    total = mesh.boundary_length
    gaps = np.diff(np.concatenate([s, [s[0] + total]]))
    s_min = float(gaps.min())
    s_max = float(gaps.max() / 2.0)
    return UniformityReport(s_min, s_max, s_max / s_min)


@dataclass
class ObservationSet:
    """Placement plus observed data g_j = g0(x_j) + e_j for one seed."""

    placement: Placement
    g: np.ndarray
    g0: Callable
    model: Optional[NoiseModel]
    seed: int

    @property
    def mesh(self) -> TriMesh:
        return self.placement.mesh

    @property
    def n(self) -> int:
        return self.placement.n

    @property
    def t(self) -> np.ndarray:
        return self.placement.t

    @property
    def alpha(self) -> np.ndarray:
        return self.placement.alpha

    @property
    def offsets(self) -> np.ndarray:
        return self.placement.offsets

    def clean_values(self, e: int) -> np.ndarray:
        pts = self.placement.positions(e)
        vals = np.asarray(self.g0(pts[:, 0], pts[:, 1]), dtype=float)
        if vals.ndim == 0:
            vals = np.full(len(pts), float(vals))
        return vals

    def noise_values(self, e: int) -> np.ndarray:
        return self.g[self.placement.element_slice(e)] - self.clean_values(e)


def observe(placement: Placement, g0: Callable, model: Optional[NoiseModel], seed: int) -> ObservationSet:
    """Attach observed data to an existing placement.

    Clean values are evaluated element by element; noise is then added
    one RNG block at a time so each block is generated exactly once.
    """
    n = placement.n
    g = np.empty(n)
    nb = len(placement.mesh.boundary)
    for e in range(nb):
        sl = placement.element_slice(e)
        cnt = sl.stop - sl.start
        if cnt == 0:
            continue
        pts = placement.positions(e)
        vals = np.asarray(g0(pts[:, 0], pts[:, 1]), dtype=float)
        if vals.ndim == 0:
            vals = np.full(cnt, float(vals))
        elif vals.shape != (cnt,):
            raise ValueError("g0 must map coordinate arrays to a value array")
        g[sl] = vals
    if model is not None and model.kind != "none":
        for lo in range(0, n, _NOISE_BLOCK):
            hi = min(n, lo + _NOISE_BLOCK)
            g[lo:hi] += _noise_block(model, seed, lo // _NOISE_BLOCK, hi - lo)
    return ObservationSet(placement, g, g0, model, seed)


def build_observation_set(
    mesh: TriMesh,
    n: int,
    g0: Callable,
    model: Optional[NoiseModel] = None,
    seed: int = 0,
) -> ObservationSet:
    """Place n sites on the boundary and observe g0 under the noise model.

    The result is bit-reproducible: identical (mesh, n, g0, model, seed)
    give identical arrays regardless of chunking.
    """
    return observe(place_points(mesh, n), g0, model, seed)


def dump_observations_csv(obs: ObservationSet, path: str) -> None:
    """Write one line per site (for debugging; floats at 17 digits)."""
    with open(path, "w") as fh:
        fh.write("element,t,x,y,g0,e,g,omega,alpha\n")
        for e in range(len(obs.mesh.boundary)):
            sl = obs.placement.element_slice(e)
            if sl.stop == sl.start:
                continue
            pts = obs.placement.positions(e)
            clean = obs.clean_values(e)
            omega = obs.placement.omega(e)
            for j in range(sl.stop - sl.start):
                row = (
                    obs.t[sl][j], pts[j, 0], pts[j, 1], clean[j],
                    obs.g[sl][j] - clean[j], obs.g[sl][j], omega[j], obs.alpha[sl][j],
                )
                fh.write(f"{e}," + ",".join(f"{v:.17g}" for v in row) + "\n")


def empirical_inner_product(alpha: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """<u, v>_n = sum_j alpha_j u_j v_j for values sampled at the sites."""
    return float(np.dot(alpha, np.asarray(u) * np.asarray(v)))


def empirical_norm(alpha: np.ndarray, u: np.ndarray) -> float:
    """Seminorm ||u||_n = sqrt(<u, u>_n)."""
    return math.sqrt(max(empirical_inner_product(alpha, u, u), 0.0))
