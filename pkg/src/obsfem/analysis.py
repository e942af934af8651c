"""Convergence and tail studies on manufactured solutions.

The reference solution used throughout is

    u0(x, y) = sin(5x + 1) sin(5y + 1),   f = -Lap u0 = 50 u0,

with boundary data g0 = u0 observed at noisy sites and exact multiplier
-du0/dnu (the flux into the boundary).  Field errors are integrated with
the edge-midpoint rule (exact for quadratics), multiplier errors with a
3-point Gauss rule along each boundary element.

`run_case` solves one configuration; `run_study` sweeps mesh sizes and
seeds, reusing the mesh, stiffness and coupling blocks across seeds
(only the observed data changes), which is bit-identical to calling
`run_case` per seed.  `tail_study` estimates the error tail over many
noise draws.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .assembly import (
    FieldSpace,
    MultiplierSpace,
    SaddleSystem,
    assemble_coupling_matrix,
    assemble_data_vector,
    assemble_load,
    assemble_stiffness,
    trace_like,
)
from .mesh import TriMesh, boundary_point, build_disk_mesh, build_square_mesh, triangle_areas
from .observations import NoiseModel, observe, place_points
from .solver import SaddleSolution, SingularSystemError, solve_saddle

logger = logging.getLogger(__name__)

_GAUSS_T = np.array([0.5 - math.sqrt(0.15), 0.5, 0.5 + math.sqrt(0.15)])
_GAUSS_W = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact solution data on one of the two reference domains."""

    domain: str  # "square" or "disk"
    u0: Callable
    grad_u0: Callable  # (x, y) -> (du/dx, du/dy)
    f: Callable

    def __post_init__(self):
        if self.domain not in ("square", "disk"):
            raise ValueError(f"unknown domain {self.domain!r}")

    def g0(self, x, y):
        return self.u0(x, y)

    def normal(self, x, y):
        """Outward unit normal at boundary points (never at corners)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.domain == "disk":
            r = np.hypot(x, y)
            return x / r, y / r
        nx = np.where(np.abs(x - 1.0) < 1e-9, 1.0, np.where(np.abs(x) < 1e-9, -1.0, 0.0))
        ny = np.where(np.abs(y - 1.0) < 1e-9, 1.0, np.where(np.abs(y) < 1e-9, -1.0, 0.0))
        return nx, ny

    def lambda_exact(self, x, y):
        """Multiplier -du0/dnu on the boundary."""
        gx, gy = self.grad_u0(x, y)
        nx, ny = self.normal(x, y)
        return -(gx * nx + gy * ny)


def sine_case(domain: str) -> ManufacturedCase:
    """The oscillatory reference solution sin(5x+1) sin(5y+1)."""

    def u0(x, y):
        return np.sin(5.0 * x + 1.0) * np.sin(5.0 * y + 1.0)

    def grad(x, y):
        return (
            5.0 * np.cos(5.0 * x + 1.0) * np.sin(5.0 * y + 1.0),
            5.0 * np.sin(5.0 * x + 1.0) * np.cos(5.0 * y + 1.0),
        )

    def f(x, y):
        return 50.0 * np.sin(5.0 * x + 1.0) * np.sin(5.0 * y + 1.0)

    return ManufacturedCase(domain, u0, grad, f)


def build_mesh(domain: str, k: int) -> TriMesh:
    if domain == "square":
        return build_square_mesh(k)
    if domain == "disk":
        return build_disk_mesh(k)
    raise ValueError(f"unknown domain {domain!r}")


@dataclass
class ErrorReport:
    h: float  # nominal parameter 1/k
    n: int
    seed: int
    l2: float
    h1: float
    semi_h1: float
    lam_l2: float
    lam_half: float  # -1/2,h norm
    residual_primal: float
    residual_constraint: float
    method: str


def _triangle_gradients(mesh: TriMesh) -> np.ndarray:
    """Gradients of the three P1 hats per triangle, shape (NT, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    areas = triangle_areas(mesh)
    # grad phi_i = perp(p_k - p_j) / (2 area) with (i, j, k) cyclic
    edges = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    perp = np.stack([-edges[..., 1], edges[..., 0]], axis=-1)
    return perp / (2.0 * areas)[:, None, None]


def compute_errors(
    mesh: TriMesh,
    case: ManufacturedCase,
    solution: SaddleSolution,
    h_nominal: float,
    n: int,
    seed: int,
) -> ErrorReport:
    """Field and multiplier errors of one discrete solution."""
    u = solution.u
    tris = mesh.triangles
    p = mesh.vertices[tris]
    areas = triangle_areas(mesh)

    # Edge midpoints; P1 values there are endpoint averages.
    mids = 0.5 * (p + np.roll(p, -1, axis=1))
    uv = u[tris]
    uh_mid = 0.5 * (uv + np.roll(uv, -1, axis=1))
    u0_mid = case.u0(mids[..., 0], mids[..., 1])
    l2_sq = float(np.sum(areas[:, None] / 3.0 * (u0_mid - uh_mid) ** 2))

    grads = _triangle_gradients(mesh)
    uh_grad = np.einsum("ti,tid->td", uv, grads)
    gx, gy = case.grad_u0(mids[..., 0], mids[..., 1])
    dx = gx - uh_grad[:, None, 0]
    dy = gy - uh_grad[:, None, 1]
    semi_sq = float(np.sum(areas[:, None] / 3.0 * (dx**2 + dy**2)))

    space_q = MultiplierSpace(mesh)
    lam = solution.lam
    lam_l2_sq = lam_half_sq = 0.0
    for e in range(space_q.ndof):
        h_e = mesh.boundary[e].length
        pts, _ = boundary_point(mesh, e, _GAUSS_T)
        exact = case.lambda_exact(pts[:, 0], pts[:, 1])
        approx = trace_like(space_q, lam, e, _GAUSS_T)
        l2e = h_e * float(np.dot(_GAUSS_W, (exact - approx) ** 2))
        lam_l2_sq += l2e
        lam_half_sq += h_e * l2e

    return ErrorReport(
        h=h_nominal,
        n=n,
        seed=seed,
        l2=math.sqrt(l2_sq),
        h1=math.sqrt(l2_sq + semi_sq),
        semi_h1=math.sqrt(semi_sq),
        lam_l2=math.sqrt(lam_l2_sq),
        lam_half=math.sqrt(lam_half_sq),
        residual_primal=solution.residual_primal,
        residual_constraint=solution.residual_constraint,
        method=solution.method,
    )


def points_for(k: int, i: Optional[int], n: Optional[int]) -> int:
    """Observation count: explicit n, or round(h^-i) with h = 1/k."""
    if n is not None:
        if n < 1:
            raise ValueError("n must be positive")
        return int(n)
    if i is None:
        raise ValueError("need either i or n")
    if i not in (1, 2, 3, 4):
        raise ValueError(f"exponent i must be in 1..4, got {i}")
    return int(round(float(k) ** i))


def run_case(
    domain: str,
    k: int,
    i: Optional[int] = None,
    n: Optional[int] = None,
    model: Optional[NoiseModel] = None,
    seed: int = 0,
    case: Optional[ManufacturedCase] = None,
) -> ErrorReport:
    """Build, solve and measure one configuration."""
    mesh = build_mesh(domain, k)
    if case is None:
        case = sine_case(domain)
    npts = points_for(k, i, n)
    placement = place_points(mesh, npts)
    return _trial(mesh, case, placement, model, seed, 1.0 / k)


def _trial(
    mesh: TriMesh,
    case: ManufacturedCase,
    placement,
    model: Optional[NoiseModel],
    seed: int,
    h_nominal: float,
    blocks: Optional[tuple] = None,
) -> ErrorReport:
    space_v = FieldSpace(mesh)
    space_q = MultiplierSpace(mesh)
    obs = observe(placement, case.g0, model, seed)
    if blocks is None:
        A = assemble_stiffness(space_v)
        F = assemble_load(space_v, case.f)
        B = assemble_coupling_matrix(space_v, space_q, placement)
    else:
        A, F, B = blocks
    G = assemble_data_vector(space_q, obs)
    system = SaddleSystem(A, B, F, G, space_v, space_q)
    try:
        solution = solve_saddle(system)
    except SingularSystemError as exc:
        raise SingularSystemError(
            f"h={h_nominal:g} n={placement.n}: {exc}", estimate=exc.estimate
        ) from exc
    return compute_errors(mesh, case, solution, h_nominal, placement.n, seed)


@dataclass
class TableRow:
    h: float
    k: int
    n: int
    trials: int
    l2_mean: float
    l2_std: float
    h1_mean: float
    h1_std: float
    lam_l2_mean: float
    max_residual: float
    reports: list = field(default_factory=list)


@dataclass
class ConvergenceTable:
    domain: str
    i: Optional[int]
    rows: list

    @property
    def hs(self) -> np.ndarray:
        return np.array([r.h for r in self.rows])


@dataclass
class RateEstimate:
    endpoint: float
    slope: float
    note: str = ""


def estimate_rates(hs: Sequence[float], errors: Sequence[float]) -> RateEstimate:
    """Convergence rate of errors against the mesh parameter.

    endpoint = ln(e_last / e_first) / ln(h_first / h_last), negative for
    a convergent sequence; slope is the least-squares fit of ln e
    against ln(1/h) over all levels.
    """
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(hs) != len(errors) or len(hs) < 2:
        raise ValueError("need at least two (h, error) pairs")
    if np.any(errors <= 0.0):
        return RateEstimate(float("nan"), float("nan"), "zero error at some level")
    endpoint = math.log(errors[-1] / errors[0]) / math.log(hs[0] / hs[-1])
    slope = float(np.polyfit(np.log(1.0 / hs), np.log(errors), 1)[0])
    return RateEstimate(endpoint, slope)


def run_study(
    domain: str,
    ks: Sequence[int],
    i: Optional[int] = None,
    n: Optional[int] = None,
    model: Optional[NoiseModel] = None,
    trials: int = 1,
    seed: int = 0,
    workers: int = 1,
    case: Optional[ManufacturedCase] = None,
) -> ConvergenceTable:
    """Sweep mesh sizes, averaging errors over `trials` noise seeds.

    Seeds are seed, seed+1, ...  With workers > 1 the (k, seed) grid is
    solved by a process pool; results are reduced in deterministic
    order and match the serial run exactly.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    rows = []
    if workers > 1:
        grid = [(domain, k, i, n, model, seed + t, case) for k in ks for t in range(trials)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            flat = list(pool.map(_run_case_tuple, grid, chunksize=1))
        by_k = {k: [] for k in ks}
        for (d, k, *_), rep in zip(grid, flat):
            by_k[k].append(rep)
        for k in ks:
            rows.append(_reduce_row(k, by_k[k]))
    else:
        for k in ks:
            mesh = build_mesh(domain, k)
            the_case = case if case is not None else sine_case(domain)
            npts = points_for(k, i, n)
            placement = place_points(mesh, npts)
            space_v = FieldSpace(mesh)
            space_q = MultiplierSpace(mesh)
            A = assemble_stiffness(space_v)
            F = assemble_load(space_v, the_case.f)
            B = assemble_coupling_matrix(space_v, space_q, placement)
            reports = [
                _trial(mesh, the_case, placement, model, seed + t, 1.0 / k, blocks=(A, F, B))
                for t in range(trials)
            ]
            rows.append(_reduce_row(k, reports))
    return ConvergenceTable(domain, i, rows)


def _run_case_tuple(args) -> ErrorReport:
    domain, k, i, n, model, seed, case = args
    return run_case(domain, k, i=i, n=n, model=model, seed=seed, case=case)


def _reduce_row(k: int, reports: list) -> TableRow:
    l2 = np.array([r.l2 for r in reports])
    h1 = np.array([r.h1 for r in reports])
    lam = np.array([r.lam_l2 for r in reports])
    res = max(max(r.residual_primal, r.residual_constraint) for r in reports)
    return TableRow(
        h=reports[0].h,
        k=k,
        n=reports[0].n,
        trials=len(reports),
        l2_mean=float(l2.mean()),
        l2_std=float(l2.std(ddof=1)) if len(reports) > 1 else 0.0,
        h1_mean=float(h1.mean()),
        h1_std=float(h1.std(ddof=1)) if len(reports) > 1 else 0.0,
        lam_l2_mean=float(lam.mean()),
        max_residual=res,
        reports=reports,
    )


@dataclass
class TailReport:
    trials: int
    median: float
    p99: float
    z: np.ndarray
    survival: np.ndarray
    fit_a: float
    fit_b: float
    r2: float
    degenerate: bool


def tail_study(
    domain: str,
    k: int,
    i: Optional[int] = None,
    n: Optional[int] = None,
    model: Optional[NoiseModel] = None,
    trials: int = 200,
    seed: int = 0,
    quantiles: tuple[float, float] = (0.5, 0.99),
    levels: int = 25,
    workers: int = 1,
) -> TailReport:
    """Distribution of the L2 error over repeated noise draws.

    Thresholds are placed at `levels` quantiles between the given pair,
    expressed as multiples z of the median error; the survival curve
    P(err > z * median) is fit as log P = a - b z^2.  A sub-Gaussian
    tail shows up as b > 0 with good R^2.
    """
    if trials < 100:
        raise ValueError("tail study needs at least 100 trials")
    mesh = build_mesh(domain, k)
    case = sine_case(domain)
    npts = points_for(k, i, n)
    placement = place_points(mesh, npts)
    space_v = FieldSpace(mesh)
    space_q = MultiplierSpace(mesh)
    A = assemble_stiffness(space_v)
    F = assemble_load(space_v, case.f)
    B = assemble_coupling_matrix(space_v, space_q, placement)
    if workers > 1:
        grid = [(domain, k, i, n, model, seed + t, None) for t in range(trials)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_case_tuple, grid, chunksize=1))
    else:
        reports = [
            _trial(mesh, case, placement, model, seed + t, 1.0 / k, blocks=(A, F, B))
            for t in range(trials)
        ]
    errors = np.array([r.l2 for r in reports])

    med = float(np.median(errors))
    p99 = float(np.quantile(errors, 0.99))
    if errors.max() - errors.min() <= 1e-12 * max(med, 1e-300):
        return TailReport(trials, med, p99, np.zeros(0), np.zeros(0),
                          float("nan"), float("nan"), float("nan"), True)

    qs = np.linspace(quantiles[0], quantiles[1], levels)
    thresholds = np.quantile(errors, qs)
    z = thresholds / med
    survival = np.array([np.mean(errors > thr) for thr in thresholds])
    keep = survival > 0.0
    z, survival = z[keep], survival[keep]
    logs = np.log(survival)
    coeff = np.polyfit(z**2, logs, 1)
    fit = np.polyval(coeff, z**2)
    ss_res = float(np.sum((logs - fit) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return TailReport(trials, med, p99, z, survival, float(coeff[1]), float(-coeff[0]), r2, False)
