"""P1 spaces and assembly of the saddle-point blocks.

The field space V_h is continuous P1 on the triangulation; the
multiplier space Q_h is continuous piecewise linear in the boundary
parameter, with one degree of freedom per boundary vertex (in loop
order).  The discrete problem couples them through the empirical
boundary pairing

    B[k, j] = sum_i alpha_i psi_k(x_i) (tr phi_j)(x_i),
    G[k]    = sum_i alpha_i psi_k(x_i) g_i,

where tr is endpoint interpolation along each boundary element: a field
function restricted to the chord of element E and read off at parameter
t is (1 - t) u[v0] + t u[v1].  Both basis families are hats in t, so
every observation site contributes a 2 x 2 block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .mesh import TriMesh, triangle_areas
from .observations import ObservationSet, Placement

# 3-point Gauss rule on [0, 1]; exact through degree 5.
_GAUSS_T = np.array([0.5 - math.sqrt(0.15), 0.5, 0.5 + math.sqrt(0.15)])
_GAUSS_W = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


@dataclass
class FieldSpace:
    """P1 field space on the triangulation (one dof per vertex)."""

    mesh: TriMesh

    @property
    def ndof(self) -> int:
        return len(self.mesh.vertices)

    @property
    def boundary_dofs(self) -> np.ndarray:
        return self.mesh.boundary_vertices


@dataclass
class MultiplierSpace:
    """Piecewise linear multipliers on the boundary loop.

    Dof k lives at the k-th boundary vertex in loop order; element e
    carries dofs (e, e+1 mod N).
    """

    mesh: TriMesh

    @property
    def ndof(self) -> int:
        return len(self.mesh.boundary)

    def element_dofs(self, e: int) -> tuple[int, int]:
        return e, (e + 1) % self.ndof

    @property
    def vertex_ids(self) -> np.ndarray:
        """Global vertex index of each multiplier dof."""
        return self.mesh.boundary_vertices


def assemble_stiffness(space: FieldSpace) -> sp.csr_matrix:
    """Stiffness matrix (grad u, grad v) over the triangulation."""
    mesh = space.mesh
    p = mesh.vertices[mesh.triangles]
    areas = triangle_areas(mesh)
    # Opposite-edge vectors; A_local[a, b] = (e_a . e_b) / (4 area).
    edges = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    local = np.einsum("tad,tbd->tab", edges, edges) / (4.0 * areas)[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(space.ndof, space.ndof))
    return A.tocsr()


def assemble_load(space: FieldSpace, f) -> np.ndarray:
    """Load vector (I_h f, v_h) using the consistent P1 mass matrix."""
    mesh = space.mesh
    fv = np.asarray(f(mesh.vertices[:, 0], mesh.vertices[:, 1]), dtype=float)
    if fv.ndim == 0:
        fv = np.full(space.ndof, float(fv))
    elif fv.shape != (space.ndof,):
        raise ValueError("f must map coordinate arrays to a value array")
    if not np.all(np.isfinite(fv)):
        bad = int(np.flatnonzero(~np.isfinite(fv))[0])
        raise ValueError(f"f is not finite at vertex {bad} {tuple(mesh.vertices[bad])}")
    areas = triangle_areas(mesh)
    tf = fv[mesh.triangles]
    # local_i = area/12 * (2 f_i + f_j + f_k) = area/12 * (f_i + sum f)
    local = (areas[:, None] / 12.0) * (tf + tf.sum(axis=1, keepdims=True))
    F = np.zeros(space.ndof)
    np.add.at(F, mesh.triangles.ravel(), local.ravel())
    return F


def trace_evaluate(space: MultiplierSpace, u: np.ndarray, e: int, t) -> np.ndarray:
    """Trace of a field vector on boundary element e at parameters t."""
    elem = space.mesh.boundary[e]
    t = np.asarray(t, dtype=float)
    return (1.0 - t) * u[elem.v0] + t * u[elem.v1]


def assemble_coupling_matrix(
    space_v: FieldSpace, space_q: MultiplierSpace, placement: Placement
) -> sp.csr_matrix:
    """Empirical coupling matrix B (independent of the observed data).

    Streams element by element; every site only touches the two hat
    functions of its element on each side, so B has at most three
    nonzeros per row and the work per site is a 2 x 2 outer product.
    """
    nq = space_q.ndof
    rows = np.empty(4 * nq)
    cols = np.empty(4 * nq)
    vals = np.empty(4 * nq)
    k = 0
    for e in range(nq):
        sl = placement.element_slice(e)
        if sl.stop == sl.start:
            continue
        t = placement.t[sl]
        a = placement.alpha[sl]
        q0, q1 = space_q.element_dofs(e)
        elem = space_q.mesh.boundary[e]
        w0 = 1.0 - t
        b00 = np.dot(a, w0 * w0)
        b01 = np.dot(a, w0 * t)
        b11 = np.dot(a, t * t)
        rows[k : k + 4] = (q0, q0, q1, q1)
        cols[k : k + 4] = (elem.v0, elem.v1, elem.v0, elem.v1)
        vals[k : k + 4] = (b00, b01, b01, b11)
        k += 4
    B = sp.coo_matrix((vals[:k], (rows[:k], cols[:k])), shape=(nq, space_v.ndof))
    return B.tocsr()


def assemble_data_vector(space_q: MultiplierSpace, obs: ObservationSet) -> np.ndarray:
    """Right-hand side G[k] = sum_i alpha_i psi_k(x_i) g_i."""
    nq = space_q.ndof
    G = np.zeros(nq)
    for e in range(nq):
        sl = obs.placement.element_slice(e)
        if sl.stop == sl.start:
            continue
        t = obs.t[sl]
        ag = obs.alpha[sl] * obs.g[sl]
        q0, q1 = space_q.element_dofs(e)
        G[q0] += np.dot(1.0 - t, ag)
        G[q1] += np.dot(t, ag)
    return G


def assemble_coupling(
    space_v: FieldSpace, space_q: MultiplierSpace, obs: ObservationSet
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Empirical coupling matrix B and data vector G for one observation set."""
    B = assemble_coupling_matrix(space_v, space_q, obs.placement)
    return B, assemble_data_vector(space_q, obs)


def trace_matrix(space_v: FieldSpace, space_q: MultiplierSpace) -> sp.csr_matrix:
    """Selection matrix T with (T u)_k = u[boundary vertex k]."""
    nq = space_q.ndof
    return sp.csr_matrix(
        (np.ones(nq), (np.arange(nq), space_q.vertex_ids)), shape=(nq, space_v.ndof)
    )


def boundary_mass(space_q: MultiplierSpace, power: int = 1) -> sp.csr_matrix:
    """Gram matrix sum_E h_E^power int_0^1 psi_a psi_b dt on Q_h dofs.

    power=1 gives the L2(Gamma) mass (one h_E from the parametrization
    speed); power=0 and power=2 are the Gram matrices of the 1/2 and
    -1/2 mesh-dependent norms.
    """
    nq = space_q.ndof
    rows, cols, vals = [], [], []
    for e in range(nq):
        h = space_q.mesh.boundary[e].length
        q0, q1 = space_q.element_dofs(e)
        c = h**power
        rows += [q0, q0, q1, q1]
        cols += [q0, q1, q0, q1]
        vals += [c / 3.0, c / 6.0, c / 6.0, c / 3.0]
    return sp.coo_matrix((vals, (rows, cols)), shape=(nq, nq)).tocsr()


def element_l2_sq(space_q: MultiplierSpace, values, e: int) -> float:
    """||v||^2_{L2(E)} by 3-point Gauss in the parameter.

    `values` is either a dof vector (P1 in t) or a callable t -> v(t)
    giving values along element e.
    """
    h = space_q.mesh.boundary[e].length
    if callable(values):
        v = np.asarray(values(_GAUSS_T), dtype=float)
    else:
        v = trace_like(space_q, np.asarray(values), e, _GAUSS_T)
    return float(h * np.dot(_GAUSS_W, v * v))


def trace_like(space_q: MultiplierSpace, mu: np.ndarray, e: int, t) -> np.ndarray:
    """Evaluate a multiplier dof vector on element e at parameters t."""
    q0, q1 = space_q.element_dofs(e)
    t = np.asarray(t, dtype=float)
    return (1.0 - t) * mu[q0] + t * mu[q1]


def mesh_dependent_norms(space_q: MultiplierSpace, values) -> tuple[float, float]:
    """(||v||_{1/2,h}, ||v||_{-1/2,h}) built from per-element L2 norms.

    The 1/2 norm weights each element by h_E^{-1}, the -1/2 norm by h_E.
    """
    up = down = 0.0
    for e in range(space_q.ndof):
        h = space_q.mesh.boundary[e].length
        l2 = element_l2_sq(space_q, values, e)
        up += l2 / h
        down += l2 * h
    return math.sqrt(up), math.sqrt(down)


def multiplier_at_sites(space_q: MultiplierSpace, mu: np.ndarray, placement: Placement) -> np.ndarray:
    """Values of a multiplier dof vector at every observation site."""
    out = np.empty(placement.n)
    for e in range(space_q.ndof):
        sl = placement.element_slice(e)
        if sl.stop > sl.start:
            out[sl] = trace_like(space_q, mu, e, placement.t[sl])
    return out


def vh_gram(space_v: FieldSpace, space_q: MultiplierSpace, A: sp.csr_matrix | None = None) -> sp.csr_matrix:
    """Gram matrix of the field norm ||grad v||^2 + ||tr v||^2_{1/2,h}."""
    if A is None:
        A = assemble_stiffness(space_v)
    T = trace_matrix(space_v, space_q)
    return (A + T.T @ boundary_mass(space_q, power=0) @ T).tocsr()


@dataclass
class SaddleSystem:
    """Blocks of the discrete saddle problem
    [[A, B^T], [B, 0]] [u, lam] = [F, G].

    The space references are optional; when present the solver can build
    its norm-based preconditioner from them.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    F: np.ndarray
    G: np.ndarray
    space_v: FieldSpace | None = None
    space_q: MultiplierSpace | None = None

    @property
    def n_field(self) -> int:
        return self.A.shape[0]

    @property
    def n_multiplier(self) -> int:
        return self.B.shape[0]


def build_saddle_system(
    space_v: FieldSpace, space_q: MultiplierSpace, f, obs: ObservationSet
) -> SaddleSystem:
    A = assemble_stiffness(space_v)
    F = assemble_load(space_v, f)
    B, G = assemble_coupling(space_v, space_q, obs)
    return SaddleSystem(A, B, F, G, space_v, space_q)


def export_matrix_market(matrix, path: str, comment: str = "") -> None:
    """Dump a sparse block for external inspection (MatrixMarket format)."""
    scipy.io.mmwrite(path, sp.coo_matrix(matrix), comment=comment)
