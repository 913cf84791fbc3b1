"""P1 assembly of stiffness, weighted mass and boundary mass matrices."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, NumericsError, ShapeError
from .mesh import TriMesh

__all__ = [
    "assemble_stiffness",
    "assemble_mass",
    "assemble_boundary_mass",
    "assemble_boundary_weighted",
    "eps_inner",
    "eps_norm",
]


def _scatter(tris, local, n):
    k = tris.shape[1]
    rows = np.repeat(tris, k, axis=1).ravel()
    cols = np.tile(tris, (1, k)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def assemble_stiffness(mesh: TriMesh) -> sp.csr_matrix:
    """Stiffness matrix ``int grad(phi_i) . grad(phi_j)``."""
    p = mesh.nodes[mesh.tris]
    # edge opposite to vertex i, rotated: grad(phi_i) = rot(e_i) / (2 A)
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    area = 0.5 * (e[:, 2, 0] * (-e[:, 1, 1]) - e[:, 2, 1] * (-e[:, 1, 0]))
    if np.any(area <= 1e-300) or not np.all(np.isfinite(area)):
        raise NumericsError("degenerate triangle in stiffness assembly")
    local = np.einsum("tid,tjd->tij", e, e) / (4.0 * area)[:, None, None]
    return _scatter(mesh.tris, local, mesh.n_nodes)


_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def assemble_mass(mesh: TriMesh, weight=None) -> sp.csr_matrix:
    """Consistent mass ``int w phi_i phi_j`` with element-constant weight ``w``."""
    area = mesh.areas
    if weight is None:
        weight = np.ones(len(area))
    weight = np.broadcast_to(np.asarray(weight, dtype=float), area.shape)
    if np.any(weight <= 0):
        raise ConfigError("mass weights must be positive")
    local = (weight * area)[:, None, None] * _MASS_REF
    return _scatter(mesh.tris, local, mesh.n_nodes)


def assemble_boundary_mass(mesh: TriMesh) -> sp.csr_matrix:
    """Boundary mass ``int_{boundary} phi_i phi_j`` on the polygonal boundary."""
    if len(mesh.boundary_edges) == 0:
        raise ConfigError("mesh has no boundary edges")
    return assemble_boundary_weighted(mesh, None)


def assemble_boundary_weighted(mesh: TriMesh, nodal_weight=None) -> sp.csr_matrix:
    """Boundary mass weighted by a linearly interpolated nodal function.

    With ``w`` linear on an edge of length ``h`` the exact element matrix is
    ``h/12 [[3 w1 + w2, w1 + w2], [w1 + w2, w1 + 3 w2]]``.
    """
    b = mesh.boundary_edges
    h = np.linalg.norm(mesh.nodes[b[:, 1]] - mesh.nodes[b[:, 0]], axis=1)
    if nodal_weight is None:
        w1 = w2 = np.ones(len(b))
    else:
        nodal_weight = np.asarray(nodal_weight, dtype=float)
        w1, w2 = nodal_weight[b[:, 0]], nodal_weight[b[:, 1]]
    local = np.empty((len(b), 2, 2))
    local[:, 0, 0] = 3 * w1 + w2
    local[:, 1, 1] = w1 + 3 * w2
    local[:, 0, 1] = local[:, 1, 0] = w1 + w2
    local *= (h / 12.0)[:, None, None]
    return _scatter(b, local, mesh.n_nodes)


def eps_inner(u, v, K, M_rho) -> float:
    """``<u, v>_eps = u^T K v + u^T M_rho v``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = K.shape[0]
    if u.shape != (n,) or v.shape != (n,) or M_rho.shape != K.shape:
        raise ShapeError(f"dimension mismatch: {u.shape}, {v.shape}, matrix {K.shape}")
    return float(u @ (K @ v) + u @ (M_rho @ v))


def eps_norm(u, K, M_rho) -> float:
    return float(np.sqrt(max(eps_inner(u, u, K, M_rho), 0.0)))
