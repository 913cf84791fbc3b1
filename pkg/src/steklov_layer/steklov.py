"""Limit Steklov problem ``-Lap u = 0``, ``d_nu u = mu (M / L) u`` on the boundary."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eigensolve import smallest_eigenpairs
from .errors import ConfigError
from .fem import assemble_boundary_mass, assemble_boundary_weighted, assemble_mass, \
    assemble_stiffness
from .geometry import BoundaryCurve
from .mesh import TriMesh, boundary_order

__all__ = ["SteklovPair", "SteklovIntegrals", "solve_steklov", "steklov_integrals",
           "fix_sign", "boundary_length"]


@dataclass
class SteklovPair:
    index: int
    mu: float
    u: np.ndarray
    boundary_norm: float
    simple_flag: bool
    gap: float
    mass_M: float
    length: float
    # second basis vector of a double eigenvalue (disk mode only)
    partner: np.ndarray | None = None
    symmetry: str | None = None


@dataclass(frozen=True)
class SteklovIntegrals:
    vol_int: float
    bnd_curv_int: float


def boundary_length(mesh: TriMesh) -> float:
    """Perimeter of the discrete boundary; used consistently in all discrete pencils."""
    return mesh.perimeter


def fix_sign(u, mesh: TriMesh, curve: BoundaryCurve, order=None):
    """Flip ``u`` so the first boundary node (by arc length) with ``|u| > 0.1 max|u|`` is positive."""
    nodes = order if order is not None else boundary_order(mesh, curve)[0]
    vals = u[nodes]
    big = np.abs(vals) > 0.1 * np.abs(vals).max()
    if big.any() and vals[np.argmax(big)] < 0:
        return -u
    return u


def solve_steklov(mesh: TriMesh, curve: BoundaryCurve, mass_M: float, k: int,
                  gap_tol: float = 1e-6, disk_mode: bool = False,
                  tol: float = 1e-11, matrices=None) -> list[SteklovPair]:
    """The ``k`` smallest Steklov pairs, normalized to unit boundary L2 norm.

    ``disk_mode`` resolves each double eigenvalue ``(2m-1, 2m)`` into its
    ``cos(m theta)`` member (index ``2m-1``) and ``sin(m theta)`` member
    (index ``2m``), keeping the other as ``partner``.
    """
    if mass_M <= 0:
        raise ConfigError("mass_M must be positive")
    nb = len(mesh.boundary_edges)
    if k > nb - 1:
        raise ConfigError(f"k={k} exceeds the {nb} boundary nodes")
    if matrices is None:
        K, B = assemble_stiffness(mesh), assemble_boundary_mass(mesh)
    else:
        K, B = matrices["K"], matrices["B"]
    L = boundary_length(mesh)
    scale = mass_M / L
    k_solve = k + 1 if (disk_mode and k % 2 == 0) else k
    es = smallest_eigenpairs(K, scale * B, k_solve, tol=tol, pencil_id="steklov")
    mu = es.values.copy()
    U = es.vectors * np.sqrt(scale)      # now u^T B u = 1
    order, s_b = boundary_order(mesh, curve)
    partners = [None] * k_solve
    sym = [None] * k_solve
    if disk_mode:
        theta = np.arctan2(mesh.nodes[:, 1], mesh.nodes[:, 0])
        for m in range(1, (k_solve - 1) // 2 + 1):
            a, b = 2 * m - 1, 2 * m
            g = np.cos(m * theta)
            c = np.array([U[:, a] @ (B @ g), U[:, b] @ (B @ g)])
            c /= np.linalg.norm(c)
            even = c[0] * U[:, a] + c[1] * U[:, b]
            odd = -c[1] * U[:, a] + c[0] * U[:, b]
            for idx, vec in ((a, even), (b, odd)):
                vec = vec / np.sqrt(vec @ (B @ vec))
                U[:, idx] = vec
                mu[idx] = (vec @ (K @ vec)) / (scale * (vec @ (B @ vec)))
            partners[a], partners[b] = U[:, b].copy(), U[:, a].copy()
            sym[a], sym[b] = "cos", "sin"
    pairs = []
    for i in range(k):
        u = U[:, i]
        u = fix_sign(u, mesh, curve, order)
        nbrs = [abs(mu[i] - mu[j]) for j in (i - 1, i + 1) if 0 <= j < k_solve]
        gap = min(nbrs) / max(abs(mu[i]), 1e-300) if nbrs else np.inf
        partner = partners[i]
        if partner is not None:
            partner = fix_sign(partner, mesh, curve, order)
        pairs.append(SteklovPair(index=i, mu=float(mu[i]), u=u,
                                 boundary_norm=float(u @ (B @ u)),
                                 simple_flag=bool(gap > gap_tol), gap=float(gap),
                                 mass_M=float(mass_M), length=L, partner=partner,
                                 symmetry=sym[i]))
    return pairs


def steklov_integrals(pair: SteklovPair, mesh: TriMesh, curve: BoundaryCurve,
                      matrices=None) -> SteklovIntegrals:
    """``int_Omega u^2`` (consistent mass) and ``int_boundary u^2 kappa`` (edge Simpson)."""
    M1 = matrices["M1"] if matrices else assemble_mass(mesh)
    u = pair.u
    kappa = nodal_curvature(mesh, curve)
    Bk = assemble_boundary_weighted(mesh, kappa)
    return SteklovIntegrals(vol_int=float(u @ (M1 @ u)), bnd_curv_int=float(u @ (Bk @ u)))


def nodal_curvature(mesh: TriMesh, curve: BoundaryCurve) -> np.ndarray:
    """Analytic curvature at boundary nodes (zero elsewhere)."""
    kappa = np.zeros(mesh.n_nodes)
    nodes, s = boundary_order(mesh, curve)
    kappa[nodes] = curve.kappa(s)
    return kappa
