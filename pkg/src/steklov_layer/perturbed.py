"""Neumann problem with mass concentrated in the boundary strip.

``-Lap u = lam rho_eps u`` with natural boundary condition, where
``rho_eps`` equals ``eps`` in the bulk and a large constant in the strip of
width ``eps``, chosen so that the total mass is ``M``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eigensolve import EigenSet, smallest_eigenpairs
from .errors import ConfigError, TrackingError
from .fem import assemble_mass, assemble_stiffness
from .geometry import BoundaryCurve, strip_area, total_curvature
from .mesh import TriMesh, boundary_order, mesh_star_domain
from .steklov import boundary_length, fix_sign

__all__ = ["DensitySpec", "make_density", "density_weights", "solve_perturbed",
           "eigenvalue_curve", "CurveRow", "rho_tilde_expansion"]


@dataclass(frozen=True)
class DensitySpec:
    mass_M: float
    eps: float
    strip_value: float
    bulk_value: float
    rho_tilde: float
    strip_area: float
    domain_area: float

    def total_mass(self) -> float:
        return self.strip_value * self.strip_area + \
            self.bulk_value * (self.domain_area - self.strip_area)


def make_density(curve: BoundaryCurve, mass_M: float, eps: float) -> DensitySpec:
    """Strip and bulk values of the density for width ``eps`` and total mass ``M``."""
    if not 0 < eps < curve.max_eps:
        raise ConfigError(f"eps={eps} must lie in (0, max_eps={curve.max_eps:.6g})")
    if mass_M <= 0:
        raise ConfigError("mass_M must be positive")
    a_strip = strip_area(curve, eps)
    area = curve.area
    strip_value = (mass_M - eps * (area - a_strip)) / a_strip
    rho_tilde = eps * strip_value - eps * eps
    if rho_tilde <= 0:
        raise ConfigError(f"eps={eps} too large for M={mass_M}: rho_tilde={rho_tilde:.3g} <= 0")
    return DensitySpec(mass_M=float(mass_M), eps=float(eps), strip_value=float(strip_value),
                       bulk_value=float(eps), rho_tilde=float(rho_tilde),
                       strip_area=float(a_strip), domain_area=float(area))


def rho_tilde_expansion(curve: BoundaryCurve, mass_M: float, eps: float) -> float:
    """Two leading terms ``M/L + eps (K M / 2 - |Omega| L) / L^2`` of ``rho_tilde``."""
    L = curve.length
    return mass_M / L + eps * (0.5 * total_curvature(curve) * mass_M - curve.area * L) / L ** 2


def density_weights(mesh: TriMesh, dens: DensitySpec) -> np.ndarray:
    """Per-triangle density on a layer-conforming mesh.

    The strip value is recomputed from the discrete areas so that the
    discrete total mass is exactly ``M``.
    """
    if mesh.strip_flag is None or mesh.eps is None or \
            abs(mesh.eps - dens.eps) > 1e-12 * max(dens.eps, 1.0):
        raise ConfigError(f"mesh strip (eps={mesh.eps}) does not match density eps={dens.eps}")
    area = mesh.areas
    a_strip = area[mesh.strip_flag].sum()
    a_bulk = area[~mesh.strip_flag].sum()
    if a_strip <= 0:
        raise ConfigError("mesh has no strip triangles")
    strip_value = (dens.mass_M - dens.eps * a_bulk) / a_strip
    if strip_value <= 0:
        raise ConfigError("discrete strip density is not positive")
    return np.where(mesh.strip_flag, strip_value, dens.eps)


def solve_perturbed(mesh: TriMesh, curve: BoundaryCurve, dens: DensitySpec, k: int,
                    tol: float = 1e-11, matrices=None) -> EigenSet:
    """The ``k`` smallest eigenpairs, normalized by ``(L / M) int rho u^2 = 1``."""
    w = density_weights(mesh, dens)
    K = matrices["K"] if matrices else assemble_stiffness(mesh)
    Mr = assemble_mass(mesh, w)
    es = smallest_eigenpairs(K, Mr, k, tol=tol, pencil_id=f"neumann eps={dens.eps:g}")
    L = boundary_length(mesh)
    es.vectors = es.vectors * np.sqrt(dens.mass_M / L)
    order = boundary_order(mesh, curve)[0]
    for i in range(es.vectors.shape[1]):
        es.vectors[:, i] = fix_sign(es.vectors[:, i], mesh, curve, order)
    es.mass_matrix = Mr
    es.stiffness = K
    return es


@dataclass
class CurveRow:
    eps: float
    j: int
    lam: float
    mu: float
    index: int
    n_nodes: int


def _track(prev_val, cand_vals, cand_traces=None, prev_trace=None, gap_rel=1e-3):
    """Index of the candidate continuing the tracked branch.

    Nearest value wins; when the two nearest candidates are within
    ``gap_rel`` of each other the boundary-trace overlap decides.
    Candidates with equal values are one (multiple) eigenvalue, not a tie.
    """
    d = np.abs(np.asarray(cand_vals) - prev_val)
    order = np.argsort(d, kind="stable")
    best = int(order[0])
    if len(order) < 2:
        return best
    i0, i1 = int(order[0]), int(order[1])
    same = abs(cand_vals[i0] - cand_vals[i1]) <= 1e-9 * max(abs(prev_val), 1.0)
    if same:
        return best
    close = d[i1] - d[i0] < gap_rel * max(abs(prev_val), 1.0)
    if close and prev_trace is not None and cand_traces is not None:
        ov = [abs(prev_trace @ cand_traces[:, i]) /
              (np.linalg.norm(prev_trace) * np.linalg.norm(cand_traces[:, i])) for i in (i0, i1)]
        if abs(ov[0] - ov[1]) > 1e-9 and max(ov) > 0.5:
            return (i0, i1)[int(np.argmax(ov))]
    if abs(d[i1] - d[i0]) <= 1e-9 * max(abs(prev_val), 1.0):
        raise TrackingError(f"two eigenvalues equidistant from {prev_val:.12g}")
    return best


def eigenvalue_curve(curve: BoundaryCurve, mass_M: float, j: int, eps_list,
                     mesh_params: dict, mu: float | None = None, extra: int = 3):
    """Track ``lam_j(eps)`` over a descending ``eps_list``, one mesh per ``eps``.

    Every mesh shares the same boundary nodes, so boundary traces are
    directly comparable between consecutive ``eps``. ``mu`` seeds the
    tracking (defaults to the Steklov value on the first mesh).
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps_list must be strictly decreasing")
    from .steklov import solve_steklov
    rows = []
    prev_val, prev_trace = mu, None
    for e in eps_list:
        mesh = mesh_star_domain(curve, e, mesh_params["n_tangential"], mesh_params["n_layer"],
                                mesh_params.get("n_interior"))
        if j == 0:
            rows.append(CurveRow(e, 0, 0.0, 0.0, 0, mesh.n_nodes))
            continue
        order = boundary_order(mesh, curve)[0]
        if prev_val is None:
            st = solve_steklov(mesh, curve, mass_M, j + 2)[j]
            prev_val, prev_trace = st.mu, st.u[order]
        mu_ref = prev_val if not rows else rows[0].mu
        es = solve_perturbed(mesh, curve, make_density(curve, mass_M, e), j + 1 + extra)
        pick = _track(prev_val, es.values, es.vectors[order], prev_trace)
        lam = float(es.values[pick])
        rows.append(CurveRow(e, j, lam, float(mu_ref), pick, mesh.n_nodes))
        prev_val, prev_trace = lam, es.vectors[order, pick]
    return rows
