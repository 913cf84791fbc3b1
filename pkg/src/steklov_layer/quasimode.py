"""Quasimode residuals of the resolvent and the discrete Oleinik lemma.

For a symmetric operator ``A`` on a Hilbert space, ``||A u - eta u|| <= r``
with ``||u|| = 1`` forces an eigenvalue of ``A`` within ``r`` of ``eta``.
Here ``A`` is the resolvent ``(K + M_rho)^{-1} M_rho`` in the eps-inner
product and ``u`` is built from the Steklov data and the strip correctors.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import FirstOrderData, GeometryScalars, corrector, first_order_data
from .errors import ConfigError, FloorWarning
from .fitting import fit_slope
from .fem import assemble_boundary_mass, assemble_mass, assemble_stiffness
from .geometry import BoundaryCurve, strip_project_many
from .mesh import TriMesh, mesh_star_domain, node_strip_coords
from .perturbed import density_weights, make_density, solve_perturbed
from .steklov import solve_steklov

__all__ = ["OleinikResult", "check_oleinik", "QuasimodeReport", "QuasimodeStudy",
           "StripQuadrature", "quasimode_reports", "residual_order_study", "fit_slope"]


@dataclass
class OleinikResult:
    residual: float
    nearest_gap: float
    passed: bool
    nearest: float
    r_star: float | None = None
    eigvec_distance: float | None = None
    eigvec_bound: float | None = None


def check_oleinik(A_apply, spectrum, u, eta: float, inner=None, eigvecs=None,
                  tol: float = 1e-12) -> OleinikResult:
    """Residual ``||A u - eta u||`` and distance from ``eta`` to the spectrum.

    ``spectrum`` is an array of eigenvalues of ``A`` or an EigenSet (its
    resolvent values are used). With ``eigvecs`` (columns orthonormal in
    ``inner``, aligned with ``spectrum``) the eigenvector part of the lemma
    is checked too: with ``r* `` half the gap around the nearest
    eigenvalue and ``r < r*``, ``u`` lies within ``2 r / r*`` of a unit
    vector in the eigenspace of eigenvalues within ``r*`` of ``eta``.
    """
    if hasattr(spectrum, "thetas"):
        spectrum = spectrum.thetas
    spec = np.asarray(spectrum, dtype=float)
    ip = inner if inner is not None else (lambda a, b: float(np.dot(a, b)))
    u = np.asarray(u, dtype=float)
    r_vec = A_apply(u) - eta * u
    r = float(np.sqrt(max(ip(r_vec, r_vec), 0.0)))
    k = int(np.argmin(np.abs(spec - eta)))
    gap = float(abs(spec[k] - eta))
    out = OleinikResult(residual=r, nearest_gap=gap, passed=gap <= r + tol, nearest=float(spec[k]))
    if len(spec) > 1:
        others = np.delete(spec, k)
        r_star = 0.5 * float(np.min(np.abs(others - spec[k])))
        out.r_star = r_star
        if eigvecs is not None and r < r_star:
            sel = np.flatnonzero(np.abs(spec - eta) <= r_star)
            V = eigvecs[:, sel]
            coef = np.array([ip(V[:, i], u) for i in range(V.shape[1])])
            proj = V @ coef
            nrm = np.sqrt(max(ip(proj, proj), 0.0))
            if nrm > 0:
                d = u - proj / nrm
                out.eigvec_distance = float(np.sqrt(max(ip(d, d), 0.0)))
                out.eigvec_bound = 2.0 * r / r_star
    return out


# --------------------------------------------------------------------------
# high-order quadrature over the strip triangles
# --------------------------------------------------------------------------


def _triangle_rule(n: int):
    """Collapsed Gauss rule on the reference triangle (exact to degree 2n - 2)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    a, b = np.meshgrid(x, x, indexing="ij")
    wa, wb = np.meshgrid(w, w, indexing="ij")
    xi = a.ravel()
    eta = (b * (1.0 - a)).ravel()
    wt = (wa * wb * (1.0 - a)).ravel()
    bary = np.column_stack([1.0 - xi - eta, xi, eta])
    return bary, wt              # weights sum to 1/2


class StripQuadrature:
    """Quadrature points, weights and P1 data on the strip triangles of a mesh.

    ``coords="affine"`` interpolates the nodal arc length and depth inside
    each triangle, so ``xi = 0`` lies exactly on the boundary polygon and
    ``xi = 1`` on the inner ring; ``coords="exact"`` projects every
    quadrature point onto the curve.
    """

    def __init__(self, mesh: TriMesh, curve: BoundaryCurve, eps: float, n_gauss: int = 6,
                 coords: str = "affine"):
        if mesh.strip_flag is None:
            raise ConfigError("mesh has no strip classification")
        if coords not in ("affine", "exact"):
            raise ConfigError(f"unknown strip coordinates {coords!r}")
        self.mesh, self.curve, self.eps = mesh, curve, float(eps)
        tri_idx = np.flatnonzero(mesh.strip_flag)
        tris = mesh.tris[tri_idx]
        p = mesh.nodes[tris]                                   # (T, 3, 2)
        e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        area = 0.5 * (e[:, 2, 0] * (-e[:, 1, 1]) - e[:, 2, 1] * (-e[:, 1, 0]))
        grad = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2.0 * area)[:, None, None]
        bary, wt = _triangle_rule(n_gauss)
        self.tri_idx, self.tris, self.bary = tri_idx, tris, bary
        self.grad = grad                                       # (T, 3, 2)
        self.w = 2.0 * area[:, None] * wt[None, :]             # (T, Q)
        self.x = np.einsum("qi,tid->tqd", bary, p)
        L = curve.length
        if coords == "affine":
            s_n, d_n = node_strip_coords(mesh, curve)
            s = s_n[tris]
            # unwrap across the seam s = L ~ 0
            ref = s[:, :1]
            s = s + L * np.round((ref - s) / L)
            d = d_n[tris]
            self.s = bary @ s.T
            self.s = self.s.T                                  # (T, Q)
            self.t = (bary @ d.T).T
            self.grad_s = np.einsum("ti,tid->td", s, grad)[:, None, :].repeat(len(wt), 1)
            self.grad_t = np.einsum("ti,tid->td", d, grad)[:, None, :].repeat(len(wt), 1)
        else:
            flat = self.x.reshape(-1, 2)
            # slightly enlarged band so that chord points beyond the inner ring still project
            s, t = strip_project_many(curve, flat, min(eps * 1.5, curve.max_eps))
            s = s.reshape(self.w.shape)
            t = t.reshape(self.w.shape)
            kap = curve.kappa(s)
            g1 = curve.gamma(s.ravel(), 1).reshape(s.shape + (2,))
            nu = np.stack([g1[..., 1], -g1[..., 0]], axis=-1)
            self.s, self.t = s, t
            self.grad_s = g1 / (1.0 - t * kap)[..., None]
            self.grad_t = -nu
        self.s = np.mod(self.s, L)
        self.rho = None

    def functional(self, S, S_s, S_t, rho_tri):
        """Load vectors ``int grad S . grad phi_i``, ``int rho S phi_i`` and the two squared norms."""
        n = self.mesh.n_nodes
        gS = S_s[..., None] * self.grad_s + S_t[..., None] * self.grad_t   # (T, Q, 2)
        wq = self.w
        b_grad_loc = np.einsum("tq,tqd,tid->ti", wq, gS, self.grad)
        rho = rho_tri[self.tri_idx]
        b_mass_loc = rho[:, None] * np.einsum("tq,tq,qi->ti", wq, S, self.bary)
        b_grad = np.bincount(self.tris.ravel(), b_grad_loc.ravel(), minlength=n)
        b_mass = np.bincount(self.tris.ravel(), b_mass_loc.ravel(), minlength=n)
        ss_grad = float(np.sum(wq * np.einsum("tqd,tqd->tq", gS, gS)))
        ss_mass = float(np.sum(rho[:, None] * wq * S * S))
        return b_grad, b_mass, ss_grad, ss_mass


# --------------------------------------------------------------------------
# reports and studies
# --------------------------------------------------------------------------


@dataclass
class QuasimodeReport:
    eps: float
    order: int
    residual: float
    nearest_gap: float
    norm_dev: float
    discrete_residual: float
    passed: bool
    floor_flag: bool = False
    eta: float = 0.0
    norm_sq: float = 0.0
    eigvec_distance: float | None = None
    eigvec_bound: float | None = None


@dataclass
class QuasimodeStudy:
    order: int
    reports: list
    slope: float
    slope_half_width: float
    norm_slope: float
    norm_half_width: float
    floor: bool = False
    used: list = field(default_factory=list)


def _eval_strip(data: FirstOrderData, quad: StripQuadrature, eps: float, order: int):
    s, xi = quad.s, quad.t / eps
    v, vs, vx, _ = corrector(0, data).derivs(s, xi)
    S, S_s, S_t = eps * v, eps * vs, vx
    if order == 1:
        v1, v1s, v1x, _ = corrector(1, data).derivs(s, xi)
        S, S_s, S_t = S + eps * eps * v1, S_s + eps * eps * v1s, S_t + eps * v1x
    return S, S_s, S_t


def quasimode_reports(curve: BoundaryCurve, mass_M: float, j: int, eps: float,
                      mesh_params: dict, orders=(0, 1), disk_mode: bool = False,
                      coords: str = "affine", n_gauss: int = 6, extra: int = 4):
    """Both quasimode orders at one ``eps`` on one layer-conforming mesh.

    The residual is the dual norm of ``phi -> <A q - eta q, phi>_eps`` over
    the FEM space, evaluated on the closed-form quasimode (P1 Steklov data
    plus analytic strip correctors) by quadrature. The Oleinik check uses
    the nodal interpolant of the same quasimode, for which the discrete
    lemma applies verbatim.
    """
    mesh = mesh_star_domain(curve, eps, mesh_params["n_tangential"], mesh_params["n_layer"],
                            mesh_params.get("n_interior"))
    K = assemble_stiffness(mesh)
    mats = {"K": K, "M1": assemble_mass(mesh), "B": assemble_boundary_mass(mesh)}
    pair = solve_steklov(mesh, curve, mass_M, j + 2, disk_mode=disk_mode, matrices=mats)[j]
    geom = GeometryScalars.from_mesh(mesh, curve, mass_M)
    need_u1 = 1 in orders
    data = first_order_data(pair, mesh, curve, mass_M, with_u1=need_u1, matrices=mats, geom=geom)
    dens = make_density(curve, mass_M, eps)
    rho_tri = density_weights(mesh, dens)
    es = solve_perturbed(mesh, curve, dens, j + 1 + extra, matrices=mats)
    res = es.resolvent
    Mr = es.mass_matrix
    quad = StripQuadrature(mesh, curve, eps, n_gauss=n_gauss, coords=coords)
    L = pair.length
    out = {}
    for order in orders:
        lam_pred = data.mu + (eps * data.mu1 if order == 1 else 0.0)
        eta = 1.0 / (1.0 + lam_pred)
        P = pair.u + (eps * data.u1 if order == 1 else 0.0)
        S, S_s, S_t = _eval_strip(data, quad, eps, order)
        b_grad, b_mass, ss_grad, ss_mass = quad.functional(S, S_s, S_t, rho_tri)
        KP, MP = K @ P, Mr @ P
        ell = (1.0 - eta) * (MP + b_mass) - eta * (KP + b_grad)
        q_sq = float(P @ (KP + MP) + 2.0 * P @ (b_grad + b_mass) + ss_grad + ss_mass)
        z = res.solve(ell)
        residual = float(np.sqrt(max(ell @ z, 0.0) / q_sq))
        norm_dev = abs(q_sq - mass_M / L * (1.0 + lam_pred))
        # discrete quasimode: nodal interpolant
        qh = pair.u.copy()
        ext = eps * corrector(0, data).extension(mesh, eps)
        if order == 1:
            qh = qh + eps * data.u1 + eps * eps * corrector(1, data).extension(mesh, eps)
        qh = qh + ext
        qh = qh / np.sqrt(res.inner(qh, qh))
        Vn = es.vectors / np.sqrt(np.einsum("ij,ij->j", es.vectors, res.A @ es.vectors))
        ol = check_oleinik(res.apply, es.thetas, qh, eta, inner=res.inner, eigvecs=Vn)
        out[order] = QuasimodeReport(eps=float(eps), order=order, residual=residual,
                                     nearest_gap=ol.nearest_gap, norm_dev=float(norm_dev),
                                     discrete_residual=ol.residual, passed=ol.passed, eta=eta,
                                     norm_sq=q_sq, eigvec_distance=ol.eigvec_distance,
                                     eigvec_bound=ol.eigvec_bound)
    return out


def _monotone_prefix(values):
    """Number of leading points (eps descending) before the sequence stops decreasing."""
    n = 1
    while n < len(values) and values[n] < values[n - 1]:
        n += 1
    return n


def _study(order, reports):
    eps = [r.eps for r in reports]
    res = [r.residual for r in reports]
    nd = [r.norm_dev for r in reports]
    n_use = _monotone_prefix(res)
    floor = n_use < len(res)
    if floor:
        for r in reports[n_use:]:
            r.floor_flag = True
        warnings.warn(f"order-{order} residual stops decreasing after eps={eps[n_use - 1]:g}; "
                      f"slope fitted on {n_use} points", FloorWarning, stacklevel=3)
    slope, _, hw = fit_slope(eps[:n_use], res[:n_use]) if n_use >= 2 else (np.nan, 0.0, np.nan)
    nslope, _, nhw = fit_slope(eps, nd)
    return QuasimodeStudy(order=order, reports=reports, slope=slope, slope_half_width=hw,
                          norm_slope=nslope, norm_half_width=nhw, floor=floor,
                          used=eps[:n_use])


def residual_order_study(curve: BoundaryCurve, mass_M: float, j: int, order, eps_list,
                         mesh_params: dict, disk_mode: bool = False, coords: str = "affine"):
    """Residuals over ``eps_list`` with fitted log-log slopes.

    ``order`` may be 0, 1 or a tuple of both (the meshes and solves are then
    shared); the return value is a QuasimodeStudy or a dict of them.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 4 or max(eps_list) / min(eps_list) < 8 - 1e-12:
        raise ConfigError("eps_list needs at least 4 points spanning a factor 8")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps_list must be strictly decreasing")
    orders = tuple(order) if isinstance(order, (tuple, list)) else (order,)
    per = {o: [] for o in orders}
    for e in eps_list:
        reps = quasimode_reports(curve, mass_M, j, e, mesh_params, orders, disk_mode, coords)
        for o in orders:
            per[o].append(reps[o])
    studies = {o: _study(o, per[o]) for o in orders}
    return studies if isinstance(order, (tuple, list)) else studies[orders[0]]
