"""FEM convergence studies for the two-term expansion.

The eigenvalue error of a layer-conforming mesh is dominated by the
resolution across the strip and behaves like ``C eps / n_layer^2``, which
swamps the ``eps^2`` remainder. Each ``lam_j(eps)`` is therefore computed
at ``n_layer`` and ``2 n_layer`` with the same tangential nodes and
extrapolated in ``n_layer``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .asymptotics import corrector, first_order_data
from .fem import assemble_boundary_mass, assemble_mass, assemble_stiffness
from .fitting import FitResult, fit_slope, fit_two_term
from .geometry import BoundaryCurve
from .mesh import boundary_order, mesh_star_domain
from .perturbed import _track, make_density, solve_perturbed
from .quasimode import check_oleinik
from .steklov import solve_steklov

__all__ = ["ExpansionRow", "ExpansionReport", "fem_expansion", "oracle_expansion",
           "EigenfunctionRow", "eigenfunction_study"]


@dataclass
class ExpansionRow:
    eps: float
    lam: float
    mu: float
    mu1: float
    predicted: float
    remainder: float
    lam_coarse: float = float("nan")
    lam_fine: float = float("nan")
    n_nodes: int = 0
    oleinik_pass: bool | None = None
    oleinik_residual: float = float("nan")
    oleinik_gap: float = float("nan")


@dataclass
class ExpansionReport:
    rows: list
    fit: FitResult | None
    meta: dict = field(default_factory=dict)


def _mats(mesh):
    return {"K": assemble_stiffness(mesh), "M1": assemble_mass(mesh),
            "B": assemble_boundary_mass(mesh)}


def _pick(es, mesh, curve, pair, j):
    order = boundary_order(mesh, curve)[0]
    return _track(pair.mu, es.values, es.vectors[order], pair.u[order])


def fem_expansion(curve: BoundaryCurve, mass_M: float, j: int, eps_list, mesh_params: dict,
                  disk_mode: bool = False, extra: int = 3, oleinik: bool = True) -> ExpansionReport:
    """Rows ``(eps, lam, mu, mu1, predicted, remainder)`` with ``lam`` extrapolated in ``n_layer``.

    ``mu`` and ``mu1`` are computed on both meshes of each ``eps`` and
    combined like ``lam``.
    """
    n_t, n_l = mesh_params["n_tangential"], mesh_params["n_layer"]
    n_int = mesh_params.get("n_interior")
    rows = []
    for e in eps_list:
        e = float(e)
        dens = make_density(curve, mass_M, e)
        lam, mus, mu1s = [], [], []
        for nl in (n_l, 2 * n_l):
            mesh = mesh_star_domain(curve, e, n_t, nl, n_int)
            mats = _mats(mesh)
            pair = solve_steklov(mesh, curve, mass_M, j + 2, disk_mode=disk_mode, matrices=mats)[j]
            es = solve_perturbed(mesh, curve, dens, j + 1 + extra, matrices=mats)
            k = _pick(es, mesh, curve, pair, j)
            lam.append(float(es.values[k]))
            data = first_order_data(pair, mesh, curve, mass_M, with_u1=oleinik and nl > n_l,
                                    matrices=mats)
            mus.append(data.mu)
            mu1s.append(data.mu1)
        # the bulk meshes differ between the two levels, so mu and mu1 get the same combination
        lam_r = (4.0 * lam[1] - lam[0]) / 3.0
        mu_r = (4.0 * mus[1] - mus[0]) / 3.0
        mu1_r = (4.0 * mu1s[1] - mu1s[0]) / 3.0
        pred = mu_r + e * mu1_r
        row = ExpansionRow(eps=e, lam=lam_r, mu=mu_r, mu1=mu1_r, predicted=pred,
                           remainder=lam_r - pred, lam_coarse=lam[0], lam_fine=lam[1],
                           n_nodes=mesh.n_nodes)
        if oleinik:
            res = es.resolvent
            q = pair.u + e * data.u1 + e * corrector(0, data).extension(mesh, e) \
                + e * e * corrector(1, data).extension(mesh, e)
            q = q / np.sqrt(res.inner(q, q))
            eta = 1.0 / (1.0 + data.mu + e * data.mu1)
            ol = check_oleinik(res.apply, es.thetas, q, eta, inner=res.inner)
            row.oleinik_pass, row.oleinik_residual, row.oleinik_gap = \
                ol.passed, ol.residual, ol.nearest_gap
        rows.append(row)
    # per-row mu and mu1 differ slightly between meshes, so fit the remainders directly
    rem = np.array([r.remainder for r in rows])
    fit = None
    if len(rows) >= 3 and (np.all(rem > 0) or np.all(rem < 0)):
        slope, icpt, hw = fit_slope([r.eps for r in rows], np.abs(rem))
        fit = FitResult(slope, icpt, hw, rem)
    return ExpansionReport(rows=rows, fit=fit,
                           meta={"n_tangential": n_t, "n_layer": [n_l, 2 * n_l],
                                 "disk_mode": disk_mode, "j": j, "mass_M": mass_M})


def oracle_expansion(k: int, mass_M: float, eps_list) -> ExpansionReport:
    """Two-term remainder of the exact disk eigenvalue ``lam_{k,1}(eps)``."""
    from .ball import disk_lambda, steklov_disk_mu, thm_ball_mu1
    mu, mu1 = steklov_disk_mu(k, mass_M), thm_ball_mu1(k, mass_M)
    rows = []
    for e in eps_list:
        lam = disk_lambda(k, 1, mass_M, float(e))
        pred = mu + float(e) * mu1
        rows.append(ExpansionRow(eps=float(e), lam=lam, mu=mu, mu1=mu1, predicted=pred,
                                 remainder=lam - pred))
    fit = fit_two_term([(r.eps, r.lam) for r in rows], mu, mu1)
    return ExpansionReport(rows=rows, fit=fit, meta={"k": k, "mass_M": mass_M, "oracle": True})


@dataclass
class EigenfunctionRow:
    eps: float
    v_l2: float
    remainder_l2: float
    remainder_l2_renorm: float
    first_order_l2: float


def _l2(M1, f):
    return float(np.sqrt(max(f @ (M1 @ f), 0.0)))


def eigenfunction_study(curve: BoundaryCurve, mass_M: float, j: int, eps_list,
                        mesh_params: dict, disk_mode: bool = False, extra: int = 3):
    """Sizes of ``eps v`` and of ``u_eps - u - eps u1 - eps v`` in L2 on each mesh.

    ``u_eps`` carries the normalization ``(L / M) int rho u^2 = 1`` and ``u``
    the boundary normalization. For a double eigenvalue (disk mode) the
    member of the eigenspace closest to the prediction is used. The
    distance after rescaling both fields to unit L2 norm is reported too.
    """
    n_t, n_l = mesh_params["n_tangential"], mesh_params["n_layer"]
    rows = []
    for e in eps_list:
        e = float(e)
        mesh = mesh_star_domain(curve, e, n_t, n_l, mesh_params.get("n_interior"))
        mats = _mats(mesh)
        M1 = mats["M1"]
        pair = solve_steklov(mesh, curve, mass_M, j + 2, disk_mode=disk_mode, matrices=mats)[j]
        data = first_order_data(pair, mesh, curve, mass_M, matrices=mats)
        es = solve_perturbed(mesh, curve, make_density(curve, mass_M, e), j + 1 + extra,
                             matrices=mats)
        k = _pick(es, mesh, curve, pair, j)
        v = corrector(0, data).extension(mesh, e)
        pred = pair.u + e * data.u1 + e * v
        Mr = es.mass_matrix
        sel = [i for i in range(len(es.values))
               if abs(es.values[i] - es.values[k]) <= 1e-6 * max(abs(es.values[k]), 1.0)]
        V = es.vectors[:, sel]
        if V.shape[1] > 1:
            # best member of the eigenspace, then the (L/M) rho-normalization
            c = np.linalg.lstsq(V.T @ (Mr @ V), V.T @ (Mr @ pred), rcond=None)[0]
            u_e = V @ c
            u_e *= np.sqrt(mass_M / pair.length / float(u_e @ (Mr @ u_e)))
        else:
            u_e = V[:, 0]
        if u_e @ (M1 @ pred) < 0:
            u_e = -u_e
        r = u_e - pred
        a = u_e / _l2(M1, u_e)
        b = pred / _l2(M1, pred)
        rows.append(EigenfunctionRow(eps=e, v_l2=_l2(M1, e * v) / e, remainder_l2=_l2(M1, r),
                                     remainder_l2_renorm=_l2(M1, a - b),
                                     first_order_l2=_l2(M1, u_e - pair.u)))
    eps = [r.eps for r in rows]
    slopes = {
        "v": fit_slope(eps, [r.v_l2 for r in rows])[::2],
        "remainder": fit_slope(eps, [r.remainder_l2 for r in rows])[::2],
        "remainder_renorm": fit_slope(eps, [r.remainder_l2_renorm for r in rows])[::2],
    }
    return rows, slopes
