"""First-order asymptotics of ``lam_j(eps)`` and of its eigenfunctions.

Notation (all scalars refer to the domain Omega with boundary length L,
area |Omega|, total curvature K and total mass M): ``mu`` and ``u`` are a
Steklov eigenpair with ``int_boundary u^2 = 1``; ``mu1`` is the first-order
coefficient in ``lam(eps) = mu + eps mu1 + O(eps^2)``; ``u1`` solves the
auxiliary Robin-type problem below and ``w``, ``w1`` are the boundary-layer
profiles in the strip variables ``(s, xi)``, ``xi = depth / eps``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CompatibilityError, ContractError, DegeneracyError
from .fem import assemble_boundary_mass, assemble_boundary_weighted, assemble_mass, \
    assemble_stiffness
from .geometry import BoundaryCurve, total_curvature
from .mesh import TriMesh, boundary_order, node_strip_coords
from .steklov import SteklovIntegrals, SteklovPair, nodal_curvature

__all__ = [
    "GeometryScalars",
    "Mu1Result",
    "mu1_formula",
    "aux_boundary_coefficient",
    "aux_problem_data",
    "compatibility_lambda",
    "compatibility_lambda_exact",
    "AuxSolution",
    "solve_aux",
    "uj1_target",
    "Trace",
    "FirstOrderData",
    "CorrectorField",
    "corrector",
    "expansion_predict",
    "first_order_data",
]


@dataclass(frozen=True)
class GeometryScalars:
    area: float
    length: float
    K: float
    mass_M: float

    @classmethod
    def from_curve(cls, curve: BoundaryCurve, mass_M: float) -> "GeometryScalars":
        return cls(curve.area, curve.length, total_curvature(curve), float(mass_M))

    @classmethod
    def from_mesh(cls, mesh: TriMesh, curve: BoundaryCurve, mass_M: float) -> "GeometryScalars":
        """Discrete area and perimeter, matching the FEM pencils."""
        return cls(mesh.area, mesh.perimeter, total_curvature(curve), float(mass_M))


@dataclass(frozen=True)
class Mu1Result:
    value: float
    terms: dict


def mu1_formula(pair, integrals: SteklovIntegrals, geom: GeometryScalars) -> Mu1Result:
    """Closed-form first-order coefficient as a sum of five terms."""
    if abs(pair.boundary_norm - 1.0) > 1e-6:
        raise ContractError(f"eigenfunction not normalized on the boundary "
                            f"(norm {pair.boundary_norm:.8g})")
    mu = pair.mu
    A, L, K, M = geom.area, geom.length, geom.K, geom.mass_M
    terms = {
        "area": A * mu / M,
        "volume": -L * mu / M * integrals.vol_int,
        "layer": 2.0 * M * mu * mu / (3.0 * L),
        "curvature": 0.5 * mu * integrals.bnd_curv_int,
        "turning": -K * mu / (2.0 * L),
    }
    return Mu1Result(value=float(sum(terms.values())), terms=terms)


def uj1_target(mu: float, mu1: float, geom: GeometryScalars) -> float:
    """Prescribed ``int_boundary u1 u``: ``mu1 / (2 mu) + M mu / (3 L)``."""
    return mu1 / (2.0 * mu) + geom.mass_M * mu / (3.0 * geom.length)


def aux_boundary_coefficient(mu: float, kappa, geom: GeometryScalars):
    """``c`` with ``g1 = c u`` in the auxiliary boundary condition."""
    A, L, K, M = geom.area, geom.length, geom.K, geom.mass_M
    kappa = np.asarray(kappa, dtype=float)
    return M * mu / (2 * L * L) * (K - L * kappa) - 2 * M * M * mu * mu / (3 * L * L) - A * mu / L


def aux_problem_data(pair: SteklovPair, mesh: TriMesh, curve: BoundaryCurve,
                     geom: GeometryScalars):
    """Nodal data ``(f, g1, g2)`` of the auxiliary problem; ``g1, g2`` live on boundary nodes."""
    kappa = nodal_curvature(mesh, curve)
    bmask = np.zeros(mesh.n_nodes, dtype=bool)
    bmask[mesh.boundary_nodes] = True
    c = np.where(bmask, aux_boundary_coefficient(pair.mu, kappa, geom), 0.0)
    f = pair.mu * pair.u
    g1 = np.where(bmask, c * pair.u, 0.0)
    g2 = np.where(bmask, geom.mass_M / geom.length * pair.u, 0.0)
    return f, g1, g2


def compatibility_lambda(f, g1, g2, pair: SteklovPair, mesh: TriMesh, matrices=None) -> float:
    """Solvability constant ``-(int f u + int_b g1 u) / int_b g2 u`` on P1 data."""
    M1 = matrices["M1"] if matrices else assemble_mass(mesh)
    B = matrices["B"] if matrices else assemble_boundary_mass(mesh)
    u = pair.u
    den = float(u @ (B @ g2))
    if abs(den) < 1e-12:
        raise CompatibilityError("int g2 u vanishes; the constant is undefined")
    return -(float(u @ (M1 @ f)) + float(u @ (B @ g1))) / den


def compatibility_lambda_exact(f: Callable, g1: Callable, g2: Callable, u: Callable,
                               u_trace: Callable, curve: BoundaryCurve,
                               n_boundary: int = 4096, n_t: int = 512, n_r: int = 48) -> float:
    """Same constant for data given as functions, by spectral quadrature.

    ``f(x)`` and ``u(x)`` take an ``(n, 2)`` array of points; ``g1(s)``,
    ``g2(s)`` and ``u_trace(s)`` take arc lengths.
    """
    pts, wts = curve.domain_quad(n_t, n_r)
    s, ws = curve.boundary_quad(n_boundary)
    ub = u_trace(s)
    den = float(np.sum(ws * g2(s) * ub))
    if abs(den) < 1e-12:
        raise CompatibilityError("int g2 u vanishes; the constant is undefined")
    num = float(np.sum(wts * f(pts) * u(pts))) + float(np.sum(ws * g1(s) * ub))
    return -num / den


@dataclass
class AuxSolution:
    u1: np.ndarray
    lam_discrete: float
    border_multipliers: np.ndarray
    weak_residual: float
    target: float


def solve_aux(pair: SteklovPair, mesh: TriMesh, curve: BoundaryCurve, geom: GeometryScalars,
              mu1: float, matrices=None, compat_tol: float = 1e-6) -> AuxSolution:
    """Solve the singular auxiliary problem by bordering with the kernel constraint.

    ``(K - (M mu / L) B) x = F`` is augmented with ``(B u)^T x = 0`` (and the
    partner vector of a disk-mode double eigenvalue), then ``alpha u`` is
    added so that ``int_b u1 u`` takes its prescribed value.
    """
    if not pair.simple_flag and pair.partner is None:
        raise DegeneracyError(f"mu={pair.mu:.12g} is not simple and has no disk-mode partner")
    K = matrices["K"] if matrices else assemble_stiffness(mesh)
    M1 = matrices["M1"] if matrices else assemble_mass(mesh)
    B = matrices["B"] if matrices else assemble_boundary_mass(mesh)
    M, L, mu, u = geom.mass_M, pair.length, pair.mu, pair.u
    kappa = nodal_curvature(mesh, curve)
    bmask = np.zeros(mesh.n_nodes, dtype=bool)
    bmask[mesh.boundary_nodes] = True
    c = np.where(bmask, aux_boundary_coefficient(mu, kappa, geom), 0.0)
    Bc = assemble_boundary_weighted(mesh, c)
    F0 = mu * (M1 @ u) + Bc @ u
    G2 = (M / L) * (B @ u)
    lam_h = -float(u @ F0) / float(u @ G2)
    if abs(lam_h - mu1) > compat_tol * max(1.0, abs(mu1)):
        raise CompatibilityError(f"discrete compatibility constant {lam_h:.12g} differs from "
                                 f"mu1={mu1:.12g}")
    F = F0 + mu1 * G2
    S = (K - (M * mu / L) * B).tocsc()
    cons = [B @ u]
    if pair.partner is not None:
        cons.append(B @ pair.partner)
    C = np.column_stack(cons)
    nc = C.shape[1]
    big = sp.bmat([[S, sp.csc_matrix(C)], [sp.csc_matrix(C.T), None]], format="csc")
    rhs = np.concatenate([F, np.zeros(nc)])
    try:
        lu = spla.splu(big)
        sol = lu.solve(rhs)
    except RuntimeError as exc:
        raise DegeneracyError(f"bordered auxiliary system is singular: {exc}") from None
    if not np.all(np.isfinite(sol)):
        raise DegeneracyError("bordered auxiliary system is singular")
    x, tau = sol[:-nc], sol[-nc:]
    res = big @ sol - rhs
    if np.linalg.norm(res) > 1e-6 * max(np.linalg.norm(rhs), 1e-300):
        raise DegeneracyError("bordered auxiliary solve is inaccurate; mu may not be simple")
    target = uj1_target(mu, mu1, geom)
    u1 = x + (target - float(u @ (B @ x))) * u
    weak = S @ u1 - F
    # the multiplier absorbs the (tiny) discrete incompatibility
    weak_res = float(np.linalg.norm(weak + C @ tau) / max(np.linalg.norm(F), 1e-300))
    return AuxSolution(u1=u1, lam_discrete=lam_h, border_multipliers=tau,
                       weak_residual=weak_res, target=target)


# --------------------------------------------------------------------------
# boundary traces and correctors
# --------------------------------------------------------------------------


class Trace:
    """A function of arc length with its derivative (periodic)."""

    def __init__(self, value: Callable, deriv: Callable, length: float):
        self.value = value
        self.deriv = deriv
        self.length = length

    def __call__(self, s):
        return self.value(np.mod(s, self.length))

    @classmethod
    def from_nodal(cls, field_values, mesh: TriMesh, curve: BoundaryCurve) -> "Trace":
        """Piecewise-linear interpolation of a nodal field along the boundary."""
        nodes, s = boundary_order(mesh, curve)
        L = curve.length
        sv = np.concatenate([s, [s[0] + L]])
        v = np.asarray(field_values, dtype=float)[nodes]
        vv = np.concatenate([v, v[:1]])
        slope = np.diff(vv) / np.diff(sv)

        def value(x):
            x = np.mod(np.asarray(x, dtype=float) - sv[0], L) + sv[0]
            i = np.clip(np.searchsorted(sv, x, side="right") - 1, 0, len(v) - 1)
            return vv[i] + slope[i] * (x - sv[i])

        def deriv(x):
            x = np.mod(np.asarray(x, dtype=float) - sv[0], L) + sv[0]
            i = np.clip(np.searchsorted(sv, x, side="right") - 1, 0, len(v) - 1)
            return slope[i]

        t = cls(value, deriv, L)
        t.knots = sv
        return t

    @classmethod
    def analytic(cls, value: Callable, deriv: Callable, length: float) -> "Trace":
        return cls(value, deriv, length)


@dataclass
class FirstOrderData:
    mu: float
    mu1: float
    geom: GeometryScalars
    curve: BoundaryCurve
    trace_u: Trace
    pair: SteklovPair | None = None
    u1: np.ndarray | None = None
    trace_u1: Trace | None = None
    integrals: SteklovIntegrals | None = None
    terms: dict = field(default_factory=dict)
    aux: AuxSolution | None = None


class CorrectorField:
    """Closed-form boundary-layer profile ``w`` (order 0) or ``w1`` (order 1).

    ``derivs(s, xi)`` returns ``(value, d_s, d_xi, d_xi_xi)``.
    """

    def __init__(self, order: int, data: FirstOrderData):
        if order not in (0, 1):
            raise ValueError("order must be 0 or 1")
        if order == 1 and data.trace_u1 is None:
            raise ValueError("order-1 corrector needs the u1 trace")
        self.order = order
        self.data = data

    def __call__(self, s, xi):
        return self.derivs(s, xi)[0]

    def derivs(self, s, xi):
        d = self.data
        g = d.geom
        M, L, K, A, mu = g.mass_M, g.length, g.K, g.area, d.mu
        s = np.asarray(s, dtype=float)
        xi = np.asarray(xi, dtype=float)
        U, dU = d.trace_u(s), d.trace_u.deriv(np.mod(s, d.trace_u.length))
        y = xi - 1.0
        if self.order == 0:
            a = -M * mu / (2.0 * L)
            return a * U * y ** 2, a * dU * y ** 2, 2 * a * U * y, 2 * a * U + 0 * y
        mu1 = d.mu1
        U1 = d.trace_u1(s)
        dU1 = d.trace_u1.deriv(np.mod(s, d.trace_u1.length))
        kap = d.curve.kappa(s)
        dkap = d.curve.dkappa(s)
        c3 = -M * mu / (6.0 * L)                       # times kappa U
        c4 = M * M * mu * mu / (24.0 * L * L)          # times U
        cq_u = A * mu / (2 * L) - M * mu1 / (2 * L) - K * M * mu / (4 * L * L)
        cq_u1 = -M * mu / (2 * L)
        p4 = (xi ** 2 + 2 * xi + 9) * y ** 2           # quartic factor
        dp4 = (2 * xi + 2) * y ** 2 + 2 * (xi ** 2 + 2 * xi + 9) * y
        ddp4 = 2 * y ** 2 + 4 * (2 * xi + 2) * y + 2 * (xi ** 2 + 2 * xi + 9)
        quad = cq_u * U + cq_u1 * U1
        dquad = cq_u * dU + cq_u1 * dU1
        val = c3 * kap * U * y ** 3 + c4 * U * p4 + quad * y ** 2
        ds = c3 * (dkap * U + kap * dU) * y ** 3 + c4 * dU * p4 + dquad * y ** 2
        dxi = 3 * c3 * kap * U * y ** 2 + c4 * U * dp4 + 2 * quad * y
        dxixi = 6 * c3 * kap * U * y + c4 * U * ddp4 + 2 * quad
        return val, ds, dxi, dxixi

    def extension(self, mesh: TriMesh, eps: float) -> np.ndarray:
        """Nodal values of ``w(s, depth/eps)`` in the strip, zero elsewhere."""
        s, depth = node_strip_coords(mesh, self.data.curve)
        out = np.zeros(mesh.n_nodes)
        inside = np.isfinite(depth) & (depth <= eps * (1 + 1e-12)) & (depth >= -1e-12)
        out[inside] = self(s[inside], depth[inside] / eps)
        return out


def corrector(order: int, data: FirstOrderData) -> CorrectorField:
    return CorrectorField(order, data)


def first_order_data(pair: SteklovPair, mesh: TriMesh, curve: BoundaryCurve, mass_M: float,
                     with_u1: bool = True, matrices=None, trace_u: Trace | None = None,
                     geom: GeometryScalars | None = None) -> FirstOrderData:
    """Assemble ``mu1`` (closed form), ``u1`` and traces from a FEM Steklov pair."""
    from .steklov import steklov_integrals
    geom = geom or GeometryScalars.from_mesh(mesh, curve, mass_M)
    ints = steklov_integrals(pair, mesh, curve, matrices)
    m1 = mu1_formula(pair, ints, geom)
    data = FirstOrderData(mu=pair.mu, mu1=m1.value, geom=geom, curve=curve,
                          trace_u=trace_u or Trace.from_nodal(pair.u, mesh, curve),
                          pair=pair, integrals=ints, terms=m1.terms)
    if with_u1:
        aux = solve_aux(pair, mesh, curve, geom, m1.value, matrices)
        data.u1 = aux.u1
        data.aux = aux
        data.trace_u1 = Trace.from_nodal(aux.u1, mesh, curve)
    return data


@dataclass
class Prediction:
    lambda_pred: float
    u_pred: np.ndarray | None


def expansion_predict(data: FirstOrderData, eps: float, mesh: TriMesh | None = None,
                      second: bool = False) -> Prediction:
    """``mu + eps mu1`` and, on ``mesh``, the field ``u + eps u1 + eps v [+ eps^2 v1]``."""
    lam = data.mu + eps * data.mu1
    if mesh is None or data.pair is None:
        return Prediction(lam, None)
    u = data.pair.u.copy()
    if eps == 0:
        return Prediction(lam, u)
    if data.u1 is not None:
        u = u + eps * data.u1
    u = u + eps * corrector(0, data).extension(mesh, eps)
    if second and data.u1 is not None:
        u = u + eps * eps * corrector(1, data).extension(mesh, eps)
    return Prediction(lam, u)
