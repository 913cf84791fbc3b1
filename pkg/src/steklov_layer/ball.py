"""Exact eigenvalues of the concentrated-mass problem on the unit disk.

Separating variables, ``u = R(r) cos(k theta)`` with ``R`` a multiple of
``J_k(sqrt(lam eps) r)`` in the bulk ``r < 1 - eps`` and a combination of
``J_k`` and ``Y_k`` at frequency ``sqrt(lam rho_strip)`` in the annulus,
where the Neumann condition at ``r = 1`` fixes the combination. Matching
value and slope at ``r = 1 - eps`` gives a scalar equation ``F(lam) = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import ConfigError, DomainError, RootError

__all__ = [
    "BesselValues",
    "bessel_jy",
    "disk_strip_density",
    "RadialProblem",
    "disk_lambda",
    "disk_branches",
    "thm_ball_mu1",
    "steklov_disk_mu",
    "richardson_limit",
    "derivative_at_zero",
    "ball_curves",
]


@dataclass(frozen=True)
class BesselValues:
    J: float
    Y: float
    Jp: float
    Yp: float


def bessel_jy(k: int, x: float) -> BesselValues:
    """``J_k``, ``Y_k`` and their derivatives at ``x > 0``."""
    if x <= 0 or not np.isfinite(x):
        raise DomainError(f"Bessel Y_k needs x > 0, got {x}")
    if k < 0 or int(k) != k:
        raise DomainError(f"order must be a non-negative integer, got {k}")
    return BesselValues(float(special.jv(k, x)), float(special.yv(k, x)),
                        float(special.jvp(k, x)), float(special.yvp(k, x)))


def disk_strip_density(mass_M: float, eps: float) -> float:
    """Strip value of the density on the unit disk: total mass ``M`` is preserved."""
    if not 0 < eps < 1:
        raise ConfigError(f"eps={eps} must lie in (0, 1) on the unit disk")
    inner = math.pi * (1 - eps) ** 2
    return (mass_M - eps * inner) / (math.pi - inner)


class RadialProblem:
    """The radial matching problem for angular index ``k``."""

    def __init__(self, k: int, mass_M: float, eps: float):
        if k < 0:
            raise ConfigError("k must be >= 0")
        self.k = int(k)
        self.mass_M = float(mass_M)
        self.eps = float(eps)
        self.rho_strip = disk_strip_density(mass_M, eps)
        self.rho_bulk = self.eps
        if self.rho_strip <= 0:
            raise ConfigError(f"strip density non-positive for M={mass_M}, eps={eps}")
        self.r0 = 1.0 - self.eps

    def F(self, lam):
        """Matching determinant; its positive roots are the eigenvalues."""
        lam = np.asarray(lam, dtype=float)
        k, r0 = self.k, self.r0
        a = np.sqrt(lam * self.rho_bulk)
        b = np.sqrt(lam * self.rho_strip)
        jb, yb = special.jvp(k, b), special.yvp(k, b)
        R = yb * special.jv(k, b * r0) - jb * special.yv(k, b * r0)
        dR = b * (yb * special.jvp(k, b * r0) - jb * special.yvp(k, b * r0))
        # scale by b to keep magnitudes moderate across the scan
        return (special.jv(k, a * r0) * dR - a * special.jvp(k, a * r0) * R) * b

    def _periods(self):
        # oscillation period in sqrt(lam) of the annulus and bulk factors
        p_strip = math.pi / (math.sqrt(self.rho_strip) * self.eps)
        p_bulk = math.pi / (math.sqrt(self.rho_bulk) * max(self.r0, 1e-12))
        return min(p_strip, p_bulk)

    def roots(self, count: int, x_max: float | None = None):
        """First ``count`` positive roots, bracketed on a uniform grid in ``sqrt(lam)``."""
        step = self._periods() / 40.0
        x_max = x_max if x_max is not None else 1e4 * self._periods()
        # near 0 the bulk factor behaves like lam^(k/2); start just above it
        x = max(step * 1e-3, 1e-8)
        found = []
        fx = float(self.F(x * x))
        while len(found) < count and x < x_max:
            xs = x + step * np.arange(1, 257)
            xs = xs[xs <= x_max]
            if xs.size == 0:
                break
            fs = self.F(xs * xs)
            prev_x, prev_f = x, fx
            for xn, fn in zip(xs, fs):
                if prev_f == 0.0:
                    found.append(prev_x * prev_x)
                elif np.sign(fn) != np.sign(prev_f):
                    r = optimize.brentq(lambda t: float(self.F(t * t)), prev_x, xn,
                                        xtol=1e-15, rtol=1e-15, maxiter=500)
                    found.append(r * r)
                if len(found) >= count:
                    break
                prev_x, prev_f = xn, fn
            x, fx = prev_x, prev_f
        if len(found) < count:
            raise RootError(f"only {len(found)} roots below sqrt(lam)={x_max:g}")
        return np.array(found[:count])


def disk_lambda(k: int, l: int, mass_M: float, eps: float) -> float:
    """``l``-th positive eigenvalue (l >= 1) of angular index ``k`` on the unit disk."""
    if l < 1:
        raise ConfigError("branch index l must be >= 1")
    return float(RadialProblem(k, mass_M, eps).roots(l)[-1])


def disk_branches(k: int, lmax: int, mass_M: float, eps: float) -> np.ndarray:
    return RadialProblem(k, mass_M, eps).roots(lmax)


def steklov_disk_mu(j: int, mass_M: float) -> float:
    """Steklov eigenvalue of angular index ``j`` on the unit disk, ``2 pi j / M``."""
    return 2.0 * math.pi * j / mass_M


def thm_ball_mu1(j: int, mass_M: float) -> float:
    """First-order coefficient on the unit disk, ``2 j mu / 3 + mu^2 / (2 (j + 1))``."""
    if j < 1:
        raise ConfigError("j must be >= 1")
    mu = steklov_disk_mu(j, mass_M)
    return 2.0 * j * mu / 3.0 + mu * mu / (2.0 * (j + 1))


def richardson_limit(h, values, orders=None) -> float:
    """Extrapolate ``values(h)`` to ``h = 0`` assuming errors in powers ``h^1, h^2, ...``.

    Uses Neville's polynomial extrapolation, which is Richardson's scheme
    for arbitrary ``h`` when ``orders`` are consecutive integers.
    """
    h = np.asarray(h, dtype=float)
    t = np.array(values, dtype=float)
    n = len(h)
    if orders is None:
        for m in range(1, n):
            t = (h[m:] * t[:-1] - h[:-m] * t[1:]) / (h[m:] - h[:-m])
        return float(t[0])
    # general exponents: least-squares fit of value = c0 + sum c_p h^p
    V = np.column_stack([np.ones(n)] + [h ** p for p in orders])
    coef, *_ = np.linalg.lstsq(V, t, rcond=None)
    return float(coef[0])


def derivative_at_zero(k: int, mass_M: float, eps_list=(0.02, 0.01, 0.005)) -> float:
    """Extrapolated ``d lam / d eps`` at 0 for the first branch of index ``k``."""
    mu = steklov_disk_mu(k, mass_M)
    eps = np.asarray(eps_list, dtype=float)
    q = np.array([(disk_lambda(k, 1, mass_M, e) - mu) / e for e in eps])
    return richardson_limit(eps, q)


def ball_curves(mass_M: float, kmax: int, lmax: int, eps_grid):
    """Rows ``(k, l, eps, lam)`` for ``1 <= k <= kmax``, ``1 <= l <= lmax``."""
    rows = []
    for k in range(1, kmax + 1):
        for e in eps_grid:
            lams = disk_branches(k, lmax, mass_M, float(e))
            for l, lam in enumerate(lams, start=1):
                rows.append((k, l, float(e), float(lam)))
    return rows
