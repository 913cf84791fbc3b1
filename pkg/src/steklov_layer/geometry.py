"""Closed boundary curves, arc length, curvature and strip coordinates.

A :class:`BoundaryCurve` wraps an analytic periodic parametrization
``p(t)``, ``t in [0, P)``, normalized to counterclockwise orientation, and
exposes everything in terms of arc length ``s in [0, L)``:

* ``gamma(s)`` and its first two derivatives,
* the signed curvature ``kappa(s) = g1' g2'' - g2' g1''`` (``+1`` on the
  unit circle) and its derivative,
* the outer normal ``nu(s)``, the rotation of ``gamma'(s)`` by -90 degrees,
* the strip maps ``psi(s, t) = gamma(s) - t nu(s)`` and
  ``psi_eps(s, xi) = gamma(s) - eps xi nu(s)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .errors import ConfigError, GeometryError, NumericsError

__all__ = [
    "BoundaryCurve",
    "StripCoords",
    "make_curve",
    "curve_from_spec",
    "total_curvature",
    "strip_project",
    "strip_project_many",
    "strip_area",
    "closest_point",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)
_N_PANELS = 512
_N_SEED = 256
_SAFETY = 0.9


# --------------------------------------------------------------------------
# analytic parametrizations: derivs(t, n) -> array (len(t), 2)
# --------------------------------------------------------------------------

def _rot(t, n):
    # n-th derivative of (cos t, sin t)
    phase = t + 0.5 * math.pi * n
    return np.stack([np.cos(phase), np.sin(phase)], axis=-1)


def _disk(r: float) -> Callable:
    def derivs(t, n):
        return r * _rot(t, n)
    return derivs


def _ellipse(a: float, b: float) -> Callable:
    scale = np.array([a, b])

    def derivs(t, n):
        return scale * _rot(t, n)
    return derivs


def _fourier(r0: float, cos_c: Sequence[float], sin_c: Sequence[float]) -> Callable:
    ks = np.arange(1, max(len(cos_c), len(sin_c)) + 1, dtype=float)
    a = np.zeros(len(ks))
    b = np.zeros(len(ks))
    a[: len(cos_c)] = cos_c
    b[: len(sin_c)] = sin_c

    def radius(t, m):
        out = np.full(np.shape(t), r0 if m == 0 else 0.0)
        if len(ks):
            arg = np.multiply.outer(t, ks) + 0.5 * math.pi * m
            out = out + (ks ** m * (a * np.cos(arg) + b * np.sin(arg))).sum(axis=-1)
        return out

    def derivs(t, n):
        out = np.zeros(np.shape(t) + (2,))
        for m in range(n + 1):
            out += math.comb(n, m) * radius(t, m)[..., None] * _rot(t, n - m)
        return out
    return derivs


def _flipped(derivs: Callable, period: float) -> Callable:
    def flipped(t, n):
        return (-1) ** n * derivs(period - np.asarray(t), n)
    return flipped


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StripCoords:
    """Curvilinear coordinates of a point (or array of points) in the strip."""

    s: np.ndarray | float
    t: np.ndarray | float
    xi: np.ndarray | float
    jac: np.ndarray | float


class BoundaryCurve:
    """Counterclockwise arc-length parametrized closed C^3 curve.

    Parameters
    ----------
    kind : str
        Family name, used for reporting only.
    params : sequence of float
        Family parameters, kept for reporting and serialization.
    derivs : callable
        ``derivs(t, n)`` returns the n-th derivative (n = 0..3) of the raw
        parametrization at parameter values ``t``.
    period : float
        Parameter period ``P``.
    """

    def __init__(self, kind: str, params: Sequence[float], derivs: Callable,
                 period: float = 2 * math.pi):
        self.kind = kind
        self.params = tuple(float(p) for p in params)
        self.period = float(period)
        self._derivs = derivs
        self.orientation_flipped = False
        if self._signed_area_raw() < 0:
            self._derivs = _flipped(derivs, self.period)
            self.orientation_flipped = True
        self.orientation = True
        self._build_arclength_table()
        self._check_regular()

    # ----------------------------------------------------------- raw param
    def _p(self, t, n=0):
        return self._derivs(np.asarray(t, dtype=float), n)

    def _speed(self, t):
        return np.linalg.norm(self._p(t, 1), axis=-1)

    def _signed_area_raw(self) -> float:
        t = np.linspace(0.0, self.period, 2048, endpoint=False)
        p, dp = self._p(t), self._p(t, 1)
        return 0.5 * float(np.mean(p[:, 0] * dp[:, 1] - p[:, 1] * dp[:, 0])) * self.period

    def _build_arclength_table(self):
        edges = np.linspace(0.0, self.period, _N_PANELS + 1)
        half = 0.5 * np.diff(edges)
        mids = 0.5 * (edges[1:] + edges[:-1])
        nodes = mids[:, None] + half[:, None] * _GL_X[None, :]
        panel = (self._speed(nodes) * _GL_W).sum(axis=1) * half
        s = np.concatenate([[0.0], np.cumsum(panel)])
        self._t_grid = edges
        self._s_grid = s
        self.length = float(s[-1])
        self._t_of_s_guess = PchipInterpolator(s, edges)

    def _arclen_from_grid(self, t, i):
        # arc length from grid node i to parameter t (same panel or adjacent)
        a = self._t_grid[i]
        half = 0.5 * (t - a)
        mid = 0.5 * (t + a)
        pts = mid[:, None] + half[:, None] * _GL_X[None, :]
        return self._s_grid[i] + (self._speed(pts) * _GL_W).sum(axis=1) * half

    def _check_regular(self):
        t = np.linspace(0.0, self.period, 4096, endpoint=False)
        speed = self._speed(t)
        if not np.all(np.isfinite(speed)) or speed.min() < 1e-12 * max(speed.max(), 1.0):
            raise GeometryError("parametrization is singular (vanishing speed)")
        k = self._kappa_t(t)
        if not np.all(np.isfinite(k)) or np.abs(k).max() > 1e8:
            raise GeometryError("curvature is unbounded on the sampled boundary")
        pts = self._p(t[::8])
        from shapely.geometry import LinearRing
        if not LinearRing(pts).is_simple:
            raise GeometryError("boundary curve is not simple (self-intersecting)")

    # ----------------------------------------------------------- arc length
    def t_of_s(self, s):
        """Parameter value corresponding to arc length ``s`` (periodic)."""
        s = np.asarray(s, dtype=float)
        shape = s.shape
        s = np.mod(s.ravel(), self.length)
        t = self._t_of_s_guess(s)
        for _ in range(2):
            i = np.clip(np.searchsorted(self._t_grid, t) - 1, 0, _N_PANELS - 1)
            t = t - (self._arclen_from_grid(t, i) - s) / self._speed(t)
        return t.reshape(shape)

    def s_of_t(self, t):
        t = np.mod(np.asarray(t, dtype=float), self.period)
        shape = t.shape
        t = t.ravel()
        i = np.clip(np.searchsorted(self._t_grid, t) - 1, 0, _N_PANELS - 1)
        return self._arclen_from_grid(t, i).reshape(shape)

    # ---------------------------------------------------- arc-length frame
    def gamma(self, s, order: int = 0):
        """Arc-length parametrization and its derivatives (order 0, 1, 2)."""
        t = self.t_of_s(s)
        if order == 0:
            return self._p(t)
        d1 = self._p(t, 1)
        tangent = d1 / np.linalg.norm(d1, axis=-1)[..., None]
        if order == 1:
            return tangent
        if order == 2:
            k = self._kappa_t(t)[..., None]
            return k * np.stack([-tangent[..., 1], tangent[..., 0]], axis=-1)
        raise ValueError("order must be 0, 1 or 2")

    def _kappa_t(self, t):
        d1, d2 = self._p(t, 1), self._p(t, 2)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return cross / np.linalg.norm(d1, axis=-1) ** 3

    def kappa(self, s):
        """Signed curvature at arc length ``s``."""
        return self._kappa_t(self.t_of_s(s))

    def dkappa(self, s):
        """Derivative of the curvature with respect to arc length."""
        t = self.t_of_s(s)
        d1, d2, d3 = self._p(t, 1), self._p(t, 2), self._p(t, 3)
        speed = np.linalg.norm(d1, axis=-1)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        dcross = d1[..., 0] * d3[..., 1] - d1[..., 1] * d3[..., 0]
        dspeed = (d1 * d2).sum(axis=-1) / speed
        dk_dt = dcross / speed ** 3 - 3.0 * cross * dspeed / speed ** 4
        return dk_dt / speed

    def normal(self, s):
        """Outer unit normal."""
        tan = self.gamma(s, 1)
        return np.stack([tan[..., 1], -tan[..., 0]], axis=-1)

    def psi(self, s, t):
        """Point at normal depth ``t`` below ``gamma(s)``."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        return self.gamma(s) - t[..., None] * self.normal(s)

    def psi_eps(self, s, xi, eps):
        return self.psi(s, eps * np.asarray(xi, dtype=float))

    # ---------------------------------------------------------- scalars
    @property
    def sup_curvature(self) -> float:
        if not hasattr(self, "_sup_kappa"):
            t = np.linspace(0.0, self.period, 8192, endpoint=False)
            self._sup_kappa = float(np.abs(self._kappa_t(t)).max())
        return self._sup_kappa

    @property
    def max_eps(self) -> float:
        """Largest admissible strip width, ``0.9 / sup|kappa|``."""
        return _SAFETY / self.sup_curvature

    @property
    def area(self) -> float:
        """Enclosed area from the divergence theorem, ``1/2 * int x . nu``."""
        if not hasattr(self, "_area"):
            t = np.linspace(0.0, self.period, 4096, endpoint=False)
            p, dp = self._p(t), self._p(t, 1)
            self._area = 0.5 * float(np.mean(p[:, 0] * dp[:, 1] - p[:, 1] * dp[:, 0])) * self.period
        return self._area

    def boundary_quad(self, n: int = 2048):
        """Periodic trapezoid nodes ``s`` and weights on [0, L)."""
        s = np.linspace(0.0, self.length, n, endpoint=False)
        return s, np.full(n, self.length / n)

    def domain_quad(self, n_t: int = 512, n_r: int = 48):
        """Quadrature points and weights over the enclosed domain.

        Uses the star-shaped map ``(r, t) -> r p(t)`` with Jacobian
        ``r (p x p')``; all families in scope are star-shaped about 0.
        """
        t = np.linspace(0.0, self.period, n_t, endpoint=False)
        x, w = np.polynomial.legendre.leggauss(n_r)
        r = 0.5 * (x + 1.0)
        wr = 0.5 * w
        p, dp = self._p(t), self._p(t, 1)
        cross = p[:, 0] * dp[:, 1] - p[:, 1] * dp[:, 0]
        if np.any(cross <= 0):
            raise GeometryError("domain is not star-shaped with respect to the origin")
        pts = r[:, None, None] * p[None, :, :]
        wts = (r * wr)[:, None] * cross[None, :] * (self.period / n_t)
        return pts.reshape(-1, 2), wts.ravel()

    def to_spec(self) -> dict:
        if self.kind == "disk":
            return {"kind": "disk", "r": self.params[0]}
        if self.kind == "ellipse":
            return {"kind": "ellipse", "a": self.params[0], "b": self.params[1]}
        rest = self.params[1:]
        return {"kind": "fourier", "r0": self.params[0],
                "cos": list(rest[0::2]), "sin": list(rest[1::2])}

    def __repr__(self):
        return f"BoundaryCurve({self.kind}, {self.params}, length={self.length:.12g})"


def make_curve(kind: str, params: Sequence[float]) -> BoundaryCurve:
    """Instantiate a curve family.

    ``disk``: ``[r]``; ``ellipse``: ``[a, b]``; ``fourier``:
    ``[r0, a1, b1, a2, b2, ...]`` for the radius
    ``r(theta) = r0 + sum_k a_k cos(k theta) + b_k sin(k theta)``.
    """
    params = [float(p) for p in params]
    if kind == "disk":
        if len(params) != 1 or params[0] <= 0:
            raise ConfigError("disk needs one positive radius")
        return BoundaryCurve("disk", params, _disk(params[0]))
    if kind == "ellipse":
        if len(params) != 2 or min(params) <= 0:
            raise ConfigError("ellipse needs two positive semi-axes")
        return BoundaryCurve("ellipse", params, _ellipse(*params))
    if kind == "fourier":
        if not params:
            raise ConfigError("fourier needs at least r0")
        r0, rest = params[0], params[1:]
        if len(rest) % 2:
            rest = rest + [0.0]
        derivs = _fourier(r0, rest[0::2], rest[1::2])
        t = np.linspace(0.0, 2 * math.pi, 4096, endpoint=False)
        radius = np.linalg.norm(derivs(t, 0), axis=-1)
        if radius.min() <= 0:
            raise GeometryError("fourier radius must stay positive")
        return BoundaryCurve("fourier", [r0] + rest, derivs)
    raise ConfigError(f"unknown curve kind {kind!r}")


def curve_from_spec(spec: dict) -> BoundaryCurve:
    """Build a curve from the JSON grammar, e.g. ``{"kind": "ellipse", "a": 1.3, "b": 0.8}``."""
    try:
        kind = spec["kind"]
        if kind == "disk":
            return make_curve("disk", [spec.get("r", 1.0)])
        if kind == "ellipse":
            return make_curve("ellipse", [spec["a"], spec["b"]])
        if kind == "fourier":
            cos_c = list(spec.get("cos", []))
            sin_c = list(spec.get("sin", []))
            n = max(len(cos_c), len(sin_c))
            cos_c += [0.0] * (n - len(cos_c))
            sin_c += [0.0] * (n - len(sin_c))
            flat = [v for pair in zip(cos_c, sin_c) for v in pair]
            return make_curve("fourier", [spec.get("r0", 1.0)] + flat)
    except KeyError as exc:
        raise ConfigError(f"curve spec missing field {exc}") from None
    raise ConfigError(f"unknown curve kind {spec.get('kind')!r}")


def total_curvature(curve: BoundaryCurve) -> float:
    """``K = int_0^L kappa(s) ds`` by adaptive quadrature in the raw parameter."""
    def integrand(t):
        t = np.atleast_1d(t)
        return float((curve._kappa_t(t) * curve._speed(t))[0])

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(integrand, 0.0, curve.period, epsabs=1e-13,
                                    epsrel=1e-13, limit=400)
        except integrate.IntegrationWarning as exc:
            raise NumericsError(f"total curvature quadrature failed: {exc}") from None
    return val


def strip_area(curve: BoundaryCurve, eps: float) -> float:
    """Area of the width-``eps`` strip, ``eps L - eps^2 K / 2``."""
    if not 0 < eps < 1.0 / curve.sup_curvature:
        raise ConfigError(f"eps={eps} outside (0, 1/sup|kappa|)")
    return eps * curve.length - 0.5 * eps ** 2 * _cached_K(curve)


def _cached_K(curve: BoundaryCurve) -> float:
    if not hasattr(curve, "_K"):
        curve._K = total_curvature(curve)
    return curve._K


def strip_project_many(curve: BoundaryCurve, x, eps: float, chunk: int = 4096):
    """Vectorized :func:`strip_project`.

    Returns ``(s, t)`` arrays; entries for points at distance ``>= eps``
    from the boundary are NaN.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = len(x)
    s_out = np.full(n, np.nan)
    t_out = np.full(n, np.nan)
    seeds = np.linspace(0.0, curve.length, _N_SEED, endpoint=False)
    seed_pts = curve.gamma(seeds)
    spacing = curve.length / _N_SEED
    for lo in range(0, n, chunk):
        xs = x[lo:lo + chunk]
        d2 = ((xs[:, None, :] - seed_pts[None, :, :]) ** 2).sum(axis=-1)
        k = d2.argmin(axis=1)
        cand = np.sqrt(d2[np.arange(len(xs)), k]) < eps + spacing
        if not cand.any():
            continue
        idx = np.flatnonzero(cand)
        s = seeds[k[idx]]
        p = xs[idx]
        done = np.zeros(len(idx), dtype=bool)
        for _ in range(50):
            g = curve.gamma(s)
            g1 = curve.gamma(s, 1)
            g2 = curve.gamma(s, 2)
            diff = p - g
            f = (diff * g1).sum(axis=1)
            fp = -1.0 + (diff * g2).sum(axis=1)
            step = np.where(np.abs(fp) > 1e-14, f / np.where(fp == 0, 1.0, fp), 0.0)
            step = np.clip(step, -spacing, spacing)
            s = np.where(done, s, s - step)
            done |= np.abs(step) < 1e-14 * max(curve.length, 1.0)
            if done.all():
                break
        else:
            g = curve.gamma(s)
            bad = ~done & (np.linalg.norm(p - g, axis=1) < eps)
            if bad.any():
                raise GeometryError("nearest-point Newton iteration did not converge; "
                                    "eps may exceed the reach of the boundary")
        s = np.mod(s, curve.length)
        s = np.where(curve.length - s < 1e-12 * curve.length, 0.0, s)
        depth = ((curve.gamma(s) - p) * curve.normal(s)).sum(axis=1)
        if np.any(depth < -1e-9 * max(1.0, curve.length)):
            raise GeometryError("point lies outside the domain")
        depth = np.maximum(depth, 0.0)
        inside = depth < eps
        s_out[lo + idx[inside]] = s[inside]
        t_out[lo + idx[inside]] = depth[inside]
    return s_out, t_out


def closest_point(curve: BoundaryCurve, x):
    """Arc length of the nearest boundary point and signed depth (positive inside).

    Intended for points within a fraction of ``max_eps`` of the boundary,
    such as mesh boundary nodes.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    seeds = np.linspace(0.0, curve.length, 4 * _N_SEED, endpoint=False)
    g = curve.gamma(seeds)
    s = np.empty(len(x))
    for lo in range(0, len(x), 2048):
        xs = x[lo:lo + 2048]
        s[lo:lo + 2048] = seeds[((xs[:, None, :] - g[None]) ** 2).sum(-1).argmin(axis=1)]
    spacing = curve.length / len(seeds)
    for _ in range(50):
        diff = x - curve.gamma(s)
        f = (diff * curve.gamma(s, 1)).sum(1)
        fp = -1.0 + (diff * curve.gamma(s, 2)).sum(1)
        step = np.clip(f / fp, -spacing, spacing)
        s = s - step
        if np.abs(step).max() < 1e-14 * max(curve.length, 1.0):
            break
    else:
        raise GeometryError("closest-point iteration did not converge")
    s = np.mod(s, curve.length)
    s = np.where(curve.length - s < 1e-12 * curve.length, 0.0, s)
    depth = ((curve.gamma(s) - x) * curve.normal(s)).sum(1)
    return s, depth


def strip_project(curve: BoundaryCurve, x, eps: float) -> StripCoords | None:
    """Curvilinear coordinates of ``x`` in the strip of width ``eps``.

    Returns ``None`` when ``dist(x, boundary) >= eps``.
    """
    if not 0 < eps < 1.0 / curve.sup_curvature:
        raise ConfigError(f"eps={eps} outside (0, 1/sup|kappa|)")
    s, t = strip_project_many(curve, np.asarray(x, dtype=float)[None, :], eps)
    if np.isnan(s[0]):
        return None
    s0, t0 = float(s[0]), float(t[0])
    k = float(curve.kappa(s0))
    return StripCoords(s=s0, t=t0, xi=t0 / eps, jac=1.0 - t0 * k)
