"""Log-log slope fits for convergence studies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FitError

__all__ = ["fit_slope", "FitResult", "fit_two_term", "observed_orders"]


def fit_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``.

    Returns ``(slope, intercept, half_width)`` with ``half_width`` twice the
    standard error of the slope (zero for two points).
    """
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    n = len(lx)
    if n < 2:
        raise FitError("need at least two points for a slope")
    A = np.column_stack([lx, np.ones(n)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    se = 0.0
    if n > 2:
        r = ly - A @ coef
        se = float(np.sqrt(float(r @ r) / (n - 2) / float(np.sum((lx - lx.mean()) ** 2))))
    return float(coef[0]), float(coef[1]), 2.0 * se


def observed_orders(h, err):
    """Pairwise orders ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``."""
    h, err = np.asarray(h, float), np.abs(np.asarray(err, float))
    return np.log(err[:-1] / err[1:]) / np.log(h[:-1] / h[1:])


@dataclass
class FitResult:
    slope: float
    intercept: float
    half_width: float
    remainders: np.ndarray


def fit_two_term(rows, mu: float, mu1: float, roundoff: float = 1e-12) -> FitResult:
    """Order of ``lam - mu - eps mu1`` in ``eps`` from ``(eps, lam)`` rows."""
    rows = [(float(e), float(l)) for e, l in rows]
    if len(rows) < 3:
        raise FitError("need at least 3 rows", {"n": len(rows)})
    eps = np.array([r[0] for r in rows])
    lam = np.array([r[1] for r in rows])
    rem = lam - mu - eps * mu1
    scale = np.maximum(np.abs(lam), 1.0)
    diag = {"eps": eps.tolist(), "remainder": rem.tolist()}
    if np.any(np.abs(rem) <= roundoff * scale):
        raise FitError("remainders are at round-off level", diag)
    if not (np.all(rem > 0) or np.all(rem < 0)):
        raise FitError("remainders change sign; the noise floor has been reached", diag)
    slope, icpt, hw = fit_slope(eps, np.abs(rem))
    return FitResult(slope, icpt, hw, rem)
