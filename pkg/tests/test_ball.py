import math

import numpy as np
import pytest
from scipy import integrate, optimize

from steklov_layer.ball import (RadialProblem, bessel_jy, derivative_at_zero, disk_branches,
                                disk_lambda, disk_strip_density, richardson_limit,
                                steklov_disk_mu, thm_ball_mu1)
from steklov_layer.errors import ConfigError, DomainError, RootError

PI = math.pi


def series_j(k, x, terms=60):
    return sum((-1) ** m * (x / 2) ** (2 * m + k) / (math.factorial(m) * math.factorial(m + k))
               for m in range(terms))


def test_j1_at_one_against_series():
    ref = series_j(1, 1.0)
    assert ref == pytest.approx(0.4400505857449335, abs=1e-15)
    assert bessel_jy(1, 1.0).J == pytest.approx(ref, abs=1e-10)


def test_first_zero_of_j0():
    x = 2.4
    for _ in range(30):
        # J0' = -J1
        x += series_j(0, x) / series_j(1, x)
    assert x == pytest.approx(2.404825557695773, abs=1e-12)
    assert abs(bessel_jy(0, x).J) < 1e-9


def test_wronskian(rng):
    for x in rng.uniform(0.05, 100, 50):
        for k in (0, 1, 3, 6):
            b = bessel_jy(k, x)
            assert b.J * b.Yp - b.Jp * b.Y == pytest.approx(2 / (PI * x), rel=1e-9)


def test_bessel_domain():
    with pytest.raises(DomainError):
        bessel_jy(1, 0.0)
    with pytest.raises(DomainError):
        bessel_jy(-1, 1.0)


def shoot(k, M, eps, lam):
    """R'(1) of the regular radial solution, by numerical integration."""
    rs, rb = disk_strip_density(M, eps), eps
    r_start = 1e-6

    def rhs(r, y, rho):
        R, P = y        # P = r R'
        return [P / r, (k * k / r - lam * rho * r) * R]

    y0 = [r_start ** k, k * r_start ** k] if k else [1.0, 0.0]
    a = integrate.solve_ivp(rhs, (r_start, 1 - eps), y0, args=(rb,), rtol=1e-12, atol=1e-14)
    b = integrate.solve_ivp(rhs, (1 - eps, 1.0), a.y[:, -1], args=(rs,), rtol=1e-12, atol=1e-14)
    return b.y[1, -1]


@pytest.mark.parametrize("k,eps", [(1, 0.1), (2, 0.05), (0, 0.1)])
def test_first_root_against_shooting(k, eps):
    lam = disk_lambda(k, 1, PI, eps)
    lo, hi = 0.98 * lam, 1.02 * lam
    ref = optimize.brentq(lambda t: shoot(k, PI, eps, t), lo, hi, xtol=1e-13)
    assert lam == pytest.approx(ref, rel=1e-8)


def test_roots_are_zeros_of_matching_function():
    rp = RadialProblem(2, PI, 0.1)
    lams = rp.roots(3)
    scale = np.abs(rp.F(np.linspace(0.5 * lams[0], lams[-1], 200))).max()
    assert np.all(np.abs(rp.F(lams)) < 1e-9 * scale)
    assert np.all(np.diff(lams) > 0)


def test_axisymmetric_branch_ordering():
    b = disk_branches(0, 2, PI, 0.1)
    assert b[0] > 0 and b[1] > b[0]


def test_limit_and_slope_at_zero():
    eps = np.array([0.02, 0.01, 0.005, 0.0025])
    vals = [disk_lambda(1, 1, PI, e) for e in eps]
    assert richardson_limit(eps, vals) == pytest.approx(2.0, abs=1e-6)
    assert derivative_at_zero(1, PI) == pytest.approx(7 / 3, rel=1e-3)
    assert derivative_at_zero(2, PI) == pytest.approx(8.0, rel=1e-3)


def test_closed_forms():
    assert steklov_disk_mu(1, PI) == pytest.approx(2.0)
    assert thm_ball_mu1(1, PI) == pytest.approx(7 / 3, abs=1e-14)
    assert thm_ball_mu1(2, PI) == pytest.approx(8.0, abs=1e-14)
    with pytest.raises(ConfigError):
        thm_ball_mu1(0, PI)


def test_richardson_exact_polynomial():
    h = np.array([0.4, 0.2, 0.1, 0.05])
    assert richardson_limit(h, 3 + 2 * h - h ** 2 + 5 * h ** 3) == pytest.approx(3.0, abs=1e-12)
    assert richardson_limit(h, 1 + h ** 2, orders=[2]) == pytest.approx(1.0, abs=1e-12)


def test_strip_density():
    assert disk_strip_density(PI, 0.1) == pytest.approx(0.919 / 0.19, rel=1e-12)
    with pytest.raises(ConfigError):
        disk_strip_density(PI, 1.0)


def test_root_bracket_exhaustion():
    with pytest.raises(RootError):
        RadialProblem(1, PI, 0.1).roots(5, x_max=2.0)
    with pytest.raises(ConfigError):
        disk_lambda(1, 0, PI, 0.1)
