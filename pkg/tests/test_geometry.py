import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import simpson
from steklov_layer.errors import ConfigError, GeometryError
from steklov_layer.geometry import (curve_from_spec, make_curve, strip_area, strip_project,
                                    total_curvature)


def test_disk_length_and_curvature(disk):
    assert disk.length == pytest.approx(2 * math.pi, abs=1e-12)
    s = np.linspace(0, disk.length, 37)
    assert np.allclose(disk.kappa(s), 1.0, atol=1e-12)
    assert np.allclose(disk.dkappa(s), 0.0, atol=1e-10)


def test_round_ellipse_matches_disk(disk):
    e = make_curve("ellipse", [1.0, 1.0])
    s = np.linspace(0, 2 * math.pi, 50, endpoint=False)
    assert abs(e.length - disk.length) < 1e-12
    assert np.allclose(e.gamma(s), disk.gamma(s), atol=1e-12)
    assert np.allclose(e.kappa(s), disk.kappa(s), atol=1e-12)


def test_ellipse_length_against_simpson(ellipse):
    a, b = 1.3, 0.8
    ref = simpson(lambda t: math.sqrt(a * a * math.sin(t) ** 2 + b * b * math.cos(t) ** 2),
                  0.0, 2 * math.pi, 1e-12)
    assert ellipse.length == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("name", ["disk", "ellipse", "trefoil"])
def test_total_curvature_is_full_turn(name, request):
    c = request.getfixturevalue(name)
    assert abs(total_curvature(c) - 2 * math.pi) < 1e-8


def test_unit_speed_by_finite_differences(ellipse, trefoil):
    h = 1e-5
    for c in (ellipse, trefoil):
        s = np.linspace(0, c.length, 200, endpoint=False)
        d = (c.gamma(s + h) - c.gamma(s - h)) / (2 * h)
        assert np.allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-9)


def test_clockwise_parametrization_is_flipped():
    c = make_curve("fourier", [1.0, 0.0, 0.0, 0.2])
    assert c.area > 0
    s = np.linspace(0, c.length, 64, endpoint=False)
    # outer normal points away from the origin for a star-shaped curve
    assert np.all((c.normal(s) * c.gamma(s)).sum(1) > 0)


def test_curve_errors():
    with pytest.raises(ConfigError):
        make_curve("square", [1.0])
    with pytest.raises(ConfigError):
        make_curve("ellipse", [1.0])
    with pytest.raises(GeometryError):
        make_curve("fourier", [0.5, 0.6])
    with pytest.raises(ConfigError):
        curve_from_spec({"kind": "ellipse", "a": 1.0})


def test_strip_project_disk_examples(disk):
    p = strip_project(disk, np.array([0.95, 0.0]), 0.1)
    assert p.s == pytest.approx(0.0, abs=1e-12) or p.s == pytest.approx(disk.length, abs=1e-12)
    assert p.t == pytest.approx(0.05, abs=1e-12)
    assert p.xi == pytest.approx(0.5, abs=1e-12)
    assert p.jac == pytest.approx(0.95, abs=1e-12)
    assert strip_project(disk, np.array([0.0, 0.0]), 0.1) is None


def test_strip_project_ellipse_inverts_forward_map(ellipse):
    x = ellipse.psi(0.7, 0.03)
    p = strip_project(ellipse, x, 0.05)
    assert p.s == pytest.approx(0.7, abs=1e-9)
    assert p.t == pytest.approx(0.03, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(s=st.floats(0.0, 6.0), frac=st.floats(0.0, 0.99))
def test_strip_round_trip(ellipse, s, frac):
    eps = 0.1
    x = ellipse.psi(s, frac * eps)
    p = strip_project(ellipse, x, eps)
    assert p is not None
    assert np.allclose(ellipse.psi(p.s, p.t), x, atol=1e-9)


def test_strip_area_examples(disk, ellipse):
    assert strip_area(disk, 0.1) == pytest.approx(0.19 * math.pi, rel=1e-10)
    assert strip_area(ellipse, 0.01) == pytest.approx(0.01 * ellipse.length - 0.00005 * 2 * math.pi,
                                                      rel=1e-10)
    for e in (1e-3, 1e-4, 1e-5):
        assert strip_area(ellipse, e) / e == pytest.approx(ellipse.length, rel=2 * e)


def _fd_jacobian(c, s, xi, eps, h=1e-5):
    ds = (c.psi_eps(s + h, xi, eps) - c.psi_eps(s - h, xi, eps)) / (2 * h)
    dx = (c.psi_eps(s, xi + h, eps) - c.psi_eps(s, xi - h, eps)) / (2 * h)
    return ds, dx


def test_strip_jacobian_determinant(ellipse, rng):
    eps = 0.2
    s = rng.uniform(0, ellipse.length, 1000)
    xi = rng.uniform(0, 1, 1000)
    ds, dx = _fd_jacobian(ellipse, s, xi, eps)
    det = np.abs(ds[:, 0] * dx[:, 1] - ds[:, 1] * dx[:, 0])
    assert np.max(np.abs(det - eps * (1 - eps * xi * ellipse.kappa(s)))) < 1e-7


def test_gradient_identity_in_strip_variables(trefoil, rng):
    # grad u . grad v = u_s v_s / (1 - eps xi kappa)^2 + u_xi v_xi / eps^2
    def u(p):
        return np.sin(p[..., 0]) * np.exp(0.5 * p[..., 1])

    def grad_u(p):
        return np.stack([np.cos(p[..., 0]) * np.exp(0.5 * p[..., 1]),
                         0.5 * np.sin(p[..., 0]) * np.exp(0.5 * p[..., 1])], -1)

    def v(p):
        return p[..., 0] ** 2 * p[..., 1] + np.cos(p[..., 1])

    def grad_v(p):
        return np.stack([2 * p[..., 0] * p[..., 1], p[..., 0] ** 2 - np.sin(p[..., 1])], -1)

    eps, h = 0.15, 1e-5
    s = rng.uniform(0, trefoil.length, 1000)
    xi = rng.uniform(0, 1, 1000)
    p = trefoil.psi_eps(s, xi, eps)
    direct = (grad_u(p) * grad_v(p)).sum(-1)

    def partials(f):
        fs = (f(trefoil.psi_eps(s + h, xi, eps)) - f(trefoil.psi_eps(s - h, xi, eps))) / (2 * h)
        fx = (f(trefoil.psi_eps(s, xi + h, eps)) - f(trefoil.psi_eps(s, xi - h, eps))) / (2 * h)
        return fs, fx

    us, ux = partials(u)
    vs, vx = partials(v)
    jac = 1 - eps * xi * trefoil.kappa(s)
    chain = us * vs / jac ** 2 + ux * vx / eps ** 2
    assert np.max(np.abs(chain - direct)) < 1e-7
