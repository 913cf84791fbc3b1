import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

from steklov_layer.errors import ConfigError, FloorWarning
from steklov_layer.fem import assemble_mass, assemble_stiffness
from steklov_layer.mesh import mesh_star_domain, node_strip_coords
from steklov_layer.quasimode import (QuasimodeReport, StripQuadrature, _study, _triangle_rule,
                                     check_oleinik, quasimode_reports, residual_order_study)

A2 = np.diag([0.5, 0.25])


def random_contraction_trial(rng, n=50):
    """One Oleinik trial on a random symmetric PSD contraction; returns (passed, r, gap)."""
    X = rng.standard_normal((n, n))
    Q, _ = np.linalg.qr(X)
    lam = rng.uniform(0, 1, n)
    A = (Q * lam) @ Q.T
    u = rng.standard_normal(n)
    u /= np.linalg.norm(u)
    eta = u @ A @ u
    spec = np.linalg.eigvalsh(A)
    res = check_oleinik(lambda v: A @ v, spec, u, eta)
    brute = np.min(np.abs(spec - eta))
    return res.passed, res.residual, res.nearest_gap, brute


def test_exact_eigenvector():
    r = check_oleinik(lambda v: A2 @ v, [0.5, 0.25], np.array([1.0, 0.0]), 0.5)
    assert r.residual == 0.0 and r.nearest_gap == 0.0 and r.passed


def test_mixed_vector():
    u = np.array([1.0, 1.0]) / math.sqrt(2)
    r = check_oleinik(lambda v: A2 @ v, [0.5, 0.25], u, 0.375)
    assert r.residual == pytest.approx(0.125, abs=1e-15)
    assert math.hypot(0.125, -0.125) / math.sqrt(2) == pytest.approx(0.125)
    assert r.nearest_gap == pytest.approx(0.125, abs=1e-15)
    assert r.passed


def test_eigenvector_part(rng):
    A = np.diag([0.9, 0.5, 0.1])
    u = np.array([0.02, 1.0, -0.03])
    u /= np.linalg.norm(u)
    eta = u @ A @ u
    r = check_oleinik(lambda v: A @ v, np.diag(A), u, eta, eigvecs=np.eye(3))
    assert r.r_star == pytest.approx(0.2)
    assert r.residual < r.r_star
    assert r.eigvec_distance <= r.eigvec_bound


def test_random_trials(rng):
    for _ in range(200):
        passed, r, gap, brute = random_contraction_trial(rng)
        assert passed
        assert gap == pytest.approx(brute, abs=1e-15)


def test_triangle_rule_exactness():
    bary, w = _triangle_rule(6)
    x, y = bary[:, 1], bary[:, 2]
    for a in range(6):
        for b in range(11 - a):
            ref = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            assert np.sum(w * x ** a * y ** b) == pytest.approx(ref, rel=1e-12, abs=1e-16)


def test_strip_quadrature_reproduces_p1_matrices(ellipse):
    eps = 0.05
    mesh = mesh_star_domain(ellipse, eps, 96, 3)
    rho = np.where(mesh.strip_flag, 3.0, 0.5)
    q = StripQuadrature(mesh, ellipse, eps)
    # the depth is P1 in affine strip coordinates
    _, depth = node_strip_coords(mesh, ellipse)
    S = q.t
    b_grad, b_mass, ss_grad, ss_mass = q.functional(S, np.zeros_like(S), np.ones_like(S), rho)
    strip = replace(mesh, tris=mesh.tris[mesh.strip_flag])
    Ks = assemble_stiffness(strip)
    Ms = assemble_mass(strip, rho[mesh.strip_flag])
    d = np.where(np.isfinite(depth), depth, 0.0)
    used = np.unique(strip.tris)
    assert np.allclose(b_grad[used], (Ks @ d)[used], atol=1e-12)
    assert np.allclose(b_mass[used], (Ms @ d)[used], atol=1e-12)
    assert ss_grad == pytest.approx(d @ Ks @ d, rel=1e-12)
    assert ss_mass == pytest.approx(d @ Ms @ d, rel=1e-12)


def test_strip_quadrature_errors(disk):
    mesh = mesh_star_domain(disk, 0.05, 32, 1)
    with pytest.raises(ConfigError):
        StripQuadrature(mesh, disk, 0.05, coords="polar")
    with pytest.raises(ConfigError):
        StripQuadrature(replace(mesh, strip_flag=None), disk, 0.05)


def test_disk_reports_coarse(disk):
    reps = quasimode_reports(disk, math.pi, 1, 0.05, {"n_tangential": 160, "n_layer": 4},
                             disk_mode=True)
    r0, r1 = reps[0], reps[1]
    assert r0.passed and r1.passed
    assert r1.residual < r0.residual
    # norm identity limit (M / L)(1 + mu) = 1.5
    assert r0.norm_sq == pytest.approx(1.5, abs=0.1)
    assert r0.norm_dev < 0.1
    assert r1.eigvec_distance is None or r1.eigvec_distance <= r1.eigvec_bound


def _fake(eps, res):
    return [QuasimodeReport(eps=e, order=1, residual=r, nearest_gap=0.0, norm_dev=e,
                            discrete_residual=r, passed=True) for e, r in zip(eps, res)]


def test_floor_warning_and_prefix_fit():
    eps = [0.1, 0.05, 0.025, 0.0125]
    with pytest.warns(FloorWarning):
        st = _study(1, _fake(eps, [1e-2, 2.5e-3, 6.25e-4, 8e-4]))
    assert st.floor and st.used == eps[:3]
    assert st.slope == pytest.approx(2.0, abs=1e-12)
    assert st.reports[-1].floor_flag
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        st = _study(1, _fake(eps, [e ** 2 for e in eps]))
    assert not st.floor and st.slope == pytest.approx(2.0, abs=1e-12)


def test_study_validates_eps(disk):
    mp = {"n_tangential": 32, "n_layer": 1}
    with pytest.raises(ConfigError):
        residual_order_study(disk, math.pi, 1, 0, [0.1, 0.05, 0.025], mp)
    with pytest.raises(ConfigError):
        residual_order_study(disk, math.pi, 1, 0, [0.1, 0.05, 0.04, 0.03], mp)
    with pytest.raises(ConfigError):
        residual_order_study(disk, math.pi, 1, 0, [0.0125, 0.025, 0.05, 0.1], mp)


@pytest.fixture(scope="module")
def wide_window_disk(disk):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FloorWarning)
        return residual_order_study(disk, math.pi, 1, (0, 1), [0.2, 0.1, 0.05, 0.025],
                                    {"n_tangential": 640, "n_layer": 4}, disk_mode=True)


@pytest.mark.slow
def test_wide_window_order0_slope(wide_window_disk):
    assert wide_window_disk[0].slope == pytest.approx(1.0, abs=0.15)


@pytest.mark.slow
def test_wide_window_order1_slope(wide_window_disk):
    assert wide_window_disk[1].slope == pytest.approx(2.0, abs=0.2)


@pytest.mark.slow
def test_wide_window_norm_identity(wide_window_disk):
    # limit (M / L)(1 + mu) = 0.5 * 3 on the unit disk with M = pi
    reps = wide_window_disk[0].reports
    dev = [abs(r.norm_sq - 1.5) for r in reps]
    slope = np.polyfit(np.log([r.eps for r in reps]), np.log(dev), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.15)
    assert all(r.passed for st in wide_window_disk.values() for r in st.reports)
