import math

import numpy as np
import pytest

from coulomb2d.diagnostics import (CauchyGrid, TestFunction, ZeroFunction, berezin_estimate,
                                   boundary_kernel, bulk_kernel, cell_average_inverse,
                                   erfc_edge, f_s_profile, kernel_mass, lagrange_identity_test,
                                   lagrange_log_abs, log_laplacian_fd, ref_profiles,
                                   ward_equation_residual, ward_stat, ward_test)
from coulomb2d.errors import SupportViolation
from coulomb2d.oracle import exact_r
from coulomb2d.potential import ginibre, q_eff
from coulomb2d.sampler import run_chains


def test_ward_zero_function(gin, rng):
    z = 0.5 * (rng.normal(size=(3, 6)) + 1j * rng.normal(size=(3, 6)))
    assert np.all(ward_stat(gin, 1.0, z, ZeroFunction()) == 0)


def test_ward_outside_support(gin):
    f = TestFunction(0.5 + 0j, 0.2)
    z = np.array([[-0.5, -0.4j, 0.1j, -0.2 - 0.3j]])
    assert ward_stat(gin, 1.0, z, f)[0] == 0


def test_bump_derivative_matches_finite_differences():
    f = TestFunction(0.1 + 0.2j, 0.5)
    z = 0.3 + 0.1j
    h = 1e-6
    dx = (f(z + h) - f(z - h)) / (2 * h)
    dy = (f(z + 1j * h) - f(z - 1j * h)) / (2 * h)
    assert abs(f.d(z) - 0.5 * (dx - 1j * dy)) < 1e-7


def test_support_check(gin):
    with pytest.raises(SupportViolation):
        TestFunction(1.5 + 0j, 0.4).check(gin)


@pytest.fixture(scope="module")
def small_stream():
    return list(run_chains(ginibre(), 8, 1.0, 4, 20_000, 2_000, 5, seed=77))


def test_ward_mean_zero_and_self_test(small_stream):
    spec = ginibre()
    f = TestFunction(0.2 + 0.1j, 0.5)
    good = ward_test(spec, 1.0, small_stream, f)
    bad = ward_test(spec, 1.0, small_stream, f, pair_term=False)
    assert good.max_abs_z <= 3
    assert bad.max_abs_z > 3


def test_lagrange_sentinels(rng):
    spec = ginibre()
    z = 0.5 * (rng.normal(size=5) + 1j * rng.normal(size=5))
    assert lagrange_log_abs(spec, z, 1, z[1]) == pytest.approx(0, abs=1e-12)
    assert lagrange_log_abs(spec, z, 1, z[3]) == -math.inf


def test_lagrange_maximum_principle(rng):
    spec = ginibre()
    n = 6
    z = 0.6 * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
    t = np.linspace(0, 1, 60)
    grid = (t[:, None] * np.exp(2j * np.pi * t[None, :])).ravel()
    inside = np.max(lagrange_log_abs(spec, z, 0, grid) - n / 2 * q_eff(spec, grid))
    for w in (1.2 + 0j, -1.4j, 1.1 + 1.1j):
        assert lagrange_log_abs(spec, z, 0, w) - n / 2 * q_eff(spec, w) <= inside + 1e-9 \
            or lagrange_log_abs(spec, z, 0, w) <= inside - n / 2 * q_eff(spec, w) + 1e-9


def test_lagrange_identity(small_stream):
    spec = ginibre()
    pts = np.array([0.3 + 0j, 1.3 + 0j])
    rep = lagrange_identity_test(spec, 1.0, small_stream, pts, reference=exact_r(spec, 8, pts))
    assert rep.passed


def test_berezin_normalization(small_stream):
    b = berezin_estimate(small_stream, 0j, 0.15, (-1.6, 1.6, -1.6, 1.6), 32)
    assert abs(b.normalization - 1) <= 3 * b.normalization_err


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_kernel_masses(beta):
    assert kernel_mass(lambda u, v: bulk_kernel(u, v, beta), 0.3j) == pytest.approx(1 / beta, abs=1e-8)
    assert kernel_mass(lambda u, v: boundary_kernel(u, v, beta), 0.5 + 0.2j) == pytest.approx(1 / beta, abs=1e-6)


def test_profiles():
    assert erfc_edge(0.0) == pytest.approx(0.5)
    assert f_s_profile(0.0, 2) == pytest.approx(0.682689, abs=1e-6)
    assert ref_profiles("erfc_edge", 1.0, 0.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        ref_profiles("nope")


def test_log_laplacian_of_edge_profile():
    assert log_laplacian_fd(erfc_edge, 0.0) == pytest.approx(-2 / math.pi, abs=1e-3)


def test_cell_average_inverse_matches_quadrature():
    # average of 1/w over [1,2]x[0.5,1]
    x = np.linspace(1, 2, 2001)
    y = np.linspace(0.5, 1, 1001)
    w = x[None, :] + 1j * y[:, None]
    ref = np.trapezoid(np.trapezoid(1 / w, x, axis=1), y) / 0.5
    assert cell_average_inverse(1, 2, 0.5, 1) == pytest.approx(ref, abs=1e-6)


def test_ward_equation_residuals():
    grid = CauchyGrid()
    u = np.array([0j, 0.5 + 0.5j, -1 + 0.2j])
    bulk = ward_equation_residual(bulk_kernel, 1.0, u, grid)
    edge = ward_equation_residual(boundary_kernel, 1.0, u, grid)
    assert np.max(np.abs(bulk)) <= 0.02
    assert np.max(np.abs(edge)) <= 0.05
