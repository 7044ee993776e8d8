import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coulomb2d.errors import BadParameters, DropletTouchesWall, NotHeleShaw, PotentialError
from coulomb2d.potential import (PotentialSpec, build_induced, droplet, eval_dQ, eval_Q,
                                 induced_center, laplacian_density, obstacle, q_eff,
                                 rescale_map)


def test_q_values(gin):
    assert eval_Q(gin, 0j) == 0
    assert eval_Q(gin, 1 + 0j) == pytest.approx(1)
    assert eval_Q(gin, 3 + 0j) == math.inf


def test_dq_values(gin):
    assert eval_dQ(gin, 1 + 0j) == pytest.approx(1)
    assert eval_dQ(gin, 1j) == pytest.approx(-1j)
    spec = PotentialSpec(delta=1, log_coef=2, sigma_inner=0.2, sigma_outer=2.5)
    assert abs(eval_dQ(spec, 1 + 0j)) < 1e-12


@pytest.mark.parametrize("z", [0.7 + 0.2j, -0.4 + 0.9j, 1.1j])
def test_dq_matches_finite_differences(z):
    spec = PotentialSpec(delta=1, log_coef=2, sigma_inner=0.2, sigma_outer=2.5)
    h = 1e-6
    dx = (eval_Q(spec, z + h) - eval_Q(spec, z - h)) / (2 * h)
    dy = (eval_Q(spec, z + 1j * h) - eval_Q(spec, z - 1j * h)) / (2 * h)
    assert abs(eval_dQ(spec, z) - 0.5 * (dx - 1j * dy)) < 1e-8


def test_laplacian_density():
    assert laplacian_density(PotentialSpec(delta=1.5), 0.3 + 0.4j) == pytest.approx(1.5)
    assert laplacian_density(PotentialSpec(delta=1, quartic_coef=1, sigma_outer=2), 1 + 0j) == pytest.approx(5)
    spec = PotentialSpec(delta=2, log_coef=1, sigma_outer=2)
    assert laplacian_density(spec, 0.5 + 0j) == pytest.approx(2)


def test_laplacian_density_finite_differences():
    spec = PotentialSpec(delta=1, quartic_coef=1, sigma_outer=2)
    h = 1e-4
    z = 1 + 0j
    lap = sum(eval_Q(spec, z + d) for d in (h, -h, 1j * h, -1j * h)) - 4 * eval_Q(spec, z)
    assert lap / h ** 2 / 4 == pytest.approx(5, abs=1e-5)


def test_droplets(gin):
    d = droplet(gin)
    assert (d.r_in, d.r_out) == (0, pytest.approx(1))
    d = droplet(PotentialSpec(delta=2))
    assert d.r_out == pytest.approx(1 / math.sqrt(2))
    d = droplet(build_induced(100, 2))
    assert d.r_in == pytest.approx(math.sqrt(0.96), abs=1e-9)
    assert d.r_out == pytest.approx(1, abs=1e-9)


def test_droplet_rejects_quartic():
    with pytest.raises(NotHeleShaw):
        droplet(PotentialSpec(delta=1, quartic_coef=1, sigma_outer=2))


def test_obstacle_and_q_eff(gin):
    assert obstacle(gin, 0.5 + 0j) == pytest.approx(0.25)
    assert obstacle(gin, 1.1 + 0j) == pytest.approx(1 + 2 * math.log(1.1), abs=1e-12)
    assert q_eff(gin, 1 + 0j) == 0
    assert q_eff(gin, 1.1 + 0j) == pytest.approx(1.21 - 1 - 2 * math.log(1.1), abs=1e-12)
    spec = PotentialSpec(delta=1, log_coef=0.5, sigma_outer=2.5)
    r_in = droplet(spec).r_in
    assert obstacle(spec, 0.9 * r_in + 0j) == pytest.approx(eval_Q(spec, r_in + 0j))


@pytest.mark.parametrize("d", [1e-2, 1e-3])
def test_q_eff_quadratic_near_edge(gin, d):
    assert q_eff(gin, 1 + d + 0j) / (2 * d * d) == pytest.approx(1, abs=2 * d)


def test_q_eff_independent_of_potential_theory(gin):
    # the obstacle outside the disc equals 2 int log|z-w| dsigma(w) + const
    r = 1.1
    rho = np.linspace(0, 1, 4001)
    # annulus average of log|z - w| over |w| = rho is log max(r, rho)
    pot = 2 * np.trapezoid(2 * rho * np.log(np.maximum(r, rho)), rho)
    const = 1 - 2 * np.trapezoid(2 * rho * np.log(np.maximum(1, rho)), rho)
    assert obstacle(gin, r + 0j) == pytest.approx(pot + const, abs=1e-10)


def test_build_induced():
    spec = build_induced(100, 2)
    assert (spec.delta, spec.log_coef, spec.const_term) == (25, 48, -24)
    assert spec.g(1.0) == pytest.approx(1)
    assert spec.dg(1.0) == pytest.approx(2)
    with pytest.raises(BadParameters):
        build_induced(4, 2)


def test_rescale_map():
    n, s = 100, 2
    p = induced_center(n, s)
    assert abs(rescale_map(n, s, 0, p)) < 1e-12
    assert rescale_map(n, s, 0, p + 1j * s / n) == pytest.approx(1)


@settings(max_examples=50, deadline=None)
@given(st.complex_numbers(max_magnitude=1), st.complex_numbers(max_magnitude=1),
       st.floats(0, 2 * math.pi))
def test_rescale_map_is_scaled_isometry(z, w, alpha):
    n, s = 64, 2
    d = abs(rescale_map(n, s, alpha, z) - rescale_map(n, s, alpha, w))
    assert d == pytest.approx(n / s * abs(z - w), rel=1e-9, abs=1e-9)


def test_constructor_validation():
    with pytest.raises(BadParameters):
        PotentialSpec(delta=0.05)
    with pytest.raises(DropletTouchesWall):
        PotentialSpec(delta=1, sigma_outer=1.2)
    with pytest.raises(PotentialError):
        PotentialSpec(delta=1, log_coef=-1)
