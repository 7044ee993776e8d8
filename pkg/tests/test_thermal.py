import math

import numpy as np
import pytest

from coulomb2d.potential import PotentialSpec, ginibre
from coulomb2d.thermal import (RadialDensity, del_residual, free_energy, log_potential_radial,
                               radial_grid, solve_thermal)


def _disc(m=4001, sigma=2.0, a=0.0, b=1.0):
    r = np.linspace(0, sigma, m)
    d = np.where((r >= a) & (r <= b), 1.0, 0.0)
    return RadialDensity(r, d / RadialDensity(r, d).mass)


def test_unit_disc_potential():
    rho = _disc()
    U = log_potential_radial(rho)
    r = rho.radii
    # the jump at r = 1 limits the quadrature to first order
    assert U[0] == pytest.approx(0.5, abs=1e-3)
    assert U[np.searchsorted(r, 1.0)] == pytest.approx(0, abs=1e-3)
    far = r > 1.5
    assert np.allclose(U[far], -np.log(r[far]), atol=1e-3)


def test_gaussian_potential_at_origin():
    # d = e^{-r^2} has unit mass and U(0) = -(1/2) int e^{-t} log t dt = euler_gamma / 2
    # the p log p integrand at the origin leaves a clean O(h^2) error
    errs = []
    for m in (1025, 2049, 4097):
        r = np.linspace(0, 8, m)
        U = log_potential_radial(RadialDensity(r, np.exp(-r ** 2)))
        errs.append(abs(U[0] - np.euler_gamma / 2))
        assert U[-1] == pytest.approx(-math.log(8), abs=1e-8)
    assert errs[-1] < 1e-6
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_annulus_potential_flat_inside():
    rho = _disc(a=0.5, b=1.0)
    U = log_potential_radial(rho)
    r = rho.radii
    p = np.linspace(0.5, 1, 20001)
    # unit mass: d = 1/(1 - 0.25); U = -2 int log(p) d p dp
    ref = -2 * np.trapezoid(np.log(p) * p, p) / 0.75
    assert np.allclose(U[r < 0.45], ref, atol=1e-4)


def test_free_energy_large_nbeta_is_energy():
    spec = ginibre()
    rho = _disc()
    e1 = free_energy(spec, 10**12, 1.0, rho)
    # I[1_D] = int U + int Q = 1/4 + 1/2
    assert e1 == pytest.approx(0.75, abs=1e-4)


@pytest.fixture(scope="module")
def gin64():
    return solve_thermal(ginibre(), 64, 1.0)


def test_solution_properties(gin64):
    dens, rep = gin64
    assert rep.converged and rep.residual < 1e-5
    assert dens.mass == pytest.approx(1, abs=1e-9)
    r = dens.radii
    assert np.all(dens.values > 0)
    assert np.all(np.abs(dens.values[r < 0.6] - 1) < 0.05)
    assert np.all(dens.values[r > 1.4] < 1e-6)
    res = del_residual(ginibre(), 64, 1.0, dens)
    assert np.nanmax(np.abs(res[(r > 0.05) & (r < 1.5)])) < 1e-3


def test_minimizer_beats_equilibrium(gin64):
    dens, rep = gin64
    spec = ginibre()
    eq = RadialDensity(dens.radii, np.where(dens.radii <= 1, 1.0, 0.0)).normalized()
    assert free_energy(spec, 64, 1.0, eq) >= rep.free_energy


def test_grid_refinement(gin64):
    dens, rep = gin64
    _, fine = solve_thermal(ginibre(), 64, 1.0, grid=4096)
    assert abs(fine.free_energy - rep.free_energy) < 1e-6


def test_free_energy_convex_along_segments(rng):
    spec = ginibre()
    r = radial_grid(spec, 1024)
    a = RadialDensity(r, np.exp(-2 * r ** 2) * (1 + 0.3 * rng.random(r.size))).normalized()
    b = RadialDensity(r, np.exp(-r) * (1 + 0.3 * rng.random(r.size))).normalized()
    t = np.linspace(0, 1, 11)
    F = np.array([free_energy(spec, 16, 1.0, RadialDensity(r, (1 - s) * a.values + s * b.values))
                  for s in t])
    assert np.all(np.diff(F, 2) >= -1e-10)


def test_quartic_solution():
    spec = PotentialSpec(delta=1, quartic_coef=1, sigma_outer=2)
    dens, rep = solve_thermal(spec, 64, 1.0)
    assert rep.residual < 1e-5
