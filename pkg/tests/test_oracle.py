import math

import numpy as np
import pytest
from scipy.special import gammainc, gammaln

from coulomb2d.oracle import (disk_count_observable, exact_r, quadrature_n1, quadrature_n2,
                              radial_integral, radial_norms)
from coulomb2d.potential import build_induced, ginibre


def test_norms_match_incomplete_gamma():
    # h_k = int_{|z|<2} |z|^{2k} e^{-n|z|^2} dA = gamma_lower(k+1, 4n) / n^{k+1}
    n = 4
    spec = ginibre()
    ref = gammaln(np.arange(1, n + 1)) + np.log(gammainc(np.arange(1, n + 1), 4 * n)) \
        - np.arange(1, n + 1) * math.log(n)
    assert np.allclose(radial_norms(spec, n).log_norms, ref, atol=1e-10, rtol=0)
    # the untruncated value k!/n^{k+1}; the wall cuts off 145 e^{-16} of it
    assert math.exp(radial_norms(spec, 4).log_norms[2]) == pytest.approx(2 / 64, rel=145 * math.exp(-16) * 1.01)


def test_h0_single_particle():
    assert math.exp(radial_norms(ginibre(), 1).log_norms[0]) == pytest.approx(1 - math.exp(-4), abs=1e-12)


@pytest.mark.parametrize("n", [1, 5, 30])
def test_exact_r_at_origin(n):
    assert exact_r(ginibre(), n, 0j) == pytest.approx(n / -math.expm1(-4 * n), rel=1e-10)


@pytest.mark.parametrize("n", [1, 8, 64])
def test_exact_r_mass(n):
    spec = ginibre()
    m = radial_integral(lambda r: exact_r(spec, n, r + 0j), 0, 2, panels=256, breaks=(1.0,))
    assert m == pytest.approx(n, abs=1e-8)


def test_exact_r_outside_sigma_is_zero():
    assert exact_r(ginibre(), 8, 2.5 + 0j) == 0


def test_n1_gibbs_matches_determinantal():
    spec = ginibre()
    z = np.array([0, 0.3 + 0.2j, 1.5j, 1.9])
    assert np.allclose(quadrature_n1(spec, 1.0, z), exact_r(spec, 1, z), rtol=1e-10)
    assert quadrature_n1(spec, 1.0, 2.5 + 0j) == 0
    m = radial_integral(lambda r: quadrature_n1(spec, 2.0, r + 0j), 0, 2, panels=128)
    assert m == pytest.approx(1, abs=1e-8)


def test_induced_mass():
    spec = build_induced(64, 2)
    m = radial_integral(lambda r: exact_r(spec, 64, r + 0j), spec.sigma_inner, spec.sigma_outer,
                        panels=512)
    assert m == pytest.approx(64, abs=1e-8)


def test_annulus_moment_bound():
    # uniform probability on A(R/2, R - 2r) has Q0-moment (Delta/2)((R-2r)^2 + (R/2)^2) < Delta R^2
    delta, R, r = 1.0, 1.0, 0.1
    a, b = R / 2, R - 2 * r
    mom = radial_integral(lambda t: delta * t * t, a, b) / (b * b - a * a)
    assert mom == pytest.approx(delta / 2 * (b * b + a * a), rel=1e-12)
    assert mom < delta * R * R


@pytest.mark.slow
def test_n2_normalization_and_disc_count():
    spec = ginibre()
    one, err = quadrature_n2(spec, 1.0)
    assert one == pytest.approx(1, abs=1e-6)
    val, err = quadrature_n2(spec, 1.0, disk_count_observable(0.5), radial_breaks=(0.5,))
    ref = radial_integral(lambda r: exact_r(spec, 2, r + 0j), 0, 0.5, panels=64)
    assert abs(val - ref) < 1e-4
