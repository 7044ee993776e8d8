import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coulomb2d.estimator import (DensityField, PolarField, RescaleFrame, batch_stats,
                                 bound_report, count_disk, density_from_blocks,
                                 lipschitz_modulus, overcrowd_tail, rescaled_density)
from coulomb2d.oracle import exact_r
from coulomb2d.potential import ginibre

BBOX = (-1.0, 1.0, -1.0, 1.0)


def test_empty_field():
    f = DensityField(BBOX, 4, 4)
    assert f.samples == 0 and np.all(f.counts == 0)


def test_single_point_at_bin_center():
    f = DensityField(BBOX, 4, 4).accumulate(np.array([[0.25 + 0.75j]]))
    assert f.counts[3, 2] == 1 and f.counts.sum() == 1
    assert f.estimate[3, 2] == pytest.approx(1 / f.bin_area)


configs = st.lists(st.lists(st.complex_numbers(max_magnitude=1.3, allow_nan=False), min_size=3,
                            max_size=3), min_size=1, max_size=8)


@settings(max_examples=40, deadline=None)
@given(configs, configs)
def test_merge_equals_concatenated_accumulate(a, b):
    a, b = np.array(a), np.array(b)
    fa = DensityField(BBOX, 5, 3).accumulate(a)
    fb = DensityField(BBOX, 5, 3).accumulate(b)
    both = DensityField(BBOX, 5, 3).accumulate(np.vstack([a, b]))
    m = fa.merge(fb)
    assert np.array_equal(m.counts, both.counts)
    assert np.array_equal(m.sumsq, both.sumsq)
    assert (m.samples, m.points, m.spill) == (both.samples, both.points, both.spill)


def test_polar_merge():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(20, 4)) + 1j * rng.normal(size=(20, 4))
    edges = np.linspace(0, 2, 9)
    a = PolarField(edges, sectors=3).accumulate(z[:7])
    b = PolarField(edges, sectors=3).accumulate(z[7:])
    both = PolarField(edges, sectors=3).accumulate(z)
    assert np.array_equal(a.merge(b).counts, both.counts)


def test_batch_stats_iid():
    rng = np.random.default_rng(1)
    x = rng.normal(2.0, 1.0, size=40_000)
    mean, err = batch_stats(x)
    assert abs(mean - 2) < 4 * err
    assert err == pytest.approx(1 / math.sqrt(x.size), rel=0.5)


def test_density_from_blocks_widens_errors():
    rng = np.random.default_rng(2)
    blocks = [rng.normal(size=(50, 3)) * 0.3 + 0j for _ in range(20)]
    fld, err = density_from_blocks(blocks, lambda: DensityField(BBOX, 4, 4))
    assert fld.samples == 1000
    assert np.all(err >= fld.stderr - 1e-15)


def test_rescaled_exact_bulk_and_edge():
    spec = ginibre()
    n = 256
    bulk = RescaleFrame.standard(0, n, 1.0)
    rho, _ = rescaled_density(lambda z: exact_r(spec, n, z), bulk, np.array([0j]))
    assert rho[0] == pytest.approx(1, abs=1e-6)
    edge = RescaleFrame.standard(1, n, 1.0)
    rho, _ = rescaled_density(lambda z: exact_r(spec, n, z), edge, np.array([0j]))
    assert rho[0] == pytest.approx(0.5, abs=0.01)


def test_far_exterior_frame_is_empty():
    spec = ginibre()
    n = 256
    frame = RescaleFrame.standard(1.5, n, 1.0)
    w = np.linspace(-2, 2, 9)[:, None] + 1j * np.linspace(-2, 2, 9)[None, :]
    rho, _ = rescaled_density(lambda z: exact_r(spec, n, z), frame, w)
    assert np.max(rho) < 1e-12


def test_rescaled_field_needs_fine_bins():
    f = DensityField(BBOX, 4, 4)
    with pytest.raises(ValueError):
        rescaled_density(f, RescaleFrame.standard(0, 64, 1.0), np.array([0j]))


def test_induced_frame_maps_band():
    fr = RescaleFrame.induced(100, 2)
    assert abs(fr.to_micro(fr.center)) < 1e-12
    assert fr.to_micro(fr.center + 0.02j) == pytest.approx(1)
    w = np.array([0.3 - 1.1j, 2 + 0.5j])
    assert np.allclose(fr.to_micro(fr.from_micro(w)), w)


def test_lipschitz():
    u = np.linspace(-2, 2, 81)
    assert lipschitz_modulus(np.ones_like(u), 0.05, 0.1) == 0
    assert lipschitz_modulus(u, 0.05, 0.1) == pytest.approx(1, abs=1e-12)
    grid = u[None, :] + 0 * u[:, None]
    assert lipschitz_modulus(grid, 0.05, 0.1) == pytest.approx(1, abs=1e-12)


def test_count_disk():
    z = np.array([0.1, 0.2j, -0.3, 0.9 + 0.9j])
    assert count_disk(z, 5 + 0j, 0.1) == 0
    assert count_disk(z, 0j, 10) == 4
    assert count_disk(z, 0j, 0.25) == 2


def test_overcrowd_basic():
    rep = overcrowd_tail(np.array([0, 1, 1, 2, 3, 0, 1]), n=3)
    assert rep.prob[0] == 1
    assert rep.prob[rep.M > 3].sum() == 0


def test_overcrowd_poisson_shape():
    rng = np.random.default_rng(4)
    rep = overcrowd_tail(rng.poisson(1.0, size=100_000))
    dec, conc = rep.shape_check()
    assert dec and conc


def test_bound_report():
    spec = ginibre()
    n = 64
    r = np.linspace(0, 1.5, 61)
    rep = bound_report(spec, n, 1.0, r, exact_r(spec, n, r + 0j))
    assert rep.exterior_ok and rep.exterior_margin > 0
    r12 = bound_report(spec, n, 1.0, np.array([1.2]), np.array([exact_r(spec, n, 1.2 + 0j)]))
    assert r12.exterior_margin > 1
