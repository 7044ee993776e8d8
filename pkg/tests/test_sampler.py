import math

import numpy as np
import pytest

from coulomb2d.errors import ConfigError
from coulomb2d.oracle import quadrature_n1
from coulomb2d.sampler import (delta_energy, hamiltonian, last_acceptance, map_chains, mh_step,
                               new_chain, read_samples, run_chains, write_samples)


def test_hamiltonian_values(gin):
    assert hamiltonian(gin, np.array([0, 1 + 0j])) == pytest.approx(2)
    assert hamiltonian(gin, np.array([0, 3 + 0j])) == math.inf
    assert hamiltonian(gin, np.array([0.4 + 0.3j])) == pytest.approx(0.25)


def test_delta_energy_matches_recomputation(gin, rng):
    for _ in range(20):
        z = 0.8 * (rng.random(5) * np.exp(2j * np.pi * rng.random(5)))
        j = int(rng.integers(5))
        new = z[j] + 0.3 * complex(*rng.normal(size=2))
        moved = z.copy()
        moved[j] = new
        expect = hamiltonian(gin, moved) - hamiltonian(gin, z)
        got = delta_energy(gin, z, j, new)
        if math.isinf(expect):
            assert got == math.inf
        else:
            assert got == pytest.approx(expect, abs=1e-9)


def test_delta_energy_edge_cases(gin):
    z = np.array([0.1, 0.5j, -0.3])
    assert delta_energy(gin, z, 1, z[1]) == 0
    assert delta_energy(gin, z, 1, 2.5 + 0j) == math.inf


def test_hard_wall_respected(gin):
    blocks = list(run_chains(gin, 6, 0.05, 1, 400, 0, 1, seed=3))
    pts = np.concatenate([b.points for b in blocks])
    assert np.all(np.abs(pts) <= 2)


def test_small_beta_accepts_everything(gin):
    # tiny steps so that hard-wall rejections stay rare
    ch = new_chain(gin, 4, 1e-6, seed=1, step_scale=0.01)
    for _ in range(200):
        mh_step(gin, ch)
    assert ch.acceptance > 0.99


def test_determinism_and_independence(gin):
    a = [b.points for b in run_chains(gin, 5, 1.0, 2, 300, 50, 5, seed=11)]
    b = [b.points for b in run_chains(gin, 5, 1.0, 2, 300, 50, 5, seed=11)]
    c = [b.points for b in run_chains(gin, 5, 1.0, 2, 300, 50, 5, seed=12)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(np.concatenate(a), np.concatenate(c))
    assert last_acceptance(11, 0) is not None


def test_threaded_map_matches_serial(gin):
    def red(cid, blocks):
        return sum(float(np.abs(b.points).sum()) for b in blocks)
    one = map_chains(gin, 5, 1.0, 3, 200, 20, 2, 9, red, threads=1)
    many = map_chains(gin, 5, 1.0, 3, 200, 20, 2, 9, red, threads=3)
    assert one == many


def test_sample_file_roundtrip(gin, tmp_path):
    blocks = list(run_chains(gin, 3, 1.0, 2, 120, 20, 10, seed=5))
    rows = write_samples(tmp_path / "s.txt", blocks)
    chains, sweeps, pts = read_samples(tmp_path / "s.txt")
    assert rows == len(pts) == sum(len(b) for b in blocks)
    assert np.array_equal(pts, np.concatenate([b.points for b in blocks]))
    assert set(chains) == {0, 1}


def test_bad_run_parameters(gin):
    with pytest.raises(ConfigError):
        list(run_chains(gin, 3, -1.0, 1, 100, 10, 1, 0))
    with pytest.raises(ConfigError):
        list(run_chains(gin, 3, 1.0, 1, 100, 200, 1, 0))


@pytest.mark.slow
def test_one_particle_density(gin):
    # n=1, beta=2: histogram of |z| against the normalized Gibbs density
    pts = np.concatenate([b.points.ravel()
                          for b in run_chains(gin, 1, 2.0, 4, 250_000, 1000, 1, seed=21)])
    edges = np.linspace(0, 1.2, 13)
    hist = np.histogram(np.abs(pts), edges)[0] / pts.size
    r = np.linspace(0, 1.2, 12001)
    dens = quadrature_n1(gin, 2.0, r + 0j) * 2 * r
    ref = np.array([np.trapezoid(dens[(r >= a) & (r <= b)], r[(r >= a) & (r <= b)])
                    for a, b in zip(edges[:-1], edges[1:])])
    bulk = ref > 0.02
    assert np.max(np.abs(hist[bulk] / ref[bulk] - 1)) < 0.05
