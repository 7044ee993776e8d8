"""Seeded single-particle Metropolis sampler for the Boltzmann-Gibbs measure.

Energy convention: H = sum_{i != j} log(1/|z_i - z_j|) + n sum_i Q(z_i), the
pair sum running over ordered pairs.  One sweep proposes a Gaussian move for
every particle in index order.

Randomness is counter based: chain ``c`` of seed ``s`` owns a Philox key
derived from ``(s, c)`` and sweep ``t`` reads its normals and uniforms from
the counter block ``t // RNG_BLOCK``.  A trajectory therefore depends only on
(seed, chain), never on how sweeps are batched or how many workers run.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numba
import numpy as np

from .errors import ConfigError
from .potential import INF, PotentialSpec, eval_Q, radial_droplet

RNG_BLOCK = 64
ADAPT_LOW, ADAPT_HIGH = 0.3, 0.6
_PAIR_CHUNK = 8


def hamiltonian(spec: PotentialSpec, config) -> float:
    z = np.asarray(config, dtype=complex).ravel()
    n = z.size
    q = eval_Q(spec, z)
    if not np.all(np.isfinite(q)):
        return INF
    d = np.abs(z[:, None] - z[None, :])
    iu = np.triu_indices(n, 1)
    pair = d[iu]
    if np.any(pair == 0):
        return INF
    return float(-2.0 * np.sum(np.log(pair)) + n * np.sum(q))


@numba.njit(cache=True, nogil=True, fastmath=False)
def _q(x, y, pot):
    # pot = (delta, log_coef, quartic, const, s_in, s_out)
    r2 = x * x + y * y
    if r2 > pot[5] * pot[5] or r2 < pot[4] * pot[4]:
        return np.inf
    v = pot[0] * r2 + pot[2] * r2 * r2 + pot[3]
    if pot[1] != 0.0:
        if r2 == 0.0:
            return np.inf
        v -= 0.5 * pot[1] * math.log(r2)
    return v


@numba.njit(cache=True, nogil=True, fastmath=False)
def _delta_energy(xs, ys, j, xn, yn, pot):
    n = xs.shape[0]
    qn = _q(xn, yn, pot)
    if qn == np.inf:
        return np.inf
    qo = _q(xs[j], ys[j], pot)
    xo = xs[j]
    yo = ys[j]
    acc = 0.0
    prod = 1.0
    k = 0
    for i in range(n):
        if i == j:
            continue
        dxn = xn - xs[i]
        dyn = yn - ys[i]
        dn = dxn * dxn + dyn * dyn
        if dn == 0.0:
            return np.inf
        dxo = xo - xs[i]
        dyo = yo - ys[i]
        do = dxo * dxo + dyo * dyo
        prod *= dn / do
        k += 1
        if k == _PAIR_CHUNK:
            if prod > 1e-280 and prod < 1e280:
                acc += math.log(prod)
            else:
                acc += _slow_chunk(xs, ys, i, j, xn, yn, xo, yo)
            prod = 1.0
            k = 0
    if k > 0:
        acc += math.log(prod)
    # ordered pairs: each unordered pair contributes 2 log(1/d) = -log d^2
    return -acc + n * (qn - qo)


@numba.njit(cache=True, nogil=True)
def _slow_chunk(xs, ys, last, j, xn, yn, xo, yo):
    # recompute the chunk ending at index `last` term by term
    acc = 0.0
    k = 0
    i = last
    while k < _PAIR_CHUNK:
        if i != j:
            dn = (xn - xs[i]) ** 2 + (yn - ys[i]) ** 2
            do = (xo - xs[i]) ** 2 + (yo - ys[i]) ** 2
            acc += math.log(dn) - math.log(do)
            k += 1
        i -= 1
    return acc


@numba.njit(cache=True, nogil=True)
def _run_sweeps(xs, ys, pot, beta, scale, normals, uniforms, thin, phase, out, counts):
    """Run normals.shape[0] sweeps in place, storing every `thin`-th state.

    ``phase`` is the number of sweeps done before this call; a state is stored
    after sweep t (1-based count) when t % thin == 0.  Returns stored count.
    """
    nsw, n = uniforms.shape
    stored = 0
    for t in range(nsw):
        for j in range(n):
            xn = xs[j] + scale * normals[t, j, 0]
            yn = ys[j] + scale * normals[t, j, 1]
            counts[1] += 1
            dh = _delta_energy(xs, ys, j, xn, yn, pot)
            if dh == np.inf:
                continue
            if dh <= 0.0 or math.log(uniforms[t, j]) < -beta * dh:
                xs[j] = xn
                ys[j] = yn
                counts[0] += 1
        if thin > 0 and (phase + t + 1) % thin == 0:
            for j in range(n):
                out[stored, j, 0] = xs[j]
                out[stored, j, 1] = ys[j]
            stored += 1
    return stored


def _pot_array(spec):
    return np.array([spec.delta, spec.log_coef, spec.quartic_coef, spec.const_term,
                     spec.sigma_inner, spec.sigma_outer], dtype=float)


def delta_energy(spec: PotentialSpec, config, j: int, z_new) -> float:
    z = np.asarray(config, dtype=complex).ravel()
    if not 0 <= j < z.size:
        raise IndexError(j)
    if complex(z_new) == z[j]:
        return 0.0
    xs, ys = np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag)
    return float(_delta_energy(xs, ys, j, float(np.real(z_new)), float(np.imag(z_new)),
                               _pot_array(spec)))


def chain_key(seed: int, chain: int) -> np.ndarray:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(chain),))
    return ss.generate_state(2, np.uint64)


def _block_draws(key, block, n, nsweeps=RNG_BLOCK):
    g = np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, block]))
    normals = g.standard_normal((nsweeps, n, 2))
    uniforms = g.random((nsweeps, n))
    # log(0) guard; probability 2^-53 per draw
    uniforms[uniforms == 0.0] = 2.0 ** -60
    return normals, uniforms


def initial_configuration(spec: PotentialSpec, n: int, key) -> np.ndarray:
    """Jittered sunflower layout on the droplet annulus, from the chain's init counter block.

    Equal-area radial strata with golden-angle spacing start the chain without
    the long-wavelength density fluctuations of an iid sample, which local
    moves only remove slowly.
    """
    drop = radial_droplet(spec)
    g = np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 1, 0]))
    u = g.random(n)
    rot = g.random()
    k = np.arange(n)
    t = (k + u) / n
    r = np.sqrt(drop.r_in ** 2 + t * (drop.r_out ** 2 - drop.r_in ** 2))
    golden = (3 - math.sqrt(5)) / 2
    return r * np.exp(2j * np.pi * ((k * golden + rot) % 1.0))


@dataclass
class ChainState:
    config: np.ndarray
    beta: float
    step_scale: float
    key: np.ndarray
    chain_id: int = 0
    sweep: int = 0
    accepted: int = 0
    proposed: int = 0
    _block: int = field(default=-1, repr=False)
    _draws: tuple = field(default=None, repr=False)

    @property
    def acceptance(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0

    def draws_for(self, block):
        if block != self._block:
            self._draws = _block_draws(self.key, block, self.config.size)
            self._block = block
        return self._draws


def new_chain(spec: PotentialSpec, n: int, beta: float, seed: int, chain: int = 0,
              step_scale: float = 1.0) -> ChainState:
    if n < 1 or beta <= 0 or step_scale <= 0:
        raise ConfigError("need n >= 1, beta > 0, step_scale > 0")
    key = chain_key(seed, chain)
    return ChainState(config=initial_configuration(spec, n, key), beta=beta,
                      step_scale=step_scale, key=key, chain_id=chain)


def proposal_width(spec: PotentialSpec, n: int, step_scale: float) -> float:
    return step_scale / math.sqrt(n * spec.delta)


def mh_step(spec: PotentialSpec, chain: ChainState) -> ChainState:
    """One sweep (n single-particle proposals); mutates and returns the chain."""
    n = chain.config.size
    normals, uniforms = chain.draws_for(chain.sweep // RNG_BLOCK)
    t = chain.sweep % RNG_BLOCK
    xs = np.ascontiguousarray(chain.config.real)
    ys = np.ascontiguousarray(chain.config.imag)
    counts = np.zeros(2, dtype=np.int64)
    _run_sweeps(xs, ys, _pot_array(spec), chain.beta, proposal_width(spec, n, chain.step_scale),
                normals[t:t + 1], uniforms[t:t + 1], 0, 0, np.empty((0, n, 2)), counts)
    chain.config = xs + 1j * ys
    chain.accepted += int(counts[0])
    chain.proposed += int(counts[1])
    chain.sweep += 1
    return chain


@dataclass
class SampleBlock:
    """Consecutive retained configurations of one chain."""
    chain_id: int
    sweeps: np.ndarray        # sweep index (1-based, counting burn-in) of each row
    points: np.ndarray        # complex array, shape (k, n)

    def __len__(self):
        return self.points.shape[0]


def _run_one_chain(spec, n, beta, chain, sweeps, burnin, thin, seed,
                   step_scale=1.0) -> Iterator[SampleBlock]:
    st = new_chain(spec, n, beta, seed, chain, step_scale)
    pot = _pot_array(spec)
    xs = np.ascontiguousarray(st.config.real)
    ys = np.ascontiguousarray(st.config.imag)
    counts = np.zeros(2, dtype=np.int64)
    nblocks = -(-sweeps // RNG_BLOCK)
    for b in range(nblocks):
        start = b * RNG_BLOCK
        m = min(RNG_BLOCK, sweeps - start)
        normals, uniforms = _block_draws(st.key, b, n)
        normals, uniforms = normals[:m], uniforms[:m]
        width = proposal_width(spec, n, st.step_scale)
        # split the block at the end of burn-in so adaptation never leaks past it
        cut = min(max(burnin - start, 0), m)
        if cut > 0:
            before = counts.copy()
            _run_sweeps(xs, ys, pot, beta, width, normals[:cut], uniforms[:cut], 0, 0,
                        np.empty((0, n, 2)), counts)
            acc = (counts[0] - before[0]) / max(counts[1] - before[1], 1)
            if acc < ADAPT_LOW:
                st.step_scale *= 0.8
            elif acc > ADAPT_HIGH:
                st.step_scale *= 1.25
        if cut < m:
            out = np.empty((m - cut, n, 2))
            done = start + cut - burnin
            k = _run_sweeps(xs, ys, pot, beta, width, normals[cut:], uniforms[cut:], thin,
                            done, out, counts)
            if k:
                first = burnin + done
                idx = np.arange(first + 1, first + m - cut + 1)
                idx = idx[(idx - burnin) % thin == 0]
                yield SampleBlock(chain, idx, out[:k, :, 0] + 1j * out[:k, :, 1])
    st.accepted, st.proposed = int(counts[0]), int(counts[1])
    _LAST_STATS[(seed, chain)] = st.acceptance


_LAST_STATS: dict = {}


def _check_run(n, beta, chains, sweeps, burnin, thin):
    errs = []
    if n < 1:
        errs.append("n must be >= 1")
    if not beta > 0:
        errs.append("beta must be > 0")
    if chains < 1:
        errs.append("chains must be >= 1")
    if burnin < 0 or sweeps <= burnin:
        errs.append("need sweeps > burnin >= 0")
    if thin < 1:
        errs.append("thin must be >= 1")
    if errs:
        raise ConfigError("; ".join(errs))


def run_chains(spec: PotentialSpec, n: int, beta: float, chains: int, sweeps: int,
               burnin: int, thin: int, seed: int) -> Iterator[SampleBlock]:
    """Stream retained configurations, chain 0 first, in sweep order."""
    _check_run(n, beta, chains, sweeps, burnin, thin)
    for c in range(chains):
        yield from _run_one_chain(spec, n, beta, c, sweeps, burnin, thin, seed)


def iter_configurations(blocks) -> Iterator[np.ndarray]:
    for blk in blocks:
        yield from blk.points


def map_chains(spec: PotentialSpec, n: int, beta: float, chains: int, sweeps: int,
               burnin: int, thin: int, seed: int,
               reducer: Callable[[int, Iterator[SampleBlock]], object],
               threads: int | None = None) -> list:
    """Apply ``reducer(chain_id, blocks)`` to every chain, results in chain order.

    Chains run on a thread pool (the sweep kernel releases the GIL); the
    caller merges the returned list left to right, so the reduction order is
    fixed regardless of scheduling.
    """
    _check_run(n, beta, chains, sweeps, burnin, thin)
    threads = threads or default_threads()

    def work(c):
        return reducer(c, _run_one_chain(spec, n, beta, c, sweeps, burnin, thin, seed))

    if threads <= 1 or chains == 1:
        return [work(c) for c in range(chains)]
    with ThreadPoolExecutor(max_workers=min(threads, chains)) as pool:
        return list(pool.map(work, range(chains)))


def default_threads() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def last_acceptance(seed: int, chain: int) -> float | None:
    return _LAST_STATS.get((seed, chain))


def write_samples(path, blocks) -> int:
    """Write ``chain_id sweep x1 y1 x2 y2 ...`` lines with 17 significant digits."""
    rows = 0
    with open(path, "w") as fh:
        for blk in blocks:
            xy = np.empty((len(blk), 2 * blk.points.shape[1]))
            xy[:, 0::2] = blk.points.real
            xy[:, 1::2] = blk.points.imag
            for sw, row in zip(blk.sweeps, xy):
                fh.write(f"{blk.chain_id} {sw} " + " ".join(f"{v:.17g}" for v in row) + "\n")
                rows += 1
    return rows


def read_samples(path):
    chains, sweeps, pts = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            chains.append(int(parts[0]))
            sweeps.append(int(parts[1]))
            v = np.array(parts[2:], dtype=float)
            pts.append(v[0::2] + 1j * v[1::2])
    return np.array(chains), np.array(sweeps), np.array(pts)
