"""Reference values: exact beta=1 densities for radial potentials and
brute-force quadrature for one and two particles at any beta.

For a radial potential the monomials z^k are orthogonal in
L^2(e^{-nQ} dA), so the beta=1 correlation kernel is diagonal in them:

    R_n(z) = e^{-nQ(z)} sum_{k<n} |z|^{2k} / h_k,
    h_k    = int_Sigma |z|^{2k} e^{-nQ} dA = 2 int r^{2k+1} e^{-n g(r)} dr.

Everything is carried in log space; at n ~ 10^3 the weights e^{-nQ}
underflow double precision long before the ratios do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp, roots_legendre

from .errors import QuadratureFailure
from .potential import PotentialSpec, eval_Q, radial_droplet

_GL_ORDER = 16


@lru_cache(maxsize=None)
def _gl(order):
    x, w = roots_legendre(order)
    return x, w


def gauss_panels(a, b, panels, order=_GL_ORDER, breaks=()):
    """Composite Gauss-Legendre nodes/weights on [a, b], with extra breakpoints."""
    edges = np.unique(np.concatenate([np.linspace(a, b, panels + 1),
                                      [c for c in breaks if a < c < b]]))
    x, w = _gl(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (hi - lo) * x[None, :] + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * w[None, :]
    return nodes.ravel(), weights.ravel()


def _local_scale(spec: PotentialSpec, n: int) -> float:
    lap = spec.delta + 4 * spec.quartic_coef * spec.sigma_outer ** 2
    return 1.0 / math.sqrt(n * lap)


def _log_moments(spec, n, ks, panels, breaks):
    """log of 2 int r^{2k+1} e^{-n g(r)} dr over the wall radii, for each k."""
    a, b = spec.sigma_inner, spec.sigma_outer
    r, w = gauss_panels(a, b, panels, breaks=breaks)
    base = np.log(2 * w) - n * spec.g(r)
    logr = np.log(r)
    out = np.empty(len(ks))
    for i in range(0, len(ks), 256):
        kk = np.asarray(ks[i:i + 256], dtype=float)[:, None]
        out[i:i + 256] = logsumexp(base[None, :] + (2 * kk + 1) * logr[None, :], axis=1)
    return out


@dataclass(frozen=True)
class RadialKernelData:
    n: int
    log_norms: np.ndarray
    spec: PotentialSpec
    rel_error: float

    @property
    def norms(self) -> np.ndarray:
        # may underflow to 0 for large n; log_norms is authoritative
        return np.exp(self.log_norms)


_NORM_CACHE: dict = {}


def radial_norms(spec: PotentialSpec, n: int, rtol: float = 1e-10) -> RadialKernelData:
    """Weighted monomial norms h_k, k < n, with step-halving error control."""
    if n < 1:
        raise ValueError("n must be >= 1")
    key = (spec, n)
    if key in _NORM_CACHE:
        return _NORM_CACHE[key]
    drop = radial_droplet(spec)
    breaks = tuple(x for x in (drop.r_in, drop.r_out) if x > 0)
    ks = np.arange(n)
    panels = max(32, int(math.ceil((spec.sigma_outer - spec.sigma_inner)
                                   / (0.5 * _local_scale(spec, n)))))
    prev = _log_moments(spec, n, ks, panels, breaks)
    for _ in range(6):
        panels *= 2
        cur = _log_moments(spec, n, ks, panels, breaks)
        err = float(np.max(np.abs(np.expm1(cur - prev))))
        if err <= rtol:
            data = RadialKernelData(n, cur, spec, err)
            _NORM_CACHE[key] = data
            return data
        prev = cur
    raise QuadratureFailure(f"radial norms did not converge (rel. change {err:.3g})")


def log_exact_r(spec: PotentialSpec, n: int, z, data: RadialKernelData | None = None):
    """log R_n^{beta=1}(z); -inf outside Sigma."""
    data = data or radial_norms(spec, n)
    z = np.asarray(z, dtype=complex)
    flat = z.ravel()
    r = np.abs(flat)
    q = eval_Q(spec, flat)
    inside = np.isfinite(q)
    out = np.full(flat.shape, -np.inf)
    if np.any(inside):
        ri, qi = r[inside], q[inside]
        with np.errstate(divide="ignore"):
            logr = np.log(ri)
        logr = np.where(ri > 0, logr, -1e300)
        k = np.arange(n, dtype=float)
        res = np.empty(ri.size)
        for i in range(0, ri.size, 4096):
            lr = logr[i:i + 4096, None]
            # k=0 term must survive log(0) at the origin
            terms = np.where(k[None, :] == 0, 0.0, 2 * k[None, :] * lr) - data.log_norms[None, :]
            res[i:i + 4096] = logsumexp(terms, axis=1)
        out[inside] = res - n * qi
    return out.reshape(z.shape)


def exact_r(spec: PotentialSpec, n: int, z, data: RadialKernelData | None = None):
    """beta=1 one-point function R_n(z) in dA units (zero outside Sigma)."""
    out = np.exp(log_exact_r(spec, n, z, data))
    return out[()] if np.ndim(out) == 0 else out


def exact_kernel_abs2(spec: PotentialSpec, n: int, z, w, data: RadialKernelData | None = None):
    """|K_n(z, w)|^2 for the beta=1 kernel, so R_2 = R(z)R(w) - |K|^2."""
    data = data or radial_norms(spec, n)
    z, w = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(w, dtype=complex))
    zf, wf = z.ravel(), w.ravel()
    qz, qw = eval_Q(spec, zf), eval_Q(spec, wf)
    ok = np.isfinite(qz) & np.isfinite(qw)
    out = np.zeros(zf.shape)
    if np.any(ok):
        k = np.arange(n, dtype=float)
        prod = zf[ok] * np.conj(wf[ok])
        lmod = np.log(np.abs(prod) + 1e-300)
        ang = np.angle(prod)
        # sum_k (z wbar)^k / h_k, scaled by the largest term to stay in range
        logs = np.where(k[None, :] == 0, 0.0, k[None, :] * lmod[:, None]) - data.log_norms[None, :]
        m = logs.max(axis=1, keepdims=True)
        s = np.sum(np.exp(logs - m) * np.exp(1j * k[None, :] * ang[:, None]), axis=1)
        out[ok] = np.exp(2 * (m[:, 0] + np.log(np.abs(s) + 1e-300)) - n * (qz[ok] + qw[ok]))
    return out.reshape(z.shape)


def exact_berezin(spec: PotentialSpec, n: int, z, w, data=None):
    """Macroscopic Berezin kernel |K(z,w)|^2 / K(z,z) at beta=1."""
    return exact_kernel_abs2(spec, n, z, w, data) / exact_r(spec, n, z, data)


def radial_integral(f, a, b, panels=64, breaks=()):
    """int f dA over the annulus a <= |z| <= b for a radial f(r)."""
    r, w = gauss_panels(a, b, panels, breaks=breaks)
    return float(np.sum(2 * r * w * f(r)))


def _log_partition_n1(spec, beta, panels=256):
    drop = radial_droplet(spec)
    r, w = gauss_panels(spec.sigma_inner, spec.sigma_outer, panels,
                        breaks=[x for x in (drop.r_in, drop.r_out) if x > 0])
    return float(logsumexp(np.log(2 * r * w) - beta * spec.g(r)))


def quadrature_n1(spec: PotentialSpec, beta: float, z):
    """One-particle Gibbs density e^{-beta Q} / int_Sigma e^{-beta Q} dA."""
    lz1 = _log_partition_n1(spec, beta, 256)
    lz2 = _log_partition_n1(spec, beta, 512)
    if abs(math.expm1(lz2 - lz1)) > 1e-10:
        raise QuadratureFailure("n=1 partition function not converged")
    q = eval_Q(spec, z)
    with np.errstate(over="ignore"):
        out = np.where(np.isfinite(q), np.exp(-beta * np.where(np.isfinite(q), q, 0.0) - lz2), 0.0)
    return out[()] if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# two particles

def _ray_segments(z1, psi, spec):
    """Parameter intervals [0, a] U [b, c] of the ray z1 + t e^{i psi} inside Sigma."""
    e = np.exp(1j * psi)
    p = np.real(np.conj(e)[None, :] * z1[:, None])        # Re(z1 e^{-i psi})
    m2 = np.abs(z1[:, None]) ** 2
    R = spec.sigma_outer
    c = -p + np.sqrt(np.maximum(p * p - (m2 - R * R), 0.0))
    a = c.copy()
    b = c.copy()
    if spec.sigma_inner > 0:
        s2 = spec.sigma_inner ** 2
        disc = p * p - (m2 - s2)
        hit = (disc > 0) & (p < 0)
        sq = np.sqrt(np.maximum(disc, 0.0))
        a = np.where(hit, -p - sq, c)
        b = np.where(hit, -p + sq, c)
    return a, b, c


def _n2_integrate(spec, beta, observable, level, radial_breaks):
    # z1 in polar coordinates about the origin (trapezoid in angle, which is
    # the rotation average of the observable); z2 = z1 + rho e^{i psi}, so the
    # interaction |z1 - z2|^{2 beta} = rho^{2 beta} is smooth along each ray.
    n = 2
    drop = radial_droplet(spec)
    breaks = sorted({x for x in (*radial_breaks, drop.r_in, drop.r_out) if x > 0})
    r1, wr1 = gauss_panels(spec.sigma_inner, spec.sigma_outer, 6 * level, order=12,
                           breaks=breaks)
    m_th = 24 * level
    th = 2 * np.pi * np.arange(m_th) / m_th
    m_psi = 48 * level
    psi = 2 * np.pi * np.arange(m_psi) / m_psi
    xg, wg = roots_legendre(12)
    xg, wg = 0.5 * (xg + 1), 0.5 * wg
    npan = 3 * level
    # unit-interval panels for rho
    uu = (np.arange(npan)[:, None] + xg[None, :]).ravel() / npan
    wu = np.tile(wg, npan) / npan

    num = 0.0
    den = 0.0
    for i in range(r1.size):
        z1 = r1[i] * np.exp(1j * th)                        # (T,)
        a, b, c = _ray_segments(z1, psi, spec)              # (T, P)
        segs = [(np.zeros_like(a), a), (b, c)]
        w1 = 2 * r1[i] * wr1[i] / m_th * np.exp(-beta * n * spec.g(r1[i]))
        for lo, hi in segs:
            length = hi - lo
            if not np.any(length > 0):
                continue
            rho = lo[..., None] + length[..., None] * uu       # (T, P, U)
            wr = length[..., None] * wu
            z2 = z1[:, None, None] + rho * np.exp(1j * psi)[None, :, None]
            q2 = eval_Q(spec, z2)
            fin = np.isfinite(q2)
            with np.errstate(over="ignore", invalid="ignore"):
                wt = np.where(fin, np.exp(-beta * n * np.where(fin, q2, 0.0)), 0.0)
            # dA(z2) = rho drho dpsi / pi; 2 pi / m_psi per psi node
            wt = wt * wr * rho ** (2 * beta + 1) * (2.0 / m_psi)
            zz1 = np.broadcast_to(z1[:, None, None], z2.shape)
            vals = observable(zz1, z2) if observable is not None else 1.0
            num += w1 * np.sum(wt * vals)
            den += w1 * np.sum(wt)
    return num / den


def quadrature_n2(spec: PotentialSpec, beta: float, observable=None, radial_breaks=(),
                  level: int = 1):
    """E_2^beta[observable(z1, z2)] by tensor quadrature; returns (value, error).

    ``observable`` is vectorized over broadcast complex arrays.  It need not be
    symmetric: the two-particle measure is exchangeable.  Observables that jump
    across circles |z1| = c should list those radii in ``radial_breaks``.
    The error is the change under doubling every node count.
    """
    coarse = _n2_integrate(spec, beta, observable, level, radial_breaks)
    fine = _n2_integrate(spec, beta, observable, 2 * level, radial_breaks)
    err = abs(fine - coarse)
    if not np.isfinite(fine):
        raise QuadratureFailure("two-particle quadrature produced a non-finite value")
    return fine, float(err)


def disk_count_observable(r):
    """E N(0, r) = 2 P(|z1| <= r) by exchangeability; pass r as a radial break."""
    def obs(z1, z2):
        return 2.0 * (np.abs(z1) <= r)
    return obs
