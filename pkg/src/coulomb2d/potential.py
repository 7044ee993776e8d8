"""Radial external potentials of Hele-Shaw type with an annular hard wall.

The family is

    Q(z) = delta*|z|^2 + log_coef*log(1/|z|) + quartic_coef*|z|^4 + const_term

on the closed annulus ``sigma_inner <= |z| <= sigma_outer`` and ``+inf``
outside.  Area is measured with ``dA = dx dy / pi`` everywhere, so
``laplacian_density`` returns the Laplacian ``d dbar Q`` (a quarter of the
usual Laplacian), which is also the equilibrium density on the droplet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    BadParameters,
    DropletTouchesWall,
    NotHeleShaw,
    OutsideDomain,
    PoleAtOrigin,
)

INF = math.inf  # hard-wall sentinel; never stored in densities

DEFAULT_DELTA0 = 0.1
DEFAULT_ETA0 = 0.25


@dataclass(frozen=True)
class Droplet:
    r_in: float
    r_out: float

    def contains(self, r):
        return (r >= self.r_in) & (r <= self.r_out)


@dataclass(frozen=True)
class PotentialSpec:
    delta: float = 1.0
    log_coef: float = 0.0
    quartic_coef: float = 0.0
    const_term: float = 0.0
    sigma_outer: float = 2.0
    sigma_inner: float = 0.0
    delta0: float = DEFAULT_DELTA0
    eta0: float = DEFAULT_ETA0
    kind: str = "custom"

    def __post_init__(self):
        for name in ("delta", "log_coef", "quartic_coef", "const_term",
                     "sigma_outer", "sigma_inner", "delta0", "eta0"):
            if not math.isfinite(getattr(self, name)):
                raise BadParameters(f"{name} must be finite")
        if self.delta <= 0 or self.delta0 <= 0 or self.eta0 <= 0:
            raise BadParameters("delta, delta0 and eta0 must be positive")
        if self.log_coef < 0 or self.quartic_coef < 0:
            raise BadParameters("log_coef and quartic_coef must be >= 0")
        if not 0 <= self.sigma_inner < self.sigma_outer:
            raise BadParameters("need 0 <= sigma_inner < sigma_outer")
        if self.delta < self.delta0:
            raise BadParameters(f"delta={self.delta} is below delta0={self.delta0}")
        if self.log_coef > 0 and self.sigma_inner <= 0 and _radial_droplet(self).r_in <= 0:
            raise BadParameters("log_coef > 0 needs a hole in the wall or in the droplet")
        drop = _radial_droplet(self)
        if wall_distance(self, drop) < 2 * self.eta0:
            raise DropletTouchesWall(
                f"droplet [{drop.r_in:.6g}, {drop.r_out:.6g}] is closer than "
                f"2*eta0={2 * self.eta0:g} to the wall "
                f"[{self.sigma_inner:g}, {self.sigma_outer:g}]")

    @property
    def hele_shaw(self) -> bool:
        return self.quartic_coef == 0

    @property
    def area(self) -> float:
        """Normalized area |Sigma| = int_Sigma dA."""
        return self.sigma_outer ** 2 - self.sigma_inner ** 2

    def g(self, r):
        """Radial profile Q(r) without the wall."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            logterm = -self.log_coef * np.log(r) if self.log_coef else 0.0
        return (self.delta * r ** 2 + logterm + self.quartic_coef * r ** 4
                + self.const_term)

    def dg(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return (2 * self.delta * r - self.log_coef / r
                    + 4 * self.quartic_coef * r ** 3)

    def r_dg(self, r):
        """r * g'(r); increasing in r for this family."""
        r = np.asarray(r, dtype=float)
        return 2 * self.delta * r ** 2 - self.log_coef + 4 * self.quartic_coef * r ** 4

    def in_sigma(self, z):
        r = np.abs(z)
        return (r <= self.sigma_outer) & (r >= self.sigma_inner)

    def to_config(self) -> dict:
        return {
            "potential.kind": self.kind,
            "potential.delta": self.delta,
            "potential.log_coef": self.log_coef,
            "potential.quartic_coef": self.quartic_coef,
            "potential.const": self.const_term,
            "potential.sigma_outer": self.sigma_outer,
            "potential.sigma_inner": self.sigma_inner,
        }


def ginibre(sigma_outer=2.0, **kw) -> PotentialSpec:
    return PotentialSpec(delta=1.0, sigma_outer=sigma_outer, kind="ginibre", **kw)


def _bisect(f, lo, hi, tol=1e-12):
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def _radial_droplet(spec: PotentialSpec) -> Droplet:
    # the droplet is {0 <= r g'(r) <= 2}; r g' is increasing in r
    if spec.hele_shaw:
        b, d = spec.log_coef, spec.delta
        return Droplet(math.sqrt(max(0.0, b / (2 * d))), math.sqrt((2 + b) / (2 * d)))
    hi = 1.0
    while spec.r_dg(hi) < 2:
        hi *= 2
    r_out = _bisect(lambda r: spec.r_dg(r) - 2, 0.0, hi)
    r_in = _bisect(lambda r: spec.r_dg(r), 0.0, r_out) if spec.log_coef > 0 else 0.0
    return Droplet(r_in, r_out)


def radial_droplet(spec: PotentialSpec) -> Droplet:
    """Droplet for any spec in the family, quartic included (numerical radii)."""
    return _radial_droplet(spec)


def wall_distance(spec: PotentialSpec, drop: Droplet | None = None) -> float:
    drop = drop or _radial_droplet(spec)
    outer = spec.sigma_outer - drop.r_out
    if spec.sigma_inner > 0:
        return min(outer, drop.r_in - spec.sigma_inner)
    return outer


def _require_hele_shaw(spec):
    if not spec.hele_shaw:
        raise NotHeleShaw("operation restricted to Hele-Shaw potentials (quartic_coef == 0)")


def eval_Q(spec: PotentialSpec, z):
    """Q(z), with +inf outside Sigma.  Accepts scalars or arrays."""
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    inside = spec.in_sigma(z)
    with np.errstate(invalid="ignore"):
        q = np.where(inside, spec.g(np.where(inside, r, 1.0)), INF)
    return q[()] if q.ndim == 0 else q


def _check_interior(spec, z):
    r = np.abs(z)
    if np.any((r >= spec.sigma_outer) | (r <= spec.sigma_inner) & (spec.sigma_inner > 0)):
        raise OutsideDomain("point not in the interior of Sigma")
    if spec.log_coef > 0 and np.any(r == 0):
        raise PoleAtOrigin("log term is singular at the origin")


def dQ_unchecked(spec: PotentialSpec, z):
    z = np.asarray(z, dtype=complex)
    zb = np.conj(z)
    out = spec.delta * zb + 2 * spec.quartic_coef * (z * zb) * zb
    if spec.log_coef:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = out - spec.log_coef / (2 * z)
    return out


def eval_dQ(spec: PotentialSpec, z):
    """Holomorphic derivative dQ = (Q_x - i Q_y)/2."""
    _check_interior(spec, z)
    out = dQ_unchecked(spec, z)
    return out[()] if out.ndim == 0 else out


def laplacian_density(spec: PotentialSpec, z):
    """d dbar Q = delta + 4 c4 |z|^2; the log term is harmonic off the origin."""
    _check_interior(spec, z)
    out = spec.delta + 4 * spec.quartic_coef * np.abs(np.asarray(z, dtype=complex)) ** 2
    return out[()] if np.ndim(out) == 0 else out


def log_laplacian_laplacian(spec: PotentialSpec, r):
    """d dbar log(d dbar Q) at radius r (zero for Hele-Shaw specs)."""
    r = np.asarray(r, dtype=float)
    d, c = spec.delta, spec.quartic_coef
    # log(d + 4c r^2) is radial; d dbar = (f'' + f'/r)/4
    return 4 * c * d / (d + 4 * c * r ** 2) ** 2


def droplet(spec: PotentialSpec) -> Droplet:
    _require_hele_shaw(spec)
    drop = _radial_droplet(spec)
    if wall_distance(spec, drop) < 2 * spec.eta0:
        raise DropletTouchesWall("droplet too close to the wall")
    return drop


def _obstacle_radial(spec, drop, r):
    r = np.asarray(r, dtype=float)
    qin = float(spec.g(drop.r_in)) if drop.r_in > 0 else float(spec.g(0.0))
    qout = float(spec.g(drop.r_out))
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = np.full_like(r, qin)
        outer = qout + 2 * np.log(np.maximum(r, 1e-300) / drop.r_out)
        mid = spec.g(np.clip(r, max(drop.r_in, 1e-300), drop.r_out))
    return np.where(r < drop.r_in, inner, np.where(r > drop.r_out, outer, mid))


def obstacle(spec: PotentialSpec, z):
    """Obstacle function: Q on the droplet, flat in the hole, 2 log r growth outside."""
    _require_hele_shaw(spec)
    drop = droplet(spec)
    out = _obstacle_radial(spec, drop, np.abs(np.asarray(z, dtype=complex)))
    return out[()] if out.ndim == 0 else out


def q_eff(spec: PotentialSpec, z):
    """Effective potential Q - obstacle; +inf outside Sigma, zero on the droplet."""
    _require_hele_shaw(spec)
    drop = droplet(spec)
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    inside = spec.in_sigma(z)
    rr = np.where(inside, r, drop.r_out)
    val = spec.g(rr) - _obstacle_radial(spec, drop, rr)
    on_s = drop.contains(rr)
    val = np.where(on_s, 0.0, np.maximum(val, 0.0))
    out = np.where(inside, val, INF)
    return out[()] if out.ndim == 0 else out


def build_induced(n: int, s: float, eta0: float | None = None) -> PotentialSpec:
    """Almost-circular induced potential with g(1) = 1 and g'(1) = 2."""
    if n < 1 or s <= 0 or s * s >= n:
        raise BadParameters(f"need n >= 1, s > 0 and s^2 < n (got n={n}, s={s})")
    delta = n / s ** 2
    b = 2 * delta - 2
    a = 1 - delta
    r_in = math.sqrt(1 - s * s / n)
    margin = min(0.1, r_in / 2)
    if eta0 is None:
        eta0 = 0.4 * margin
    return PotentialSpec(delta=delta, log_coef=b, const_term=a,
                         sigma_outer=1 + margin, sigma_inner=r_in - margin,
                         delta0=min(DEFAULT_DELTA0, delta), eta0=eta0, kind="induced")


def induced_center(n: int, s: float, alpha: float = 0.0) -> complex:
    if s * s >= n:
        raise BadParameters("s^2 must be < n")
    return 0.5 * (1 + math.sqrt(1 - s * s / n)) * complex(math.cos(alpha), math.sin(alpha))


def rescale_map(n: int, s: float, alpha: float, z):
    """T_n(z) = -i e^{i alpha} (n/s) (z - p_n): the annulus becomes a horizontal strip."""
    p = induced_center(n, s, alpha)
    rot = -1j * complex(math.cos(alpha), math.sin(alpha))
    return rot * (n / s) * (np.asarray(z, dtype=complex) - p)


def with_wall(spec: PotentialSpec, sigma_outer=None, sigma_inner=None) -> PotentialSpec:
    kw = {}
    if sigma_outer is not None:
        kw["sigma_outer"] = sigma_outer
    if sigma_inner is not None:
        kw["sigma_inner"] = sigma_inner
    return replace(spec, **kw)
