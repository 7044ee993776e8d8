"""Histogram densities, microscopic rescaling, disc counts and bound reports.

All densities are with respect to dA = dx dy / pi, so a bin of Euclidean
area a has measure a / pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .potential import PotentialSpec, q_eff


def batch_stats(series, batches_per_chain: int = 20):
    """Mean and batch-means standard error over one or more chain series.

    Each series is cut into ``batches_per_chain`` consecutive batches; the
    batch means of all chains are pooled.  Falls back to the iid standard
    error when there are fewer than two batches.
    """
    if isinstance(series, np.ndarray) and series.ndim == 1:
        series = [series]
    means, sizes = [], []
    for s in series:
        s = np.asarray(s, dtype=float)
        if s.size == 0:
            continue
        for b in np.array_split(s, min(batches_per_chain, s.size)):
            means.append(b.mean())
            sizes.append(b.size)
    if not means:
        return math.nan, math.nan
    means = np.asarray(means)
    sizes = np.asarray(sizes, dtype=float)
    mean = float(np.sum(means * sizes) / sizes.sum())
    if means.size < 2:
        flat = np.concatenate([np.asarray(s, float) for s in series])
        return mean, float(flat.std(ddof=1) / math.sqrt(flat.size)) if flat.size > 1 else math.inf
    return mean, float(means.std(ddof=1) / math.sqrt(means.size))


# ---------------------------------------------------------------------------
# density fields


@dataclass
class DensityField:
    """Cartesian histogram of particle positions.

    ``sumsq`` holds per-bin sums of squared per-configuration counts, so the
    standard error reflects the actual per-configuration spread (for bins
    that hold at most one particle this is the binomial error).
    """
    bbox: tuple
    nx: int
    ny: int
    counts: np.ndarray = None
    sumsq: np.ndarray = None
    samples: int = 0
    points: int = 0
    spill: int = 0

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros((self.ny, self.nx))
        if self.sumsq is None:
            self.sumsq = np.zeros((self.ny, self.nx))

    @property
    def edges(self):
        x0, x1, y0, y1 = self.bbox
        return np.linspace(x0, x1, self.nx + 1), np.linspace(y0, y1, self.ny + 1)

    @property
    def bin_area(self) -> float:
        x0, x1, y0, y1 = self.bbox
        return (x1 - x0) * (y1 - y0) / (self.nx * self.ny) / math.pi

    @property
    def centers(self):
        ex, ey = self.edges
        cx = 0.5 * (ex[1:] + ex[:-1])
        cy = 0.5 * (ey[1:] + ey[:-1])
        return cx[None, :] + 1j * cy[:, None]

    @property
    def estimate(self):
        if self.samples == 0:
            return np.zeros_like(self.counts)
        return self.counts / (self.samples * self.bin_area)

    @property
    def stderr(self):
        m = self.samples
        if m < 2:
            return np.full_like(self.counts, np.inf if m == 0 else 0.0)
        mean = self.counts / m
        var = np.maximum(self.sumsq / m - mean ** 2, 0.0) * m / (m - 1)
        # a bin never hit still has a one-count resolution floor
        var = np.where(self.counts == 0, 1.0 / m, var)
        return np.sqrt(var / m) / self.bin_area

    def accumulate(self, configs) -> "DensityField":
        z = np.atleast_2d(np.asarray(configs, dtype=complex))
        ex, ey = self.edges
        ix = np.searchsorted(ex, z.real, side="right") - 1
        iy = np.searchsorted(ey, z.imag, side="right") - 1
        # points exactly on the upper edge belong to the last bin
        ix = np.where(z.real == ex[-1], self.nx - 1, ix)
        iy = np.where(z.imag == ey[-1], self.ny - 1, iy)
        ok = (ix >= 0) & (ix < self.nx) & (iy >= 0) & (iy < self.ny)
        flat = np.where(ok, iy * self.nx + ix, -1)
        nb = self.nx * self.ny
        per = np.zeros((z.shape[0], nb + 1))
        rows = np.repeat(np.arange(z.shape[0]), z.shape[1])
        np.add.at(per, (rows, flat.ravel()), 1.0)
        per = per[:, :nb]
        self.counts += per.sum(0).reshape(self.ny, self.nx)
        self.sumsq += (per ** 2).sum(0).reshape(self.ny, self.nx)
        self.samples += z.shape[0]
        self.points += z.size
        self.spill += int((~ok).sum())
        return self

    def merge(self, other: "DensityField") -> "DensityField":
        if (self.bbox, self.nx, self.ny) != (other.bbox, other.nx, other.ny):
            raise ValueError("cannot merge fields with different grids")
        return DensityField(self.bbox, self.nx, self.ny, self.counts + other.counts,
                            self.sumsq + other.sumsq, self.samples + other.samples,
                            self.points + other.points, self.spill + other.spill)

    def lookup(self, z):
        """(estimate, stderr) of the bin containing each z; nan outside bbox."""
        z = np.asarray(z, dtype=complex)
        ex, ey = self.edges
        ix = np.clip(np.searchsorted(ex, z.real, side="right") - 1, 0, self.nx - 1)
        iy = np.clip(np.searchsorted(ey, z.imag, side="right") - 1, 0, self.ny - 1)
        x0, x1, y0, y1 = self.bbox
        ok = (z.real >= x0) & (z.real <= x1) & (z.imag >= y0) & (z.imag <= y1)
        est = np.where(ok, self.estimate[iy, ix], np.nan)
        err = np.where(ok, self.stderr[iy, ix], np.nan)
        return est, err

    def to_rows(self):
        c = self.centers
        return np.column_stack([c.real.ravel(), c.imag.ravel(),
                                self.estimate.ravel(), self.stderr.ravel()])


@dataclass
class PolarField:
    """Histogram in (radius, angular sector); bins have exact dA measure."""
    r_edges: np.ndarray
    sectors: int = 1
    counts: np.ndarray = None
    sumsq: np.ndarray = None
    samples: int = 0

    def __post_init__(self):
        self.r_edges = np.asarray(self.r_edges, dtype=float)
        shape = (self.sectors, self.r_edges.size - 1)
        if self.counts is None:
            self.counts = np.zeros(shape)
        if self.sumsq is None:
            self.sumsq = np.zeros(shape)

    @property
    def centers(self):
        return 0.5 * (self.r_edges[1:] + self.r_edges[:-1])

    @property
    def bin_area(self):
        return np.diff(self.r_edges ** 2) / self.sectors

    def accumulate(self, configs) -> "PolarField":
        z = np.atleast_2d(np.asarray(configs, dtype=complex))
        nr = self.r_edges.size - 1
        ir = np.searchsorted(self.r_edges, np.abs(z), side="right") - 1
        theta = np.mod(np.angle(z), 2 * math.pi)
        it = np.minimum((theta * self.sectors / (2 * math.pi)).astype(int), self.sectors - 1)
        ok = (ir >= 0) & (ir < nr)
        nb = self.sectors * nr
        flat = np.where(ok, it * nr + ir, nb)
        per = np.zeros((z.shape[0], nb + 1))
        rows = np.repeat(np.arange(z.shape[0]), z.shape[1])
        np.add.at(per, (rows, flat.ravel()), 1.0)
        per = per[:, :nb]
        self.counts += per.sum(0).reshape(self.sectors, nr)
        self.sumsq += (per ** 2).sum(0).reshape(self.sectors, nr)
        self.samples += z.shape[0]
        return self

    def merge(self, other: "PolarField") -> "PolarField":
        if self.sectors != other.sectors or not np.array_equal(self.r_edges, other.r_edges):
            raise ValueError("cannot merge fields with different grids")
        return PolarField(self.r_edges, self.sectors, self.counts + other.counts,
                          self.sumsq + other.sumsq, self.samples + other.samples)

    def collapsed(self) -> "PolarField":
        """All sectors pooled into one."""
        # per-config counts of the pooled bin are not recoverable from sumsq;
        # the sum of per-sector variances is used, which ignores cross-sector
        # covariance (negative for a repelling gas, so this is conservative)
        return PolarField(self.r_edges, 1, self.counts.sum(0, keepdims=True),
                          self.sumsq.sum(0, keepdims=True), self.samples)

    @property
    def estimate(self):
        return self.counts / (max(self.samples, 1) * self.bin_area)

    @property
    def stderr(self):
        m = max(self.samples, 2)
        mean = self.counts / m
        var = np.maximum(self.sumsq / m - mean ** 2, 0.0) * m / (m - 1)
        var = np.where(self.counts == 0, 1.0 / m, var)
        return np.sqrt(var / m) / self.bin_area


def density_from_blocks(blocks, make_field, batches: int = 20):
    """Accumulate a field over sample blocks, widening errors by batch means.

    The per-configuration error ignores autocorrelation along a chain.  The
    returned ``stderr`` is the larger of that and the batch-means error over
    ``batches`` consecutive groups of blocks.
    """
    parts = []
    for blk in blocks:
        pts = blk.points if hasattr(blk, "points") else blk
        parts.append(make_field().accumulate(pts))
    if not parts:
        return make_field(), None
    groups = np.array_split(np.arange(len(parts)), min(batches, len(parts)))
    merged = [_merge_all(parts[i] for i in g) for g in groups if len(g)]
    total = _merge_all(merged)
    err = total.stderr
    if len(merged) >= 2:
        ests = np.array([m.estimate for m in merged])
        w = np.array([m.samples for m in merged], dtype=float)
        w = w / w.sum()
        mean = np.tensordot(w, ests, axes=1)
        g = len(merged)
        bm = np.sqrt(np.tensordot(w ** 2, (ests - mean) ** 2, axes=1) * g / (g - 1))
        err = np.maximum(err, bm)
    return total, err


def _merge_all(fields):
    it = iter(fields)
    acc = next(it)
    for f in it:
        acc = acc.merge(f)
    return acc


# ---------------------------------------------------------------------------
# microscopic frames


@dataclass(frozen=True)
class RescaleFrame:
    center: complex
    scale: float
    rotation: complex = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if abs(abs(self.rotation) - 1) > 1e-12:
            raise ValueError("rotation must have modulus one")

    @classmethod
    def standard(cls, p: complex, n: int, delta: float, rotation: complex = 1.0):
        return cls(complex(p), math.sqrt(n * delta), complex(rotation))

    @classmethod
    def induced(cls, n: int, s: float, alpha: float = 0.0):
        from .potential import induced_center
        # n/s equals sqrt(n * delta) for delta = n / s^2
        return cls(induced_center(n, s, alpha), n / s, -1j * complex(math.cos(alpha), math.sin(alpha)))

    def to_micro(self, z):
        return self.rotation * self.scale * (np.asarray(z, dtype=complex) - self.center)

    def from_micro(self, w):
        return self.center + np.asarray(w, dtype=complex) / (self.rotation * self.scale)


def rescaled_density(source, frame: RescaleFrame, w):
    """rho(w) = R(p + w / scale) / scale^2, with errors when ``source`` is a field.

    ``source`` is a DensityField or a callable z -> R(z).  Returns
    (values, stderr); stderr is zero for exact sources.
    """
    z = frame.from_micro(w)
    s2 = frame.scale ** 2
    if isinstance(source, DensityField):
        ex, ey = source.edges
        width = max(ex[1] - ex[0], ey[1] - ey[0]) * frame.scale
        if width > 0.25 + 1e-12:
            raise ValueError(f"bins are {width:.3g} microscopic units wide; need <= 1/4")
        est, err = source.lookup(z)
        return est / s2, err / s2
    vals = np.asarray(source(z), dtype=float) / s2
    return vals, np.zeros_like(vals)


def lipschitz_modulus(values, step: float, h: float, errors=None):
    """Max of |rho(z) - rho(w)| / |z - w| over grid pairs with |z - w| in [h, 2h].

    ``values`` is a 1-d or 2-d array on a regular grid of spacing ``step``.
    With ``errors`` the error of the maximizing quotient is returned as well.
    """
    v = np.asarray(values, dtype=float)
    if h < 2 * step - 1e-12:
        raise ValueError("h must be at least two grid steps")
    e = None if errors is None else np.asarray(errors, dtype=float)
    if v.ndim == 1:
        v = v[None, :]
        e = None if e is None else e[None, :]
    kmax = int(math.floor(2 * h / step + 1e-9))
    best, best_err = 0.0, 0.0
    for dj in range(0, kmax + 1):
        for di in range(-kmax, kmax + 1):
            if dj == 0 and di <= 0:
                continue
            dist = step * math.hypot(di, dj)
            if dist < h - 1e-12 or dist > 2 * h + 1e-12:
                continue
            if dj >= v.shape[0] or abs(di) >= v.shape[1]:
                continue
            a = v[dj:, max(di, 0):v.shape[1] + min(di, 0)]
            b = v[:v.shape[0] - dj, max(-di, 0):v.shape[1] - max(di, 0)]
            q = np.abs(a - b) / dist
            k = int(np.argmax(q))
            if q.flat[k] > best:
                best = float(q.flat[k])
                if e is not None:
                    ea = e[dj:, max(di, 0):v.shape[1] + min(di, 0)]
                    eb = e[:v.shape[0] - dj, max(-di, 0):v.shape[1] - max(di, 0)]
                    best_err = float(math.hypot(ea.flat[k], eb.flat[k]) / dist)
    return (best, best_err) if errors is not None else best


# ---------------------------------------------------------------------------
# disc counts and overcrowding


def count_disk(config, p: complex, r: float):
    """Number of points with |z - p| <= r; vectorized over leading axes."""
    if not r > 0:
        raise ValueError("radius must be positive")
    z = np.asarray(config, dtype=complex)
    out = np.sum(np.abs(z - p) <= r, axis=-1)
    return int(out) if np.ndim(out) == 0 else out


def wilson_stderr(k, m, z: float = 1.0):
    """Half-width of the Wilson score interval at z standard deviations."""
    k = np.asarray(k, dtype=float)
    phat = k / m
    return z * np.sqrt(phat * (1 - phat) / m + z * z / (4 * m * m)) / (1 + z * z / m)


@dataclass
class TailReport:
    M: np.ndarray
    prob: np.ndarray
    stderr: np.ndarray
    samples: int
    quad_a: float = math.nan
    quad_b: float = math.nan

    def usable(self, min_count: int = 10):
        return self.prob * self.samples >= min_count

    def shape_check(self, min_count: int = 10):
        """(decreasing, concave) for log P over M with at least min_count hits."""
        keep = self.usable(min_count)
        lp = np.log(self.prob[keep])
        d1 = np.diff(lp)
        d2 = np.diff(lp, 2)
        return bool(np.all(d1 < 0)), bool(np.all(d2 <= 0))

    def rows(self):
        return np.column_stack([self.M, self.prob, self.stderr])


def overcrowd_tail(counts, n: int | None = None, min_count: int = 10) -> TailReport:
    """Empirical P(N >= M) from disc counts, with Wilson errors and a quadratic fit.

    The fit is log P = -a M^2 + b M + c over M with at least ``min_count`` hits.
    """
    counts = np.asarray(counts, dtype=int).ravel()
    m = counts.size
    top = int(counts.max()) + 1 if m else 0
    if n is not None:
        top = max(top, min(n + 1, top + 1))
    M = np.arange(0, top + 1)
    hist = np.bincount(counts, minlength=top + 1)
    surv = hist[::-1].cumsum()[::-1][:top + 1]
    prob = surv / max(m, 1)
    rep = TailReport(M, prob, wilson_stderr(surv, max(m, 1)), m)
    keep = (surv >= min_count) & (M >= 1)
    if keep.sum() >= 3:
        y = np.log(prob[keep])
        w = np.sqrt(surv[keep])                  # ~ 1 / stderr of log P
        A = np.column_stack([-M[keep] ** 2, M[keep], np.ones(keep.sum())])
        coef = np.linalg.lstsq(A * w[:, None], y * w, rcond=None)[0]
        rep.quad_a, rep.quad_b = float(coef[0]), float(coef[1])
    return rep


# ---------------------------------------------------------------------------
# upper-bound reports


@dataclass
class BoundReport:
    radii: np.ndarray
    density: np.ndarray
    ratio: np.ndarray
    fitted_c: float
    exterior_lhs: np.ndarray
    exterior_rhs: np.ndarray
    exterior_ok: bool

    @property
    def exterior_margin(self) -> float:
        finite = np.isfinite(self.exterior_lhs)
        if not finite.any():
            return math.inf
        return float(np.min(self.exterior_rhs[finite] - self.exterior_lhs[finite]))


def bound_report(spec: PotentialSpec, n: int, beta: float, radii, density, stderr=None) -> BoundReport:
    """Compare R(r) with n Delta min{1, n e^{-n beta q_eff}} and with the explicit exterior bound.

    The exterior check is log R + n beta q_eff <= beta + log(n^2 Delta), with a
    3-sigma allowance in log space when errors are supplied.
    """
    r = np.asarray(radii, dtype=float)
    R = np.asarray(density, dtype=float)
    qe = np.asarray(q_eff(spec, r + 0j), dtype=float)
    nd = n * spec.delta
    with np.errstate(over="ignore", divide="ignore"):
        envelope = nd * np.minimum(1.0, n * np.exp(-n * beta * qe))
        ratio = np.where(envelope > 0, R / envelope, np.where(R > 0, np.inf, 0.0))
        lhs = np.log(R) + n * beta * qe
    rhs = np.full_like(R, beta + math.log(n * n * spec.delta))
    if stderr is not None:
        se = np.asarray(stderr, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            rhs = rhs + np.where(R > 0, 3 * se / R, 0.0)
    ok = bool(np.all(~np.isfinite(lhs) | (lhs <= rhs)))
    return BoundReport(r, R, ratio, float(np.max(ratio[np.isfinite(ratio)])), lhs, rhs, ok)
