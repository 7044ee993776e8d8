"""Ward and Lagrange identity checks, Berezin kernels, reference profiles.

The Ward statistic for a test function f is

    W[f] = (1/beta) sum_j df(z_j) - n sum_j (f dQ)(z_j)
           + 1/2 sum_{j != k} (f(z_j) - f(z_k)) / (z_j - z_k),

with d = (d_x - i d_y)/2.  It has mean zero under the Gibbs measure for every
beta > 0, which makes it a sharp test of a sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.integrate import quad
from scipy.special import erfc, erfcx, logsumexp

from .errors import SupportViolation
from .estimator import batch_stats
from .potential import PotentialSpec, dQ_unchecked, eval_Q

# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFunction:
    """Smooth bump exp(1 - R^2/(R^2 - |z-c|^2)) on D(c, R), zero outside."""
    __test__ = False  # not a pytest class

    center: complex
    radius: float
    kind: str = "bump"

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        s = np.abs(z - self.center) ** 2
        r2 = self.radius ** 2
        inside = s < r2
        with np.errstate(divide="ignore", over="ignore"):
            val = np.exp(1.0 - r2 / np.where(inside, r2 - s, 1.0))
        return np.where(inside, val, 0.0)

    def d(self, z):
        """Holomorphic derivative: f * (-R^2 conj(z-c) / (R^2 - |z-c|^2)^2)."""
        z = np.asarray(z, dtype=complex)
        w = z - self.center
        s = np.abs(w) ** 2
        r2 = self.radius ** 2
        inside = s < r2
        den = np.where(inside, r2 - s, 1.0)
        with np.errstate(over="ignore", invalid="ignore"):
            out = self(z) * (-r2 * np.conj(w) / den ** 2)
        return np.where(inside, out, 0.0)

    def check(self, spec: PotentialSpec):
        c = abs(self.center)
        if c + self.radius > spec.sigma_outer - spec.eta0:
            raise SupportViolation("bump support reaches the outer wall margin")
        if spec.sigma_inner > 0 and c - self.radius < spec.sigma_inner + spec.eta0:
            raise SupportViolation("bump support reaches the inner wall margin")
        if spec.log_coef > 0 and c <= self.radius:
            raise SupportViolation("bump support contains the log pole")


class ZeroFunction(TestFunction):
    def __init__(self):
        super().__init__(0j, 1.0, "zero")

    def __call__(self, z):
        return np.zeros(np.shape(z))

    def d(self, z):
        return np.zeros(np.shape(z), dtype=complex)

    def check(self, spec):
        return None


@numba.njit(cache=True)
def _pair_term(z, fz):
    """sum_{j<k} (f_j - f_k)/(z_j - z_k) per row, Kahan compensated."""
    m, n = z.shape
    out = np.zeros(m, dtype=np.complex128)
    for r in range(m):
        sre = 0.0
        cre = 0.0
        sim = 0.0
        cim = 0.0
        for j in range(n):
            fj = fz[r, j]
            for k in range(j + 1, n):
                df = fj - fz[r, k]
                if df == 0.0:
                    continue
                dz = z[r, j] - z[r, k]
                if dz == 0:
                    continue
                t = df / dz
                y = t.real - cre
                tt = sre + y
                cre = (tt - sre) - y
                sre = tt
                y = t.imag - cim
                tt = sim + y
                cim = (tt - sim) - y
                sim = tt
        out[r] = complex(sre, sim)
    return out


def ward_stat(spec: PotentialSpec, beta: float, config, f: TestFunction,
              pair_term: bool = True):
    """Ward statistic of one configuration (1-d) or a stack of them (..., n)."""
    f.check(spec)
    z = np.asarray(config, dtype=complex)
    shape = z.shape[:-1]
    z2 = z.reshape(-1, z.shape[-1])
    n = z2.shape[1]
    fz = f(z2)
    dfz = f.d(z2)
    live = fz != 0
    dq = np.zeros_like(z2)
    if np.any(live):
        dq[live] = dQ_unchecked(spec, z2[live])
    out = (1.0 / beta) * dfz.sum(axis=1) - n * (fz * dq).sum(axis=1)
    if pair_term and n == 2:
        dz = z2[:, 0] - z2[:, 1]
        df = fz[:, 0] - fz[:, 1]
        out = out + np.divide(df, dz, out=np.zeros_like(dz), where=dz != 0)
    elif pair_term:
        out = out + _pair_term(np.ascontiguousarray(z2), np.ascontiguousarray(fz))
    out = out.reshape(shape)
    return out[()] if out.ndim == 0 else out


@dataclass
class WardResult:
    mean: complex
    stderr: complex        # real part: stderr of Re, imag part: stderr of Im
    z_score: complex
    samples: int

    @property
    def max_abs_z(self) -> float:
        return max(abs(self.z_score.real), abs(self.z_score.imag))


def _as_blocks(stream):
    """Accept SampleBlocks, a list of them, or a plain (m, n) array."""
    if isinstance(stream, np.ndarray):
        return [(0, stream)]
    return [(blk.chain_id, blk.points) for blk in stream]


def ward_test(spec: PotentialSpec, beta: float, stream, f: TestFunction,
              batches_per_chain: int = 20, pair_term: bool = True) -> WardResult:
    """Chain-blocked mean and standard error of W[f]; z-scores per component."""
    per_chain: dict[int, list] = {}
    for cid, pts in _as_blocks(stream):
        per_chain.setdefault(cid, []).append(ward_stat(spec, beta, pts, f, pair_term))
    series = [np.concatenate(v) for _, v in sorted(per_chain.items())]
    total = sum(s.size for s in series)
    mre, sre = batch_stats([s.real for s in series], batches_per_chain)
    mim, sim = batch_stats([s.imag for s in series], batches_per_chain)
    zs = complex(mre / sre if sre > 0 else 0.0, mim / sim if sim > 0 else 0.0)
    return WardResult(complex(mre, mim), complex(sre, sim), zs, total)


# ---------------------------------------------------------------------------
# Lagrange functions


def lagrange_log_abs(spec: PotentialSpec, config, j: int, z):
    """log|l_j(z)| for the weighted Lagrange polynomial with l_j(z_k) = delta_jk.

    ``config`` may be (n,) or (m, n); ``z`` broadcasts against the leading axes.
    Returns -inf at z = z_k (k != j).
    """
    pts = np.asarray(config, dtype=complex)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    n = pts.shape[1]
    z = np.asarray(z, dtype=complex)
    zz = z.reshape(z.shape + (1,) * 0)
    others = np.delete(pts, j, axis=1)                     # (m, n-1)
    zj = pts[:, j]                                         # (m,)
    # broadcast: result shape (m,) + z.shape
    ext = (slice(None),) + (None,) * z.ndim
    zb = zz[None, ...]
    with np.errstate(divide="ignore"):
        num = np.sum(np.log(np.abs(zb[..., None] - others[ext + (slice(None),)])), axis=-1)
        den = np.sum(np.log(np.abs(zj[:, None] - others)), axis=1)
    qz = eval_Q(spec, z)
    qj = eval_Q(spec, zj)
    out = num - den[ext] - 0.5 * n * (qz[None, ...] - qj[ext])
    return out[0] if single else out


@dataclass
class LagrangeReport:
    points: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    reference: np.ndarray
    z_score: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.z_score) <= 3))


def lagrange_samples(spec, beta, pts, z):
    """mean over j of |l_j(z)|^{2 beta}, per configuration: shape (m, len(z))."""
    pts = np.atleast_2d(np.asarray(pts, dtype=complex))
    n = pts.shape[1]
    acc = 0.0
    for j in range(n):
        acc = acc + np.exp(2 * beta * lagrange_log_abs(spec, pts, j, z))
    return acc / n


def _log_poly_coeffs_abs2(roots):
    """log sum_k |c_k|^2 h_k needs the coefficients of prod (x - w_i), batched over rows."""
    m, d = roots.shape
    c = np.zeros((m, d + 1), dtype=complex)
    c[:, 0] = 1.0                                  # c[:, k] multiplies x^k
    for i in range(d):
        shifted = np.zeros_like(c)
        shifted[:, 1:] = c[:, :-1]
        c = shifted - roots[:, i:i + 1] * c
    return c


def lagrange_conditional(spec: PotentialSpec, beta: float, pts, z, radial=None):
    """E[|l_j(z)|^{2 beta} | other particles] = |Sigma| p(z | others), averaged over j.

    Integrating out z_j removes the heavy tail of |l_j|^{2 beta} (its
    variance diverges at beta >= 1 from near-coincident pairs).  At beta = 1
    with a radial potential the normalizer is exact:
    int |P|^2 e^{-nQ} dA = sum_k |c_k|^2 h_k for P = prod_{i != j} (x - z_i).
    Otherwise it is computed by polar quadrature over Sigma.
    """
    from .oracle import gauss_panels, radial_norms
    pts = np.atleast_2d(np.asarray(pts, dtype=complex))
    m, n = pts.shape
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    qz = eval_Q(spec, z)
    acc = np.zeros((m, z.size))
    exact = beta == 1
    if exact:
        lh = radial_norms(spec, n).log_norms
    else:
        rr, wr = radial if radial is not None else gauss_panels(
            spec.sigma_inner, spec.sigma_outer, 32, order=8)
        th = 2 * np.pi * np.arange(96) / 96
        nodes = (rr[:, None] * np.exp(1j * th)[None, :]).ravel()
        wts = (np.repeat(2 * rr * wr, th.size) / th.size)
        lw = np.log(wts) - beta * n * eval_Q(spec, nodes)
    for j in range(n):
        others = np.delete(pts, j, axis=1)
        with np.errstate(divide="ignore"):
            lnum = 2 * beta * np.sum(np.log(np.abs(z[None, :, None] - others[:, None, :])), axis=2)
        if exact:
            c = _log_poly_coeffs_abs2(others)
            with np.errstate(divide="ignore"):
                terms = 2 * np.log(np.abs(c)) + lh[None, :]
            lden = logsumexp(terms, axis=1)
        else:
            lden = np.empty(m)
            for i in range(m):
                with np.errstate(divide="ignore"):
                    lv = 2 * beta * np.sum(np.log(np.abs(nodes[:, None] - others[i][None, :])), axis=1)
                lden[i] = logsumexp(lv + lw)
        acc += np.exp(lnum - beta * n * qz[None, :] - lden[:, None])
    return spec.area * acc / n


def lagrange_identity_test(spec: PotentialSpec, beta: float, stream, z, reference=None,
                           batches_per_chain: int = 20, conditional: bool = True) -> LagrangeReport:
    """Monte-Carlo E|l_j(z)|^{2 beta} against |Sigma| R_n(z) / n.

    ``reference`` holds R_n(z) (e.g. the exact beta=1 density).  Every index
    j has the same law, so the mean over j is used.  With ``conditional``
    each sample is E[|l_j(z)|^{2 beta} | others] (see lagrange_conditional);
    otherwise the raw, heavy-tailed |l_j(z)|^{2 beta}.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    per_chain: dict[int, list] = {}
    n = None
    for cid, pts in _as_blocks(stream):
        n = pts.shape[1]
        vals = (lagrange_conditional(spec, beta, pts, z) if conditional
                else lagrange_samples(spec, beta, pts, z))
        per_chain.setdefault(cid, []).append(vals)
    series = [np.concatenate(v, axis=0) for _, v in sorted(per_chain.items())]
    means, errs = [], []
    for i in range(z.size):
        m, s = batch_stats([x[:, i] for x in series], batches_per_chain)
        means.append(m)
        errs.append(s)
    means, errs = np.array(means), np.array(errs)
    ref = spec.area * np.asarray(reference, dtype=float) / n if reference is not None \
        else np.full(z.size, np.nan)
    zs = (means - ref) / np.where(errs > 0, errs, np.inf)
    return LagrangeReport(z, means, errs, ref, zs)


# ---------------------------------------------------------------------------
# Berezin kernel


@dataclass
class BerezinField:
    anchor: complex
    anchor_radius: float
    edges_x: np.ndarray
    edges_y: np.ndarray
    values: np.ndarray          # B(u, v) on v-bin centers, dA units
    stderr: np.ndarray
    density: np.ndarray         # R(v) on the same bins
    anchor_density: float
    anchor_hits: int
    normalization: float
    normalization_err: float

    @property
    def centers(self):
        cx = 0.5 * (self.edges_x[1:] + self.edges_x[:-1])
        cy = 0.5 * (self.edges_y[1:] + self.edges_y[:-1])
        return cx[None, :] + 1j * cy[:, None]

    @property
    def bin_area(self) -> float:
        return (self.edges_x[1] - self.edges_x[0]) * (self.edges_y[1] - self.edges_y[0]) / math.pi


def _berezin_batch_sums(pts, anchor, anchor_radius, ex, ey):
    m, n = pts.shape
    hist_all = np.histogram2d(pts.imag.ravel(), pts.real.ravel(), bins=[ey, ex])[0]
    inside = np.abs(pts - anchor) <= anchor_radius
    hits = int(inside.sum())
    cond = np.zeros_like(hist_all)
    rows, cols = np.nonzero(inside)
    if hits:
        others = pts[rows]                       # (hits, n)
        mask = np.ones_like(others, dtype=bool)
        mask[np.arange(hits), cols] = False
        o = others[mask]
        cond = np.histogram2d(o.imag, o.real, bins=[ey, ex])[0]
    return m, hits, hist_all, cond


def berezin_estimate(stream, anchor: complex, anchor_radius: float, bbox, bins,
                     batches: int = 40) -> BerezinField:
    """Estimate B(u, v) = R(v) - R_2(u, v)/R(u) with the anchor u a small disc.

    Errors come from a delete-one-batch jackknife over ``batches`` groups of
    consecutive configurations.
    """
    x0, x1, y0, y1 = bbox
    nx, ny = (bins, bins) if np.isscalar(bins) else bins
    ex = np.linspace(x0, x1, nx + 1)
    ey = np.linspace(y0, y1, ny + 1)
    pts_all = np.concatenate([p for _, p in _as_blocks(stream)], axis=0)
    groups = np.array_split(np.arange(pts_all.shape[0]), batches)
    sums = [_berezin_batch_sums(pts_all[g], anchor, anchor_radius, ex, ey) for g in groups]
    M = np.array([s[0] for s in sums], dtype=float)
    H = np.array([s[1] for s in sums], dtype=float)
    A = np.array([s[2] for s in sums])
    C = np.array([s[3] for s in sums])
    cell = (ex[1] - ex[0]) * (ey[1] - ey[0]) / math.pi

    def est(m, h, a, c):
        dens = a / (m * cell)
        cond = c / (h * cell) if h > 0 else np.zeros_like(c)
        return dens - cond, dens

    full, dens = est(M.sum(), H.sum(), A.sum(0), C.sum(0))
    jk = np.array([est(M.sum() - M[i], H.sum() - H[i], A.sum(0) - A[i], C.sum(0) - C[i])[0]
                   for i in range(batches)])
    g = batches
    se = np.sqrt((g - 1) / g * np.sum((jk - jk.mean(0)) ** 2, axis=0))
    norm = float(full.sum() * cell)
    norms = jk.sum(axis=(1, 2)) * cell
    norm_se = float(np.sqrt((g - 1) / g * np.sum((norms - norms.mean()) ** 2)))
    anchor_area = anchor_radius ** 2
    return BerezinField(anchor, anchor_radius, ex, ey, full, se, dens,
                        float(H.sum() / (M.sum() * anchor_area)), int(H.sum()),
                        norm, norm_se)


# ---------------------------------------------------------------------------
# reference profiles


def bulk_kernel(u, v, beta=1.0):
    return np.exp(-beta * np.abs(np.asarray(u) - np.asarray(v)) ** 2)


def boundary_kernel(u, v, beta=1.0):
    """e^{-beta|u-v|^2} |F(sqrt(beta)(u + conj v))|^2 / F(2 sqrt(beta) Re u), F(z) = erfc(z/sqrt2)/2.

    At beta = 1 this is the Berezin kernel of the Ginibre edge (boundary along
    the imaginary axis, droplet on Re u < 0).  Its diagonal is the erfc
    profile and its v-integral is 1/beta.
    """
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    c = math.sqrt(beta / 2)
    lnum = 2 * (_log_abs_erfc(c * (u + np.conj(v))) - math.log(2))
    lden = _log_abs_erfc(2 * c * u.real + 0j) - math.log(2)
    return np.exp(-beta * np.abs(u - v) ** 2 + lnum - lden)


def _log_abs_erfc(z):
    """log|erfc(z)| without overflow for large |Im z|."""
    z = np.asarray(z, dtype=complex)
    z2 = z * z
    out = np.empty(z.shape)
    pos = z.real >= 0
    # right half plane: erfc = erfcx * e^{-z^2}
    out[pos] = np.log(np.abs(erfcx(z[pos]))) - z2[pos].real
    neg = ~pos
    tame = neg & (z2.real > 0)
    out[tame] = np.log(np.abs(erfc(z[tame])))
    wild = neg & ~tame
    # erfc(z) = 2 - erfcx(-z) e^{-z^2} and |e^{z^2}| <= 1 here
    zw = z[wild]
    out[wild] = np.log(np.abs(2 * np.exp(z2[wild]) - erfcx(-zw))) - z2[wild].real
    return out


def erfc_edge(u, beta=1.0):
    return 0.5 * erfc(math.sqrt(2 * beta) * np.real(np.asarray(u)))


def f_s_profile(x, s):
    """(2 pi)^{-1/2} int_{-s/2}^{s/2} exp(-(x-t)^2/2) dt, via erfc."""
    x = np.asarray(x, dtype=float)
    r2 = math.sqrt(2.0)
    return 0.5 * (erfc((x - s / 2) / r2) - erfc((x + s / 2) / r2))


def ref_profiles(kind: str, beta: float = 1.0, *args):
    table = {
        "bulk_kernel": lambda u, v: bulk_kernel(u, v, beta),
        "boundary_kernel": lambda u, v: boundary_kernel(u, v, beta),
        "erfc_edge": lambda u: erfc_edge(u, beta),
        "f_s": lambda x, s: f_s_profile(x, s),
    }
    if kind not in table:
        raise ValueError(f"unknown profile kind {kind!r}; choose from {sorted(table)}")
    return table[kind](*args)


# ---------------------------------------------------------------------------
# Ward equation residual


def _rect_primitive_re(x, y):
    # d^2/dxdy of this is x / (x^2 + y^2)
    r2 = x * x + y * y
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(r2 > 0, 0.5 * y * np.log(r2), 0.0)
        b = np.where(x != 0, x * np.arctan(y / np.where(x != 0, x, 1.0)), 0.0)
    return a - y + b


def cell_average_inverse(x0, x1, y0, y1):
    """(1/area) int_{[x0,x1]x[y0,y1]} dx dy / (x + i y), exact."""
    def corners(F, a0, a1, b0, b1):
        return F(a1, b1) - F(a0, b1) - F(a1, b0) + F(a0, b0)
    re = corners(_rect_primitive_re, x0, x1, y0, y1)
    im = -corners(lambda x, y: _rect_primitive_re(y, x), x0, x1, y0, y1)
    return (re + 1j * im) / ((x1 - x0) * (y1 - y0))


@dataclass
class CauchyGrid:
    """Cell centers w and weights so that sum B(u+w) K = int B(v)/(u-v) dA(v)."""
    half_width: float = 6.0
    step: float = 0.05
    w: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = int(round(self.half_width / self.step))
        c = self.step * np.arange(-m, m + 1)
        X, Y = np.meshgrid(c, c)
        h = self.step / 2
        avg = cell_average_inverse(X - h, X + h, Y - h, Y + h)   # avg of 1/w
        # v = u + w, so 1/(u - v) = -1/w; dA = dxdy / pi
        self.w = X + 1j * Y
        self.weights = -avg * self.step ** 2 / math.pi


def cauchy_transform(kernel, u, grid: CauchyGrid | None = None):
    """int kernel(u, v) / (u - v) dA(v) for each u, piecewise-constant product rule."""
    grid = grid or CauchyGrid()
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    out = np.empty(u.shape, dtype=complex)
    for i, uu in enumerate(u.ravel()):
        out.ravel()[i] = np.sum(kernel(uu, uu + grid.w) * grid.weights)
    return out


def log_laplacian_fd(f, u, h=1e-3):
    """d dbar log f at u by the 5-point stencil (d dbar = Laplacian / 4)."""
    u = np.asarray(u, dtype=complex)
    lf = lambda p: np.log(f(p))
    lap = (lf(u + h) + lf(u - h) + lf(u + 1j * h) + lf(u - 1j * h) - 4 * lf(u)) / h ** 2
    return 0.25 * lap


def ward_equation_residual(kernel, beta: float, u, grid: CauchyGrid | None = None,
                           h: float = 0.05):
    """Residual of  dbar_u int B(u,v)/(u-v) dA(v) = B(u,u) - 1 - (1/beta) d dbar log B(u,u).

    ``kernel(u, v)`` must be vectorized in v.  Returns the complex residual at
    each u (left side minus right side).
    """
    grid = grid or CauchyGrid()
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    ct = lambda p: cauchy_transform(kernel, p, grid)
    dbar = 0.5 * ((ct(u + h) - ct(u - h)) / (2 * h) + 1j * (ct(u + 1j * h) - ct(u - 1j * h)) / (2 * h))
    diag = lambda p: np.real(kernel(p, p))
    rhs = diag(u) - 1 - (1 / beta) * log_laplacian_fd(diag, u, h)
    return dbar - rhs


def kernel_mass(kernel, u, half_width=12.0):
    """int kernel(u, v) dA(v).

    Gauss-Legendre panels across Re v (the kernels decay like Gaussians
    there) and adaptive quadrature on the whole line in Im v, where the edge
    kernel only decays like an inverse square.
    """
    u = complex(u)
    x, w = np.polynomial.legendre.leggauss(32)
    edges = np.linspace(u.real - half_width, u.real + half_width, 49)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    hw = 0.5 * (edges[1] - edges[0])
    xs = (mid + hw * x[None, :]).ravel()
    ws = np.tile(hw * w, edges.size - 1)

    def row(y):
        return float(np.sum(np.real(kernel(u, xs + 1j * (u.imag + y))) * ws))

    total = 0.0
    for lo, hi in ((-np.inf, -4.0), (-4.0, 0.0), (0.0, 4.0), (4.0, np.inf)):
        total += quad(row, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    return total / math.pi
