"""Thermal equilibrium density: minimizer of energy plus entropy / (n beta).

For a radial potential on the annulus Sigma the functional is

    F[d] = int U^d d dA + int Q d dA + (1/(n beta)) int d log d dA,
    U^d(r) = int log(1/|z - w|) d(w) dA(w) = -2 int d(p) log max(r, p) p dp,

and its minimizer satisfies Q + 2 U^d + log(d)/(n beta) = const on Sigma.
Applying d dbar gives  -d + d dbar Q + (1/(n beta)) d dbar log d = 0.

The solve runs multiplicative (mirror-descent) steps first and finishes with
damped Newton steps on log d.  Both are accepted only when F decreases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve

from .errors import NoConvergence
from .potential import PotentialSpec, laplacian_density, log_laplacian_laplacian, radial_droplet


@dataclass
class RadialDensity:
    radii: np.ndarray
    values: np.ndarray

    @property
    def step(self) -> float:
        return float(self.radii[1] - self.radii[0])

    @property
    def weights(self):
        """Quadrature weights for int f dA = int f 2 r dr (last row of the cumulative rule)."""
        return 2 * self.radii * _cumulative_weights(self.radii.size, self.step)[-1]

    @property
    def mass(self) -> float:
        return float(np.dot(self.weights, self.values))

    def normalized(self) -> "RadialDensity":
        return RadialDensity(self.radii, self.values / self.mass)

    def log_values(self):
        with np.errstate(divide="ignore"):
            return np.log(self.values)

    def __call__(self, r):
        """Density at arbitrary radii (cubic spline in log density)."""
        v = self.log_values()
        v = np.maximum(v, -745.0)
        return np.exp(CubicSpline(self.radii, v)(np.asarray(r, dtype=float)))


@dataclass
class ThermalSolveReport:
    iterations: int
    free_energy: float
    residual: float
    mass_defect: float
    history: list = field(default_factory=list)
    converged: bool = False
    mirror_steps: int = 0
    newton_steps: int = 0


def radial_grid(spec: PotentialSpec, m: int = 2048) -> np.ndarray:
    return np.linspace(spec.sigma_inner, spec.sigma_outer, m)


def _derivative_matrix(m: int, h: float) -> np.ndarray:
    """Fourth-order first-derivative matrix (one-sided five-point rows at the ends)."""
    D = np.zeros((m, m))
    c = np.array([1, -8, 0, 8, -1]) / (12 * h)
    for i in range(2, m - 2):
        D[i, i - 2:i + 3] = c
    left = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    left1 = np.array([-3, -10, 18, -6, 1]) / (12 * h)
    D[0, :5] = left
    D[1, :5] = left1
    D[-1, -5:] = -left[::-1]
    D[-2, -5:] = -left1[::-1]
    return D


@lru_cache(maxsize=8)
def _cumulative_weights(m: int, h: float) -> np.ndarray:
    """Matrix C with (C f)_i ~ int_{r_0}^{r_i} f dr.

    Cumulative trapezoid with the Euler-Maclaurin end correction
    -h^2/12 (f'(r_i) - f'(r_0)).  The remaining error varies smoothly with
    r_i, so finite differences of the result stay accurate.
    """
    C = np.tril(np.full((m, m), h))
    C[:, 0] = 0.5 * h
    C[np.arange(m), np.arange(m)] = 0.5 * h
    C[0, 0] = 0.0
    D = _derivative_matrix(m, h)
    C -= h * h / 12 * (D - D[0][None, :])
    C.flags.writeable = False
    return C


def _derivative(f, h):
    """Banded application of _derivative_matrix, O(m)."""
    out = np.empty_like(f)
    out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    out[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    out[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    out[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    out[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return out


def _cumulative(f, h):
    """(C f) from _cumulative_weights by prefix sums."""
    out = np.zeros_like(f)
    out[1:] = np.cumsum(0.5 * h * (f[1:] + f[:-1]))
    df = _derivative(f, h)
    return out - h * h / 12 * (df - df[0])


def _log_r(r):
    with np.errstate(divide="ignore"):
        return np.where(r > 0, np.log(np.where(r > 0, r, 1.0)), 0.0)


def potential_matrix(r) -> np.ndarray:
    """Matrix A with (A d)_i = U^d(r_i), consistent with log_potential_radial."""
    r = np.asarray(r, dtype=float)
    C = _cumulative_weights(r.size, float(r[1] - r[0]))
    logr = _log_r(r)
    inner = C * (2 * r)[None, :]
    g = C * (2 * r * logr)[None, :]
    return -(logr[:, None] * inner + (g[-1][None, :] - g))


def log_potential_radial(density: RadialDensity) -> np.ndarray:
    """U(r_i) = -2 int d(p) log max(r_i, p) p dp by corrected prefix sums.

    Both pieces are cumulative integrals: log r * int_0^r d 2p dp plus
    int_r^sigma d log(p) 2p dp.
    """
    r, d = density.radii, density.values
    h = density.step
    logr = _log_r(r)
    inner = _cumulative(2 * r * d, h)
    cg = _cumulative(2 * r * logr * d, h)
    return -(logr * inner + (cg[-1] - cg))


def _entropy_density(d):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(d > 0, d * np.log(np.where(d > 0, d, 1.0)), 0.0)


def free_energy(spec: PotentialSpec, n: int, beta: float, density: RadialDensity) -> float:
    """F = int U d dA + int Q d dA + (1/(n beta)) int d log d dA  (0 log 0 = 0)."""
    d = density.values
    w = density.weights
    U = log_potential_radial(density)
    Q = spec.g(np.maximum(density.radii, 1e-300)) if spec.log_coef else spec.g(density.radii)
    Q = np.where(d > 0, Q, 0.0)
    return float(np.dot(w, U * d + Q * d) + np.dot(w, _entropy_density(d)) / (n * beta))


def radial_dd(values, r):
    """d dbar of a radial function, 1/4 (f'' + f'/r), by fourth-order differences.

    Near r = 0 the function is extended evenly; at r = 0 the limit f''(0)/2 is used.
    """
    f = np.asarray(values, dtype=float)
    h = r[1] - r[0]
    m = f.size
    if r[0] == 0:
        ext = np.concatenate([f[2:0:-1], f])
        off = 2
    else:
        ext = f
        off = 0
    d1 = np.full(m, np.nan)
    d2 = np.full(m, np.nan)
    j = np.arange(m) + off
    ok = (j >= 2) & (j + 2 < ext.size)
    j = j[ok]
    s = [ext[j + k] for k in range(-2, 3)]
    with np.errstate(divide="ignore", invalid="ignore"):
        d1[ok] = (s[0] - 8 * s[1] + 8 * s[3] - s[4]) / (12 * h)
        d2[ok] = (-s[0] + 16 * s[1] - 30 * s[2] + 16 * s[3] - s[4]) / (12 * h * h)
        out = 0.25 * (d2 + d1 / r)
    if r[0] == 0:
        out[0] = 0.5 * d2[0]
    return out


def del_residual(spec: PotentialSpec, n: int, beta: float, density: RadialDensity):
    """Pointwise -d + d dbar Q + (1/(n beta)) d dbar log d on the grid (nan at the ends)."""
    r = density.radii
    lap = spec.delta + 4 * spec.quartic_coef * r ** 2
    return -density.values + lap + radial_dd(density.log_values(), r) / (n * beta)


def _middle_mask(spec, r, frac=0.9):
    drop = radial_droplet(spec)
    w = drop.r_out - drop.r_in
    pad = 0.5 * (1 - frac) * w
    return (r >= drop.r_in + pad) & (r <= drop.r_out - pad)


def _initial(spec, r, init):
    if isinstance(init, RadialDensity):
        return init.values.copy()
    if init == "uniform":
        return np.full(r.shape, 1.0 / spec.area)
    if init == "equilibrium":
        drop = radial_droplet(spec)
        lap = spec.delta + 4 * spec.quartic_coef * r ** 2
        # the equilibrium measure itself has zeros; a tiny floor keeps log finite
        return np.where(drop.contains(r), lap, 1e-300)
    raise ValueError(f"unknown initialization {init!r}")


def solve_thermal(spec: PotentialSpec, n: int, beta: float = 1.0, grid: int = 2048,
                  tol: float = 1e-5, init="uniform", mirror_steps: int = 20,
                  max_newton: int = 60, raise_on_failure: bool = True):
    """Minimize F on a uniform radial grid over Sigma.

    Returns (RadialDensity, ThermalSolveReport).  Convergence requires the
    sup of the variational-equation residual over the middle 90% of the
    droplet below ``tol`` and a last free-energy decrease below 1e-12.
    """
    if grid < 512:
        raise ValueError("grid resolution must be at least 512")
    nb = n * beta
    r = radial_grid(spec, grid)
    dens = RadialDensity(r, _initial(spec, r, init)).normalized()
    w = dens.weights
    A = potential_matrix(r)
    Q = spec.g(np.maximum(r, 1e-300)) if spec.log_coef else spec.g(r)
    F = free_energy(spec, n, beta, dens)
    report = ThermalSolveReport(0, F, math.inf, abs(dens.mass - 1), [F])
    mask = _middle_mask(spec, r)

    def grad(d):
        v = np.log(np.maximum(d, 1e-300))
        return Q + 2 * (A @ d) + v / nb, v

    # multiplicative steps: d <- d exp(-eta G) / Z
    eta = nb
    for _ in range(mirror_steps):
        G, v = grad(dens.values)
        while eta > 1e-12:
            vn = v - eta * (G - np.dot(w, dens.values * G))
            vn -= vn.max()
            cand = RadialDensity(r, np.exp(vn)).normalized()
            Fc = free_energy(spec, n, beta, cand)
            if Fc <= F:
                break
            eta *= 0.5
        else:
            break
        decrease = F - Fc
        dens, F = cand, Fc
        report.history.append(F)
        report.mirror_steps += 1
        eta = min(nb, 2 * eta)
        if decrease < 1e-12:
            break

    # Newton on (log d, lambda): Q + 2 A e^v + v/(n beta) - lambda = 0, w.e^v = 1
    v = np.log(np.maximum(dens.values, 1e-300))
    lam = float(np.dot(w, dens.values * grad(dens.values)[0]))
    m = r.size
    last_dec = math.inf
    for _ in range(max_newton):
        d = np.exp(v)
        res = Q + 2 * (A @ d) + v / nb - lam
        J = np.empty((m + 1, m + 1))
        J[:m, :m] = 2 * A * d[None, :]
        J[np.arange(m), np.arange(m)] += 1.0 / nb
        J[:m, m] = -1.0
        J[m, :m] = w * d
        J[m, m] = 0.0
        rhs = -np.concatenate([res, [np.dot(w, d) - 1.0]])
        step = solve(J, rhs)
        dv, dl = step[:m], step[m]
        t = 1.0
        while True:
            vn = v + t * dv
            cand = RadialDensity(r, np.exp(np.minimum(vn, 700.0)))
            cand = cand.normalized()
            Fc = free_energy(spec, n, beta, cand)
            if Fc <= F + 1e-15 * abs(F) or t < 1e-8:
                break
            t *= 0.5
        if t < 1e-8:
            break
        last_dec = F - Fc
        v = np.log(np.maximum(cand.values, 1e-300))
        v = np.where(cand.values > 0, v, vn)
        lam = lam + t * dl
        dens, F = cand, min(F, Fc)
        report.history.append(F)
        report.newton_steps += 1
        resid = del_residual(spec, n, beta, dens)
        sup = float(np.nanmax(np.abs(resid[mask])))
        report.residual = sup
        live = cand.values > 1e-8
        if sup < tol and last_dec < 1e-12 and np.max(np.abs(t * dv[live])) < 1e-8:
            report.converged = True
            break
    report.iterations = report.mirror_steps + report.newton_steps
    report.free_energy = F
    report.mass_defect = abs(dens.mass - 1)
    if not report.converged and raise_on_failure:
        raise NoConvergence(f"thermal solve stalled: residual {report.residual:.3g} "
                            f"after {report.iterations} iterations", report)
    return dens, report


# ---------------------------------------------------------------------------
# comparisons with the beta = 1 oracle


@dataclass
class BoundaryDiscrepancy:
    n: int
    oracle_dd_log: float        # d dbar log rho at u = 0, rescaled exact density
    oracle_dd_log_flat: float   # same along the normal line only (curvature dropped)
    thermal_dd_log: float       # d dbar log rho~ at u = 0
    thermal_rho0: float
    spuck_defect: float         # thermal_dd_log - (rho~(0) - 1)
    profile_gap: float          # sup |rho - rho~| over |u| <= window
    gap_over_n: float           # n^-1 sup |R_n - n delta_n| near the edge


def _dd_log_radial(f, r0, h):
    """d dbar log f at radius r0 for a radial f, 5-point differences of width h."""
    pts = r0 + h * np.arange(-2, 3)
    L = np.log(f(pts))
    d1 = (L[0] - 8 * L[1] + 8 * L[3] - L[4]) / (12 * h)
    d2 = (-L[0] + 16 * L[1] - 30 * L[2] + 16 * L[3] - L[4]) / (12 * h * h)
    return 0.25 * (d2 + d1 / r0), 0.25 * d2


def boundary_discrepancy(n: int, beta: float = 1.0, grid: int = 2048, window: float = 3.0,
                         sigma_outer: float = 2.0, solution=None) -> BoundaryDiscrepancy:
    """Exact vs thermal densities rescaled about the Ginibre edge point p = 1."""
    from .oracle import exact_r
    from .potential import ginibre
    spec = ginibre(sigma_outer)
    if solution is None:
        solution, _ = solve_thermal(spec, n, beta, grid)
    scale = math.sqrt(n * spec.delta)
    h = 0.05 / scale
    oracle = lambda rr: exact_r(spec, n, np.asarray(rr) + 0j) / n
    o_full, o_flat = _dd_log_radial(oracle, 1.0, h)
    t_full, _ = _dd_log_radial(solution, 1.0, h)
    # d dbar in the microscopic variable is 1/(n Delta) of the macroscopic one
    o_full, o_flat, t_full = (x / (n * spec.delta) for x in (o_full, o_flat, t_full))
    rho0 = float(solution(1.0)) / spec.delta
    u = np.linspace(-window, window, 601)
    rr = 1.0 + u / scale
    R = exact_r(spec, n, rr + 0j)
    nd = n * solution(rr)
    gap = np.abs(R - nd)
    return BoundaryDiscrepancy(n, float(o_full), float(o_flat), float(t_full), rho0,
                               float(t_full - (rho0 - 1)), float(gap.max() / (n * spec.delta)),
                               float(gap.max() / n))


@dataclass
class BulkDiscrepancy:
    n: int
    p: complex
    target: float               # d dbar log d dbar Q (p)
    oracle_excess: float        # R_n(p) - n d dbar Q(p), tends to target / 2
    thermal_excess: float       # n delta_n(p) - n d dbar Q(p), tends to target / beta
    gap: float                  # |R_n(p) - n delta_n(p)|


def bulk_discrepancy(spec: PotentialSpec, n: int, p: complex, beta: float = 1.0,
                     grid: int = 2048, solution=None) -> BulkDiscrepancy:
    from .oracle import exact_r
    if solution is None:
        solution, _ = solve_thermal(spec, n, beta, grid)
    r = abs(p)
    lap = float(laplacian_density(spec, complex(p)))
    target = float(log_laplacian_laplacian(spec, r))
    R = float(exact_r(spec, n, complex(p)))
    nd = n * float(solution(r))
    return BulkDiscrepancy(n, complex(p), target, R - n * lap, nd - n * lap, abs(R - nd))
