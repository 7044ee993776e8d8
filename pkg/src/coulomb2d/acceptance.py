"""The thirteen acceptance criteria as callable checks.

Each ``criterion_k`` returns a CriterionResult holding a pass flag and the
measured numbers.  Seeds are fixed so reruns reproduce the same verdicts.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .diagnostics import (
    CauchyGrid,
    TestFunction,
    boundary_kernel,
    bulk_kernel,
    kernel_mass,
    lagrange_identity_test,
    ward_equation_residual,
    ward_stat,
    ward_test,
)
from .estimator import (
    DensityField,
    PolarField,
    RescaleFrame,
    batch_stats,
    bound_report,
    count_disk,
    density_from_blocks,
    lipschitz_modulus,
    overcrowd_tail,
)
from .oracle import disk_count_observable, exact_r, quadrature_n2, radial_integral
from .potential import PotentialSpec, build_induced, ginibre, radial_droplet
from .sampler import run_chains
from .thermal import (
    boundary_discrepancy,
    bulk_discrepancy,
    solve_thermal,
)
from . import diagnostics

SEED = 20240611


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d}: {self.title} ({self.seconds:.1f} s)"


def _timed(number, title):
    def wrap(fn):
        def run(*a, **kw):
            t0 = time.perf_counter()
            passed, details = fn(*a, **kw)
            return CriterionResult(number, title, bool(passed), details,
                                   time.perf_counter() - t0)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        run.number = number
        run.title = title
        return run
    return wrap


def _blocks(spec, n, beta, chains, retained, thin, burnin, seed):
    return list(run_chains(spec, n, beta, chains, burnin + retained * thin, burnin, thin, seed))


# ---------------------------------------------------------------------------


@_timed(1, "oracle mass integrates to n")
def criterion_1():
    worst = 0.0
    rows = []
    t0 = time.perf_counter()
    cases = [("ginibre", n, ginibre()) for n in (1, 8, 64, 256)]
    # s^2 < n excludes n = 1 for s = 2
    cases += [("induced", n, build_induced(n, 2.0)) for n in (8, 64, 256)]
    for kind, n, spec in cases:
        drop = radial_droplet(spec)
        breaks = [x for x in (drop.r_in, drop.r_out) if x > 0]
        panels = max(64, int(8 * (spec.sigma_outer - spec.sigma_inner) * math.sqrt(n * spec.delta)))
        mass = radial_integral(lambda r: exact_r(spec, n, r + 0j), spec.sigma_inner,
                               spec.sigma_outer, panels=panels, breaks=breaks)
        err = abs(mass - n)
        worst = max(worst, err)
        rows.append((kind, n, mass))
    elapsed = time.perf_counter() - t0
    return worst <= 1e-8 and elapsed < 10, {"max_abs_error": worst, "runtime_s": elapsed,
                                            "cases": rows}


@_timed(2, "MCMC density matches the exact beta=1 density (n=32)")
def criterion_2(retained=100_000, seed=SEED):
    spec = ginibre()
    n = 32
    t0 = time.perf_counter()
    chains = 4
    blocks = _blocks(spec, n, 1.0, chains, retained // chains, 5, 2000, seed)
    # bins of width 0.1: at 1e5 configurations the 5% band, not 3 sigma, is the
    # binding tolerance, so ~500 simultaneous tests do not fail by chance
    nb = 24
    field_, err = density_from_blocks(blocks, lambda: DensityField((-1.2, 1.2, -1.2, 1.2), nb, nb))
    c = field_.centers
    bulk = np.abs(c) <= 0.8
    # exact bin averages on a 5x5 sub-grid
    h = 2.4 / nb
    sub = (np.arange(5) - 2) * h / 5
    offs = (sub[None, :] + 1j * sub[:, None]).ravel()
    ex = exact_r(spec, n, c[bulk][:, None] + offs[None, :]).mean(axis=1)
    dev = np.abs(field_.estimate[bulk] - ex)
    allow = np.maximum(3 * err[bulk], 0.05 * ex)
    elapsed = time.perf_counter() - t0
    return bool(np.all(dev <= allow)) and elapsed < 300, {
        "bins": int(bulk.sum()), "worst_ratio": float(np.max(dev / allow)),
        "configurations": field_.samples, "runtime_s": elapsed}


@_timed(3, "n=2 brute force: disc counts and Ward expectation")
def criterion_3(retained=200_000, seed=SEED, level=1):
    spec = ginibre()
    out = {}
    ok = True
    for beta in (0.5, 1.0, 2.0):
        q, qerr = quadrature_n2(spec, beta, disk_count_observable(0.5), radial_breaks=(0.5,))
        blocks = _blocks(spec, 2, beta, 4, retained // 4, 2, 1000, seed)
        series = [count_disk(b.points, 0, 0.5).astype(float) for b in blocks]
        chains = {}
        for b, s in zip(blocks, series):
            chains.setdefault(b.chain_id, []).append(s)
        mean, se = batch_stats([np.concatenate(v) for v in chains.values()])
        z = (mean - q) / math.hypot(se, qerr)
        f = TestFunction(0.3 + 0.2j, 0.6)
        w, werr = quadrature_n2(spec, beta, lambda z1, z2: ward_stat(
            spec, beta, np.stack(np.broadcast_arrays(z1, z2), -1), f), level=level)
        ok &= abs(z) <= 3 and abs(w) <= 1e-4
        out[beta] = {"quadrature": q, "mcmc": mean, "stderr": se, "z": z, "ward": abs(w),
                     "ward_quad_error": werr}
    return ok, out


WARD_BUMPS = (TestFunction(0.2 + 0.1j, 0.4),     # bulk
              TestFunction(0.75 + 0j, 0.2),       # near the edge, inside the droplet
              TestFunction(-0.9j, 0.5))           # straddling the edge


@_timed(4, "Ward statistic has mean zero")
def criterion_4(retained=40_000, seed=SEED):
    spec = ginibre()
    rows = []
    worst = 0.0
    for n in (16, 32):
        for beta in (0.5, 1.0, 2.0):
            blocks = _blocks(spec, n, beta, 4, retained // 4, 2, 2000, seed + n)
            for f in WARD_BUMPS:
                res = ward_test(spec, beta, blocks, f)
                worst = max(worst, res.max_abs_z)
                rows.append((n, beta, f.center, f.radius, res.z_score))
    return worst <= 3, {"max_abs_z": worst, "runs": rows}


@_timed(5, "Lagrange identity E|l_j|^2 = |Sigma| R / n (n=8)")
def criterion_5(retained=100_000, seed=SEED):
    spec = ginibre()
    n = 8
    pts = np.array([0.3, 0.5 + 0.4j, 1.3])
    blocks = _blocks(spec, n, 1.0, 4, retained // 4, 2, 2000, seed)
    # conditional samples E[|l_j|^2 | others]: same mean, finite variance
    rep = lagrange_identity_test(spec, 1.0, blocks, pts, reference=exact_r(spec, n, pts))
    return rep.passed, {"z": rep.z_score.tolist(), "mean": rep.mean.tolist(),
                        "reference": rep.reference.tolist()}


def edge_profile_check(n=256):
    spec = ginibre()
    u = np.linspace(-3, 3, 601)
    frame = RescaleFrame.standard(1.0, n, spec.delta)
    rho = exact_r(spec, n, frame.from_micro(u)) / n
    sup = float(np.max(np.abs(rho - 0.5 * erfc(math.sqrt(2) * u))))
    h = 0.05
    L = np.log(exact_r(spec, n, frame.from_micro(h * np.arange(-2, 3))) / n)
    d2 = (-L[0] + 16 * L[1] - 30 * L[2] + 16 * L[3] - L[4]) / (12 * h * h)
    d1 = (L[0] - 8 * L[1] + 8 * L[3] - L[4]) / (12 * h)
    along_normal = 0.25 * d2
    # the full two-dimensional Laplacian adds the curvature term f'/r, r = sqrt(n) here
    planar = 0.25 * (d2 + d1 / math.sqrt(n))
    return sup, float(along_normal), float(planar)


@_timed(6, "edge profile and d dbar log rho(0) = -2/pi (n=256)")
def criterion_6():
    sup, normal, planar = edge_profile_check(256)
    target = -2 / math.pi
    return sup <= 0.02 and abs(normal - target) <= 0.02, {
        "sup_profile_error": sup, "dd_log_along_normal": normal,
        "dd_log_with_curvature": planar, "target": target}


@_timed(7, "reference kernels integrate to 1/beta")
def criterion_7():
    worst = 0.0
    rows = []
    for beta in (0.5, 1.0, 2.0):
        for name, k in (("bulk", bulk_kernel), ("boundary", boundary_kernel)):
            for u in (0.3 + 0.1j, -1.0 + 0.5j, 0.8 - 0.2j):
                m = kernel_mass(lambda a, b: k(a, b, beta), u)
                worst = max(worst, abs(m - 1 / beta))
                rows.append((name, beta, u, m))
    return worst <= 1e-6, {"max_abs_error": worst, "values": rows}


@_timed(8, "upper bound: n-uniform constant and explicit exterior bound")
def criterion_8():
    spec = ginibre()
    r = np.linspace(0, spec.sigma_outer, 2001)
    cs, ext = [], []
    for n in (16, 64, 256):
        rep = bound_report(spec, n, 1.0, r, exact_r(spec, n, r + 0j))
        cs.append(rep.fitted_c)
        ext.append(rep.exterior_ok)
    drift = max(cs) / min(cs) - 1
    return drift < 0.1 and all(ext), {"fitted_c": cs, "drift": drift, "exterior_ok": ext}


def _mcmc_edge_modulus(beta, seed, n=32, retained=40_000):
    spec = ginibre()
    scale = math.sqrt(n * spec.delta)
    du = 0.25
    u_edges = np.arange(-3, 3 + 1e-9, du)
    r_edges = 1 + u_edges / scale
    blocks = _blocks(spec, n, beta, 4, retained // 4, 2, 2000, seed)
    fld, err = density_from_blocks(blocks, lambda: PolarField(r_edges))
    rho = fld.estimate[0] / (n * spec.delta)
    e = err[0] / (n * spec.delta)
    return lipschitz_modulus(rho, du, 0.5, e)


@_timed(9, "Lipschitz moduli are n-uniform")
def criterion_9(seed=SEED):
    spec = ginibre()
    step = 0.02
    u = np.arange(-3, 3 + 1e-9, step)
    mods = {}
    ok = True
    for kind, p in (("edge", 1.0), ("bulk", 0.0)):
        vals = []
        for n in (64, 128, 256):
            frame = RescaleFrame.standard(p, n, spec.delta)
            vals.append(lipschitz_modulus(exact_r(spec, n, frame.from_micro(u)) / n, step, 0.25))
        mods[kind] = vals
        # a flat profile has a round-off modulus; ratios of such numbers mean nothing
        if max(vals) > 1e-6:
            ok &= max(vals) / min(vals) <= 1.2
    mc = {}
    for beta in (0.5, 2.0):
        (m1, e1), (m2, e2) = _mcmc_edge_modulus(beta, seed), _mcmc_edge_modulus(beta, seed + 1)
        consistent = abs(m1 - m2) <= 3 * math.hypot(e1, e2)
        ok &= consistent
        mc[beta] = {"moduli": (m1, m2), "errors": (e1, e2), "consistent": consistent}
    return ok, {"exact": mods, "mcmc": mc}


@_timed(10, "overcrowding tail is decreasing and log-concave (n=64)")
def criterion_10(retained=100_000, seed=SEED):
    spec = ginibre()
    n = 64
    t0 = time.perf_counter()
    blocks = _blocks(spec, n, 1.0, 4, retained // 4, 4, 2000, seed)
    counts = np.concatenate([count_disk(b.points, 0, 1 / math.sqrt(n * spec.delta)) for b in blocks])
    rep = overcrowd_tail(counts, n)
    dec, conc = rep.shape_check(10)
    elapsed = time.perf_counter() - t0
    keep = rep.usable(10)
    return dec and conc and elapsed < 600, {
        "M": rep.M[keep].tolist(), "prob": rep.prob[keep].tolist(), "quad_a": rep.quad_a,
        "samples": rep.samples, "runtime_s": elapsed}


def induced_band(n=1024, s=2.0, chains=4, retained=5000, burnin=1000, sectors=4, seed=SEED):
    spec = build_induced(n, s)
    frame = RescaleFrame.induced(n, s)
    du = 0.25
    w_edges = np.arange(-3, 3 + 1e-9, du)
    # Im w = -(n/s)(r - |p|) on the ray through p
    r_edges = np.sort(abs(frame.center) - w_edges / frame.scale)
    blocks = _blocks(spec, n, 1.0, chains, retained, 1, burnin, seed)
    # the band's collective modes decorrelate over a few hundred sweeps; batches of
    # about a thousand sweeps keep batch means independent
    fld, err = density_from_blocks(blocks, lambda: PolarField(r_edges, 1), batches=5 * chains)
    scale2 = frame.scale ** 2
    centers_w = -(fld.centers - abs(frame.center)) * frame.scale
    ref = diagnostics.f_s_profile(2 * centers_w, s)
    # per-configuration band occupancy of each angular sector
    per_chain = {}
    for blk in blocks:
        z = blk.points
        r = np.abs(z)
        sec = np.floor((np.angle(z) % (2 * np.pi)) / (2 * np.pi) * sectors).astype(int)
        in_band = (r >= r_edges[0]) & (r < r_edges[-1])
        occ = np.stack([np.sum(in_band & (sec == k), axis=1) for k in range(sectors)], axis=1)
        per_chain.setdefault(blk.chain_id, []).append(occ)
    occ = {c: np.concatenate(v) for c, v in per_chain.items()}
    return dict(w=centers_w, rho=fld.estimate[0] / scale2, err=err[0] / scale2, ref=ref,
                occupancy=occ, sectors=sectors, blocks=blocks)


def sector_contrasts(occupancy, sectors, batches_per_chain=5):
    """z-scores of each sector's band count against the mean of the other sectors."""
    zs, means = [], []
    for k in range(sectors):
        others = [j for j in range(sectors) if j != k]
        series = [o[:, k] - o[:, others].mean(axis=1) for o in occupancy.values()]
        mean, se = batch_stats(series, batches_per_chain)
        zs.append(mean / se)
        means.append(float(np.mean(np.concatenate([o[:, k] for o in occupancy.values()]))))
    return np.array(zs), np.array(means)


@_timed(11, "induced ensemble band profile matches F_2(2 Im w) (n=1024)")
def criterion_11(seed=SEED):
    band = induced_band(seed=seed)
    dev = np.abs(band["rho"] - band["ref"])
    allow = np.maximum(3 * band["err"], 0.05)
    profile_ok = bool(np.all(dev <= allow))
    zs, means = sector_contrasts(band["occupancy"], band["sectors"])
    sector_ok = bool(np.all(np.abs(zs) <= 3))
    return profile_ok and sector_ok, {"sup_dev": float(dev.max()),
                                      "worst_ratio": float(np.max(dev / allow)),
                                      "sector_counts": means.tolist(),
                                      "sector_z": zs.tolist()}


@_timed(12, "thermal solver, edge gap and bulk correction")
def criterion_12():
    spec = ginibre()
    d = {}
    a, rep_a = solve_thermal(spec, 64, 1.0, init="uniform")
    b, rep_b = solve_thermal(spec, 64, 1.0, init="equilibrium")
    d["residual"] = max(rep_a.residual, rep_b.residual)
    d["l1_two_inits"] = float(np.dot(a.weights, np.abs(a.values - b.values)))
    c, _ = solve_thermal(spec, 10 ** 6, 1.0)
    d["l1_classical"] = float(np.dot(c.weights, np.abs(c.values - spec.delta * (c.radii <= 1))))
    gaps, spuck = [], []
    for n in (64, 128, 256):
        bd = boundary_discrepancy(n)
        gaps.append(bd.gap_over_n)
        spuck.append(abs(bd.spuck_defect))
    d["boundary_gap"] = gaps
    d["spuck_defect"] = max(spuck)
    quartic = PotentialSpec(delta=1.0, quartic_coef=1.0)
    bulk = bulk_discrepancy(quartic, 256, 0.4)
    d["bulk_excess"] = bulk.oracle_excess
    d["bulk_target"] = bulk.target / 2
    gap_ok = min(gaps) > 0 and max(gaps) <= 1.2 * min(gaps) and min(gaps) >= 0.8 * max(gaps)
    ok = (d["residual"] < 1e-5 and d["l1_two_inits"] < 1e-6 and d["l1_classical"] < 1e-2
          and d["spuck_defect"] < 0.02 and gap_ok
          and abs(bulk.oracle_excess - bulk.target / 2) <= 0.1)
    return ok, d


@_timed(13, "Ward-equation residual of the reference kernels")
def criterion_13():
    grid = CauchyGrid()
    xs = np.linspace(-1, 1, 9)
    U = (xs[None, :] + 1j * xs[:, None]).ravel()
    U = U[np.abs(U) <= 1]
    bulk = float(np.max(np.abs(ward_equation_residual(lambda u, v: bulk_kernel(u, v, 1.0), 1.0, U, grid))))
    Ub = (xs[None, :] + 1j * np.array([-1.0, 0.0, 1.0])[:, None]).ravel()
    bdry = float(np.max(np.abs(ward_equation_residual(lambda u, v: boundary_kernel(u, v, 1.0), 1.0, Ub, grid))))
    return bulk <= 0.02 and bdry <= 0.05, {"bulk_sup": bulk, "boundary_sup": bdry}


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12,
            criterion_13]


def run_all(select=None, echo=print):
    results = []
    for fn in CRITERIA:
        if select and fn.number not in select:
            continue
        res = fn()
        if echo:
            echo(res.line())
        results.append(res)
    return results
