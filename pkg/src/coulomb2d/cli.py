"""Command-line front end: flat key=value configs, CSV/JSON artifacts, manifests.

Exit codes: 0 success, 1 a check failed, 2 bad configuration or usage.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, Coulomb2DError, ParseError, PotentialError
from .potential import PotentialSpec, build_induced, ginibre

SUBCOMMANDS = ("droplet", "sample", "density", "oracle", "ward", "berezin", "profiles",
               "thermal", "compare", "overcrowd", "acceptance")

_FLOAT_FMT = "%.17g"


@dataclass
class RunConfig:
    potential: PotentialSpec = field(default_factory=ginibre)
    n: int = 32
    beta: float = 1.0
    chains: int = 4
    sweeps: int = 12_000
    burnin: int = 2_000
    thin: int = 5
    seed: int | None = None
    bins: int = 48
    bbox: tuple = (-1.5, 1.5, -1.5, 1.5)
    radial_points: int = 2048
    frames: tuple = (0j,)
    frame_radius: float = 3.0
    bumps: tuple = ((0.2 + 0.1j, 0.4),)
    lagrange_points: tuple = (0.3 + 0j,)
    anchor: complex = 0j
    anchor_radius: float = 0.1
    disc_center: complex = 0j
    disc_radius: float | None = None
    thermal_tol: float = 1e-5
    induced_s: float | None = None
    acceptance_select: tuple = ()

    def as_dict(self):
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = _jsonable(v.to_config() if f.name == "potential" else v)
        return d


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


# ---------------------------------------------------------------------------
# parsing


def _to_int(s):
    return int(s, 0)


def _to_complex(s):
    s = s.replace(" ", "").replace("i", "j")
    return complex(s)


def _to_complex_list(s):
    return tuple(_to_complex(x) for x in s.split(";") if x.strip())


def _to_bumps(s):
    out = []
    for item in s.split(";"):
        if not item.strip():
            continue
        c, r = item.split("@")
        out.append((_to_complex(c), float(r)))
    return tuple(out)


def _to_bbox(s):
    vals = tuple(float(x) for x in s.split(","))
    if len(vals) != 4 or vals[0] >= vals[1] or vals[2] >= vals[3]:
        raise ValueError("bbox needs x0,x1,y0,y1 with x0<x1 and y0<y1")
    return vals


def _to_int_tuple(s):
    return tuple(int(x) for x in s.split(",") if x.strip())


# key -> (converter, RunConfig attribute or potential field)
_KEYS = {
    "potential.kind": (str, None),
    "potential.delta": (float, "delta"),
    "potential.log_coef": (float, "log_coef"),
    "potential.quartic_coef": (float, "quartic_coef"),
    "potential.const": (float, "const_term"),
    "potential.sigma_outer": (float, "sigma_outer"),
    "potential.sigma_inner": (float, "sigma_inner"),
    "potential.delta0": (float, "delta0"),
    "potential.eta0": (float, "eta0"),
    "induced.s": (float, "induced_s"),
    "n": (_to_int, "n"),
    "beta": (float, "beta"),
    "chains": (_to_int, "chains"),
    "sweeps": (_to_int, "sweeps"),
    "burnin": (_to_int, "burnin"),
    "thin": (_to_int, "thin"),
    "seed": (_to_int, "seed"),
    "grid.bins": (_to_int, "bins"),
    "grid.bbox": (_to_bbox, "bbox"),
    "grid.radial": (_to_int, "radial_points"),
    "frames": (_to_complex_list, "frames"),
    "frames.radius": (float, "frame_radius"),
    "ward.bumps": (_to_bumps, "bumps"),
    "lagrange.points": (_to_complex_list, "lagrange_points"),
    "berezin.anchor": (_to_complex, "anchor"),
    "berezin.radius": (float, "anchor_radius"),
    "overcrowd.center": (_to_complex, "disc_center"),
    "overcrowd.radius": (float, "disc_radius"),
    "tol.thermal": (float, "thermal_tol"),
    "acceptance.select": (_to_int_tuple, "acceptance_select"),
}

_POTENTIAL_FIELDS = {"delta", "log_coef", "quartic_coef", "const_term", "sigma_outer",
                     "sigma_inner", "delta0", "eta0"}


def parse_config(text: str) -> RunConfig:
    """Parse flat ``key = value`` text; every problem is collected before raising."""
    errors = []
    values = {}
    where = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in _KEYS:
            errors.append(f"line {lineno}: unknown key '{key}'")
            continue
        if key in values:
            errors.append(f"line {lineno}: duplicate key '{key}' (first on line {where[key]})")
            continue
        conv = _KEYS[key][0]
        try:
            values[key] = conv(val)
            where[key] = lineno
        except (ValueError, TypeError) as exc:
            errors.append(f"line {lineno}: bad value for '{key}': {exc}")

    cfg = RunConfig()
    pot_kw = {}
    for key, val in values.items():
        attr = _KEYS[key][1]
        if attr in _POTENTIAL_FIELDS:
            pot_kw[attr] = val
        elif attr is not None:
            setattr(cfg, attr, val)

    def bad(key, msg):
        loc = f"line {where[key]}: " if key in where else ""
        errors.append(f"{loc}{key}: {msg}")

    if cfg.n < 1:
        bad("n", "must be >= 1")
    if not cfg.beta > 0 or not math.isfinite(cfg.beta):
        bad("beta", "must be a finite number > 0")
    if cfg.chains < 1:
        bad("chains", "must be >= 1")
    if cfg.thin < 1:
        bad("thin", "must be >= 1")
    if cfg.burnin < 0:
        bad("burnin", "must be >= 0")
    if cfg.sweeps <= cfg.burnin:
        bad("sweeps", "must exceed burnin")
    if cfg.seed is not None and not 0 <= cfg.seed < 2 ** 64:
        bad("seed", "must be an unsigned 64-bit integer")
    if cfg.bins < 1:
        bad("grid.bins", "must be >= 1")
    if cfg.radial_points < 512:
        bad("grid.radial", "must be >= 512")
    if cfg.anchor_radius <= 0:
        bad("berezin.radius", "must be > 0")
    if cfg.disc_radius is not None and cfg.disc_radius <= 0:
        bad("overcrowd.radius", "must be > 0")
    if any(r <= 0 for _, r in cfg.bumps):
        bad("ward.bumps", "radii must be > 0")

    kind = values.get("potential.kind", "ginibre")
    try:
        if kind == "induced":
            if cfg.induced_s is None:
                bad("potential.kind", "induced potential needs induced.s")
            else:
                if pot_kw:
                    bad("potential.kind", "induced potential derives its own coefficients; "
                        f"remove {sorted('potential.' + k for k in pot_kw)}")
                cfg.potential = build_induced(cfg.n, cfg.induced_s)
        elif kind in ("ginibre", "custom"):
            if cfg.induced_s is not None:
                bad("induced.s", "only valid with potential.kind = induced")
            base = {"kind": kind}
            if kind == "ginibre":
                base["delta"] = 1.0
            cfg.potential = PotentialSpec(**{**base, **pot_kw})
        else:
            bad("potential.kind", f"unknown kind '{kind}' (ginibre, custom, induced)")
    except PotentialError as exc:
        errors.append(f"potential: {exc}")
    if errors:
        raise ParseError(errors)
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def write_csv(path: Path, header, rows) -> Path:
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    np.savetxt(path, rows, fmt=_FLOAT_FMT, delimiter=",", header=",".join(header), comments="")
    return path


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions():
    import numba
    import scipy
    from importlib.metadata import PackageNotFoundError, version
    try:
        own = version("artifact")
    except PackageNotFoundError:
        own = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "package": own}


class Run:
    def __init__(self, command, cfg: RunConfig, out: Path, seed: int, threads: int):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self.threads = threads
        self.artifacts = []
        self.t0 = time.perf_counter()
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name, header, rows):
        self.artifacts.append(write_csv(self.out / name, header, rows))

    def json(self, name, obj):
        self.artifacts.append(write_json(self.out / name, obj))

    def add(self, path):
        self.artifacts.append(Path(path))

    def manifest(self, status):
        cfg = json.dumps(self.cfg.as_dict(), sort_keys=True)
        man = {
            "command": self.command,
            "status": status,
            "seed": self.seed,
            "threads": self.threads,
            "config": self.cfg.as_dict(),
            "config_hash": hashlib.sha256(cfg.encode()).hexdigest(),
            "versions": _versions(),
            "wall_time_s": time.perf_counter() - self.t0,
            "artifacts": {p.name: _sha256(p) for p in self.artifacts},
        }
        write_json(self.out / "manifest.json", man)


# ---------------------------------------------------------------------------
# subcommands


def _stream(run: Run):
    from .sampler import run_chains
    c = run.cfg
    return list(run_chains(c.potential, c.n, c.beta, c.chains, c.sweeps, c.burnin, c.thin,
                           run.seed))


def cmd_droplet(run: Run) -> int:
    from .potential import radial_droplet
    spec = run.cfg.potential
    d = radial_droplet(spec)
    run.json("droplet.json", {"r_in": d.r_in, "r_out": d.r_out, "area": spec.area,
                              "hele_shaw": spec.hele_shaw, "potential": spec.to_config()})
    return 0


def cmd_sample(run: Run) -> int:
    from .sampler import write_samples
    path = run.out / "samples.txt"
    write_samples(path, _stream(run))
    run.add(path)
    return 0


def cmd_density(run: Run) -> int:
    from .estimator import DensityField, PolarField, density_from_blocks
    c = run.cfg
    blocks = _stream(run)
    fld, err = density_from_blocks(blocks, lambda: DensityField(c.bbox, c.bins, c.bins))
    cen = fld.centers
    run.csv("density.csv", ["x", "y", "density", "stderr"],
            np.column_stack([cen.real.ravel(), cen.imag.ravel(), fld.estimate.ravel(), err.ravel()]))
    edges = np.linspace(c.potential.sigma_inner, c.potential.sigma_outer, c.bins + 1)
    pf, perr = density_from_blocks(blocks, lambda: PolarField(edges))
    run.csv("radial.csv", ["r", "density", "stderr"],
            np.column_stack([pf.centers, pf.estimate[0], perr[0]]))
    run.json("density.json", {"samples": fld.samples, "spill": fld.spill,
                              "mass": float(fld.estimate.sum() * fld.bin_area)})
    return 0


def cmd_oracle(run: Run) -> int:
    from .oracle import disk_count_observable, exact_r, quadrature_n1, quadrature_n2
    c = run.cfg
    spec = c.potential
    r = np.linspace(spec.sigma_inner, spec.sigma_outer, c.radial_points)
    if c.n == 1:
        dens = quadrature_n1(spec, c.beta, r + 0j)
    elif c.beta == 1:
        dens = exact_r(spec, c.n, r + 0j)
    else:
        raise ConfigError("exact densities need beta = 1 (or n = 1)")
    run.csv("oracle.csv", ["r", "density"], np.column_stack([r, dens]))
    if c.beta == 1:
        from .estimator import RescaleFrame, rescaled_density
        u = np.linspace(-c.frame_radius, c.frame_radius, 241)
        for k, p in enumerate(c.frames):
            # the frame's real axis points outward along the ray through p
            rot = complex(np.conj(p) / abs(p)) if p != 0 else 1.0
            frame = RescaleFrame.standard(p, c.n, spec.delta, rotation=rot)
            rho, _ = rescaled_density(lambda z: exact_r(spec, c.n, z), frame, u + 0j)
            run.csv(f"frame_{k}.csv", ["u", "rho"], np.column_stack([u, rho]))
    if c.n == 2:
        val, err = quadrature_n2(spec, c.beta, disk_count_observable(0.5), radial_breaks=(0.5,))
        run.json("oracle_n2.json", {"disc_count_mean_r0.5": val, "quadrature_error": err})
    return 0


def cmd_ward(run: Run) -> int:
    from .diagnostics import TestFunction, ward_test
    c = run.cfg
    blocks = _stream(run)
    rows, verdicts = [], []
    for center, radius in c.bumps:
        res = ward_test(c.potential, c.beta, blocks, TestFunction(center, radius))
        rows.append([center.real, center.imag, radius, res.mean.real, res.mean.imag,
                     res.stderr.real, res.stderr.imag, res.z_score.real, res.z_score.imag])
        verdicts.append(res.max_abs_z <= 3)
    run.csv("ward.csv", ["cx", "cy", "radius", "mean_re", "mean_im", "stderr_re", "stderr_im",
                         "z_re", "z_im"], rows)
    lag_ok = True
    if c.beta == 1 and c.lagrange_points:
        from .diagnostics import lagrange_identity_test
        from .oracle import exact_r
        pts = np.array(c.lagrange_points)
        rep = lagrange_identity_test(c.potential, 1.0, blocks, pts,
                                     reference=exact_r(c.potential, c.n, pts))
        run.csv("lagrange.csv", ["x", "y", "mean", "stderr", "reference", "z"],
                np.column_stack([pts.real, pts.imag, rep.mean, rep.stderr, rep.reference,
                                 rep.z_score]))
        lag_ok = rep.passed
    passed = all(verdicts) and lag_ok
    run.json("ward.json", {"passed": passed, "per_bump": verdicts, "lagrange_passed": lag_ok})
    return 0 if passed else 1


def cmd_berezin(run: Run) -> int:
    from .diagnostics import berezin_estimate
    c = run.cfg
    b = berezin_estimate(_stream(run), c.anchor, c.anchor_radius, c.bbox, c.bins)
    cen = b.centers
    run.csv("berezin.csv", ["x", "y", "berezin", "stderr"],
            np.column_stack([cen.real.ravel(), cen.imag.ravel(), b.values.ravel(), b.stderr.ravel()]))
    z = (b.normalization - 1) / b.normalization_err if b.normalization_err > 0 else 0.0
    passed = abs(z) <= 3
    run.json("berezin.json", {"normalization": b.normalization, "stderr": b.normalization_err,
                              "z": z, "anchor_hits": b.anchor_hits, "passed": passed})
    return 0 if passed else 1


def cmd_profiles(run: Run) -> int:
    from .diagnostics import (CauchyGrid, boundary_kernel, bulk_kernel, erfc_edge,
                              f_s_profile, log_laplacian_fd, ward_equation_residual)
    c = run.cfg
    u = np.linspace(-c.frame_radius, c.frame_radius, 601)
    cols = [u, erfc_edge(u, c.beta), bulk_kernel(0.0, u, c.beta), boundary_kernel(0.0, u, c.beta)]
    header = ["u", "erfc_edge", "bulk_kernel_0u", "boundary_kernel_0u"]
    if c.induced_s is not None:
        cols.append(f_s_profile(2 * u, c.induced_s))
        header.append("F_s_2u")
    run.csv("profiles.csv", header, np.column_stack(cols))
    grid = CauchyGrid()
    xs = np.linspace(-1, 1, 9)
    U = (xs[None, :] + 1j * xs[:, None]).ravel()
    res_b = ward_equation_residual(lambda a, b: bulk_kernel(a, b, c.beta), c.beta, U, grid)
    res_e = ward_equation_residual(lambda a, b: boundary_kernel(a, b, c.beta), c.beta, U, grid)
    run.csv("ward_residual.csv", ["ux", "uy", "bulk_abs", "boundary_abs"],
            np.column_stack([U.real, U.imag, np.abs(res_b), np.abs(res_e)]))
    run.json("profiles.json", {"dd_log_erfc_at_0": float(log_laplacian_fd(
        lambda p: erfc_edge(p, c.beta), 0.0)), "target_beta1": -2 / math.pi,
        "bulk_residual_sup": float(np.abs(res_b).max()),
        "boundary_residual_sup": float(np.abs(res_e).max())})
    return 0


def cmd_thermal(run: Run) -> int:
    from .errors import NoConvergence
    from .thermal import solve_thermal
    c = run.cfg
    try:
        dens, rep = solve_thermal(c.potential, c.n, c.beta, c.radial_points, c.thermal_tol)
        ok = True
    except NoConvergence as exc:
        dens, rep, ok = None, exc.report, False
    if dens is not None:
        run.csv("thermal.csv", ["r", "density"], np.column_stack([dens.radii, dens.values]))
    run.json("thermal.json", {**asdict(rep), "passed": ok})
    return 0 if ok else 1


def cmd_compare(run: Run) -> int:
    from .oracle import exact_r
    from .thermal import solve_thermal
    c = run.cfg
    if c.beta != 1:
        raise ConfigError("compare needs beta = 1 (exact oracle)")
    dens, rep = solve_thermal(c.potential, c.n, 1.0, c.radial_points, c.thermal_tol)
    r = dens.radii
    R = exact_r(c.potential, c.n, r + 0j)
    nd = c.n * dens.values
    run.csv("compare.csv", ["r", "oracle", "n_thermal", "gap", "gap_over_n"],
            np.column_stack([r, R, nd, R - nd, (R - nd) / c.n]))
    run.json("compare.json", {"sup_gap_over_n": float(np.max(np.abs(R - nd)) / c.n),
                              "thermal_residual": rep.residual})
    return 0


def cmd_overcrowd(run: Run) -> int:
    from .estimator import count_disk, overcrowd_tail
    c = run.cfg
    radius = c.disc_radius or 1 / math.sqrt(c.n * c.potential.delta)
    counts = np.concatenate([count_disk(b.points, c.disc_center, radius) for b in _stream(run)])
    rep = overcrowd_tail(counts, c.n)
    run.csv("tail.csv", ["M", "prob", "stderr"], rep.rows())
    dec, conc = rep.shape_check()
    run.json("tail.json", {"quad_a": rep.quad_a, "quad_b": rep.quad_b, "decreasing": dec,
                           "log_concave": conc, "samples": rep.samples, "radius": radius})
    return 0


def cmd_acceptance(run: Run) -> int:
    from .acceptance import run_all
    results = run_all(set(run.cfg.acceptance_select) or None,
                      echo=lambda s: print(s, flush=True))
    card = [{"criterion": r.number, "title": r.title, "passed": r.passed,
             "seconds": r.seconds, "details": r.details} for r in results]
    run.json("scorecard.json", card)
    return 0 if all(r.passed for r in results) else 1


_DISPATCH = {name: globals()[f"cmd_{name}"] for name in SUBCOMMANDS}


def dispatch(subcommand: str, cfg: RunConfig, out=".", seed=None, threads=None) -> int:
    """Run one subcommand; returns the process exit code."""
    if subcommand not in _DISPATCH:
        print(f"unknown subcommand '{subcommand}'; choose from {', '.join(SUBCOMMANDS)}",
              file=sys.stderr)
        return 2
    if seed is None:
        seed = cfg.seed
    if seed is None:
        env = os.environ.get("COULOMB2D_SEED")
        seed = int(env) if env else 0
    from .sampler import default_threads
    run = Run(subcommand, cfg, Path(out), int(seed), threads or default_threads())
    try:
        code = _DISPATCH[subcommand](run)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        run.manifest("config-error")
        return 2
    except Coulomb2DError as exc:
        print(f"error: {exc}", file=sys.stderr)
        run.manifest("failed")
        return 1
    run.manifest("ok" if code == 0 else "check-failed")
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coulomb2d",
                                description="Two-dimensional Coulomb gas sampler and checks.")
    p.add_argument("subcommand", help=", ".join(SUBCOMMANDS))
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.subcommand not in SUBCOMMANDS:
        parser.print_usage(sys.stderr)
        print(f"unknown subcommand '{args.subcommand}'", file=sys.stderr)
        return 2
    try:
        text = args.config.read_text() if args.config else ""
        cfg = parse_config(text)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except ParseError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    return dispatch(args.subcommand, cfg, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
