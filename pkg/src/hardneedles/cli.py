"""Command-line entry point.

Usage::

    hardneedles SUBCOMMAND [--config FILE] [--set key=value ...] [--out DIR]

Subcommands: tmatrix, stability, mkv-evolve, mkv-stationary, simulate,
pde3d, hydro. Every run writes CSV data and ``manifest.json`` (resolved
config, version, seed, wall time) into the output directory.

Exit codes: 0 success, 1 invalid input, 2 numerical failure. The
environment variable ``NEEDLES_THREADS`` caps the threads used by compiled
kernels.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .config import PHI_C, ConfigError, RunConfig, format_config, parse_config, write_csv, write_manifest
from .errors import NumericalError

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


def _times(s: str) -> np.ndarray:
    return np.array(sorted({float(v) for v in s.split(",") if v.strip()}))


# ---------------------------------------------------------------------------
# subcommands: each returns (output file names, results for the manifest)
# ---------------------------------------------------------------------------

def cmd_tmatrix(cfg: RunConfig, out: Path):
    from .conformal import build_t_table, sc_constant, sc_constant_quadrature, t_matrix

    th = np.linspace(cfg["theta_min"], np.pi - cfg["theta_min"], cfg["n_points"])
    a = np.array([(sc_constant_quadrature(t) if cfg["method"] == "quadrature" else sc_constant(t)).value for t in th])
    T = np.array([t_matrix(t, method=cfg["method"]).as_array() for t in th])
    write_csv(out / "fig2.csv", ["theta", "T11", "T12", "T22"], [th, T[:, 0, 0], T[:, 0, 1], T[:, 1, 1]])
    write_csv(out / "tmatrix.csv", ["theta", "a1", "a2", "T11", "T12", "T22"],
              [th, a.real, a.imag, T[:, 0, 0], T[:, 0, 1], T[:, 1, 1]])
    table = build_t_table(cfg["table_size"])
    write_csv(out / "ttable.csv", ["theta", "T11", "T12", "T22"], [table.grid, *table.values.T])
    mu = t_matrix(np.pi / 2).t11
    eig = np.linalg.eigvalsh(T)
    return ["fig2.csv", "tmatrix.csv", "ttable.csv"], {"mu": mu, "min_eigenvalue": float(eig.min())}


def cmd_stability(cfg: RunConfig, out: Path):
    from .homogeneous import critical_phi, stability_report

    r = stability_report(cfg["phi"], cfg["D_R"], cfg["nmax"], formula=cfg["formula"])
    write_csv(out / "stability.csv", ["n", "growth_rate"], [r.modes, r.rates])
    phi_c, n_c = critical_phi()
    print(f"critical phi = {phi_c:.17g} (mode {n_c}); phi = {cfg['phi']:.6g}, most unstable mode {r.most_unstable}, "
          f"rate {r.rates[r.most_unstable - 1]:.6g}")
    return ["stability.csv"], {"phi_c": phi_c, "critical_mode": n_c, "most_unstable": int(r.most_unstable)}


def _angular_grid(M):
    return np.arange(M) * np.pi / M


def cmd_mkv_evolve(cfg: RunConfig, out: Path):
    from .homogeneous import evolve, stationary_fixed_point, aligned_l2_distance

    th = _angular_grid(cfg["M"])
    p0 = 1 / np.pi + cfg["p0_cos2"] * np.cos(2 * th)
    ts = _times(cfg["save_times"])
    ts = ts[ts <= cfg["t_end"] + 1e-12]
    tr = evolve(p0, cfg["phi"], cfg["D_R"], cfg["t_end"], dt=cfg["dt"] or None, save_times=ts)
    names = [f"p_t{t:g}" for t in tr.times]
    write_csv(out / "fig3b.csv", ["theta"] + names, [th, *tr.profiles])
    res = {"final_mass": float(tr.profiles[-1].mean() * np.pi)}
    if cfg["phi"] > PHI_C:
        ps = stationary_fixed_point(p0, cfg["phi"]).density
        res["aligned_l2_to_stationary"] = aligned_l2_distance(tr.profiles[-1], ps)
    return ["fig3b.csv"], res


def cmd_mkv_stationary(cfg: RunConfig, out: Path):
    from .homogeneous import stationary_fixed_point

    th = _angular_grid(cfg["M"])
    p0 = 1 / np.pi + cfg["p0_cos2"] * np.cos(2 * th)
    phis = PHI_C + np.arange(cfg["sweep_count"]) / 2 if cfg["sweep"] else np.array([cfg["phi"]])
    profiles, residuals = [], []
    for phi in phis:
        r = stationary_fixed_point(p0, float(phi), tol=cfg["tol"])
        if not r.converged:
            raise NumericalError(f"stationary iteration did not converge at phi={phi:.6g} (residual {r.residual:.3e})")
        profiles.append(r.density.values)
        residuals.append(r.residual)
    name = "fig3a.csv" if cfg["sweep"] else "stationary.csv"
    write_csv(out / name, ["theta"] + [f"p_phi{phi:.6g}" for phi in phis], [th, *profiles])
    return [name], {"phi": phis, "residual": residuals, "max_p": [float(p.max()) for p in profiles]}


def cmd_simulate(cfg: RunConfig, out: Path):
    from .geometry import Torus2
    from .particle import DriftSpec, SimParams, count_overlaps, isotropic_order_baseline, run

    drift = DriftSpec()
    if cfg["drift_fx"] or cfg["drift_fy"] or cfg["drift_fR"]:
        drift = DriftSpec("constant", [cfg["drift_fx"], cfg["drift_fy"]], cfg["drift_fR"])
    try:
        prm = SimParams(cfg["N"], cfg["eps"], cfg["D_T"], cfg["D_R"], cfg["dt"], Torus2(cfg["Lx"], cfg["Ly"]),
                        drift, cfg["seed"])
    except ValueError as e:
        raise ConfigError(str(e)) from None
    r = run(prm, cfg["t_end"], cfg["observe_every"], angle_bins=cfg["angle_bins"], space_bins=cfg["space_bins"])
    write_csv(out / "observables.csv", ["time", "order", "acceptance", "msd_x", "msd_theta"],
              [r.times, r.order, r.acceptance, r.msd_x, r.msd_theta])
    edges = np.linspace(0, np.pi, cfg["angle_bins"] + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    write_csv(out / "angle_hist.csv", ["theta"] + [f"t{t:g}" for t in r.times], [mids, *r.angle_hist])
    s = r.final_state
    write_csv(out / "final_state.csv", ["x", "y", "theta"], [s.x[:, 0], s.x[:, 1], s.theta])
    S0, sd = isotropic_order_baseline(prm.N)
    return ["observables.csv", "angle_hist.csv", "final_state.csv"], {
        "phi": prm.phi, "final_order": float(r.order[-1]), "isotropic_baseline": S0, "baseline_std": sd,
        "overlaps_final": count_overlaps(s, prm.eps, prm.box)}


def cmd_pde3d(cfg: RunConfig, out: Path):
    from .conformal import build_t_table
    from .geometry import Torus2
    from .kinetic import KineticParams, PhaseDensity, PhaseGrid, evolve

    g = PhaseGrid(cfg["Nx"], cfg["Ny"], cfg["Ntheta"], Torus2(cfg["Lx"], cfg["Ly"]))
    X, Y, T = g.mesh()
    rng = np.random.default_rng(cfg["seed"])
    v = np.zeros(g.shape)
    for _ in range(4):
        a, b, n = rng.integers(-2, 3, size=3)
        v += rng.uniform(-1, 1) * np.cos(2 * np.pi * (a * X / g.box.Lx + b * Y / g.box.Ly) + 2 * n * T
                                         + rng.uniform(0, 2 * np.pi))
    v *= cfg["amplitude"] / max(np.abs(v).max(), 1e-300)
    p0 = (1 + v) / (g.box.area * np.pi)
    prm = KineticParams(cfg["D_T"], cfg["D_R"], cfg["phi"], table=build_t_table(cfg["table_size"]))
    ts = np.linspace(0, cfg["t_end"], cfg["n_snapshots"])
    tr = evolve(PhaseDensity(p0, g), prm, cfg["t_end"], dt=cfg["dt"] or None, save_times=ts)
    Xs, Ys = np.meshgrid(g.x, g.y, indexing="ij")
    rows_t = np.concatenate([np.full(Xs.size, s.time) for s in tr.snapshots])
    write_csv(out / "rho.csv", ["time", "x", "y", "rho"],
              [rows_t, np.tile(Xs.ravel(), len(ts)), np.tile(Ys.ravel(), len(ts)),
               np.concatenate([s.spatial_marginal().ravel() for s in tr.snapshots])])
    write_csv(out / "angular_marginal.csv", ["theta"] + [f"t{s.time:g}" for s in tr.snapshots],
              [g.theta, *[s.angular_marginal() for s in tr.snapshots]])
    write_csv(out / "nematic_field.csv", ["x", "y", "order"],
              [Xs.ravel(), Ys.ravel(), tr.snapshots[-1].nematic_order_field().ravel()])
    np.save(out / "p_final.npy", tr.snapshots[-1].values)
    return ["rho.csv", "angular_marginal.csv", "nematic_field.csv", "p_final.npy"], {
        "mass": tr.masses, "dt": tr.dt}


def cmd_hydro(cfg: RunConfig, out: Path):
    from .geometry import Torus2
    from .hydro import SpatialDensity, disk_coefficient, effective_diameter, evolve, needle_coefficient

    box = Torus2(cfg["Lx"], cfg["Ly"])
    x = (np.arange(cfg["Nx"]) + 0.5) * box.Lx / cfg["Nx"]
    y = (np.arange(cfg["Ny"]) + 0.5) * box.Ly / cfg["Ny"]
    X, Y = np.meshgrid(x, y, indexing="ij")
    r2 = (X - box.Lx / 2) ** 2 + (Y - box.Ly / 2) ** 2
    rho = 1 + cfg["bump_amplitude"] * np.exp(-r2 / (2 * cfg["bump_width"] ** 2))
    rho /= rho.sum() * (box.Lx / cfg["Nx"]) * (box.Ly / cfg["Ny"])
    rho0 = SpatialDensity(rho, box)
    phi = (cfg["N"] - 1) * cfg["eps"] ** 2
    eps_d = effective_diameter(cfg["eps"])
    ts = np.linspace(0, cfg["t_end"], cfg["n_snapshots"])
    a = evolve(rho0, needle_coefficient(phi), cfg["t_end"], save_times=ts)
    b = evolve(rho0, disk_coefficient(cfg["N"], eps_d), cfg["t_end"], save_times=ts)
    c = evolve(rho0, 0.0, cfg["t_end"], save_times=ts)
    n = X.size
    write_csv(out / "density.csv", ["time", "x", "y", "rho_needle", "rho_disk", "rho_free"],
              [np.repeat(ts, n), np.tile(X.ravel(), len(ts)), np.tile(Y.ravel(), len(ts)),
               np.concatenate([s.values.ravel() for s in a.snapshots]),
               np.concatenate([s.values.ravel() for s in b.snapshots]),
               np.concatenate([s.values.ravel() for s in c.snapshots])])
    diff = max(float(np.abs(sa.values - sb.values).max()) for sa, sb in zip(a.snapshots, b.snapshots))
    report = {"phi": phi, "effective_diameter": eps_d, "needle_coefficient": needle_coefficient(phi),
              "disk_coefficient": disk_coefficient(cfg["N"], eps_d), "max_needle_disk_difference": diff,
              "peak_needle": [float(s.values.max()) for s in a.snapshots],
              "peak_free": [float(s.values.max()) for s in c.snapshots]}
    print(f"needle vs disk of diameter {eps_d:.6g}: max difference {diff:.3e}")
    return ["density.csv"], report


COMMANDS = {
    "tmatrix": cmd_tmatrix,
    "stability": cmd_stability,
    "mkv-evolve": cmd_mkv_evolve,
    "mkv-stationary": cmd_mkv_stationary,
    "simulate": cmd_simulate,
    "pde3d": cmd_pde3d,
    "hydro": cmd_hydro,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hardneedles", description="Hard Brownian needles: simulation and kinetic models")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config value")
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
        if name == "mkv-stationary":
            sp.add_argument("--sweep", action="store_true", help="shorthand for --set sweep=true")
    return ap


def _apply_threads():
    n = os.environ.get("NEEDLES_THREADS")
    if not n:
        return None
    try:
        k = int(n)
        if k < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"NEEDLES_THREADS must be a positive integer, got {n!r}") from None
    for var in ("NUMBA_NUM_THREADS", "OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS"):
        os.environ[var] = str(k)
    if "numba" in sys.modules:
        import numba

        with warnings.catch_warnings():
            # probing the threading layer may report an unusable optional backend
            warnings.simplefilter("ignore")
            numba.set_num_threads(min(k, numba.config.NUMBA_NUM_THREADS))
    return k


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = _apply_threads()
        overrides = list(args.set)
        if getattr(args, "sweep", False):
            overrides.append("sweep=true")
        cfg = parse_config(args.subcommand, args.config, overrides)
        if args.print_config:
            print(format_config(cfg), end="")
            return EXIT_OK
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        files, results = COMMANDS[args.subcommand](cfg, out)
        results["threads"] = threads
        write_manifest(out, cfg, files, results, time.perf_counter() - t0)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
