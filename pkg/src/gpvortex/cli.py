"""Command-line driver.

Subcommands: vortex | branch | spectrum | stability | uniqueness | report.
Exit codes: 0 pass, 1 numeric-check failure, 2 configuration error,
3 solver failure.  Outputs are deterministic for a fixed config and seed
and every file carries the config hash.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .field_core import FieldFileError
from .linearization import build_directions, prop12_report, write_prop12_csv
from .tw_solver import (
    SolverConfig,
    _atomic_write,
    continue_branch,
    load_branch,
    perturb_and_resolve,
    save_branch,
)
from .vortex_profile import load_profile, solve_vortex_ode

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _solver_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(newton_tol=cfg.newton_tol, max_iter=cfg.max_newton_steps,
                        r_ball=cfg.r_ball)


def _profiles(out_dir: str, r_max: float = 40.0, tol: float = 1e-10) -> dict:
    profiles = {}
    for degree in (1, -1):
        path = os.path.join(out_dir, f"vortex_profile_{'p' if degree > 0 else 'm'}1.txt")
        if os.path.exists(path):
            prof = load_profile(path)
            if prof.r_max >= r_max:
                profiles[degree] = prof
                continue
        prof = solve_vortex_ode(degree, r_max, tol)
        prof.save(path)
        profiles[degree] = prof
    return profiles


def _write_json(path, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ----------------------------------------------------------------------
# subcommands

def cmd_vortex(cfg: RunConfig, args) -> int:
    os.makedirs(cfg.out_dir, exist_ok=True)
    if args.degree not in (1, -1):
        print(f"error: unsupported degree {args.degree}; only +-1 vortices exist",
              file=sys.stderr)
        return EXIT_CONFIG
    import warnings
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            prof = solve_vortex_ode(args.degree, args.r_max, args.tol)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except RuntimeError as exc:
            print(f"solver failure: {exc}", file=sys.stderr)
            return EXIT_SOLVER
    for w in caught:
        print(f"warning: {w.message}")
    path = os.path.join(cfg.out_dir,
                        f"vortex_profile_{'p' if args.degree > 0 else 'm'}1.txt")
    prof.save(path)
    checks = prof.validate()
    d2, d3 = prof.curvature_maxima()
    report = {
        "config_hash": cfg.config_hash,
        "degree": prof.degree,
        "kappa": prof.kappa,
        "r_max": prof.r_max,
        "max_ode_residual": float(np.max(np.abs(prof.ode_residual()))),
        "max_abs_rho2": d2,
        "max_abs_rho3": d3,
        "checks": {k: bool(v) for k, v in checks.items()},
    }
    _write_json(os.path.join(cfg.out_dir, "vortex_report.json"), report)
    print(f"profile written to {path} (kappa = {prof.kappa:.8f})")
    ok = all(checks.values())
    if not ok:
        failed = [k for k, v in checks.items() if not v]
        print(f"invariant failures: {failed}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_NUMERIC


def _branch_dir(cfg: RunConfig, diag: bool) -> str:
    return os.path.join(cfg.out_dir, "branch_diag" if diag else "branch")


def _load_or_solve_branch(cfg: RunConfig, diag: bool, progress=print):
    outdir = _branch_dir(cfg, diag)
    speeds, anchors = cfg.speeds_with_neighbors()
    if os.path.isdir(outdir):
        try:
            branch = load_branch(outdir)
            if (branch.config_hash == cfg.config_hash
                    and len(branch.entries) == len(speeds)):
                progress(f"resume: {outdir} already solved; skipping")
                return branch, True
        except (FieldFileError, FileNotFoundError, KeyError, ValueError) as exc:
            raise FieldFileError(f"existing branch at {outdir} unusable: {exc}")
    profiles = _profiles(cfg.out_dir)
    rule = cfg.diag_grid_rule if diag else cfg.grid_rule
    branch = continue_branch(speeds, _solver_config(cfg), profiles,
                             grid_rule=rule, anchors=None,
                             config_hash=cfg.config_hash)
    save_branch(branch, outdir)
    return branch, False


def cmd_branch(cfg: RunConfig, args) -> int:
    os.makedirs(cfg.out_dir, exist_ok=True)
    try:
        branch, resumed = _load_or_solve_branch(cfg, args.diag)
    except FieldFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RuntimeError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    rows = prop12_report(branch)
    write_prop12_csv(rows, os.path.join(_branch_dir(cfg, args.diag), "prop12.csv"))
    ok = True
    for e in branch.entries:
        line = (f"c={e.c:.6f} residual={e.residual_norm:.2e} "
                f"d_tilde={e.half_separation:.4f} c*d={e.c * e.half_separation:.4f}")
        good = (e.residual_norm <= cfg.newton_tol
                and 0.8 <= e.c * e.half_separation <= 1.2)
        ok = ok and good
        print(("" if good else "[numeric-check FAIL] ") + line)
    return EXIT_OK if ok else EXIT_NUMERIC


def _spectrum_one(cfg: RunConfig, branch, c: float, eta_shape: str) -> dict:
    from .spectral import assemble, constrained_coercivity, kernel_and_negative

    profiles = _profiles(cfg.out_dir)
    idx = branch.index_of(c)
    dirs = build_directions(branch, idx)
    e = branch.entries[idx]
    handle = assemble(e.field, e.c, R=cfg.r_ball, directions=dirs,
                      profiles=profiles)
    report = kernel_and_negative(handle)
    for name in cfg.constraint_sets:
        norm = "C" if name in ("none", "three", "four") else "exp"
        report.coercivity[name] = constrained_coercivity(
            handle, name, norm=norm, size=cfg.basis_size, seed=cfg.seed)
    payload = dict(report.__dict__)
    payload["config_hash"] = cfg.config_hash
    payload["eta_shape"] = eta_shape
    payload["r_ball"] = cfg.r_ball
    return payload


def cmd_spectrum(cfg: RunConfig, args) -> int:
    os.makedirs(cfg.out_dir, exist_ok=True)
    try:
        branch, _ = _load_or_solve_branch(cfg, diag=False)
    except RuntimeError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    shapes = (cfg.eta_shape, "cosine") if args.eta_check else (cfg.eta_shape,)
    ok = True
    for c in cfg.speeds:
        payloads = []
        for shape in shapes:
            payload = _spectrum_one(cfg, branch, c, shape)
            suffix = "" if shape == cfg.eta_shape else f"_{shape}"
            _write_json(os.path.join(cfg.out_dir, f"spectrum_c{c:g}{suffix}.json"),
                        payload)
            payloads.append(payload)
        base = payloads[0]
        print(f"c={c}: negative_count={base['negative_count']} "
              f"near_zero={base['near_zero_count']} coercivity="
              + ", ".join(f"{k}={v:.3e}" for k, v in base["coercivity"].items()))
        if args.eta_check and len(payloads) == 2:
            for key, va in payloads[0]["coercivity"].items():
                vb = payloads[1]["coercivity"][key]
                if abs(va - vb) > 1e-6 * max(abs(va), 1e-12):
                    print(f"[numeric-check FAIL] eta-shape disagreement on {key}")
                    ok = False
        if base["negative_count"] != 1:
            print(f"[numeric-check FAIL] negative count {base['negative_count']} != 1")
            ok = False
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_stability(cfg: RunConfig, args) -> int:
    from scipy.ndimage import gaussian_filter
    from .spectral import assemble, evolve_linearized

    os.makedirs(cfg.out_dir, exist_ok=True)
    try:
        branch, _ = _load_or_solve_branch(cfg, diag=False)
    except RuntimeError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    profiles = _profiles(cfg.out_dir)
    idx = branch.index_of(cfg.stability_speed)
    e = branch.entries[idx]
    handle = assemble(e.field, e.c, R=cfg.r_ball,
                      directions=build_directions(branch, idx), profiles=profiles)
    g = e.field.grid
    mx, my = g.nx - 2, g.ny - 2
    X, Y = np.meshgrid(g.x[1:-1], g.y[1:-1], indexing="ij")
    env = np.exp(-(X**2 + Y**2) / (0.35 * g.lx) ** 2)
    rng = np.random.default_rng(cfg.seed)
    runs = []
    kern = evolve_linearized(handle, handle.directions["dx1"], T=50.0,
                             dt=cfg.stability_dt)
    runs.append({"kind": "kernel_mode", "fitted_rate": kern["fitted_rate"],
                 "energy_change": kern["relative_energy_change"],
                 "form_drift": kern["form_drift"]})
    for k in range(cfg.stability_samples):
        u0 = np.concatenate([
            (gaussian_filter(rng.standard_normal((mx, my)), 2.0) * env).ravel(),
            (gaussian_filter(rng.standard_normal((mx, my)), 2.0) * env).ravel()])
        out = evolve_linearized(handle, u0, T=cfg.stability_T, dt=cfg.stability_dt)
        runs.append({"kind": f"random_{k}", "fitted_rate": out["fitted_rate"],
                     "form_drift": out["form_drift"]})
    payload = {"config_hash": cfg.config_hash, "c": e.c, "runs": runs}
    _write_json(os.path.join(cfg.out_dir, "stability.json"), payload)
    ok = (kern["relative_energy_change"] <= 0.01
          and all(r["fitted_rate"] <= 0.02 for r in runs))
    for r in runs:
        print(f"{r['kind']}: rate={r['fitted_rate']:.3e}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_uniqueness(cfg: RunConfig, args) -> int:
    os.makedirs(cfg.out_dir, exist_ok=True)
    try:
        branch, _ = _load_or_solve_branch(cfg, diag=False)
    except RuntimeError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    entry = branch.entries[branch.index_of(cfg.uniqueness_speed)]
    solver = _solver_config(cfg)
    shapes = ("bump_re", "bump_im", "phase", "mixed", "random")
    runs = []
    ok = True
    base = perturb_and_resolve(entry, 0.0, solver)
    runs.append({"shape": "unperturbed", "X": list(map(float, base["X"])),
                 "mismatch": base["mismatch"]})
    for shape in shapes:
        rep = perturb_and_resolve(entry, cfg.uniqueness_delta, solver,
                                  shape=shape, seed=cfg.seed)
        runs.append({"shape": shape, "X": list(map(float, rep["X"])),
                     "mismatch": rep["mismatch"], "gain": rep["gain"],
                     "violation": rep["uniqueness_violation"]})
        ok = ok and not rep["uniqueness_violation"] and rep["mismatch"] <= 1e-6
        print(f"{shape}: |X|={np.hypot(*rep['X']):.2e} mismatch={rep['mismatch']:.2e}")
    payload = {"config_hash": cfg.config_hash, "c": entry.c,
               "delta": cfg.uniqueness_delta, "runs": runs}
    _write_json(os.path.join(cfg.out_dir, "uniqueness.json"), payload)
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_report(cfg: RunConfig, args) -> int:
    hashes = set()
    summary = {"config_hash": cfg.config_hash, "sections": {}}
    branch_dir = _branch_dir(cfg, False)
    ok = True
    if os.path.isdir(branch_dir):
        branch = load_branch(branch_dir)
        hashes.add(branch.config_hash)
        rows = [{"c": e.c, "residual": e.residual_norm,
                 "c_d_tilde": e.c * e.half_separation} for e in branch.entries]
        summary["sections"]["branch"] = rows
    for name in os.listdir(cfg.out_dir) if os.path.isdir(cfg.out_dir) else []:
        if name.endswith(".json") and name != "summary.json":
            with open(os.path.join(cfg.out_dir, name)) as fh:
                payload = json.load(fh)
            if "config_hash" in payload:
                hashes.add(payload["config_hash"])
            summary["sections"][name[:-5]] = payload
    if len(hashes) > 1:
        print(f"error: outputs mix config hashes {sorted(hashes)}", file=sys.stderr)
        return EXIT_CONFIG
    if hashes and hashes != {cfg.config_hash}:
        print("error: outputs were produced under a different configuration",
              file=sys.stderr)
        return EXIT_CONFIG
    _write_json(os.path.join(cfg.out_dir, "summary.json"), summary)
    for section, payload in summary["sections"].items():
        print(f"[{section}]")
        print(json.dumps(payload, indent=2, sort_keys=True)[:600])
    return EXIT_OK if ok else EXIT_NUMERIC


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpvortex",
        description="Small-speed travelling waves of the 2-D Gross-Pitaevskii "
                    "equation: branch solver and spectral diagnostics")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", metavar="PATH", help="key = value config file")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--speeds", metavar="LIST",
                        help="comma-separated speeds, e.g. 0.1,0.05,0.03")
    parser.add_argument("--seed", type=int, metavar="N")
    parser.add_argument("--jobs", type=int, metavar="N")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vortex", help="solve the radial vortex profile")
    p.add_argument("--degree", type=int, default=1)
    p.add_argument("--r-max", type=float, default=40.0)
    p.add_argument("--tol", type=float, default=1e-10)

    p = sub.add_parser("branch", help="continue the travelling-wave branch")
    p.add_argument("--diag", action="store_true",
                   help="use the large-box diagnostics grid rule")

    p = sub.add_parser("spectrum", help="coercivity and kernel diagnostics")
    p.add_argument("--eta-check", action="store_true",
                   help="run both cutoff ramp shapes and compare")

    sub.add_parser("stability", help="linearized time evolution")
    sub.add_parser("uniqueness", help="perturb-and-resolve experiment")
    sub.add_parser("report", help="aggregate existing outputs")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {}
    if args.out:
        overrides["out_dir"] = args.out
    if args.speeds:
        overrides["speeds"] = args.speeds
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    try:
        cfg = load_config(args.config, overrides)
    except (ValueError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    handler = {
        "vortex": cmd_vortex,
        "branch": cmd_branch,
        "spectrum": cmd_spectrum,
        "stability": cmd_stability,
        "uniqueness": cmd_uniqueness,
        "report": cmd_report,
    }[args.command]
    return handler(cfg, args)


def console_main() -> None:
    raise SystemExit(main())
