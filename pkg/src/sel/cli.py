"""Command line entry point ``sel``.

Exit codes: 0 success, 1 error, 2 an invariant check failed.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import harness as H
from .det_solver import region_constant
from .entropy import (
    energy_flux,
    eval_entropy,
    eval_entropy_flux,
    make_pair,
    mechanical_energy,
)
from .errors import SelError
from .longtime import fit_decay
from .model import pressure
from .pme import PmeState, compare_euler_pme, pme_deviation, pme_run
from .splitting import bump_weights, entropy_residual

log = logging.getLogger("sel")

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


def _outdir(args, cfg, command):
    out = args.out or cfg.out or f"runs/{command}"
    Path(out).mkdir(parents=True, exist_ok=True)
    return Path(out)


def cmd_simulate(cfg, out):
    started = time.time()
    traj = H.run_path(cfg, 0)
    H.write_series(out / "series.csv", traj)
    names = H.write_fields(out, traj, cfg.field_every)
    H.write_manifest(out, cfg, "simulate", started, {"fields": names})
    return EXIT_OK


def cmd_ensemble(cfg, out):
    started = time.time()
    trajs = H.run_ensemble(cfg)
    summ = H.summarize(cfg, trajs)
    if summ.moments is not None:
        H.write_moments(out / "series.csv", summ.moments)
    else:
        H.write_series(out / "series.csv", trajs[0])
    H.write_paths(out / "paths.csv", summ.path_rows)
    H.write_decay_report(out / "decay_report.csv", summ.fits, cfg.paths)
    H.write_manifest(out, cfg, "ensemble", started, {
        "domination_constant": summ.c_dom,
        "noise_report": summ.noise_report.lines(),
    })
    return EXIT_OK


def _read_columns(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def cmd_decay_fit(cfg, out, input_path=None):
    started = time.time()
    if input_path:
        cols = _read_columns(input_path)
        t = cols["t"]
        fits = {}
        if "mean_dev" in cols:
            for name in ("mean_dev", "mean_eta_star", "mean_eta_star_sq"):
                fits[name] = H._safe_fit(t, cols[name], cfg.fit_window)
        else:
            fits["dev"] = H._safe_fit(t, cols["l2_rho_dev"] + cols["l2_m"], cfg.fit_window)
        H.write_decay_report(out / "decay_report.csv", fits, cfg.paths)
        H.write_manifest(out, cfg, "decay_fit", started, {"input": str(input_path)})
        return EXIT_OK
    trajs = H.run_ensemble(cfg)
    summ = H.summarize(cfg, trajs)
    H.write_decay_report(out / "decay_report.csv", summ.fits, cfg.paths)
    for line in summ.noise_report.lines():
        print(line)
    H.write_manifest(out, cfg, "decay_fit", started, {"noise_report": summ.noise_report.lines(),
                                                      "domination_constant": summ.c_dom})
    return EXIT_OK


def cmd_pme(cfg, out):
    started = time.time()
    params = cfg.params()
    s0 = cfg.initial()
    times = cfg.record_times()
    states = pme_run(PmeState.from_density(s0.rho), cfg.t_final, params, times)
    rows = [(s.t, s.mass(), pme_deviation(s, params)) for s in states]
    H.write_csv(out / "series.csv", ("t", "mass", "pme_dev"), rows)
    fit = H._safe_fit(np.array(times), np.array([r[2] for r in rows]), cfg.fit_window)
    H.write_decay_report(out / "decay_report.csv", {"pme_dev": fit}, 1)
    H.write_manifest(out, cfg, "pme", started)
    return EXIT_OK


def cmd_compare(cfg, out):
    started = time.time()
    params = cfg.params()
    traj = H.run_path(cfg, 0)
    pstates = pme_run(PmeState.from_density(traj.states[0].rho), cfg.t_final, params, traj.times)
    comp = compare_euler_pme(traj.states, pstates, params)
    pdev = [pme_deviation(s, params) for s in pstates]
    edev = traj.diagnostics["l2_rho_dev"] + traj.diagnostics["l2_m"]
    H.write_csv(out / "series.csv", ("t", "difference", "euler_dev", "pme_dev"), zip(traj.times, comp, edev, pdev))
    fits = {"difference": H._safe_fit(traj.times, comp, cfg.fit_window),
            "pme_dev": H._safe_fit(traj.times, pdev, cfg.fit_window)}
    H.write_decay_report(out / "decay_report.csv", fits, 1)
    ratio = comp[-1] / comp[0] if comp[0] > 0 else 0.0
    print(f"terminal/initial difference ratio: {ratio:.3e}")
    H.write_manifest(out, cfg, "compare", started, {"terminal_ratio": ratio})
    return EXIT_OK


def closed_form_errors(gamma, n_states=1000, seed=0):
    """Largest relative gaps between quadrature and closed-form entropies and fluxes."""
    from .model import make_params

    params = make_params(gamma, 1.0, 0.0)
    rng = np.random.default_rng(seed)
    rho = rng.uniform(1e-3, 2.0, n_states)
    m = rng.uniform(-1.0, 1.0, n_states) * rho
    st = (rho, m)

    def rel(a, b):
        return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))

    one, xi, en = (make_pair(g, gamma) for g in ("one", "xi", "half_xi_sq"))
    zero_m = (rho, np.zeros_like(rho))
    return {
        "eta_one": rel(eval_entropy(st, one, params), rho),
        "eta_xi": rel(eval_entropy(st, xi, params), m),
        "eta_energy": rel(eval_entropy(st, en, params), mechanical_energy(rho, m, params)),
        "flux_one": rel(eval_entropy_flux(st, one, params), m),
        "flux_xi": rel(eval_entropy_flux(st, xi, params), m * m / rho + pressure(rho, params)),
        "flux_energy": rel(eval_entropy_flux(st, en, params), energy_flux(rho, m, params)),
        "flux_energy_at_rest": float(np.max(np.abs(eval_entropy_flux(zero_m, en, params)))),
    }


def cmd_entropy_check(cfg, out):
    started = time.time()
    status = EXIT_OK
    rows = []
    for gamma in sorted({1.4, 2.0, 3.0, cfg.gamma}):
        for name, err in closed_form_errors(gamma).items():
            ok = err <= 1e-8
            rows.append((gamma, name, err, 1e-8, "ok" if ok else "FAIL"))
            if not ok:
                status = EXIT_VIOLATION
    H.write_csv(out / "closed_forms.csv", ("gamma", "check", "value", "limit", "status"), rows)
    params = cfg.params()
    s0 = cfg.initial()
    _, path = H.path_for(cfg, 0)
    split = H.SplitConfig(cfg.t_final, cfg.n_windows, "endpoint")
    res = entropy_residual(s0, path, params, split, make_pair(cfg.generator, cfg.gamma), bump_weights(cfg.grid()),
                           cfg.det(), cfg.stoch(), cfg.noise())
    cols = ("t", "residual", "cumulative") + tuple(res.terms)
    H.write_csv(out / "residual.csv", cols,
                zip(res.t, res.residual, res.cumulative, *[res.terms[k] for k in res.terms]))
    print(f"max |cumulative residual| = {res.max_abs_cumulative:.3e}")
    H.write_manifest(out, cfg, "entropy_check", started, {"max_abs_cumulative_residual": res.max_abs_cumulative})
    return status


def cmd_invariants_check(cfg, out):
    started = time.time()
    params = cfg.params()
    s0 = cfg.initial()
    C = region_constant(s0, params)
    trajs = H.run_ensemble(cfg)
    summ = H.summarize(cfg, trajs)
    checks = []

    def add(name, value, limit, ok):
        checks.append((name, value, limit, "ok" if ok else "FAIL"))

    mass = max(r["mass_drift"] for r in summ.path_rows)
    add("mass_drift", mass, 1e-10, mass <= 1e-10)
    wmax = max(r["max_w"] for r in summ.path_rows)
    zmin = min(r["min_z"] for r in summ.path_rows)
    add("max_w_minus_C", wmax - C, 1e-6, wmax <= C + 1e-6)
    add("min_z_plus_C", zmin + C, -1e-6, zmin >= -C - 1e-6)
    rmin = min(float(np.min(s.rho)) for tr in trajs for s in tr.states)
    add("min_rho", rmin, 0.0, rmin > 0 or params.epsilon == 0)
    eta_min = min(float(np.min(e)) for e in summ.per_path_eta)
    add("min_int_eta_star", eta_min, -1e-12, eta_min >= -1e-12)
    add("domination_constant", summ.c_dom, float("inf"), bool(np.isfinite(summ.c_dom)))
    H.write_csv(out / "invariants.csv", ("check", "value", "limit", "status"), checks)
    bad = [c[0] for c in checks if c[3] != "ok"]
    for c in checks:
        print(f"{c[3]:4s} {c[0]} = {c[1]:.6g}")
    H.write_manifest(out, cfg, "invariants_check", started, {"failed_checks": bad})
    return EXIT_VIOLATION if bad else EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "ensemble": cmd_ensemble,
    "decay_fit": cmd_decay_fit,
    "pme": cmd_pme,
    "compare": cmd_compare,
    "entropy_check": cmd_entropy_check,
    "invariants_check": cmd_invariants_check,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="sel", description="Stochastic damped Euler simulation lab")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="key=value config file (defaults apply when omitted)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    ap.add_argument("--seed", type=int, help="base seed")
    ap.add_argument("--input", help="decay_fit: series.csv to fit instead of running")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {"paths": args.paths, "seed": args.seed}
        if args.config:
            cfg = H.load_config(args.config, overrides)
        else:
            cfg = H.build_config({k: v for k, v in overrides.items() if v is not None})
        out = _outdir(args, cfg, args.command)
        fn = COMMANDS[args.command]
        if args.command == "decay_fit":
            return fn(cfg, out, args.input)
        return fn(cfg, out)
    except SelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
