"""Acceptance criteria at desk scale: n=200, gamma=2, alpha=1, eps=1e-3, T=20, 64 paths.

Each test records one ``PASS``/``FAIL criterion k: ...`` line, printed in
the terminal summary.
"""

import math

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from sel import cli
from sel import harness as H
from sel.brownian import refine, sample_brownian, zero_path
from sel.det_solver import DetSolverConfig, apply_S, compute_invariants, region_constant, stable_dt
from sel.entropy import check_pressure_inequalities, make_pair
from sel.longtime import domination_check, fit_decay
from sel.model import FieldState, Grid, NoiseSpec, initial_state, make_params
from sel.pme import PmeState, compare_euler_pme, pme_deviation, pme_run
from sel.splitting import SplitConfig, bump_weights, entropy_residual, tau_refinement_study
from sel.stoch_solver import StochStepConfig, apply_R

pytestmark = pytest.mark.slow

DESK = {"n_cells": 200, "gamma": 2, "alpha": 1, "epsilon": 1e-3, "t_final": 20, "n_windows": 200,
        "a0": 0.01, "paths": 64, "record_every": 2, "preset": "bump", "seed": 12345}
FIT_WINDOW = (2.0, 20.0)


def desk_cfg(**kw):
    return H.build_config({k: str(v) for k, v in {**DESK, **kw}.items()})


def verdict(k, ok, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def ensemble():
    cfg = desk_cfg()
    trajs = H.run_ensemble(cfg)
    return cfg, trajs, H.summarize(cfg, trajs)


def test_criterion_01_entropy_closed_forms():
    worst = {g: max(cli.closed_form_errors(g, n_states=1000).values()) for g in (1.4, 2.0, 3.0)}
    ok = all(v <= 1e-8 for v in worst.values())
    verdict(1, ok, "closed-form entropy/flux max rel error " + ", ".join(f"gamma={g}: {v:.2e}" for g, v in worst.items()))


def test_criterion_02_conservation(ensemble):
    cfg, trajs, summ = ensemble
    p = cfg.params()
    s0 = cfg.initial()
    dt = 0.5 * stable_dt(s0, p)
    s = apply_S(s0, 10_000 * dt, p, dt=dt)
    det_drift = abs(s.mass() - s0.mass())
    noisy_drift = max(r["mass_drift"] for r in summ.path_rows)
    ok = det_drift <= 1e-10 and noisy_drift <= 1e-10
    verdict(2, ok, f"mass drift 1e4 det steps {det_drift:.2e}, 64 noisy runs {noisy_drift:.2e} (limit 1e-10)")


def test_criterion_03_heat_oracle():
    eps, n, T = 1e-2, 200, 1.0
    p = make_params(2.0, 1.0, eps)
    g = Grid(n)
    k = np.pi
    modes = [(1, 0.1), (2, 0.05), (3, 0.02)]

    def exact(t):
        # cell averages of a three-mode Neumann cosine series
        out = np.ones(n)
        for j, a in modes:
            kj = j * k
            s = math.sin(0.5 * kj * g.dx) / (0.5 * kj * g.dx)
            out += a * s * np.cos(kj * g.x) * math.exp(-eps * kj * kj * t)
        return out

    out = apply_S(FieldState(exact(0.0), np.zeros(n)), T, p, DetSolverConfig(flux_scheme="none"))
    err = float(np.max(np.abs(out.rho - exact(T))))
    verdict(3, err <= 1e-4, f"heat-equation L-inf error at T=1 {err:.2e} (limit 1e-4)")


def test_criterion_04_invariant_region(ensemble):
    cfg, trajs, summ = ensemble
    p = cfg.params()
    C = region_constant(cfg.initial(), p)
    wmax = max(r["max_w"] for r in summ.path_rows)
    zmin = min(r["min_z"] for r in summ.path_rows)
    rho_max = max(float(np.max(s.rho)) for tr in trajs for s in tr.states)
    u_max = max(float(np.max(np.abs(s.velocity()))) for tr in trajs for s in tr.states)
    env_ok = wmax <= C + 1e-6 and zmin >= -C - 1e-6
    linf_ok = rho_max ** p.theta <= C + 1e-6 and u_max <= C + 1e-6
    # stochastic leg: rho bit-exact, states outside the noise support untouched
    noise = NoiseSpec(1.0, cfg.m1, cfg.m2)
    g = Grid(6)
    rho = np.array([1.0, 1.0, 2.5, 1.0, 1.0, 1.0])
    m = np.array([0.0, 0.4, 0.4, 2.5, -0.7, 0.0])
    s = FieldState(rho, m)
    out = apply_R(s, 0.0, 1.0, sample_brownian(7, 0.01, 100), noise, StochStepConfig(4, True), g)
    stoch_ok = out.rho is s.rho and np.array_equal(out.m[2:4], m[2:4]) and not np.array_equal(out.m, m)
    ok = env_ok and linf_ok and stoch_ok
    verdict(4, ok, f"C={C:.6f} max w={wmax:.6f} min z={zmin:.6f} max rho={rho_max:.4f} max|u|={u_max:.4f}; "
                   f"stochastic leg keeps rho and off-support cells: {stoch_ok}")


def test_criterion_05_entropy_residual():
    base = sample_brownian(2024, 0.5 / 40, 40)
    results = {}
    for label, a0 in (("noise-free", 0.0), ("noisy", 0.01)):
        p = make_params(2.0, 1.0, 1e-3, a0)
        path, vals = base, []
        for level, (n, N, k) in enumerate([(50, 10, 4), (100, 20, 8), (200, 40, 16)]):
            if level:
                path = refine(refine(path))
            g = Grid(n)
            res = entropy_residual(initial_state("bump", g, p), path, p, SplitConfig(0.5, N),
                                   make_pair("half_xi_sq", 2.0), bump_weights(g), stoch_cfg=StochStepConfig(k))
            vals.append(res.max_abs_cumulative)
        results[label] = vals
    ok = all(v[0] > v[1] > v[2] for v in results.values())
    detail = "; ".join(f"{k}: " + " > ".join(f"{x:.5e}" for x in v) for k, v in results.items())
    verdict(5, ok, "max |cumulative residual| " + detail)


def test_criterion_06_splitting_self_convergence():
    p0 = make_params(2.0, 1.0, 1e-3, 0.0)
    p = make_params(2.0, 1.0, 1e-3, 0.01)
    s0 = initial_state("bump", Grid(100), p)
    taus = [0.2, 0.1, 0.05, 0.025, 0.0125]
    count = 4 * round(1.0 / taus[0])
    quiet = tau_refinement_study(s0, zero_path(taus[0] / 4, count), p0, taus, noise=NoiseSpec(0.0, 2.0, 1.0))
    paths = [sample_brownian(H.derive_seed(777, i), taus[0] / 4, count) for i in range(64)]
    noisy = tau_refinement_study(s0, paths, p, taus)
    ok = np.all(quiet.ratios >= 1.8) and np.all(noisy.ratios >= 1.3)
    verdict(6, bool(ok), "ratios sigma=0: " + ", ".join(f"{r:.3f}" for r in quiet.ratios)
            + "; 64-path: " + ", ".join(f"{r:.3f}" for r in noisy.ratios))


def test_criterion_07_expectation_decay(ensemble):
    cfg, trajs, summ = ensemble
    mom = summ.moments
    f = fit_decay(mom.t, mom.mean_dev, FIT_WINDOW)
    q = fit_decay(mom.t, mom.mean_eta_sq, FIT_WINDOW)
    ratio = mom.mean_dev[-1] / mom.mean_dev[0]
    ok = f.r_squared >= 0.95 and f.rate > 0 and ratio <= 1e-2 and q.r_squared >= 0.9 and q.rate > 0
    verdict(7, ok, f"E[dev] rate {f.rate:.4f} R2 {f.r_squared:.4f} terminal/initial {ratio:.2e}; "
                   f"E[(int eta*)^2] rate {q.rate:.4f} R2 {q.r_squared:.4f}")


def test_criterion_08_pathwise_decay(ensemble):
    cfg, trajs, summ = ensemble
    good = sum(1 for r in summ.path_rows if r["terminal_ratio"] <= 1e-2 and r["rate"] > 0)
    frac = good / len(summ.path_rows)
    worst = max(r["terminal_ratio"] for r in summ.path_rows)
    verdict(8, frac >= 0.95, f"{good}/{len(summ.path_rows)} paths decay (worst terminal/initial {worst:.2e})")


def test_criterion_09_domination(ensemble):
    cfg, trajs, summ = ensemble
    c = summ.c_dom
    ok = bool(np.isfinite(c)) and c > 0 and domination_check(trajs, summ.consts, cfg.params(), c)
    verdict(9, ok, f"run-wide domination constant C_dom={c:.4g} (K={summ.consts.K:.3g}, M={summ.consts.M_scale:.3g})")


def test_criterion_10_pme_comparison(ensemble):
    cfg, trajs, summ = ensemble
    p = cfg.params()
    tr = trajs[0]
    pstates = pme_run(PmeState.from_density(tr.states[0].rho), cfg.t_final, p, tr.times, safety=0.9)
    diff = compare_euler_pme(tr.states, pstates, p)
    dev = np.array([pme_deviation(s, p) for s in pstates])
    f = fit_decay(tr.times, dev, FIT_WINDOW)
    ratio = diff[-1] / diff[0]
    ok = ratio <= 1e-2 and f.r_squared >= 0.95 and f.rate > 0
    verdict(10, ok, f"Euler-PME difference terminal/initial {ratio:.2e}; PME deviation rate {f.rate:.4f} "
                    f"R2 {f.r_squared:.4f}")


def test_criterion_11_pressure_inequalities():
    lines, ok = [], True
    for gamma in (1.4, 2.0, 3.0):
        for M in (1.0, 2.0):
            rep = check_pressure_inequalities(M=M, gamma=gamma, samples=10_000)
            ok &= rep.passed
            lines.append(f"gamma={gamma} M={M}: " + ", ".join(f"{r.name}<={r.max:.3g}" for r in rep.ratios))
    verdict(11, ok, "pressure ratio bounds " + " | ".join(lines))


def test_criterion_12_reproducibility(tmp_path, monkeypatch):
    cfg_path = tmp_path / "desk.cfg"
    cfg_path.write_text("".join(f"{k} = {v}\n" for k, v in DESK.items()))
    outs = []
    for threads in ("1", "2"):
        monkeypatch.setenv("SEL_THREADS", threads)
        out = tmp_path / f"threads{threads}"
        assert cli.main(["ensemble", "--config", str(cfg_path), "--out", str(out)]) == 0
        outs.append(out)
    names = sorted(x.name for x in outs[0].glob("*.csv"))
    same = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    verdict(12, same and len(names) == 3, f"byte-identical {', '.join(names)} for SEL_THREADS=1 and 2")
