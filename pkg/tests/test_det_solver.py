import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sel.det_solver import (
    DetSolverConfig,
    apply_S,
    compute_invariants,
    det_step,
    energy_balance_defect,
    region_constant,
    stable_dt,
)
from sel.errors import NumericalBlowupError, ParameterError, PreconditionError
from sel.longtime import eta_star_total
from sel.model import FieldState, Grid, initial_state, make_params


def l2(s, rho_star):
    return float(np.sum((s.rho - rho_star) ** 2 + s.m ** 2) / s.n)


def test_config_validation():
    with pytest.raises(ParameterError):
        DetSolverConfig(cfl=0)
    with pytest.raises(ParameterError):
        DetSolverConfig(flux_scheme="upwind")


def test_constant_state_is_fixed(desk_params):
    s = FieldState(np.full(64, 0.7), np.zeros(64))
    out = apply_S(s, 1.0, desk_params)
    assert np.array_equal(out.rho, s.rho)
    assert np.array_equal(out.m, s.m)
    assert out.t == 1.0


def test_heat_equation_oracle():
    # no convection and m = 0: rho solves rho_t = eps rho_xx with Neumann walls
    eps, n, T = 1e-2, 200, 1.0
    p = make_params(2.0, 1.0, eps)
    g = Grid(n)
    k = np.pi
    # cell averages of 1 + 0.1 cos(pi x)
    sinc = math.sin(0.5 * k * g.dx) / (0.5 * k * g.dx)
    rho0 = 1 + 0.1 * np.cos(k * g.x) * sinc
    cfg = DetSolverConfig(flux_scheme="none")
    out = apply_S(FieldState(rho0, np.zeros(n)), T, p, cfg)
    exact = 1 + 0.1 * np.cos(k * g.x) * sinc * math.exp(-eps * k * k * T)
    assert np.max(np.abs(out.rho - exact)) <= 1e-4
    assert np.all(out.m == 0)


def test_stable_dt_examples():
    s = FieldState(np.full(100, 1.0), np.zeros(100))
    assert stable_dt(s, make_params(2, 1, 0), DetSolverConfig(cfl=0.5)) == pytest.approx(0.01, rel=1e-14)
    assert stable_dt(s, make_params(2, 1, 0), DetSolverConfig(flux_scheme="none")) == math.inf
    # viscous limit dominates: dx**2/(2 eps) = 5e-5 < dx/0.5
    assert stable_dt(s, make_params(2, 1, 1.0), DetSolverConfig(cfl=0.5)) == pytest.approx(0.5 * 5e-5, rel=1e-14)


def test_oversized_step_rejected(bump_state, desk_params):
    dt = 2 * stable_dt(bump_state, desk_params)
    with pytest.raises(PreconditionError):
        det_step(bump_state, dt, desk_params)
    with pytest.raises(PreconditionError):
        apply_S(bump_state, -1.0, desk_params)


def test_mass_conservation(bump_state, desk_params):
    m0 = bump_state.mass()
    dt = 0.5 * stable_dt(bump_state, desk_params)
    s = det_step(bump_state, dt, desk_params)
    assert abs(s.mass() - m0) <= 1e-13
    s = apply_S(bump_state, 1e4 * dt, desk_params, dt=dt)
    assert abs(s.mass() - m0) <= 1e-10


def test_zero_elapsed_is_identity(bump_state, desk_params):
    assert apply_S(bump_state, 0.0, desk_params) is bump_state


def test_fixed_schedule_composes(bump_state, desk_params):
    dt = 0.5 * stable_dt(bump_state, desk_params)
    a = apply_S(apply_S(bump_state, 20 * dt, desk_params, dt=dt), 30 * dt, desk_params, dt=dt)
    b = apply_S(bump_state, 50 * dt, desk_params, dt=dt)
    assert np.array_equal(a.rho, b.rho) and np.array_equal(a.m, b.m)


def test_adaptive_lands_on_target(bump_state, desk_params):
    out = apply_S(bump_state, 0.3337, desk_params)
    assert out.t == pytest.approx(bump_state.t + 0.3337, abs=1e-15)


def test_deviation_decays(desk_params):
    s0 = initial_state("bump", Grid(100), desk_params)
    rs = s0.mass()
    times = np.linspace(0, 5, 11)
    cur, dev, eta = s0, [l2(s0, rs)], [eta_star_total(s0, rs, desk_params)]
    for a, b in zip(times, times[1:]):
        cur = apply_S(cur, b - a, desk_params)
        dev.append(l2(cur, rs))
        eta.append(eta_star_total(cur, rs, desk_params))
    assert dev[-1] < 0.5 * dev[0]
    # the relative energy, unlike the plain L2 distance, is a Lyapunov function
    assert all(y <= x * (1 + 1e-12) for x, y in zip(eta, eta[1:]))


def test_invariant_examples():
    p = make_params(2, 1, 0)
    _, _, w, z = compute_invariants(FieldState([1.0], [0.0]), p)
    assert (w, z) == (1.0, -1.0)
    _, _, w, z = compute_invariants(FieldState([0.0], [0.0]), p)
    assert (w, z) == (0.0, 0.0)
    _, _, w, z = compute_invariants(FieldState([4.0], [4.0]), p)
    assert (w, z) == (3.0, -1.0)


@pytest.mark.parametrize("preset", ["bump", "two_bumps", "vacuum_patch"])
@pytest.mark.parametrize("gamma", [1.4, 2.0, 3.0])
def test_invariant_region_and_positivity(preset, gamma):
    p = make_params(gamma, 1.0, 1e-3)
    s = initial_state(preset, Grid(100), p)
    C = region_constant(s, p)
    m0 = s.mass()
    for _ in range(20):
        s = apply_S(s, 0.05, p)
        _, _, w, z = compute_invariants(s, p)
        assert w <= C + 1e-12 and z >= -C - 1e-12
        assert np.all(s.rho >= 0)
    assert abs(s.mass() - m0) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1.4, 2.0, 3.0]))
def test_single_step_invariant_region(seed, gamma):
    rng = np.random.default_rng(seed)
    p = make_params(gamma, 0.5, 1e-3)
    rho = rng.uniform(0.0, 2.0, 40)
    m = rng.uniform(-1, 1, 40) * rho
    m[0] = m[-1] = 0
    s = FieldState(rho, m)
    C = region_constant(s, p)
    out = det_step(s, stable_dt(s, p), p)
    _, _, w, z = compute_invariants(out, p)
    assert w <= C * (1 + 1e-12) + 1e-12
    assert z >= -C * (1 + 1e-12) - 1e-12
    assert np.all(out.rho >= 0)


def test_blowup_reports_cell(desk_params):
    rho = np.ones(10)
    rho[4] = np.nan
    with pytest.raises(NumericalBlowupError) as info:
        det_step(FieldState._trusted(rho, np.zeros(10), 0.0), 1e-4, desk_params, check=False)
    assert info.value.cell in (3, 4, 5)


def test_energy_defect_shrinks_with_grid():
    p = make_params(2.0, 1.0, 1e-2)
    defects = []
    for n in (50, 100, 200):
        s0 = initial_state("two_bumps", Grid(n), p)
        defects.append(abs(energy_balance_defect(s0, 0.5, p, n_records=50)))
    assert defects[1] < defects[0] and defects[2] < defects[1]
    assert defects[0] / defects[1] > 1.5
