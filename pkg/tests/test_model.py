from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sel.errors import ParameterError, PreconditionError
from sel.model import (
    FieldState,
    Grid,
    NoiseSpec,
    default_sigma,
    load_initial_csv,
    make_params,
    mollify_initial_data,
    preset_initial,
    pressure,
)


def _theta_kappa(gamma):
    # exact rational evaluation as the independent route
    g = Fraction(gamma)
    th = (g - 1) / 2
    return float(th), float(th * th / g)


@pytest.mark.parametrize("gamma", [2, 3, 1.4, 5 / 3])
def test_derived_constants(gamma):
    p = make_params(gamma, 1.0, 0.0)
    th, ka = _theta_kappa(gamma)
    assert p.theta == pytest.approx(th, rel=1e-15)
    assert p.kappa == pytest.approx(ka, rel=1e-15)


def test_gamma_two_and_three_values():
    p2 = make_params(2, 1, 0)
    assert (p2.theta, p2.kappa) == (0.5, 0.125)
    p3 = make_params(3, 1, 0)
    assert p3.theta == 1.0
    assert p3.kappa == pytest.approx(1 / 3, rel=1e-15)


@pytest.mark.parametrize("kw", [dict(gamma=1.0, alpha=1.0, epsilon=0.0), dict(gamma=2.0, alpha=0.0, epsilon=0.0),
                                dict(gamma=2.0, alpha=1.0, epsilon=-1.0)])
def test_rejects_bad_parameters(kw):
    with pytest.raises(ParameterError):
        make_params(**kw)


def test_params_immutable():
    p = make_params(2, 1, 0)
    with pytest.raises(Exception):
        p.kappa = 3.0


def test_pressure_values():
    p = make_params(2, 1, 0)
    assert pressure(0.0, p) == 0.0
    assert pressure(1.0, p) == 0.125
    assert pressure(2.0, p) == 0.5
    with pytest.raises(PreconditionError):
        pressure(-1.0, p)


@given(st.floats(1.05, 4.0), st.floats(0.0, 5.0), st.floats(1e-3, 1.0))
def test_pressure_convex_and_increasing(gamma, a, h):
    p = make_params(gamma, 1, 0)
    vals = pressure(np.array([a, a + h, a + 2 * h]), p)
    assert vals[1] >= vals[0]
    assert vals[2] - 2 * vals[1] + vals[0] >= -1e-12 * max(1.0, vals[2])


def test_grid_layout():
    g = Grid(200)
    assert g.dx * g.n == 1.0
    d = np.diff(g.x)
    assert np.all(d > 0)
    assert np.allclose(d, g.dx, rtol=0, atol=1e-15)


def test_field_state_rejects_bad_values():
    with pytest.raises(PreconditionError):
        FieldState([1.0, -1.0, 1.0], [0, 0, 0])
    with pytest.raises(PreconditionError):
        FieldState([1.0, np.nan, 1.0], [0, 0, 0])
    s = FieldState([1.0, 2.0, 3.0], [0, 0, 0])
    with pytest.raises(ValueError):
        s.rho[0] = 5.0


# ---------------------------------------------------------------- noise

NOISE = NoiseSpec(0.01, 2.0, 1.0)


def test_sigma_vanishes_where_required():
    rho = np.linspace(0, 2, 11)
    assert np.all(default_sigma(0.3, rho, 0.0, NOISE) == 0)
    m = np.linspace(-2, 2, 11)
    assert np.all(default_sigma(0.3, 0.0, m, NOISE) == 0)
    assert np.all(np.abs(default_sigma(0.0, 1.0, m, NOISE)) < 1e-17)
    assert np.all(np.abs(default_sigma(1.0, 1.0, m, NOISE)) < 1e-17)
    assert default_sigma(0.5, 2.5, 0.3, NOISE) == 0
    assert default_sigma(0.5, 1.0, 2.5, NOISE) == 0
    assert default_sigma(0.5, 10.0, -30.0, NOISE) == 0


def test_sigma_nonzero_inside():
    assert abs(default_sigma(0.5, 1.0, 0.3, NOISE)) > 0


pairs = st.tuples(st.floats(0, 1), st.floats(0, 2.5), st.floats(-2.5, 2.5), st.floats(0, 2.5), st.floats(-2.5, 2.5))


@settings(max_examples=400)
@given(pairs)
def test_sigma_lipschitz(p):
    x, r1, m1, r2, m2 = p
    d = abs(default_sigma(x, r1, m1, NOISE) - default_sigma(x, r2, m2, NOISE))
    assert d <= np.sqrt(NOISE.A0) * np.hypot(r1 - r2, m1 - m2) + 1e-15


def test_sigma_lipschitz_dense_sampling():
    rng = np.random.default_rng(3)
    for spec in (NOISE, NoiseSpec(0.04, 1.0, 3.0), NoiseSpec(1.0, 5.0, 0.2, plateau=0.5)):
        n = 200_000
        x = rng.uniform(0, 1, n)
        r1 = rng.uniform(0, 1.1 * spec.M1, n)
        m1 = rng.uniform(-1.1, 1.1, n) * spec.m_max
        h = 10 ** rng.uniform(-6, 0, n)
        ang = rng.uniform(0, 2 * np.pi, n)
        r2 = np.abs(r1 + h * np.cos(ang))
        m2 = m1 + h * np.sin(ang)
        d = np.abs(spec.sigma(x, r1, m1) - spec.sigma(x, r2, m2))
        assert np.all(d <= np.sqrt(spec.A0) * np.hypot(r1 - r2, m1 - m2) * (1 + 1e-9) + 1e-16)


@given(st.floats(0, 1), st.floats(0, 3), st.floats(-3, 3))
def test_sigma_linear_bound(x, rho, m):
    assert abs(default_sigma(x, rho, m, NOISE)) <= np.sqrt(NOISE.A0) * abs(m) + 1e-16


def test_zero_noise():
    spec = NoiseSpec(0.0, 2.0, 1.0)
    assert spec.is_zero
    assert np.all(spec.sigma(np.linspace(0, 1, 5), 1.0, 0.5) == 0)


def test_noise_rejects_bad_plateau():
    with pytest.raises(ParameterError):
        NoiseSpec(0.01, 1, 1, plateau=1.0)


# ---------------------------------------------------------------- mollification


def test_mollify_constant_unchanged():
    g = Grid(64)
    s = mollify_initial_data(np.full(64, 0.7), np.zeros(64), 0.05, g)
    assert np.allclose(s.rho, 0.7, rtol=0, atol=1e-15)
    assert np.all(s.m == 0)


@pytest.mark.parametrize("preset", ["bump", "two_bumps", "vacuum_patch"])
def test_mollify_bounds_and_walls(preset):
    g = Grid(128)
    eps = 0.02
    rho0, m0 = preset_initial(preset, g)
    s = mollify_initial_data(rho0, m0, eps, g, bounds=(2.0, 1.0))
    assert s.rho.max() <= 2.0
    assert s.rho.min() >= min(eps, np.maximum(rho0, eps).min()) - 1e-15
    assert s.m[0] == 0 and s.m[-1] == 0
    assert abs(s.mass() - np.mean(rho0)) <= 2 * eps * 2.0


def test_mollify_reflection_is_symmetric():
    from sel.model import _convolve_reflected, _extend, mollifier_weights

    g = Grid(50)
    rho0, m0 = preset_initial("two_bumps", g)
    w = mollifier_weights(0.05, g.dx, g.n)
    full_rho = np.convolve(_extend(rho0, False), w, "same")
    full_m = np.convolve(_extend(m0, True), w, "same")
    n = g.n
    # even / odd about the left wall: cells -1 and 0 mirror each other
    assert np.isclose(full_rho[n - 1], full_rho[n], rtol=0, atol=1e-14)
    assert np.isclose(full_m[n - 1], -full_m[n], rtol=0, atol=1e-14)
    assert np.allclose(_convolve_reflected(rho0, w, False), full_rho[n:2 * n])


def test_mollify_mass_budget_random():
    rng = np.random.default_rng(1)
    g = Grid(100)
    for _ in range(20):
        rho0 = rng.uniform(0, 2, g.n)
        m0 = rng.uniform(-1, 1, g.n) * rho0
        eps = rng.uniform(1e-3, 0.05)
        s = mollify_initial_data(rho0, m0, eps, g, bounds=(2.0, 1.0))
        assert abs(s.mass() - rho0.mean()) <= 2 * eps * 2.0
        assert s.rho.max() <= 2.0 + 1e-15


def test_mollify_precondition():
    g = Grid(10)
    with pytest.raises(PreconditionError):
        mollify_initial_data(np.full(10, 3.0), np.zeros(10), 0.01, g, bounds=(2.0, 1.0))
    with pytest.raises(PreconditionError):
        mollify_initial_data(np.ones(10), np.full(10, 2.0), 0.01, g, bounds=(2.0, 1.0))


def test_csv_initial_data(tmp_path):
    p = tmp_path / "init.csv"
    p.write_text("x,rho0,m0\n0,1.0,0\n0.5,1.5,0.1\n1,1.0,0\n")
    g = Grid(4)
    rho, m = load_initial_csv(p, g)
    assert np.allclose(rho, np.interp(g.x, [0, 0.5, 1], [1.0, 1.5, 1.0]))
    assert np.allclose(m, np.interp(g.x, [0, 0.5, 1], [0, 0.1, 0]))


def test_unknown_preset():
    with pytest.raises(ParameterError):
        preset_initial("nope", Grid(8))


def test_field_state_pickles():
    import pickle

    s = FieldState([1.0, 2.0], [0.0, 0.5], 0.25)
    r = pickle.loads(pickle.dumps(s))
    assert np.array_equal(r.rho, s.rho) and np.array_equal(r.m, s.m) and r.t == 0.25
    assert not r.rho.flags.writeable
