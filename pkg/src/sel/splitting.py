"""Interpolated Lie-Trotter splitting of the deterministic and stochastic legs.

On each window ``(t_n, t_n + tau]`` the deterministic leg gives
``Ubar(t) = S(t - t_n) U_n`` and the stochastic leg
``Utilde(t) = R(t, t_n) S(tau) U_n``; the scheme value is their convex
combination with weights ``(t_{n+1} - t)/tau`` and ``(t - t_n)/tau``.
The next window starts from ``U_{n+1} = Utilde(t_{n+1})``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .brownian import refine
from .det_solver import DetSolverConfig, apply_S, cell_gradients, compute_invariants, stable_dt
from .entropy import entropy_grad, entropy_hessian, eval_entropy, eval_entropy_flux
from .errors import NumericalBlowupError, ParameterError, PreconditionError
from .model import FieldState, Grid, NoiseSpec
from .stoch_solver import StochStepConfig, apply_R, check_path_resolution

MODES = ("interpolated", "endpoint")


@dataclass(frozen=True)
class SplitConfig:
    """Window layout and recording.

    Parameters
    ----------
    T : float
        Horizon.
    N : int
        Number of windows, ``tau = T / N``.
    mode : str
        ``"endpoint"`` records window ends only; ``"interpolated"``
        allows record times inside windows.
    record_times : tuple of float, optional
        Defaults to every window end plus ``t = 0``.
    det_steps : int, optional
        Fixed number of equal deterministic substeps per window. ``None``
        picks substeps from the CFL condition on the fly.
    """

    T: float
    N: int
    mode: str = "endpoint"
    record_times: tuple | None = None
    det_steps: int | None = None

    def __post_init__(self):
        if not self.T >= 0:
            raise ParameterError("T must be nonnegative")
        if int(self.N) != self.N or self.N < 1:
            raise ParameterError("N must be an integer >= 1")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}")
        if self.det_steps is not None and self.det_steps < 1:
            raise ParameterError("det_steps must be >= 1")
        if self.record_times is not None:
            rt = tuple(float(t) for t in self.record_times)
            if any(t < 0 or t > self.T * (1 + 1e-12) for t in rt):
                raise ParameterError("record times must lie in [0, T]")
            if any(b <= a for a, b in zip(rt, rt[1:])):
                raise ParameterError("record times must be strictly increasing")
            object.__setattr__(self, "record_times", rt)

    @property
    def tau(self):
        return self.T / self.N

    def window_start(self, n):
        return self.T * n / self.N

    def times(self):
        if self.record_times is not None:
            return self.record_times
        return tuple(self.window_start(n) for n in range(self.N + 1))

    @property
    def det_dt(self):
        return None if self.det_steps is None else self.tau / self.det_steps


@dataclass
class Trajectory:
    """Recorded states of one run plus per-snapshot diagnostics."""

    times: np.ndarray
    states: list
    rho_star: float
    diagnostics: dict = field(default_factory=dict)
    bar: list | None = None
    tilde: list | None = None

    def __len__(self):
        return len(self.states)

    @property
    def final(self):
        return self.states[-1]


def snapshot_diagnostics(states, params, rho_star):
    mass, wmax, zmin, dr, dm = [], [], [], [], []
    for s in states:
        _, _, w, z = compute_invariants(s, params)
        mass.append(s.mass())
        wmax.append(w)
        zmin.append(z)
        dr.append(float(np.sum((s.rho - rho_star) ** 2) / s.n))
        dm.append(float(np.sum(s.m ** 2) / s.n))
    return {
        "mass": np.array(mass),
        "max_w": np.array(wmax),
        "min_z": np.array(zmin),
        "l2_rho_dev": np.array(dr),
        "l2_m": np.array(dm),
    }


def _assign_windows(times, cfg):
    """Map each record time to (window index, offset in window)."""
    tau = cfg.tau
    out = []
    for t in times:
        if t == 0 or tau == 0:
            out.append((-1, 0.0))
            continue
        n = int(math.ceil(t / tau - 1e-9)) - 1
        n = min(max(n, 0), cfg.N - 1)
        off = t - cfg.window_start(n)
        if cfg.mode == "endpoint" and abs(off - tau) > 1e-9 * max(1.0, tau):
            raise PreconditionError(f"endpoint mode records window ends only; got t={t}")
        out.append((n, off))
    return out


def _blend(bar, tilde, w_tilde, t):
    w_bar = 1.0 - w_tilde
    rho = w_bar * bar.rho + w_tilde * tilde.rho
    m = w_bar * bar.m + w_tilde * tilde.m
    return FieldState._trusted(rho, m, t)


def lie_trotter_run(state0, path, params, split_cfg, det_cfg=DetSolverConfig(),
                    stoch_cfg=StochStepConfig(), noise=None, keep_legs=False):
    """Run the splitting scheme and record states at ``split_cfg.times()``.

    Parameters
    ----------
    state0 : FieldState
    path : BrownianPath
        Step ``tau / substeps_per_interval``, covering ``[0, T]``.
    params : ModelParams
    split_cfg : SplitConfig
    det_cfg, stoch_cfg : solver settings
    noise : NoiseSpec, optional
        Defaults to the standard family built from ``params``.
    keep_legs : bool
        Also store the deterministic and stochastic leg states at every
        record time.
    """
    noise = NoiseSpec.from_params(params) if noise is None else noise
    grid = Grid(state0.n)
    tau = split_cfg.tau
    if tau > 0:
        check_path_resolution(path, tau, stoch_cfg.substeps_per_interval)
    times = split_cfg.times()
    slots = _assign_windows(times, split_cfg)
    by_window = {}
    for i, (n, off) in enumerate(slots):
        by_window.setdefault(n, []).append((i, off))
    states = [None] * len(times)
    bars = [None] * len(times) if keep_legs else None
    tildes = [None] * len(times) if keep_legs else None
    for i, off in by_window.get(-1, []):
        states[i] = state0
        if keep_legs:
            bars[i] = tildes[i] = state0
    det_dt = split_cfg.det_dt
    cur = state0
    for n in range(split_cfg.N):
        t_n = split_cfg.window_start(n)
        t_next = split_cfg.window_start(n + 1)
        try:
            start = cur.with_time(t_n) if cur.t != t_n else cur
            bar_end = apply_S(start, tau, params, det_cfg, dt=det_dt)
            bar_end = bar_end.with_time(t_next) if bar_end.t != t_next else bar_end
            nxt = apply_R(bar_end, t_n, t_next, path, noise, stoch_cfg, grid)
            for i, off in by_window.get(n, []):
                t = t_n + off
                if abs(off - tau) <= 1e-12 * max(1.0, tau):
                    states[i] = nxt
                    if keep_legs:
                        bars[i], tildes[i] = bar_end, nxt
                    continue
                bar_t = apply_S(start, off, params, det_cfg, dt=det_dt)
                tilde_t = apply_R(bar_end, t_n, t, path, noise, stoch_cfg, grid)
                states[i] = _blend(bar_t, tilde_t, off / tau, t)
                if keep_legs:
                    bars[i], tildes[i] = bar_t, tilde_t
        except NumericalBlowupError as exc:
            exc.window = n
            raise
        cur = nxt
    rho_star = state0.mass()
    traj = Trajectory(np.array(times, dtype=float), states, rho_star, bar=bars, tilde=tildes)
    traj.diagnostics = snapshot_diagnostics(states, params, rho_star)
    return traj


# ---------------------------------------------------------------- refinement study


@dataclass
class RefinementTable:
    taus: np.ndarray
    errors: np.ndarray
    ratios: np.ndarray
    per_path: np.ndarray

    def rows(self):
        out = []
        for k, tau in enumerate(self.taus[:-1]):
            r = self.ratios[k - 1] if k > 0 else float("nan")
            out.append((float(tau), float(self.errors[k]), float(r)))
        return out


def _l2_diff(a, b):
    return math.sqrt(float(np.sum((a.rho - b.rho) ** 2 + (a.m - b.m) ** 2) / a.n))


def tau_refinement_study(state0, base_paths, params, taus, det_cfg=DetSolverConfig(),
                         stoch_cfg=StochStepConfig(), noise=None, det_steps=None):
    """Self-convergence of the splitting scheme under window halving.

    ``base_paths`` (a path or a list of paths) must have step
    ``taus[0] / substeps``; finer runs use :func:`refine` so that every
    level sees the same Brownian motion. The deterministic leg uses a
    fixed number of substeps per window, chosen stable for the coarsest
    window unless given, so its step shrinks with ``tau``.

    Returns the mean L2 distance between consecutive levels at ``T`` and
    the ratios of consecutive distances.
    """
    if not isinstance(base_paths, (list, tuple)):
        base_paths = [base_paths]
    taus = [float(t) for t in taus]
    for a, b in zip(taus, taus[1:]):
        if not math.isclose(a, 2 * b, rel_tol=1e-12):
            raise PreconditionError("taus must form a halving sequence")
    T = taus[0] * round(base_paths[0].horizon / taus[0])
    noise = NoiseSpec.from_params(params) if noise is None else noise
    if det_steps is None:
        det_steps = max(1, math.ceil(2.0 * taus[0] / stable_dt(state0, params, det_cfg)))
    finals = np.empty((len(base_paths), len(taus)), dtype=object)
    for p, path in enumerate(base_paths):
        cur_path = path
        for k, tau in enumerate(taus):
            if k > 0:
                cur_path = refine(cur_path)
            N = int(round(T / tau))
            cfg = SplitConfig(T, N, "endpoint", record_times=(T,), det_steps=det_steps)
            traj = lie_trotter_run(state0, cur_path, params, cfg, det_cfg, stoch_cfg, noise)
            finals[p, k] = traj.final
    per_path = np.array([[_l2_diff(finals[p, k], finals[p, k + 1]) for k in range(len(taus) - 1)]
                         for p in range(len(base_paths))])
    errors = per_path.mean(axis=0)
    ratios = errors[:-1] / errors[1:]
    return RefinementTable(np.array(taus), errors, ratios, per_path)


# ---------------------------------------------------------------- entropy balance


def bump_weights(grid, a=0.1, b=0.9):
    """Smooth test function ``sin(pi (x-a)/(b-a))**4`` on [a, b], zero elsewhere."""
    x = grid.x
    s = (x - a) / (b - a)
    inside = (s > 0) & (s < 1)
    return np.where(inside, np.sin(np.pi * s) ** 4, 0.0)


@dataclass
class ResidualSeries:
    """Per-window entropy balance residual and its terms."""

    t: np.ndarray
    residual: np.ndarray
    terms: dict

    @property
    def cumulative(self):
        return np.cumsum(self.residual)

    @property
    def max_abs_cumulative(self):
        return float(np.max(np.abs(self.cumulative))) if self.residual.size else 0.0


def _phi_derivatives(phi, dx):
    d1 = np.zeros_like(phi)
    d2 = np.zeros_like(phi)
    d1[1:-1] = (phi[2:] - phi[:-2]) / (2.0 * dx)
    d2[1:-1] = (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / (dx * dx)
    return d1, d2


class _BalanceTerms:
    def __init__(self, pair, params, phi, noise, grid):
        self.pair = pair
        self.params = params
        self.phi = phi
        self.dx = grid.dx
        self.d1, self.d2 = _phi_derivatives(phi, grid.dx)
        self.noise = noise
        self.x = grid.x

    def pair_with(self, f, w):
        return float(np.sum(f * w) * self.dx)

    def total(self, s):
        return self.pair_with(eval_entropy(s, self.pair, self.params), self.phi)

    def drift(self, s):
        """flux, damping, viscous and Hessian contributions to d/dt <eta, phi>."""
        p = self.params
        H = eval_entropy_flux(s, self.pair, self.params)
        eta = eval_entropy(s, self.pair, self.params)
        _, eta_m = entropy_grad(s, self.pair, self.params)
        drho, dm = cell_gradients(s)
        h_rr, h_rm, h_mm = entropy_hessian(s, self.pair, self.params)
        quad = h_rr * drho ** 2 + 2.0 * h_rm * drho * dm + h_mm * dm ** 2
        return {
            "flux": self.pair_with(H, self.d1),
            "damping": -p.alpha * self.pair_with(s.m * eta_m, self.phi),
            "viscous": p.epsilon * self.pair_with(eta, self.d2),
            "hessian": -p.epsilon * self.pair_with(quad, self.phi),
        }

    def stochastic(self, s, dW, dt):
        sig = self.noise.sigma(self.x, s.rho, s.m)
        if not np.any(sig):
            return 0.0, 0.0
        _, eta_m = entropy_grad(s, self.pair, self.params)
        _, _, h_mm = entropy_hessian(s, self.pair, self.params)
        ito = self.pair_with(sig * eta_m, self.phi) * dW
        corr = 0.5 * self.pair_with(sig ** 2 * h_mm, self.phi) * dt
        return ito, corr


def entropy_residual(state0, path, params, split_cfg, pair, phi, det_cfg=DetSolverConfig(),
                     stoch_cfg=StochStepConfig(), noise=None):
    """Discrete defect of the entropy balance, window by window.

    For window n with start ``U_n``, deterministic end ``Ubar`` and
    stochastic end ``U_{n+1}`` the residual is

    ``<eta(U_{n+1}) - eta(U_n), phi> - tau/2 (D(U_n) + D(Ubar)) - sum_j Itô_j``

    where ``D`` collects the flux, damping and viscous terms, and the
    stochastic sum uses the same increments (and pre-increment states)
    that drove the run, with the Ito correction.
    """
    noise = NoiseSpec.from_params(params) if noise is None else noise
    grid = Grid(state0.n)
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (grid.n,):
        raise PreconditionError("phi must have one weight per cell")
    if np.any(phi[:2] != 0) or np.any(phi[-2:] != 0):
        raise PreconditionError("phi must vanish in the two cells next to each wall")
    tau = split_cfg.tau
    if tau > 0:
        check_path_resolution(path, tau, stoch_cfg.substeps_per_interval)
    terms = _BalanceTerms(pair, params, phi, noise, grid)
    det_dt = split_cfg.det_dt
    names = ("time_difference", "flux", "damping", "viscous", "hessian", "ito", "ito_correction")
    acc = {k: [] for k in names}
    res = []
    times = []
    cur = state0
    E_cur = terms.total(cur)
    D_cur = terms.drift(cur)
    for n in range(split_cfg.N):
        t_n = split_cfg.window_start(n)
        t_next = split_cfg.window_start(n + 1)
        start = cur.with_time(t_n) if cur.t != t_n else cur
        bar_end = apply_S(start, tau, params, det_cfg, dt=det_dt)
        bar_end = bar_end.with_time(t_next) if bar_end.t != t_next else bar_end
        D_bar = terms.drift(bar_end)
        record = []
        nxt = apply_R(bar_end, t_n, t_next, path, noise, stoch_cfg, grid, record=record)
        ito = corr = 0.0
        for s, dW in record:
            a, b = terms.stochastic(s, dW, path.dt)
            ito += a
            corr += b
        E_next = terms.total(nxt)
        diff = E_next - E_cur
        det_int = {k: 0.5 * tau * (D_cur[k] + D_bar[k]) for k in D_cur}
        r = diff - sum(det_int.values()) - ito - corr
        acc["time_difference"].append(diff)
        for k, v in det_int.items():
            acc[k].append(v)
        acc["ito"].append(ito)
        acc["ito_correction"].append(corr)
        res.append(r)
        times.append(t_next)
        cur = nxt
        E_cur = E_next
        D_cur = terms.drift(cur)
    return ResidualSeries(np.array(times), np.array(res), {k: np.array(v) for k, v in acc.items()})
