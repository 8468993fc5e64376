"""Porous medium reference solver ``rho_t = (p(rho))_xx`` with Darcy momentum.

The density is stored as ``rho_ref + drho`` where ``rho_ref`` is the
mean density. Pressure differences are formed from
``p(rho_ref + drho) - p(rho_ref)``, computed without cancellation, so
small deviations keep full relative precision long after they drop
below the rounding level of ``rho`` itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, PreconditionError
from .model import FieldState, pressure


@dataclass(frozen=True, eq=False)
class PmeState:
    rho_ref: float
    drho: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        d = np.array(self.drho, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "drho", d)
        if np.any(self.rho_ref + d < -1e-12 * max(1.0, self.rho_ref)):
            raise PreconditionError("negative density in porous medium state")

    @classmethod
    def from_density(cls, rho, t=0.0):
        rho = np.asarray(rho, dtype=float)
        ref = float(np.mean(rho))
        return cls(ref, rho - ref, t)

    @property
    def rho(self):
        return self.rho_ref + self.drho

    @property
    def n(self):
        return self.drho.shape[0]

    def mass(self):
        return self.rho_ref + float(np.sum(self.drho) / self.n)


def pressure_excess(state, params):
    """``p(rho) - p(rho_ref)`` per cell."""
    g = params.gamma
    d = state.drho / state.rho_ref
    with np.errstate(divide="ignore"):
        rel = np.expm1(g * np.log1p(d))
    return params.kappa * state.rho_ref ** g * rel


def pme_stable_dt(state, params, safety=0.4):
    """``safety * dx**2 / (2 max p'(rho))`` using interface-averaged p'."""
    rho = np.maximum(state.rho, 0.0)
    pp = params.kappa * params.gamma * rho ** (params.gamma - 1.0)
    face = 0.5 * (pp[1:] + pp[:-1])
    top = max(float(np.max(pp)), float(np.max(face)) if face.size else 0.0)
    dx = 1.0 / state.n
    if top <= 0:
        return math.inf
    return safety * dx * dx / (2.0 * top)


def pme_step(state, dt, params, grid=None):
    """One explicit conservative step; ghost cells copy the wall pressure."""
    n = state.n
    dx = 1.0 / n
    pmax = params.kappa * params.gamma * float(np.max(np.maximum(state.rho, 0.0))) ** (params.gamma - 1.0)
    if pmax > 0 and dt > dx * dx / (2.0 * pmax) * (1 + 1e-12):
        raise PreconditionError(f"dt={dt:.3g} exceeds the explicit diffusion limit")
    q = pressure_excess(state, params)
    flux = np.zeros(n + 1)
    flux[1:-1] = (q[1:] - q[:-1]) / dx
    d_new = state.drho + (dt / dx) * (flux[1:] - flux[:-1])
    if not np.all(np.isfinite(d_new)):
        raise PreconditionError("non-finite density in porous medium step")
    return PmeState(state.rho_ref, d_new, state.t + dt)


def pme_run(state, T, params, record_times, safety=0.4):
    """Advance to each record time, returning the list of recorded states."""
    out = []
    cur = state
    for tr in record_times:
        while tr - cur.t > 1e-13 * max(1.0, tr):
            h = min(pme_stable_dt(cur, params, safety), tr - cur.t)
            cur = pme_step(cur, h, params)
        cur = PmeState(cur.rho_ref, cur.drho, tr)
        out.append(cur)
    return out


def darcy_momentum(state, params, grid=None):
    """``-(1/alpha) d/dx p(rho)`` by centred differences; zero in the end cells."""
    q = pressure_excess(state, params) if isinstance(state, PmeState) else pressure(state.rho, params)
    n = q.shape[0]
    m = np.zeros(n)
    m[1:-1] = -(q[2:] - q[:-2]) * (0.5 * n) / params.alpha
    return m


def pme_deviation(state, params):
    """``sum (rho - rho*)**2 dx + sum m**2 dx`` with Darcy momentum."""
    d = state.drho - float(np.mean(state.drho))
    m = darcy_momentum(state, params)
    return float(np.sum(d * d) / state.n + np.sum(m * m) / state.n)


def compare_euler_pme(euler_states, pme_states, params):
    """``sum (rho_E - rho_P)**2 + (m_E - m_P)**2 dx`` at matching record indices."""
    if len(euler_states) != len(pme_states):
        raise AlignmentError("series lengths differ")
    out = np.empty(len(euler_states))
    for k, (e, p) in enumerate(zip(euler_states, pme_states)):
        if e.n != p.n:
            raise AlignmentError("grids differ")
        if abs(e.t - p.t) > 1e-9 * max(1.0, abs(e.t)):
            raise AlignmentError(f"record times differ: {e.t} vs {p.t}")
        dr = (e.rho - p.rho_ref) - p.drho
        dm = e.m - darcy_momentum(p, params)
        out[k] = float(np.sum(dr * dr + dm * dm) / e.n)
    return out


def as_field_state(state, params):
    return FieldState(np.maximum(state.rho, 0.0), darcy_momentum(state, params), state.t)
