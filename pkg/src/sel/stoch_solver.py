"""Stochastic subproblem: density frozen, momentum driven by multiplicative Ito noise."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, PathExhaustedError, PreconditionError
from .model import FieldState

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StochStepConfig:
    """Euler-Maruyama settings.

    ``clamp`` pulls momentum that started inside the noise support box
    back onto the box after each substep; cells that started outside are
    never touched.
    """

    substeps_per_interval: int = 4
    clamp: bool = True

    def __post_init__(self):
        if int(self.substeps_per_interval) != self.substeps_per_interval or self.substeps_per_interval < 1:
            raise ParameterError("substeps_per_interval must be an integer >= 1")


def stoch_substep(state, dW, noise, grid, clamp=True):
    """One Euler-Maruyama increment ``m <- m + sigma(x, rho, m) dW``.

    The scalar ``dW`` is shared by all cells. Density is returned as the
    very same array object, so it is untouched bit for bit. Returns the
    new state and the total clamp correction applied.
    """
    if noise.is_zero or dW == 0.0:
        return state, 0.0
    rho, m = state.rho, state.m
    sig = noise.sigma(grid.x, rho, m)
    m_new = m + sig * dW
    m_new[0] = 0.0
    m_new[-1] = 0.0
    clamped = 0.0
    if clamp:
        B = noise.m_max
        was_inside = noise.inside(rho, m)
        over = was_inside & (np.abs(m_new) > B)
        if np.any(over):
            target = np.clip(m_new[over], -B, B)
            clamped = float(np.sum(np.abs(m_new[over] - target)))
            m_new[over] = target
    return FieldState._trusted(rho, m_new, state.t), clamped


def _index_range(path, t_n, t):
    k0 = t_n / path.dt
    k1 = t / path.dt
    i0 = int(round(k0))
    i1 = int(round(k1))
    tol = 1e-7
    if abs(k0 - i0) > tol or abs(k1 - i1) > tol:
        raise PreconditionError(
            f"window [{t_n}, {t}] is not aligned with the path step {path.dt}"
        )
    if i1 > path.count:
        raise PathExhaustedError(
            f"path covers [0, {path.horizon:.6g}] but increments up to t={t:.6g} were requested"
        )
    return i0, i1


def apply_R(state, t_n, t, path, noise, config=StochStepConfig(), grid=None, record=None):
    """Iterate Euler-Maruyama substeps over the path increments in ``[t_n, t]``.

    ``t_n`` and ``t`` must lie on the path mesh. If ``record`` is a
    list, the pre-increment state and increment of every substep are
    appended to it.
    """
    if t < t_n:
        raise PreconditionError("apply_R needs t_n <= t")
    from .model import Grid

    grid = grid or Grid(state.n)
    i0, i1 = _index_range(path, t_n, t)
    cur = state
    total_clamp = 0.0
    for k in range(i0, i1):
        dW = float(path.increments[k])
        if record is not None:
            record.append((cur, dW))
        cur, c = stoch_substep(cur, dW, noise, grid, clamp=config.clamp)
        total_clamp += c
    if total_clamp > 0:
        log.debug("clamped momentum by %.3e over [%g, %g]", total_clamp, t_n, t)
    if cur.t != t:
        cur = FieldState._trusted(cur.rho, cur.m.copy(), t)
    return cur


def path_dt_for(tau, substeps):
    return tau / substeps


def check_path_resolution(path, tau, substeps):
    want = tau / substeps
    if not math.isclose(path.dt, want, rel_tol=1e-9):
        raise PreconditionError(
            f"path step {path.dt:.6g} does not match tau/substeps = {want:.6g}"
        )
