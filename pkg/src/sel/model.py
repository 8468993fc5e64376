"""Parameters, grid, field state, noise coefficient and initial data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ParameterError, PreconditionError

RHO_FLOOR = 1e-10


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the damped isentropic system.

    ``theta`` and ``kappa`` are derived from ``gamma`` and cannot be set.
    """

    gamma: float
    alpha: float
    epsilon: float
    A0: float
    M1: float
    M2: float
    theta: float = field(init=False)
    kappa: float = field(init=False)

    def __post_init__(self):
        bad = []
        if not self.gamma > 1:
            bad.append(f"gamma={self.gamma} (need > 1)")
        if not self.alpha > 0:
            bad.append(f"alpha={self.alpha} (need > 0)")
        if not self.epsilon >= 0:
            bad.append(f"epsilon={self.epsilon} (need >= 0)")
        if not self.A0 >= 0:
            bad.append(f"A0={self.A0} (need >= 0)")
        if not self.M1 > 0:
            bad.append(f"M1={self.M1} (need > 0)")
        if not self.M2 > 0:
            bad.append(f"M2={self.M2} (need > 0)")
        if bad:
            raise ParameterError("invalid model parameters: " + "; ".join(bad))
        theta = (self.gamma - 1.0) / 2.0
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "kappa", theta * theta / self.gamma)

    @property
    def sound_coeff(self):
        """sqrt(kappa*gamma), so that the sound speed is this times rho**theta."""
        return math.sqrt(self.kappa * self.gamma)


def make_params(gamma, alpha, epsilon, A0=0.0, M1=2.0, M2=1.0):
    return ModelParams(float(gamma), float(alpha), float(epsilon), float(A0), float(M1), float(M2))


def pressure(rho, params):
    """gamma-law pressure ``kappa * rho**gamma``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise PreconditionError("pressure: negative density")
    return params.kappa * np.power(rho, params.gamma)


def pressure_prime(rho, params):
    rho = np.asarray(rho, dtype=float)
    return params.kappa * params.gamma * np.power(rho, params.gamma - 1.0)


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid on [0, 1]."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ParameterError(f"grid needs an integer n >= 3, got {self.n}")

    @property
    def dx(self):
        return 1.0 / self.n

    @property
    def x(self):
        return (np.arange(self.n) + 0.5) / self.n


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class FieldState:
    """Cell averages of density and momentum at time ``t``.

    Arrays are copied and marked read-only so states can be shared
    between workers without defensive copies.
    """

    __slots__ = ("rho", "m", "t")

    def __init__(self, rho, m, t=0.0):
        rho = _frozen(rho)
        m = _frozen(m)
        if rho.shape != m.shape or rho.ndim != 1:
            raise PreconditionError("rho and m must be 1D arrays of equal length")
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(m))):
            raise PreconditionError("state has non-finite entries")
        if np.any(rho < 0):
            raise PreconditionError("state has negative density")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "t", float(t))

    def __setattr__(self, name, value):
        raise AttributeError("FieldState is immutable")

    @classmethod
    def _trusted(cls, rho, m, t):
        # internal constructor for solver output already checked for finiteness
        obj = object.__new__(cls)
        rho.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(obj, "rho", rho)
        object.__setattr__(obj, "m", m)
        object.__setattr__(obj, "t", float(t))
        return obj

    def __reduce__(self):
        # slots plus a blocked __setattr__ defeat the default pickle protocol
        return (FieldState._trusted, (self.rho, self.m, self.t))

    @property
    def n(self):
        return self.rho.shape[0]

    def mass(self):
        return float(np.sum(self.rho) / self.n)

    def velocity(self, rho_floor=RHO_FLOOR):
        return self.m / np.maximum(self.rho, rho_floor)

    def with_time(self, t):
        return FieldState._trusted(self.rho.copy(), self.m.copy(), t)

    def __repr__(self):
        return f"FieldState(n={self.n}, t={self.t:.6g}, mass={self.mass():.12g})"


# ---------------------------------------------------------------- noise


def smoothstep5(s):
    """C2 quintic ramp from 0 (s<=0) to 1 (s>=1); max slope 15/8."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


SMOOTHSTEP_SLOPE = 1.875


def sin_envelope(x):
    return np.sin(np.pi * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative noise coefficient sigma(x, rho, m).

    The unit shape is ``m * envelope(x) * cutoff(rho, m)`` where the
    cutoff is the product of two C2 ramps (equal to one on the inner
    ``plateau`` fraction of the support box and zero outside it) and the
    factor ``rho / (rho + |m|)``, which makes sigma vanish at zero
    density without a steep ramp. The shape is scaled by ``gain`` so the
    state-Lipschitz constant is at most ``sqrt(A0)``.
    """

    A0: float
    M1: float
    M2: float
    plateau: float = 0.9
    envelope: Callable = sin_envelope

    def __post_init__(self):
        if self.A0 < 0 or self.M1 <= 0 or self.M2 <= 0:
            raise ParameterError("noise needs A0 >= 0, M1 > 0, M2 > 0")
        if not 0.0 < self.plateau < 1.0:
            raise ParameterError("plateau fraction must lie in (0, 1)")

    @classmethod
    def from_params(cls, params, plateau=0.9):
        return cls(params.A0, params.M1, params.M2, plateau)

    @property
    def m_max(self):
        return self.M1 * self.M2

    @property
    def support_box(self):
        return (0.0, self.M1, -self.m_max, self.m_max)

    @property
    def unit_lipschitz(self):
        """Upper bound on the state gradient of the unscaled shape."""
        w_rho = (1.0 - self.plateau) * self.M1
        w_m = (1.0 - self.plateau) * self.m_max
        s_max = self.M1 * self.m_max / (self.M1 + self.m_max)
        return 1.0 + s_max * SMOOTHSTEP_SLOPE * math.hypot(1.0 / w_rho, 1.0 / w_m)

    @property
    def gain(self):
        return math.sqrt(self.A0) / self.unit_lipschitz

    @property
    def is_zero(self):
        return self.A0 == 0.0

    def cutoff(self, rho, m):
        rho = np.asarray(rho, dtype=float)
        m = np.asarray(m, dtype=float)
        am = np.abs(m)
        w_rho = (1.0 - self.plateau) * self.M1
        w_m = (1.0 - self.plateau) * self.m_max
        c_rho = 1.0 - smoothstep5((rho - self.plateau * self.M1) / w_rho)
        c_m = 1.0 - smoothstep5((am - self.plateau * self.m_max) / w_m)
        denom = rho + am
        frac = np.divide(rho, denom, out=np.zeros_like(denom), where=denom > 0)
        inside = (rho >= 0) & (rho <= self.M1) & (am <= self.m_max)
        return np.where(inside, c_rho * c_m * frac, 0.0)

    def inside(self, rho, m):
        rho = np.asarray(rho, dtype=float)
        m = np.asarray(m, dtype=float)
        return (rho >= 0) & (rho <= self.M1) & (np.abs(m) <= self.m_max)

    def sigma(self, x, rho, m):
        if self.A0 == 0.0:
            return np.zeros(np.broadcast(np.asarray(x), np.asarray(rho), np.asarray(m)).shape)
        m = np.asarray(m, dtype=float)
        return self.gain * m * self.envelope(x) * self.cutoff(rho, m)


def default_sigma(x, rho, m, spec):
    return spec.sigma(x, rho, m)


# ---------------------------------------------------------------- initial data


def _gauss(x, c, w):
    return np.exp(-0.5 * ((x - c) / w) ** 2)


PRESETS = ("constant", "bump", "two_bumps", "vacuum_patch")


def preset_initial(name, grid):
    """Raw (unmollified) initial samples at cell centres for a named preset."""
    x = grid.x
    if name == "constant":
        rho = np.ones_like(x)
        m = np.zeros_like(x)
    elif name == "bump":
        rho = 1.0 + 0.5 * _gauss(x, 0.3, 0.08)
        m = np.zeros_like(x)
    elif name == "two_bumps":
        rho = 1.0 + 0.4 * _gauss(x, 0.25, 0.06) + 0.3 * _gauss(x, 0.7, 0.08)
        m = 0.1 * np.sin(2.0 * np.pi * x) * rho
    elif name == "vacuum_patch":
        ramp = smoothstep5((np.abs(x - 0.5) - 0.1) / 0.05)
        rho = ramp.copy()
        m = np.zeros_like(x)
    else:
        raise ParameterError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return rho, m


def load_initial_csv(path, grid):
    """Read (x, rho0, m0) rows and interpolate linearly onto the cell centres."""
    xs, rs, ms = [], [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                vals = [float(v) for v in row[:3]]
            except ValueError:
                continue  # header
            xs.append(vals[0])
            rs.append(vals[1])
            ms.append(vals[2])
    if len(xs) < 2:
        raise PreconditionError(f"{path}: need at least two data rows")
    order = np.argsort(xs)
    xs = np.asarray(xs)[order]
    return np.interp(grid.x, xs, np.asarray(rs)[order]), np.interp(grid.x, xs, np.asarray(ms)[order])


def check_initial_bounds(rho0, m0, M1, M2, tol=1e-12):
    rho0 = np.asarray(rho0, dtype=float)
    m0 = np.asarray(m0, dtype=float)
    problems = []
    if np.any(rho0 < -tol):
        problems.append("rho0 < 0")
    if np.any(rho0 > M1 + tol):
        problems.append(f"rho0 > M1={M1}")
    if np.any(np.abs(m0) > M2 * np.maximum(rho0, 0.0) + tol):
        problems.append(f"|m0| > M2*rho0 with M2={M2}")
    if problems:
        raise PreconditionError("initial data violates bounds: " + ", ".join(problems))


def mollifier_weights(epsilon, dx, n):
    """Normalised Gaussian weights of standard deviation epsilon, cut at 3 epsilon."""
    if epsilon <= 0:
        return np.ones(1)
    half = min(int(math.ceil(3.0 * epsilon / dx)), n)
    j = np.arange(-half, half + 1) * dx
    w = np.exp(-0.5 * (j / epsilon) ** 2)
    return w / w.sum()


def _extend(values, odd):
    sign = -1.0 if odd else 1.0
    rev = sign * values[::-1]
    return np.concatenate([rev, values, rev])


def mollify_initial_data(rho0_samples, m0_samples, epsilon, grid, bounds=None):
    """Regularised initial state.

    Density is floored at ``epsilon``, both fields are reflected across
    the walls (density evenly, momentum oddly), convolved with a discrete
    Gaussian and restricted back to [0, 1]. Momentum in the two end cells
    is set to zero.

    Parameters
    ----------
    rho0_samples, m0_samples : array_like
        Values at the cell centres of ``grid``.
    epsilon : float
        Viscosity, also used as the mollifier width.
    grid : Grid
    bounds : tuple of float, optional
        ``(M1, M2)``; when given the input is validated against
        ``0 <= rho0 <= M1`` and ``|m0| <= M2 rho0``.
    """
    rho0 = np.asarray(rho0_samples, dtype=float)
    m0 = np.asarray(m0_samples, dtype=float)
    if rho0.shape != (grid.n,) or m0.shape != (grid.n,):
        raise PreconditionError("initial samples must match the grid size")
    if bounds is not None:
        check_initial_bounds(rho0, m0, *bounds)
    elif np.any(rho0 < 0):
        raise PreconditionError("initial density must be nonnegative")
    rho_t = np.maximum(rho0, epsilon)
    w = mollifier_weights(epsilon, grid.dx, grid.n)
    rho = _convolve_reflected(rho_t, w, odd=False)
    m = _convolve_reflected(m0, w, odd=True)
    m[0] = 0.0
    m[-1] = 0.0
    return FieldState(rho, m, 0.0)


def _convolve_reflected(values, w, odd):
    n = values.shape[0]
    ext = _extend(values, odd)
    out = np.convolve(ext, w, mode="same")
    return out[n:2 * n].copy()


def initial_state(preset, grid, params, csv_path=None):
    """Build the mollified initial state from a preset name or a CSV file."""
    if csv_path is not None:
        rho0, m0 = load_initial_csv(csv_path, grid)
    else:
        rho0, m0 = preset_initial(preset, grid)
    return mollify_initial_data(rho0, m0, params.epsilon, grid, bounds=(params.M1, params.M2))
