"""Kinetic entropy pairs, mechanical and relative entropy, pressure-law checks.

The entropy generated by a convex ``g`` is

    eta(rho, m) = c * rho * int_{-1}^{1} g(u + z rho**theta) (1 - z**2)**lam dz
    H(rho, m)   = c * rho * int g(u + z rho**theta) (u + z theta rho**theta) (1 - z**2)**lam dz

with ``lam = (3 - gamma) / (2 (gamma - 1))`` and ``c`` normalising the
weight to unit mass. The integrals are evaluated with Gauss-Jacobi
quadrature for the weight ``(1 - z**2)**lam``, which is exact when
``g`` is a polynomial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import betaln, roots_jacobi

from .errors import ParameterError, PreconditionError
from .model import RHO_FLOOR, pressure


@dataclass(frozen=True)
class Generator:
    name: str
    g: Callable
    dg: Callable
    d2g: Callable


def _power_generator(p):
    if p < 2:
        raise ParameterError("power generator needs p >= 2")

    def g(s):
        return np.abs(s) ** p / p

    def dg(s):
        return np.sign(s) * np.abs(s) ** (p - 1)

    def d2g(s):
        return (p - 1) * np.abs(s) ** (p - 2)

    return Generator(f"power:{p:g}", g, dg, d2g)


_BUILTIN = {
    "one": Generator("one", lambda s: np.ones_like(s), lambda s: np.zeros_like(s), lambda s: np.zeros_like(s)),
    "xi": Generator("xi", lambda s: s, lambda s: np.ones_like(s), lambda s: np.zeros_like(s)),
    "half_xi_sq": Generator("half_xi_sq", lambda s: 0.5 * s * s, lambda s: s, lambda s: np.ones_like(s)),
}

BUILTIN_NAMES = ("one", "xi", "half_xi_sq", "power:p")


def get_generator(name):
    if name in _BUILTIN:
        return _BUILTIN[name]
    if name.startswith("power:"):
        try:
            p = float(name.split(":", 1)[1])
        except ValueError:
            raise ParameterError(f"bad power generator {name!r}") from None
        return _power_generator(p)
    raise ParameterError(f"unknown generator {name!r}; built-ins: {', '.join(BUILTIN_NAMES)}")


def kinetic_lambda(gamma):
    return (3.0 - gamma) / (2.0 * (gamma - 1.0))


def kernel_mass(lam):
    """int_{-1}^{1} (1 - z**2)**lam dz = B(1/2, lam + 1)."""
    return math.exp(betaln(0.5, lam + 1.0))


@dataclass(frozen=True, eq=False)
class EntropyPair:
    """Generator plus quadrature data for one adiabatic exponent.

    ``quad_weights`` already contain the factor ``(1 - z**2)**lam``.
    """

    generator: Generator
    gamma: float
    lam: float
    c_lambda: float
    quad_nodes: np.ndarray
    quad_weights: np.ndarray

    @property
    def name(self):
        return self.generator.name


def make_pair(generator, gamma, n_nodes=48):
    """Entropy pair for ``generator`` (name or Generator) and exponent ``gamma``."""
    if not gamma > 1:
        raise ParameterError("entropy pairs need gamma > 1")
    gen = get_generator(generator) if isinstance(generator, str) else generator
    lam = kinetic_lambda(gamma)
    if lam <= -1:
        raise ParameterError(f"kernel exponent {lam} is not integrable")
    z, w = roots_jacobi(int(n_nodes), lam, lam)
    return EntropyPair(gen, float(gamma), lam, 1.0 / kernel_mass(lam), z, w)


def _split(state_cell):
    if hasattr(state_cell, "rho"):
        return np.asarray(state_cell.rho, dtype=float), np.asarray(state_cell.m, dtype=float)
    rho, m = state_cell
    return np.asarray(rho, dtype=float), np.asarray(m, dtype=float)


def _check_gamma(pair, params):
    if params is not None and abs(pair.gamma - params.gamma) > 1e-14:
        raise ParameterError("entropy pair was built for a different gamma")


def _kinetic(rho, m, pair, theta, rho_floor):
    u = m / np.maximum(rho, rho_floor)
    c = np.power(rho, theta)
    xi = u[..., None] + pair.quad_nodes * c[..., None]
    return u, c, xi


def eval_entropy(state_cell, pair, params, rho_floor=RHO_FLOOR):
    """Entropy ``eta`` per cell; zero at vacuum."""
    _check_gamma(pair, params)
    rho, m = _split(state_cell)
    if np.any(rho < 0):
        raise PreconditionError("negative density")
    _, _, xi = _kinetic(rho, m, pair, params.theta, rho_floor)
    integral = pair.generator.g(xi) @ pair.quad_weights
    return np.where(rho > 0, pair.c_lambda * rho * integral, 0.0)


def eval_entropy_flux(state_cell, pair, params, rho_floor=RHO_FLOOR):
    """Entropy flux ``H`` per cell; zero at vacuum."""
    _check_gamma(pair, params)
    rho, m = _split(state_cell)
    if np.any(rho < 0):
        raise PreconditionError("negative density")
    u, c, xi = _kinetic(rho, m, pair, params.theta, rho_floor)
    speed = u[..., None] + pair.quad_nodes * (params.theta * c)[..., None]
    integral = (pair.generator.g(xi) * speed) @ pair.quad_weights
    return np.where(rho > 0, pair.c_lambda * rho * integral, 0.0)


def entropy_grad(state_cell, pair, params, rho_floor=RHO_FLOOR):
    """Gradient ``(d eta/d rho, d eta/d m)``; undefined at vacuum."""
    _check_gamma(pair, params)
    rho, m = _split(state_cell)
    if np.any(rho <= rho_floor):
        raise PreconditionError("entropy gradient requested at a vacuum cell")
    u, c, xi = _kinetic(rho, m, pair, params.theta, rho_floor)
    gen = pair.generator
    dg = gen.dg(xi)
    # rho * d(xi)/d(rho) = -u + z theta rho**theta
    rdxi = -u[..., None] + pair.quad_nodes * (params.theta * c)[..., None]
    d_rho = (gen.g(xi) + dg * rdxi) @ pair.quad_weights
    d_m = dg @ pair.quad_weights
    return pair.c_lambda * d_rho, pair.c_lambda * d_m


def entropy_hessian(state_cell, pair, params, rho_floor=RHO_FLOOR):
    """Second derivatives ``(eta_rr, eta_rm, eta_mm)``."""
    _check_gamma(pair, params)
    rho, m = _split(state_cell)
    if np.any(rho <= rho_floor):
        raise PreconditionError("entropy Hessian requested at a vacuum cell")
    th = params.theta
    u, c, xi = _kinetic(rho, m, pair, th, rho_floor)
    gen = pair.generator
    dg = gen.dg(xi)
    d2g = gen.d2g(xi)
    z = pair.quad_nodes
    r = rho[..., None]
    dxi_dr = (-u[..., None] + z * (th * c)[..., None]) / r
    w = pair.quad_weights
    h_mm = (d2g / r) @ w
    h_rm = (d2g * dxi_dr) @ w
    h_rr = (d2g * r * dxi_dr ** 2 + dg * z * (th * (1.0 + th)) * (c[..., None] / r)) @ w
    k = pair.c_lambda
    return k * h_rr, k * h_rm, k * h_mm


def hessian_quadratic(state_cell, drho_dx, dm_dx, pair, params, rho_floor=RHO_FLOOR):
    """``<grad^2 eta  dU/dx, dU/dx>`` for a general pair."""
    h_rr, h_rm, h_mm = entropy_hessian(state_cell, pair, params, rho_floor)
    return h_rr * drho_dx ** 2 + 2.0 * h_rm * drho_dx * dm_dx + h_mm * dm_dx ** 2


# ---------------------------------------------------------------- closed forms


def mechanical_energy(rho, m, params, rho_floor=RHO_FLOOR):
    rho = np.asarray(rho, dtype=float)
    m = np.asarray(m, dtype=float)
    kin = np.where(rho > 0, 0.5 * m * m / np.maximum(rho, rho_floor), 0.0)
    return kin + params.kappa * np.power(rho, params.gamma) / (params.gamma - 1.0)


def energy_flux(rho, m, params, rho_floor=RHO_FLOOR):
    rho = np.asarray(rho, dtype=float)
    m = np.asarray(m, dtype=float)
    u = m / np.maximum(rho, rho_floor)
    return u * (mechanical_energy(rho, m, params, rho_floor) + pressure(rho, params))


def hessian_energy_quadratic(rho, drho_dx, du_dx, params):
    """Energy dissipation density ``kappa gamma rho**(gamma-2) rho_x**2 + rho u_x**2``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise PreconditionError("density must be positive")
    g = params.gamma
    return params.kappa * g * np.power(rho, g - 2.0) * np.square(drho_dx) + rho * np.square(du_dx)


@dataclass(frozen=True)
class RelativeEntropyRef:
    rho_star: float

    def __post_init__(self):
        if not self.rho_star > 0:
            raise ParameterError("reference density must be positive")


def pressure_bregman(rho, rho_star, params):
    """``p(rho) - p(rho*) - p'(rho*)(rho - rho*)`` without cancellation for rho near rho*."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise PreconditionError("negative density")
    g = params.gamma
    d = (rho - rho_star) / rho_star
    with np.errstate(divide="ignore"):
        rel = np.expm1(g * np.log1p(d)) - g * d
    # log1p(-1) = -inf gives expm1 = -1, the correct vacuum limit
    return params.kappa * rho_star ** g * rel


def eval_eta_star(state_cell, ref, params, rho_floor=RHO_FLOOR):
    """Relative entropy with respect to the constant state ``(rho*, 0)``."""
    rho, m = _split(state_cell)
    kin = np.where(rho > 0, 0.5 * m * m / np.maximum(rho, rho_floor), 0.0)
    return kin + pressure_bregman(rho, ref.rho_star, params)


# ---------------------------------------------------------------- pressure-law inequalities


def pressure_grid(M, samples):
    """``samples`` (a, b) pairs on a uniform square grid over [0, M]**2."""
    k = max(int(round(math.sqrt(samples))), 2)
    v = np.linspace(0.0, M, k)
    a, b = np.meshgrid(v, v, indexing="ij")
    return a.ravel(), b.ravel()


def _pressure_ratios(a, b, gamma):
    # normalised pressure a**gamma; constants are absorbed by the ratios
    off = a != b
    a = a[off]
    b = b[off]
    d = a - b
    ad = np.abs(d)
    pa = a ** gamma
    pb = b ** gamma
    dp = pa - pb
    breg = pa - pb - gamma * b ** (gamma - 1.0) * d
    lower_pow = 2.0 if gamma <= 2 else gamma
    return {
        "monotone": ad ** (gamma + 1.0) / (d * dp),
        "bregman_lower": ad ** lower_pow / breg,
        "bregman_upper": breg / ad,
        "bregman_vs_monotone": breg / (d * dp),
    }


@dataclass(frozen=True)
class RatioStat:
    name: str
    min: float
    max: float
    finite: bool
    positive: bool
    growth: float

    @property
    def ok(self):
        return self.finite and self.positive


@dataclass(frozen=True)
class PressureReport:
    gamma: float
    M: float
    n_pairs: int
    ratios: tuple

    @property
    def passed(self):
        return all(r.ok for r in self.ratios)

    def lines(self):
        out = []
        for r in self.ratios:
            out.append(
                f"{r.name:22s} min={r.min:.4g} max={r.max:.4g} finite={r.finite} "
                f"positive={r.positive} growth_on_refinement={r.growth:.3g}"
            )
        return out


def check_pressure_inequalities(a=None, b=None, M=1.0, gamma=2.0, samples=10_000):
    """Empirical extremal ratios for the pressure-law inequalities.

    Every ratio is arranged so that the inequality it tests says "this
    ratio is bounded above":

    ``monotone``
        ``|a-b|**(gamma+1) / ((a-b)(p(a)-p(b)))``
    ``bregman_lower``
        ``|a-b|**q / E`` with ``q = 2`` (gamma <= 2) or ``q = gamma``,
        where ``E = p(a) - p(b) - p'(b)(a-b)``
    ``bregman_upper``
        ``E / |a-b|``
    ``bregman_vs_monotone``
        ``E / ((p(a)-p(b))(a-b))``

    The check passes when every ratio is finite and strictly positive on
    the sample set. ``growth`` compares the maximum on the sample grid
    with the maximum on a grid of twice the resolution; values well
    above one hint at a ratio that is bounded only on the discrete set.
    """
    if a is None or b is None:
        a, b = pressure_grid(M, samples)
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise PreconditionError("a and b must have the same length")
    if np.any(a < 0) or np.any(b < 0) or np.any(a > M) or np.any(b > M):
        raise PreconditionError(f"samples must lie in [0, {M}]")
    ratios = _pressure_ratios(a, b, gamma)
    fa, fb = pressure_grid(M, 4 * max(a.size, 4))
    fine = _pressure_ratios(fa, fb, gamma)
    stats = []
    for name, r in ratios.items():
        if r.size == 0:
            stats.append(RatioStat(name, 0.0, 0.0, True, True, 1.0))
            continue
        finite = bool(np.all(np.isfinite(r)))
        rmin = float(np.min(r)) if finite else float("nan")
        rmax = float(np.max(r)) if finite else float("inf")
        fmax = float(np.max(fine[name])) if fine[name].size else rmax
        growth = fmax / rmax if finite and rmax > 0 else float("inf")
        stats.append(RatioStat(name, rmin, rmax, finite, finite and rmin > 0, growth))
    return PressureReport(float(gamma), float(M), int(a.size), tuple(stats))


