"""Long-time diagnostics: deviations from the constant state, the Gronwall
functional, domination ratios, ensemble moments and decay fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .entropy import RelativeEntropyRef, eval_eta_star, pressure_bregman
from .errors import AlignmentError, ParameterError, PreconditionError
from .model import pressure


def l2_deviation(state, rho_star, grid=None):
    """``(sum (rho - rho*)**2 dx, sum m**2 dx)``."""
    dx = 1.0 / state.n if grid is None else grid.dx
    return float(np.sum((state.rho - rho_star) ** 2) * dx), float(np.sum(state.m ** 2) * dx)


@dataclass(frozen=True)
class TransformedState:
    """Exponentially scaled deviation ``w``, its negative primitive ``y`` and momentum ``z``.

    ``y`` lives on the cell faces ``0, dx, ..., 1`` (length n+1) and
    ``y_cells`` is its average onto the cell centres.
    """

    M_scale: float
    t: float
    w: np.ndarray
    y: np.ndarray
    z: np.ndarray

    @property
    def y_cells(self):
        return 0.5 * (self.y[:-1] + self.y[1:])


def transform(state, t, M_scale, rho_star, grid=None):
    dx = 1.0 / state.n if grid is None else grid.dx
    scale = math.exp(M_scale * t)
    w = scale * (state.rho - rho_star)
    y = np.concatenate([[0.0], -np.cumsum(w) * dx])
    z = scale * state.m
    return TransformedState(float(M_scale), float(t), w, y, z)


@dataclass(frozen=True)
class LongTimeConstants:
    Lambda: float
    rho_star: float
    K: float
    M_scale: float
    A0: float
    alpha: float

    def __post_init__(self):
        if not (self.Lambda > 0 and self.rho_star > 0 and self.K > 0):
            raise ParameterError("long-time constants must be positive")


def k_constant(Lambda, rho_star, alpha):
    base = max(Lambda + 2.0 * rho_star, 2.0 * Lambda)
    return base / alpha if alpha < 1 else base


def make_constants(params, rho_star, running_max_rho, M_scale=None):
    """Constants for a run; ``Lambda`` is the larger of the observed max density and M1."""
    Lam = max(float(running_max_rho), params.M1)
    M = params.alpha if M_scale is None else float(M_scale)
    return LongTimeConstants(Lam, float(rho_star), k_constant(Lam, rho_star, params.alpha), M, params.A0,
                             params.alpha)


def constants_for(trajectories, params, M_scale=None):
    trajs = trajectories if isinstance(trajectories, (list, tuple)) else [trajectories]
    rmax = max(float(np.max(s.rho)) for tr in trajs for s in tr.states)
    return make_constants(params, trajs[0].rho_star, rmax, M_scale)


def compute_Q(state, t, consts, params, grid=None):
    """Gronwall functional ``sum (K e^{2Mt} eta* + y z + alpha/2 y**2) dx``."""
    dx = 1.0 / state.n if grid is None else grid.dx
    tr = transform(state, t, consts.M_scale, consts.rho_star, grid)
    ref = RelativeEntropyRef(consts.rho_star)
    eta = eval_eta_star(state, ref, params)
    yc = tr.y_cells
    dens = consts.K * math.exp(2.0 * consts.M_scale * t) * eta + yc * tr.z + 0.5 * consts.alpha * yc ** 2
    return float(np.sum(dens) * dx)


def _domination_parts(state, t, consts, params):
    tr = transform(state, t, consts.M_scale, consts.rho_star)
    ref = RelativeEntropyRef(consts.rho_star)
    eta = eval_eta_star(state, ref, params)
    yc = tr.y_cells
    decay = math.exp(-2.0 * consts.M_scale * t)
    den = decay * (consts.K * math.exp(2.0 * consts.M_scale * t) * eta + yc * tr.z + 0.5 * consts.alpha * yc ** 2)
    d = np.abs(state.rho - consts.rho_star)
    lead = d ** 2 if params.gamma <= 2 else d ** params.gamma
    return lead + state.m ** 2, den


def domination_ratio(state, t, consts, params, floor=1e-300):
    """Largest per-cell ratio of the quantity of interest to the scaled Gronwall density.

    Cells where the numerator is below ``floor`` are skipped. Returns
    ``inf`` if some denominator is nonpositive while its numerator is not.
    """
    num, den = _domination_parts(state, t, consts, params)
    live = num > floor
    if not np.any(live):
        return 0.0
    if np.any(den[live] <= 0):
        return math.inf
    return float(np.max(num[live] / den[live]))


def domination_check(trajectories, consts, params, C_dom, slack=1e-12):
    """True when every cell at every record time satisfies the domination bound with ``C_dom``."""
    trajs = trajectories if isinstance(trajectories, (list, tuple)) else [trajectories]
    for tr in trajs:
        for t, s in zip(tr.times, tr.states):
            num, den = _domination_parts(s, t, consts, params)
            if np.any(num > C_dom * den + slack):
                return False
    return True


def measure_c3(trajectories, consts, params):
    """Measured constant in the lower bound of the Gronwall combination.

    For each record time, with unscaled variables (``ytil = -int (rho - rho*)``)

    ``A = int min(alpha,1) K eta* + ytil m + alpha/2 ytil**2``
    ``B = int (alpha K - rho*) m**2 / rho``
    ``P = int (p(rho) - p(rho*)) (rho - rho*)``

    the bound ``A <= B + C3 P`` must hold; the returned value is the
    largest ``(A - B) / P`` seen (and at least 0).
    """
    trajs = trajectories if isinstance(trajectories, (list, tuple)) else [trajectories]
    ref = RelativeEntropyRef(consts.rho_star)
    amin = min(params.alpha, 1.0)
    best = 0.0
    for tr in trajs:
        for s in tr.states:
            dx = 1.0 / s.n
            dev = s.rho - consts.rho_star
            yt = np.concatenate([[0.0], -np.cumsum(dev) * dx])
            yc = 0.5 * (yt[:-1] + yt[1:])
            eta = eval_eta_star(s, ref, params)
            A = np.sum(amin * consts.K * eta + yc * s.m + 0.5 * params.alpha * yc ** 2) * dx
            B = np.sum((params.alpha * consts.K - consts.rho_star) * s.m ** 2 / np.maximum(s.rho, 1e-300)) * dx
            P = np.sum((pressure(s.rho, params) - pressure(consts.rho_star, params)) * dev) * dx
            if P > 1e-300:
                best = max(best, float((A - B) / P))
    return best


# ---------------------------------------------------------------- ensembles


@dataclass
class MomentSeries:
    t: np.ndarray
    mean_dev: np.ndarray
    se_dev: np.ndarray
    mean_eta: np.ndarray
    se_eta: np.ndarray
    mean_eta_sq: np.ndarray
    se_eta_sq: np.ndarray
    n_paths: int


def per_path_quantities(traj, params, rho_star=None):
    """Arrays ``(dev, int eta*)`` over the record times of one trajectory."""
    rho_star = traj.rho_star if rho_star is None else rho_star
    ref = RelativeEntropyRef(rho_star)
    dev = np.empty(len(traj.states))
    eta = np.empty(len(traj.states))
    for k, s in enumerate(traj.states):
        a, b = l2_deviation(s, rho_star)
        dev[k] = a + b
        eta[k] = float(np.sum(eval_eta_star(s, ref, params)) / s.n)
    return dev, eta


def _ordered_mean_se(rows):
    # rows: (paths, times); summed in a fixed order so results are bit-stable
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[0]
    total = np.zeros(rows.shape[1])
    for r in rows:
        total = total + r
    mean = total / n
    sq = np.zeros(rows.shape[1])
    for r in rows:
        sq = sq + (r - mean) ** 2
    var = sq / (n - 1) if n > 1 else sq
    return mean, np.sqrt(var / n)


def ensemble_moments(trajectories, params, rho_star=None, per_path=None):
    """Sample means and standard errors over paths at every record time.

    ``per_path`` may carry precomputed ``(dev, eta)`` pairs in path order.
    """
    trajs = list(trajectories)
    if len(trajs) < 2:
        raise PreconditionError("ensemble moments need at least two trajectories")
    t0 = np.asarray(trajs[0].times)
    for tr in trajs[1:]:
        if tr.times.shape != t0.shape or np.any(tr.times != t0):
            raise AlignmentError("trajectories do not share record times")
    if per_path is None:
        per_path = [per_path_quantities(tr, params, rho_star) for tr in trajs]
    return moments_from_rows([d for d, _ in per_path], [e for _, e in per_path], t0)


def moments_from_rows(dev_rows, eta_rows, t):
    dev_rows = np.asarray(dev_rows)
    eta_rows = np.asarray(eta_rows)
    md, sd = _ordered_mean_se(dev_rows)
    me, se = _ordered_mean_se(eta_rows)
    mq, sq = _ordered_mean_se(eta_rows ** 2)
    return MomentSeries(np.asarray(t, dtype=float), md, sd, me, se, mq, sq, dev_rows.shape[0])


# ---------------------------------------------------------------- fits


@dataclass(frozen=True)
class DecayFit:
    rate: float
    prefactor: float
    r_squared: float
    window: tuple


def fit_decay(t, values, window=None):
    """Least-squares line through ``(t, ln value)``.

    Returns ``rate = -slope`` and ``prefactor = exp(intercept)``. For a
    series with no variation in ``ln value`` the fit is exact and
    ``r_squared`` is 1.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is None:
        window = (float(t[0]), float(t[-1]))
    lo, hi = window
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if np.count_nonzero(sel) < 2:
        raise PreconditionError("need at least two points in the fit window")
    ts, vs = t[sel], v[sel]
    if np.any(~(vs > 0)):
        raise PreconditionError(
            "nonpositive or non-finite value in fit window; shrink the window to where the series is positive"
        )
    y = np.log(vs)
    A = np.vstack([ts, np.ones_like(ts)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * ts + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    if ss_tot <= 1e-28 * max(1.0, float(np.sum(y ** 2))):
        r2 = 1.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return DecayFit(float(-slope), float(math.exp(icpt)), r2, (float(lo), float(hi)))


# ---------------------------------------------------------------- noise regime


@dataclass(frozen=True)
class NoiseReport:
    A0: float
    alpha_bar: float
    C3: float
    C_tilde: float
    threshold: float
    threshold_half: float
    M_min: float
    M_scale: float
    regime: str

    def lines(self):
        return [
            f"A0={self.A0:.6g} min(alpha,1)={self.alpha_bar:.6g}",
            f"measured C3={self.C3:.6g} C_tilde={self.C_tilde:.6g}",
            f"threshold C_tilde*min(alpha,1)={self.threshold:.6g} (half: {self.threshold_half:.6g})",
            f"M_scale={self.M_scale:.6g} (needs > {self.M_min:.6g})",
            f"regime: {self.regime}",
        ]


def noise_threshold_report(params, consts, C3):
    """Compare ``A0`` with the small-noise threshold built from the measured ``C3``."""
    abar = min(params.alpha, 1.0)
    c_tilde = 1.0 / max(1.0, C3)
    thr = c_tilde * abar
    if params.A0 == 0:
        regime = "deterministic regime"
    elif params.A0 < thr:
        regime = "inside regime"
    else:
        regime = "outside proven regime"
    m_min = 0.5 * (abar * c_tilde - 2.0 * params.A0)
    return NoiseReport(params.A0, abar, C3, c_tilde, thr, 0.5 * thr, m_min, consts.M_scale, regime)


def eta_star_total(state, rho_star, params):
    return float(np.sum(eval_eta_star(state, RelativeEntropyRef(rho_star), params)) / state.n)


def bregman_total(state, rho_star, params):
    return float(np.sum(pressure_bregman(state.rho, rho_star, params)) / state.n)
