"""Run configuration, seed derivation, ensemble orchestration and persistence."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .brownian import GOLDEN, MASK64, mix64, sample_brownian, zero_path
from .det_solver import DetSolverConfig
from .errors import ParameterError, PreconditionError
from .longtime import (
    constants_for,
    domination_ratio,
    ensemble_moments,
    fit_decay,
    measure_c3,
    noise_threshold_report,
    per_path_quantities,
)
from .model import PRESETS, Grid, NoiseSpec, initial_state, make_params
from .splitting import MODES, SplitConfig, lie_trotter_run
from .stoch_solver import StochStepConfig

SCHEMA_VERSION = 1


def derive_seed(base_seed, path_index):
    """``mix64(base ^ ((i + 1) * 0x9E3779B97F4A7C15))`` with 64-bit wraparound.

    ``mix64`` is the splitmix64 finaliser documented in
    :mod:`sel.brownian`. Being a bijection of 64-bit words, it keeps the
    map injective in ``path_index`` for ``path_index < 2**64``.
    """
    if path_index < 0:
        raise ParameterError("path_index must be nonnegative")
    return mix64((int(base_seed) & MASK64) ^ (((path_index + 1) * GOLDEN) & MASK64))


# ---------------------------------------------------------------- configuration


def _onoff(v):
    s = str(v).strip().lower()
    if s in ("on", "true", "yes", "1"):
        return True
    if s in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {v!r}")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a run. Keys match the config file."""

    gamma: float = 2.0
    alpha: float = 1.0
    epsilon: float = 1e-3
    a0: float = 0.01
    m1: float = 2.0
    m2: float = 1.0
    n_cells: int = 200
    seed: int = 12345
    t_final: float = 20.0
    n_windows: int = 200
    paths: int = 1
    record_every: int = 1
    preset: str = "bump"
    init_csv: str = ""
    mode: str = "endpoint"
    clamp: bool = True
    substeps: int = 4
    cfl: float = 0.4
    plateau: float = 0.9
    generator: str = "half_xi_sq"
    m_scale: float = 0.0
    fit_lo: float = 2.0
    fit_hi: float = 0.0
    field_every: int = 0
    out: str = ""

    def params(self):
        return make_params(self.gamma, self.alpha, self.epsilon, self.a0, self.m1, self.m2)

    def grid(self):
        return Grid(self.n_cells)

    def noise(self):
        return NoiseSpec(self.a0, self.m1, self.m2, self.plateau)

    def split(self):
        return SplitConfig(self.t_final, self.n_windows, self.mode, self.record_times())

    def record_times(self):
        k = max(1, self.record_every)
        idx = list(range(0, self.n_windows + 1, k))
        if idx[-1] != self.n_windows:
            idx.append(self.n_windows)
        return tuple(self.t_final * i / self.n_windows for i in idx)

    def det(self):
        return DetSolverConfig(cfl=self.cfl)

    def stoch(self):
        return StochStepConfig(self.substeps, self.clamp)

    def initial(self):
        return initial_state(self.preset, self.grid(), self.params(), self.init_csv or None)

    @property
    def fit_window(self):
        hi = self.fit_hi if self.fit_hi > 0 else self.t_final
        return (min(self.fit_lo, hi), hi)

    @property
    def M_scale(self):
        return self.m_scale if self.m_scale > 0 else None

    def echo(self):
        return asdict(self)


_CONVERT = {f.name: f.type for f in fields(RunConfig)}


def parse_config_text(text):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {ln}: expected key=value, got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip().lower()] = v.strip()
    return out


def build_config(values, base=None):
    """Validate raw values and return a RunConfig; all problems are reported together."""
    base = base or RunConfig()
    kw = {}
    problems = []
    for k, v in values.items():
        if k not in _CONVERT:
            problems.append(f"unknown key {k!r}")
            continue
        typ = _CONVERT[k]
        try:
            if typ in ("bool", bool):
                kw[k] = _onoff(v)
            elif typ in ("int", int):
                fv = float(v)
                if fv != int(fv):
                    raise ValueError("not an integer")
                kw[k] = int(fv)
            elif typ in ("float", float):
                kw[k] = float(v)
            else:
                kw[k] = str(v)
        except (TypeError, ValueError) as exc:
            problems.append(f"{k}={v!r}: {exc}")
    merged = {**asdict(base), **kw}
    problems.extend(validate(merged))
    if problems:
        raise ParameterError("invalid configuration:\n  " + "\n  ".join(problems))
    return RunConfig(**merged)


def validate(c):
    p = []
    if not c["gamma"] > 1:
        p.append("gamma must be > 1")
    if not c["alpha"] > 0:
        p.append("alpha must be > 0")
    if not c["epsilon"] >= 0:
        p.append("epsilon must be >= 0")
    if not c["a0"] >= 0:
        p.append("a0 must be >= 0")
    if not c["m1"] > 0:
        p.append("m1 must be > 0")
    if not c["m2"] > 0:
        p.append("m2 must be > 0")
    if c["n_cells"] < 3:
        p.append("n_cells must be >= 3")
    if not c["t_final"] > 0:
        p.append("t_final must be > 0")
    if c["n_windows"] < 1:
        p.append("n_windows must be >= 1")
    if c["paths"] < 1:
        p.append("paths must be >= 1")
    if c["record_every"] < 1:
        p.append("record_every must be >= 1")
    if c["substeps"] < 1:
        p.append("substeps must be >= 1")
    if not 0 < c["cfl"] <= 0.9:
        p.append("cfl must lie in (0, 0.9]")
    if not 0 < c["plateau"] < 1:
        p.append("plateau must lie in (0, 1)")
    if c["mode"] not in MODES:
        p.append(f"mode must be one of {MODES}")
    if not c["init_csv"] and c["preset"] not in PRESETS:
        p.append(f"preset must be one of {PRESETS}")
    if c["init_csv"] and not Path(c["init_csv"]).is_file():
        p.append(f"init_csv {c['init_csv']!r} not found")
    if c["seed"] < 0:
        p.append("seed must be >= 0")
    return p


def load_config(path, overrides=None):
    text = Path(path).read_text()
    values = parse_config_text(text)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(values)


# ---------------------------------------------------------------- paths


def path_for(cfg, index):
    tau = cfg.t_final / cfg.n_windows
    dt = tau / cfg.substeps
    count = cfg.n_windows * cfg.substeps
    if cfg.a0 == 0:
        return 0, zero_path(dt, count)
    seed = derive_seed(cfg.seed, index)
    return seed, sample_brownian(seed, dt, count)


def run_path(cfg, index, state0=None):
    """Simulate path ``index`` of the ensemble described by ``cfg``."""
    state0 = cfg.initial() if state0 is None else state0
    _, path = path_for(cfg, index)
    return lie_trotter_run(state0, path, cfg.params(), cfg.split(), cfg.det(), cfg.stoch(), cfg.noise())


def _worker(args):
    cfg, index = args
    return run_path(cfg, index)


def worker_count():
    env = os.environ.get("SEL_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ParameterError(f"SEL_THREADS must be an integer, got {env!r}") from None
    return max(1, os.cpu_count() or 1)


def run_ensemble(cfg, workers=None):
    """All paths of ``cfg``, returned in path-index order whatever the worker count."""
    workers = worker_count() if workers is None else workers
    jobs = [(cfg, i) for i in range(cfg.paths)]
    if workers <= 1 or cfg.paths == 1:
        return [_worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, cfg.paths)) as pool:
        return list(pool.map(_worker, jobs))


# ---------------------------------------------------------------- summaries


@dataclass
class EnsembleSummary:
    times: np.ndarray
    moments: object
    per_path_dev: list
    per_path_eta: list
    consts: object
    c_dom: float
    c3: float
    noise_report: object
    fits: dict = field(default_factory=dict)
    path_rows: list = field(default_factory=list)


def summarize(cfg, trajs):
    params = cfg.params()
    pq = [per_path_quantities(tr, params) for tr in trajs]
    times = trajs[0].times
    mom = ensemble_moments(trajs, params, per_path=pq) if len(trajs) > 1 else None
    consts = constants_for(trajs, params, cfg.M_scale)
    c_dom = 0.0
    for tr in trajs:
        for t, s in zip(tr.times, tr.states):
            c_dom = max(c_dom, domination_ratio(s, t, consts, params))
    c3 = measure_c3(trajs, consts, params)
    report = noise_threshold_report(params, consts, c3)
    lo, hi = cfg.fit_window
    fits = {}
    if mom is not None:
        fits["mean_dev"] = _safe_fit(times, mom.mean_dev, (lo, hi))
        fits["mean_eta_star"] = _safe_fit(times, mom.mean_eta, (lo, hi))
        fits["mean_eta_star_sq"] = _safe_fit(times, mom.mean_eta_sq, (lo, hi))
    rows = []
    for i, (tr, (dev, _)) in enumerate(zip(trajs, pq)):
        f = _safe_fit(times, dev, (lo, hi))
        d = tr.diagnostics
        rows.append({
            "path": i,
            "seed": path_for(cfg, i)[0],
            "initial_dev": dev[0],
            "terminal_dev": dev[-1],
            "terminal_ratio": dev[-1] / dev[0] if dev[0] > 0 else 0.0,
            "rate": f.rate if f else float("nan"),
            "r_squared": f.r_squared if f else float("nan"),
            "max_w": float(np.max(d["max_w"])),
            "min_z": float(np.min(d["min_z"])),
            "mass_drift": float(np.max(np.abs(d["mass"] - d["mass"][0]))),
        })
        if len(trajs) == 1:
            fits["dev"] = f
    return EnsembleSummary(times, mom, [p[0] for p in pq], [p[1] for p in pq], consts, c_dom, c3, report, fits,
                           rows)


def _safe_fit(t, v, window):
    try:
        return fit_decay(t, v, window)
    except PreconditionError:
        return None


# ---------------------------------------------------------------- persistence


def fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in r])


SERIES_COLUMNS = ("t", "mass", "max_w", "min_z", "l2_rho_dev", "l2_m")


def write_series(path, traj):
    d = traj.diagnostics
    rows = zip(traj.times, d["mass"], d["max_w"], d["min_z"], d["l2_rho_dev"], d["l2_m"])
    write_csv(path, SERIES_COLUMNS, rows)


def write_fields(outdir, traj, every=0):
    outdir = Path(outdir)
    k = len(traj.states)
    if every and every > 0:
        picks = sorted(set(list(range(0, k, every)) + [k - 1]))
    else:
        picks = [0, k - 1] if k > 1 else [0]
    x = Grid(traj.states[0].n).x
    names = []
    for i in picks:
        s = traj.states[i]
        name = f"fields_t{traj.times[i]:011.6f}.csv"
        write_csv(outdir / name, ("t", "x", "rho", "m"), ((s.t, xi, r, m) for xi, r, m in zip(x, s.rho, s.m)))
        names.append(name)
    return names


MOMENT_COLUMNS = ("t", "mean_dev", "se_dev", "mean_eta_star", "se_eta_star", "mean_eta_star_sq",
                  "se_eta_star_sq")


def write_moments(path, mom):
    rows = zip(mom.t, mom.mean_dev, mom.se_dev, mom.mean_eta, mom.se_eta, mom.mean_eta_sq, mom.se_eta_sq)
    write_csv(path, MOMENT_COLUMNS, rows)


PATH_COLUMNS = ("path", "seed", "initial_dev", "terminal_dev", "terminal_ratio", "rate", "r_squared", "max_w",
                "min_z", "mass_drift")


def write_paths(path, rows):
    write_csv(path, PATH_COLUMNS, ([r[c] for c in PATH_COLUMNS] for r in rows))


DECAY_COLUMNS = ("quantity", "window_lo", "window_hi", "rate", "prefactor", "r_squared", "n_paths")


def write_decay_report(path, fits, n_paths):
    rows = []
    for name, f in fits.items():
        if f is None:
            rows.append((name, "nan", "nan", "nan", "nan", "nan", n_paths))
        else:
            rows.append((name, f.window[0], f.window[1], f.rate, f.prefactor, f.r_squared, n_paths))
    write_csv(path, DECAY_COLUMNS, rows)


def write_manifest(outdir, cfg, command, started, extra=None):
    seeds = [path_for(cfg, i)[0] for i in range(cfg.paths)]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "artifact_version": __version__,
        "command": command,
        "config": cfg.echo(),
        "wall_clock_seconds": round(time.time() - started, 3),
        "per_path_seeds": [str(s) for s in seeds],
    }
    if extra:
        doc.update(extra)
    path = Path(outdir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    return str(o)
