"""Figure-analogue experiments: configuration, pipelines, thresholds, fits and output."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import yaml
from scipy.optimize import brentq

from . import __version__
from .algebra import A_P, N_P, N_S, Monomial
from .cumulants import CompiledRHS, build_reduced_system, initial_values
from .elliptic import SecondOrderSolution, depletion_time, threshold_times
from .fock import SectorEnsemble
from .observables import (
    SERIES_COLUMNS,
    g2,
    local_maxima,
    moment,
    parity_split,
    photon_statistics,
    purity,
    quadrature_variances,
    standard_series,
)
from .ode import detect_event, integrate
from .perturbation import FitError, eval_series, powerlaw_fit, residual_scaling
from .witnesses import DEFAULT_THETA, witness_report

FIGURES = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig8", "fig9", "fig10")
# single-purpose runs behind the simulate/cumulant/analytic subcommands
TOOLS = ("simulate", "cumulant", "analytic")
EXPERIMENTS = FIGURES + TOOLS
OUT_ENV = "TRILINEAR_OUT"
DEFAULT_OUT = "trilinear-out"
THRESHOLD = 0.01


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# --- configuration --------------------------------------------------------

_DEFAULTS = {
    "fig1": dict(alpha2=[100.0], tau_max_factor=1.5, points=301, orders=[1, 2, 3, 4]),
    "fig2": dict(alpha2=[25.0, 100.0, 400.0, 1600.0], tau_max_factor=1.0, points=401, delta=[0.25, 0.1, 0.01]),
    "fig3": dict(alpha2=[100.0], tau_max_factor=1.0, points=5),
    "fig4": dict(alpha2=[100.0], tau_max_factor=1.2, points=241),
    "fig5": dict(alpha2=[100.0, 400.0], points=25, delta=[0.01]),
    "fig8": dict(alpha2=[25.0, 50.0, 100.0, 200.0, 400.0, 800.0, 1600.0], tau_max_factor=1.2, points=481),
    "fig9": dict(alpha2=[100.0, 400.0, 1600.0], tau_max_factor=3.5, points=701),
    "fig10": dict(alpha2=[25.0, 50.0, 100.0, 200.0, 400.0, 800.0, 1600.0], tau_max_factor=2.0, points=401, orders=[2, 3, 4]),
    "simulate": dict(alpha2=[100.0], tau_max_factor=1.5, points=151),
    "cumulant": dict(alpha2=[100.0], tau_max_factor=1.5, points=151, orders=[2]),
    "analytic": dict(alpha2=[100.0], tau_max_factor=1.5, points=151),
}


def default_out_dir() -> str:
    return os.environ.get(OUT_ENV, DEFAULT_OUT)


@dataclass
class ExperimentConfig:
    """Serializable description of one run; a run is reproducible from it."""

    experiment: str
    alpha2: list[float] = field(default_factory=list)
    tau_max_factor: float = 1.5
    tau_max: float | None = None
    points: int = 301
    delta: list[float] = field(default_factory=lambda: [THRESHOLD])
    orders: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    theta: float = DEFAULT_THETA
    tol: float = 1e-12
    rtol: float = 1e-10
    atol: float = 1e-12
    out: str = field(default_factory=default_out_dir)
    seed: int = 0
    plots: bool = False
    jobs: int = 1

    @classmethod
    def for_experiment(cls, experiment: str, **overrides) -> "ExperimentConfig":
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        values = dict(_DEFAULTS[experiment])
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(experiment=experiment, **values)

    @classmethod
    def from_mapping(cls, data: dict, **overrides) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in data and "experiment" not in overrides:
            raise ConfigError("config needs an 'experiment' key")
        merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        exp = merged.pop("experiment")
        return cls.for_experiment(exp, **merged)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
        return cls.from_mapping(data, **overrides)

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not self.alpha2:
            raise ConfigError("alpha2 list is empty")
        if any(not (a > 0 and math.isfinite(a)) for a in self.alpha2):
            raise ConfigError("alpha2 values must be positive and finite")
        if self.points < 2:
            raise ConfigError("points must be at least 2")
        if not self.tau_max_factor > 0:
            raise ConfigError("tau_max_factor must be positive")
        if self.tau_max is not None and not self.tau_max > 0:
            raise ConfigError("tau_max must be positive")
        if not self.delta or any(not 0 < d < 1 for d in self.delta):
            raise ConfigError("delta values must lie in (0, 1)")
        if not self.orders or any(o not in (1, 2, 3, 4, 5) for o in self.orders):
            raise ConfigError("orders must be drawn from 1..5")
        if min(self.tol, self.rtol, self.atol) <= 0:
            raise ConfigError("tolerances must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha2"] = [float(a) for a in self.alpha2]
        d["delta"] = [float(x) for x in self.delta]
        return d

    def hash(self) -> str:
        """sha256 over the settings that determine the outputs."""
        d = self.to_dict()
        for key in ("out", "jobs", "plots"):
            d.pop(key)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def grid(self, alpha0: float) -> np.ndarray:
        stop = self.tau_max if self.tau_max is not None else self.tau_max_factor * SecondOrderSolution(alpha0).tau_max
        return np.linspace(0.0, stop, self.points)


@dataclass
class RunManifest:
    config_hash: str
    version: str
    outputs: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- output helpers -------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else format(x, ".17g")


def csv_text(columns: dict[str, Sequence]) -> str:
    """CSV with a header row; the first column must be ``tau``."""
    names = list(columns)
    if not names or names[0] != "tau":
        raise ValueError("first CSV column must be 'tau'")
    n = len(columns["tau"])
    if any(len(columns[c]) != n for c in names):
        raise ValueError("all columns need the same length")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for i in range(n):
        w.writerow([_fmt(columns[c][i]) for c in names])
    return buf.getvalue()


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {h: np.array([float(r[j]) for r in body]) for j, h in enumerate(header)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(float(obj)) else float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _key(a2: float) -> str:
    return f"{a2:g}"


# --- exact simulation -----------------------------------------------------

def exact_series(
    alpha0: float,
    taus: Sequence[float],
    tol: float = 1e-12,
    with_purity: bool = False,
    extra: dict[str, Callable] | None = None,
) -> dict[str, np.ndarray]:
    """Standard series (plus optional purities and custom columns) along ``taus``."""
    ens = SectorEnsemble(alpha0)
    cols: dict[str, list] = {"tau": []}
    for name in SERIES_COLUMNS:
        cols[name] = []
    if with_purity:
        cols["purity_pump"] = []
        cols["purity_signal"] = []
    for name in extra or {}:
        cols[name] = []
    for state in ens.states(taus, tol):
        cols["tau"].append(state.tau)
        row = standard_series(state)
        for name in SERIES_COLUMNS:
            cols[name].append(row[name])
        if with_purity:
            cols["purity_pump"].append(purity(state))
            cols["purity_signal"].append(purity(state, "signal"))
        for name, fn in (extra or {}).items():
            cols[name].append(fn(state))
    return {k: np.asarray(v, dtype=float) for k, v in cols.items()}


# --- cumulant simulation --------------------------------------------------

_CUMULANT_OBS = (N_S, N_P, A_P, Monomial(d=2), Monomial(c=2, d=2))


@lru_cache(maxsize=8)
def _reduced(order: int):
    return build_reduced_system(order, _CUMULANT_OBS)


def cumulant_series(order: int, alpha0: float, taus: Sequence[float], rtol: float = 1e-10, atol: float = 1e-12) -> dict[str, np.ndarray]:
    """N_s, <a_p>, var P_p and g2_p from the order-``order`` cumulant closure."""
    system = _reduced(order)
    rhs = CompiledRHS(system, alpha0)
    traj = integrate(rhs, initial_values(system, alpha0), taus, rtol=rtol, atol=atol)
    ev = {m: rhs.observable(m)(traj.states) for m in _CUMULANT_OBS}
    n_p = np.real(ev[N_P])
    a_p = ev[A_P]
    a_p2 = ev[Monomial(d=2)]
    var_p = np.array([quadrature_variances(complex(a), complex(b), float(n))[1] for a, b, n in zip(a_p, a_p2, n_p)])
    g2p = np.array([g2(float(np.real(x)), float(n)) for x, n in zip(ev[Monomial(c=2, d=2)], n_p)])
    return {
        "tau": np.asarray(taus, dtype=float),
        "N_s": np.real(ev[N_S]),
        "re_a_p": np.real(a_p),
        "var_P_p": var_p,
        "g2_p": g2p,
        "completed": np.array([s != "step-failure" for s in traj.status]),
    }


def cumulant_time(taus: Sequence[float], exact: Sequence[float], approx: Sequence[float], rel: float = THRESHOLD) -> float | None:
    """First time the relative difference |approx - exact|/|exact| reaches ``rel``.

    Points with exact == 0 are skipped; a non-finite approximation counts as
    deviated.  The crossing is linearly interpolated between grid points.
    """
    t = np.asarray(taus, dtype=float)
    e = np.asarray(exact, dtype=float)
    a = np.asarray(approx, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        dev = np.abs(a - e) / np.abs(e)
    dev = np.where(np.isfinite(a), dev, np.inf)
    keep = e != 0
    t, dev = t[keep], dev[keep]
    if t.size == 0:
        return None
    dev = np.minimum(dev, 1e300)
    if dev[0] >= rel:
        return float(t[0])
    return detect_event(t, dev, rel)


def threshold_crossing(taus: Sequence[float], values: Sequence[float], level: float) -> float | None:
    """First time ``values`` reaches ``level`` (linear interpolation)."""
    return detect_event(np.asarray(taus, dtype=float), np.asarray(values, dtype=float), level)


def _safe_fit(x: Sequence[float], y: Sequence[float | None]) -> dict:
    pts = [(a, b) for a, b in zip(x, y) if b is not None and b > 0 and math.isfinite(b)]
    try:
        fit = powerlaw_fit([p[0] for p in pts], [p[1] for p in pts])
    except FitError as exc:
        return {"exponent": None, "prefactor": None, "stderr": None, "points": len(pts), "error": str(exc)}
    return {"exponent": fit.exponent, "prefactor": fit.prefactor, "stderr": fit.stderr, "points": len(pts)}


# --- per-experiment point workers ----------------------------------------
# Each returns (tables: {file stem: columns}, summary fragment).

def _fig1_point(cfg: ExperimentConfig, a2: float):
    a0 = math.sqrt(a2)
    taus = cfg.grid(a0)
    ex = exact_series(a0, taus, cfg.tol)
    sol = SecondOrderSolution(a0)
    eta, alpha = sol.eta_alpha(taus)
    table = {"tau": taus}
    for name in ("N_s", "var_P_p", "g2_p", "g2_s", "re_a_p"):
        table[f"exact_{name}"] = ex[name]
    table["analytic_N_s"] = np.sinh(eta) ** 2
    table["analytic_re_a_p"] = alpha
    times = {}
    for order in cfg.orders:
        cu = cumulant_series(order, a0, taus, cfg.rtol, cfg.atol)
        for name in ("N_s", "var_P_p", "g2_p", "re_a_p"):
            table[f"order{order}_{name}"] = cu[name]
        times[f"order{order}"] = {
            q: cumulant_time(taus, ex[q], cu[q]) for q in ("N_s", "var_P_p", "g2_p")
        }
    summary = {"cumulant_times": times, "tau_max": sol.tau_max}
    return {f"fig1_alpha2_{_key(a2)}": table}, summary


def _fig2_point(cfg: ExperimentConfig, a2: float):
    a0 = math.sqrt(a2)
    taus = cfg.grid(a0)
    ex = exact_series(a0, taus, cfg.tol)
    depletion = (a2 - ex["N_p"]) / a2
    rows = {}
    for d in cfg.delta:
        approx, second = depletion_time(a0, d)
        exact = threshold_crossing(taus, depletion, d)
        rows[f"{d:g}"] = {
            "exact": exact,
            "asinh_formula": approx,
            "second_order": second,
            "relative_error": None if exact is None else abs(approx - exact) / exact,
        }
    table = {"tau": taus, "N_p": ex["N_p"], "relative_depletion": depletion}
    return {f"fig2_alpha2_{_key(a2)}": table}, {"depletion_times": rows}


def _fig3_point(cfg: ExperimentConfig, a2: float):
    a0 = math.sqrt(a2)
    sol = SecondOrderSolution(a0)
    stop = cfg.tau_max if cfg.tau_max is not None else cfg.tau_max_factor * sol.tau_max
    snaps = np.linspace(0.0, stop, cfg.points)
    ens = SectorEnsemble(a0)
    long = {"tau": [], "n": [], "p_pump": [], "p_signal": []}
    info = []
    for state in ens.states(snaps, cfg.tol):
        pp = photon_statistics(state, "pump")
        ps = photon_statistics(state, "signal")
        for n in range(len(pp)):
            long["tau"].append(state.tau)
            long["n"].append(n)
            long["p_pump"].append(pp[n])
            long["p_signal"].append(ps[n] if n < len(ps) else 0.0)
        even, odd = parity_split(pp)
        eta = float(sol.eta_alpha(state.tau)[0]) if state.tau > 0 else 0.0
        entry = {"tau": state.tau, "pump_even_mass": float(even.sum()), "pump_odd_mass": float(odd.sum())}
        k = np.nonzero(ps > 1e-12)[0]
        if state.tau > 0 and k.size >= 4:
            slope = float(np.polyfit(k, np.log(ps[k]), 1)[0])
            entry["signal_log_slope"] = slope
            entry["thermal_log_slope"] = float(2 * np.log(np.tanh(eta))) if eta > 0 else None
        info.append(entry)
    return {f"fig3_alpha2_{_key(a2)}": long}, {"snapshots": info}


def _fig4_point(cfg: ExperimentConfig, a2: float):
    a0 = math.sqrt(a2)
    taus = cfg.grid(a0)
    ens = SectorEnsemble(a0)
    n_range = 0.01 * ens.n2 / (ens.n2 + 1)
    states = list(ens.states(taus, cfg.tol))
    sol = SecondOrderSolution(a0)
    # the tripartite margin needs the displaced-squeezed frame; limit to early times
    tri_stop = 0.5 * sol.tau_max
    rep = witness_report([s for s in states if s.tau <= tri_stop], cfg.theta, tripartite=True)
    late = witness_report([s for s in states if s.tau > tri_stop], cfg.theta, tripartite=False)
    pur_p = np.array([purity(s) for s in states])
    pur_s = np.array([purity(s, "signal") for s in states])
    eta, _ = sol.eta_alpha(taus)
    table = {
        "tau": taus,
        "purity_pump": pur_p,
        "purity_signal": pur_s,
        "thermal_purity": 1.0 / np.cosh(2 * eta),
        "w4": np.array(rep.w4 + late.w4),
        "w6": np.array(rep.w6 + late.w6),
        "tripartite": np.array(rep.tripartite + late.tripartite),
    }
    tau_ent = threshold_crossing(taus, 1.0 - pur_p, n_range)
    th = threshold_times(a0, n_range)
    w6_flags = rep.w6_entangled + late.w6_entangled
    w6_onset = next((t for t, f in zip(taus, w6_flags) if f), None)
    intervals = {
        "w4": _intervals(taus, rep.w4_entangled + late.w4_entangled),
        "w6": _intervals(taus, w6_flags),
        "tripartite": _intervals(taus[: len(rep.tau)], rep.tripartite_entangled),
    }
    summary = {
        "tau_ent": tau_ent,
        "tau_ent_series": th.ent,
        "tau_ent_asymptote": th.ent_asymptote,
        "purity_delta": n_range,
        "w6_onset": w6_onset,
        "w6_onset_ratio": None if (w6_onset is None or tau_ent is None) else w6_onset / tau_ent,
        "intervals": intervals,
        "tripartite_window": tri_stop,
    }
    return {f"fig4_alpha2_{_key(a2)}": table}, summary


def _intervals(taus, flags):
    from .witnesses import entangled_intervals

    return entangled_intervals(list(map(float, taus)), list(flags))


FIG5_QUANTITIES = {
    # name: (expected leading power, exact-minus-analytic residual)
    "population": 6,
    "var_P_p": 4,
    "purity": 6,
    "g2_s": 2,
}


def fig5_grid(alpha0: float, points: int, delta: float = THRESHOLD) -> np.ndarray:
    """Log-spaced decade ending at the depletion-time formula tau_d(delta)."""
    td = depletion_time(alpha0, delta)[0]
    return np.geomspace(td / 10.0, td, points)


def _fig5_point(cfg: ExperimentConfig, a2: float):
    a0 = math.sqrt(a2)
    taus = fig5_grid(a0, cfg.points, cfg.delta[0])
    ex = exact_series(a0, taus, cfg.tol, with_purity=True)
    sol = SecondOrderSolution(a0)
    residual = {
        "population": np.abs(ex["N_s"] - sol.signal_population(taus)),
        "var_P_p": np.abs(ex["var_P_p"] - 0.5),
        "purity": np.abs(1.0 - ex["purity_pump"]),
        "g2_s": np.abs(ex["g2_s"] - 2.0),
    }
    table = {"tau": taus}
    slopes = {}
    for name, power in FIG5_QUANTITIES.items():
        table[f"residual_{name}"] = residual[name]
        zeros = np.zeros_like(taus)
        rs = residual_scaling(taus, residual[name], zeros, power)
        slopes[name] = {"slope": rs.slope, "stderr": rs.stderr, "expected": power, "decades": rs.decades}
    # leading-order series for reference
    table["series_population"] = np.abs(eval_series("population_correction", a0, taus))
    table["series_var_P_p"] = np.abs(eval_series("var_P_p", a0, taus) - 0.5)
    table["series_purity"] = np.abs(1.0 - eval_series("purity", a0, taus))
    table["series_g2_s"] = np.abs(eval_series("g2_s", a0, taus) - 2.0)
    return {f"fig5_alpha2_{_key(a2)}": table}, {"slopes": slopes, "window": [float(taus[0]), float(taus[-1])]}


def _series_root(name: str, alpha0: float, offset: float, level: float, stop: float) -> float | None:
    f = lambda t: abs(eval_series(name, alpha0, t) - offset) - level  # noqa: E731
    grid = np.linspace(stop / 400, stop, 400)
    vals = np.array([f(t) for t in grid])
    idx = np.nonzero(vals >= 0)[0]
    if idx.size == 0 or idx[0] == 0:
        return None
    j = idx[0]
    return brentq(f, grid[j - 1], grid[j], xtol=1e-14)


def _fig8_point(cfg: ExperimentConfig, a2: float):
    a0 = math.sqrt(a2)
    taus = cfg.grid(a0)
    ens_n2 = SectorEnsemble(a0).n2
    n_range = 0.01 * ens_n2 / (ens_n2 + 1)
    ex = exact_series(a0, taus, cfg.tol, with_purity=True)
    sqz = (0.5 - ex["var_P_p"]) / 0.5
    ent = 1.0 - ex["purity_pump"]
    dev_p = np.abs(ex["g2_p"] - 1.0)
    dev_s = np.abs(ex["g2_s"] - 2.0) / 2.0
    stop = float(taus[-1])
    th_sqz = threshold_times(a0, THRESHOLD)
    th_ent = threshold_times(a0, n_range)
    summary = {
        "tau_sqz": threshold_crossing(taus, sqz, THRESHOLD),
        "tau_ent": threshold_crossing(taus, ent, n_range),
        "tau_p": threshold_crossing(taus, dev_p, THRESHOLD),
        "tau_s": threshold_crossing(taus[1:], dev_s[1:], THRESHOLD),
        "series_sixth": {"tau_sqz": th_sqz.sqz},
        "series_eighth": {
            "tau_sqz": _series_root("var_P_p", a0, 0.5, THRESHOLD * 0.5, stop),
            "tau_ent": th_ent.ent,
            "tau_p": _series_root("g2_p", a0, 1.0, THRESHOLD, stop),
            "tau_s": _series_root("g2_s", a0, 2.0, 2 * THRESHOLD, stop),
        },
        "asymptote": {"tau_sqz": th_sqz.sqz_asymptote, "tau_ent": th_ent.ent_asymptote},
        "purity_delta": n_range,
    }
    table = {"tau": taus, "squeezing": sqz, "impurity": ent, "g2_p_deviation": dev_p, "g2_s_deviation": dev_s}
    return {f"fig8_alpha2_{_key(a2)}": table}, summary


def _fig9_point(cfg: ExperimentConfig, a2: float):
    a0 = math.sqrt(a2)
    taus = cfg.grid(a0)
    ens = SectorEnsemble(a0)
    ns = []
    for state in ens.states(taus, cfg.tol):
        ns.append(moment(state, N_S).real)
    ns = np.array(ns)
    sol = SecondOrderSolution(a0)
    stop = min(float(taus[-1]), sol.period)
    analytic = sol.signal_population(taus[taus <= stop])
    analytic = np.concatenate([analytic, np.full(len(taus) - len(analytic), np.nan)])
    maxima = local_maxima(taus, ns, 2)
    est = math.log(4 * a0) / a0
    summary = {
        "tau1": maxima[0] if maxima else None,
        "tau2": maxima[1] if len(maxima) > 1 else None,
        "tau1_estimate": est,
        "tau2_estimate": 3 * est,
        "tau_max_exact": sol.tau_max,
    }
    if maxima:
        summary["tau1_relative_error"] = abs(maxima[0] - est) / est
    return {f"fig9_alpha2_{_key(a2)}": {"tau": taus, "exact_N_s": ns, "analytic_N_s": analytic}}, summary


def _fig10_point(cfg: ExperimentConfig, a2: float):
    a0 = math.sqrt(a2)
    taus = cfg.grid(a0)
    ex = exact_series(a0, taus, cfg.tol)
    times = {}
    for order in cfg.orders:
        cu = cumulant_series(order, a0, taus, cfg.rtol, cfg.atol)
        times[f"order{order}"] = {q: cumulant_time(taus, ex[q], cu[q]) for q in ("N_s", "var_P_p", "g2_p")}
    return {}, {"cumulant_times": times}


def _simulate_point(cfg: ExperimentConfig, a2: float):
    a0 = math.sqrt(a2)
    ex = exact_series(a0, cfg.grid(a0), cfg.tol, with_purity=True)
    return {f"simulate_alpha2_{_key(a2)}": ex}, {"N_p_plus_N_s_max_error": float(np.max(np.abs(ex["N_p"] + ex["N_s"] - a2)))}


def _cumulant_point(cfg: ExperimentConfig, a2: float):
    a0 = math.sqrt(a2)
    taus = cfg.grid(a0)
    tables, info = {}, {}
    for order in cfg.orders:
        cu = cumulant_series(order, a0, taus, cfg.rtol, cfg.atol)
        tables[f"cumulant_order{order}_alpha2_{_key(a2)}"] = cu
        info[f"order{order}"] = {"completed": bool(np.all(cu["completed"])), "variables": len(_reduced(order).dynamic)}
    return tables, info


def _analytic_point(cfg: ExperimentConfig, a2: float):
    a0 = math.sqrt(a2)
    sol = SecondOrderSolution(a0)
    taus = cfg.grid(a0)
    inside = taus[taus <= sol.period]
    eta, alpha = sol.eta_alpha(inside)
    table = {"tau": inside, "eta": eta, "alpha": alpha, "N_s": np.sinh(eta) ** 2}
    for name in ("var_P_p", "g2_p", "g2_s", "purity"):
        table[f"series_{name}"] = eval_series(name, a0, inside)
    summary = {
        "tau_max": sol.tau_max,
        "tau_max_estimate": math.log(4 * a0) / a0,
        "depletion_times": {f"{d:g}": dict(zip(("asinh_formula", "second_order"), depletion_time(a0, d))) for d in cfg.delta},
        "thresholds": {f"{d:g}": asdict(threshold_times(a0, d)) for d in cfg.delta},
    }
    return {f"analytic_alpha2_{_key(a2)}": table}, summary


_POINT_WORKERS = {
    "simulate": _simulate_point,
    "cumulant": _cumulant_point,
    "analytic": _analytic_point,
    "fig1": _fig1_point,
    "fig2": _fig2_point,
    "fig3": _fig3_point,
    "fig4": _fig4_point,
    "fig5": _fig5_point,
    "fig8": _fig8_point,
    "fig9": _fig9_point,
    "fig10": _fig10_point,
}


def _aggregate(cfg: ExperimentConfig, points: dict[str, dict]) -> dict:
    """Cross-point fits for the sweep experiments."""
    a2s = [a for a in cfg.alpha2 if _key(a) in points]
    a0s = [math.sqrt(a) for a in a2s]
    out = {}
    if cfg.experiment == "fig8":
        out["fits_vs_alpha0"] = {
            q: _safe_fit(a0s, [points[_key(a)][q] for a in a2s]) for q in ("tau_sqz", "tau_ent", "tau_p", "tau_s")
        }
    if cfg.experiment in ("fig10", "fig1") and len(a2s) >= 4:
        fits = {}
        for order in cfg.orders:
            for q in ("N_s", "var_P_p", "g2_p"):
                ys = [points[_key(a)]["cumulant_times"][f"order{order}"][q] for a in a2s]
                fits[f"order{order}/{q}"] = _safe_fit(a2s, ys)
        out["fits_vs_alpha2"] = fits
    return out


def _run_point(args):
    cfg_dict, a2 = args
    cfg = ExperimentConfig(**cfg_dict)
    t0 = time.perf_counter()
    tables, summary = _POINT_WORKERS[cfg.experiment](cfg, a2)
    return a2, tables, summary, time.perf_counter() - t0


@dataclass
class RunResult:
    out_dir: Path
    summary: dict
    manifest: RunManifest

    @property
    def ok(self) -> bool:
        return not self.manifest.errors


def run(cfg: ExperimentConfig) -> RunResult:
    """Run one experiment and write CSVs, ``summary.json`` and ``manifest.json``.

    Sweep points are computed by a process pool when ``cfg.jobs > 1``; all
    files are written here, by the single collecting process.  A failing
    point is recorded under ``errors`` and the remaining points still run.
    """
    cfg.validate()
    out_dir = Path(cfg.out) / cfg.experiment
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(cfg.hash(), __version__)
    jobs = [(cfg.to_dict(), float(a2)) for a2 in cfg.alpha2]
    results: dict[float, tuple] = {}
    t_start = time.perf_counter()

    def collect(item, outcome):
        a2 = item[1]
        if isinstance(outcome, BaseException):
            manifest.errors[_key(a2)] = f"{type(outcome).__name__}: {outcome}"
        else:
            results[a2] = outcome

    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [(item, pool.submit(_run_point, item)) for item in jobs]
            for item, fut in futures:
                try:
                    collect(item, fut.result())
                except Exception as exc:  # isolate per-point failures
                    collect(item, exc)
    else:
        for item in jobs:
            try:
                collect(item, _run_point(item))
            except Exception as exc:
                collect(item, exc)

    points = {}
    written = []
    for a2 in sorted(results):
        _, tables, summary, elapsed = results[a2]
        points[_key(a2)] = summary
        manifest.timings[_key(a2)] = round(elapsed, 3)
        for stem, cols in tables.items():
            path = out_dir / f"{stem}.csv"
            path.write_text(csv_text(cols), encoding="utf-8")
            written.append(path)
    summary = {
        "experiment": cfg.experiment,
        "config": cfg.to_dict() | {"out": None},
        "points": points,
        "aggregate": _aggregate(cfg, points),
        "errors": dict(manifest.errors),
    }
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(summary_path)
    if cfg.plots:
        written += render_plots([p for p in written if p.suffix == ".csv"])
    for path in written:
        manifest.outputs[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()
    manifest.timings["total"] = round(time.perf_counter() - t_start, 3)
    manifest.write(out_dir / "manifest.json")
    return RunResult(out_dir, _jsonable(summary), manifest)


def render_plots(csv_paths: Iterable[Path]) -> list[Path]:
    """One SVG per CSV (every column against tau); needs matplotlib."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return []
    out = []
    for path in csv_paths:
        data = read_csv(path)
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, values in data.items():
            if name != "tau":
                ax.plot(data["tau"], values, label=name)
        ax.set_xlabel("tau")
        ax.legend(fontsize=6)
        svg = path.with_suffix(".svg")
        fig.savefig(svg, format="svg", metadata={"Date": None})
        plt.close(fig)
        out.append(svg)
    return out
