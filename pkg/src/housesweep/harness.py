"""Experiment configuration, replicate orchestration, tables and verdicts.

An experiment runs one replicate kernel over a grid of population sizes.
Replicate ``i`` at grid point ``N`` draws from the stream keyed by
``(master seed, kernel id, N, i)``, so results do not depend on the grid
order or on how replicates are spread over threads.
"""
from __future__ import annotations

import copy
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import gw_branching as gw
from .clonal import GammaSpec, pit_vs_moran_distance
from .gw_branching import CapExceeded, GwParams, StopRule
from .house import (House, default_window, fixation_time_rescaled, house_path, m1_to_house,
                    rescale, sup_distance_restricted)
from .m1 import CadlagPath, last_at_each_time, m1_distance
from .moran import RECORD_FULL, RECORD_LEVELS, simulate_moran_conditioned_fixation
from .params import ModelParams
from .rng import replicate_seeds
from .walks import (default_lil_steps, lil_fluctuation_stat, log_drawdown_down, log_drawdown_up,
                    simulate_conditioned_walk, simulate_walk, up_prob_mutant, up_prob_resident)

__all__ = [
    "SCHEMA_VERSION", "ExperimentConfig", "StatSpec", "ResultRow", "ResultTable", "Verdict",
    "run_experiment", "convergence_report", "PRESETS", "preset", "KERNELS", "OUT_ENV",
]

SCHEMA_VERSION = 1
OUT_ENV = "HOUSESWEEP_OUT"
CSV_COLUMNS = ("N", "stat", "median", "mean", "se", "q10", "q50", "q90", "n", "n_failed")


# --------------------------------------------------------------------------
# configuration


@dataclass
class StatSpec:
    """Target of one statistic: a number, or ``"zero"``; ``threshold`` bounds the final gap."""

    target: float | str = "zero"
    threshold: float | None = None
    asserted: bool = True

    @property
    def target_value(self) -> float:
        return 0.0 if self.target == "zero" else float(self.target)


@dataclass
class ExperimentConfig:
    experiment: str
    command: str
    kernel: str
    claim: str
    N: list[int]
    a: float = 1.0
    b: float = 0.2
    phi_rule: str = "power"
    lam: float = 1.0
    gamma: dict = field(default_factory=lambda: {"values": [1.0, 2.0], "weights": [1.0, 1.0]})
    replicates: int = 100
    seed: int = 1
    out: str | None = None
    threads: int = 1
    statistics: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {self.schema_version}")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if not self.N or any(int(n) != n or n < 2 for n in self.N):
            raise ValueError("grid must be a nonempty list of integers >= 2")
        if len(set(self.N)) != len(self.N):
            raise ValueError("grid points must be distinct")
        if self.replicates < 0 or self.threads < 1:
            raise ValueError("replicates must be >= 0 and threads >= 1")
        if self.phi_rule not in ("power", "inverse_log", "strong"):
            raise ValueError(f"unknown phi rule {self.phi_rule!r}")
        self.N = [int(n) for n in self.N]
        self.statistics = {k: v if isinstance(v, StatSpec) else StatSpec(**v)
                           for k, v in self.statistics.items()}

    def params(self, N: int) -> ModelParams:
        if self.phi_rule == "power":
            return ModelParams.power(N, self.a, self.b)
        if self.phi_rule == "inverse_log":
            return ModelParams.inverse_log(N, self.a)
        return ModelParams.strong(N, self.a)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["statistics"] = {k: asdict(v) for k, v in self.statistics.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**copy.deepcopy(d))

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


# --------------------------------------------------------------------------
# replicate kernels: (config, params, generator) -> {stat: value}


def _k_fixation_time(cfg, params, g):
    path = simulate_moran_conditioned_fixation(params, g, record=RECORD_LEVELS,
                                               levels=[params.N])
    return {"sigma_fix": fixation_time_rescaled(path, params)}


def _k_house_distance(cfg, params, g):
    eps = cfg.options.get("eps", 0.1)
    tol = cfg.options.get("m1_tol", 1e-2)
    path = simulate_moran_conditioned_fixation(params, g, record=RECORD_FULL)
    house = House.from_params(params)
    out = {"sigma_fix": fixation_time_rescaled(path, params)}
    win = default_window(house)
    for which in (0, 1):
        H = rescale(path, params, which, win)
        out[f"sup_H{which}"] = sup_distance_restricted(H, house_path(house, which, win), which,
                                                       eps, house)
        out[f"m1_H{which}"] = m1_to_house(path, params, which, tol=tol, window=win).upper
    return out


def _k_phases(cfg, params, g):
    return {f"phase_{k}": gw.phase_statistic(k, params, g) for k in range(1, 6)}


def _log_step(times, sizes, N, scale, lo, hi, ext):
    t = times / scale
    v = np.where(sizes > 1, np.log(np.maximum(sizes, 1)) / math.log(N), 0.0)
    inner = (t > lo) & (t < hi)
    prior = t <= lo
    v0 = v[prior][-1] if prior.any() else ext
    tt = np.concatenate(([lo], t[inner]))
    vv = np.concatenate(([v0], v[inner]))
    tt, vv = last_at_each_time(tt, vv)
    keep = np.concatenate(([True], np.diff(vv) != 0))
    return CadlagPath.step(tt[keep], vv[keep], hi, before=ext if lo < 0 else None)


def _k_embedding(cfg, params, g):
    """M1 distance of the rescaled accompanying branching processes to their linear limits."""
    eps = cfg.options.get("eps", 0.1)
    tol = cfg.options.get("m1_tol", 1e-2)
    a, b, N, scale = params.a, params.b, params.N, params.time_scale
    T = (1.0 - b) / a
    z1 = gw.simulate_gw_conditioned_survival(GwParams.supercritical(params),
                                             StopRule(horizon=T * scale), g)
    t1, s1 = z1.breakpoints()
    Y1 = _log_step(t1, s1, N, scale, -eps, T, 0.0)
    # before 0 the path is 0; at 0 it is log_N(1) = 0 as well
    y1 = CadlagPath(np.array([-eps, 0.0, T]), np.array([0.0, 0.0, b + a * T]),
                    np.array([0.0, b, b + a * T]))
    start = int(N / math.sqrt(params.log_N))
    z0 = gw.simulate_gw(GwParams.subcritical(params), start, StopRule(horizon=(T + eps) * scale), g)
    t0, s0 = z0.breakpoints()
    Y0 = _log_step(t0, s0, N, scale, 0.0, T + eps, 1.0)
    y0 = CadlagPath(np.array([0.0, T, T + eps]), np.array([1.0, 1.0 - a * T, 0.0]),
                    np.array([1.0, 0.0, 0.0]))
    return {"m1_Y1": m1_distance(Y1, y1, tol).upper, "m1_Y0": m1_distance(Y0, y0, tol).upper}


def _k_walks(cfg, params, g):
    N = params.N
    up = simulate_conditioned_walk(up_prob_mutant(params), 1, N, g)
    start = int(N / math.sqrt(params.log_N))
    down = simulate_walk(up_prob_resident(params), start, 0, 2 ** 62, g)
    steps = cfg.options.get("lil_steps") or default_lil_steps(N)
    return {"drawdown_up": log_drawdown_up(up, N), "drawdown_down": log_drawdown_down(down, N),
            "lil": lil_fluctuation_stat(int(steps), N, g)}


def _k_clonal(cfg, params, g):
    gamma = GammaSpec.finite(cfg.gamma["values"], cfg.gamma["weights"])
    horizon = cfg.options.get("horizon", 3.0)
    brs = pit_vs_moran_distance(params, cfg.lam, gamma, g, horizon=horizon,
                                tol=cfg.options.get("m1_tol", 1e-2))
    ups = [br.upper for br in brs]
    return {"m1_resident": ups[0], "m1_max": max(ups), "contenders": float(len(ups) - 1)}


KERNELS: dict[str, tuple[int, Callable]] = {
    "fixation_time": (1, _k_fixation_time),
    "house_distance": (2, _k_house_distance),
    "phases": (3, _k_phases),
    "embedding": (4, _k_embedding),
    "walks": (5, _k_walks),
    "clonal": (6, _k_clonal),
}


# --------------------------------------------------------------------------
# presets


def _preset(**kw) -> dict:
    base = {"schema_version": SCHEMA_VERSION, "a": 1.0, "b": 0.2, "phi_rule": "power",
            "N": [1000, 10000, 100000], "seed": 20240601}
    base.update(kw)
    return base


PRESETS: dict[str, dict] = {
    "fixation-time": _preset(
        experiment="fixation-time", command="sweep", kernel="fixation_time", replicates=200,
        claim="sweep duration in units log N / phi converges to 2(1-b)/a",
        statistics={"sigma_fix": {"target": 1.6, "threshold": 0.32}}),
    "house-distance": _preset(
        experiment="house-distance", command="sweep", kernel="house_distance", replicates=200,
        claim="log-frequencies converge to the house: uniformly off the walls, and in M1",
        statistics={"sup_H0": {}, "sup_H1": {}, "m1_H0": {"threshold": 0.15},
                    "m1_H1": {"threshold": 0.15},
                    "sigma_fix": {"target": 1.6, "threshold": 0.32}},
        options={"eps": 0.1, "m1_tol": 1e-2}),
    "phases": _preset(
        experiment="phases", command="phases", kernel="phases", replicates=200,
        claim="each of the five sweep phases behaves as its branching approximation predicts",
        statistics={f"phase_{k}": {} for k in range(1, 6)}),
    "embedding-distance": _preset(
        experiment="embedding-distance", command="m1", kernel="embedding", replicates=100,
        claim="rescaled branching log-sizes converge in M1 to their piecewise-linear limits",
        statistics={"m1_Y1": {}, "m1_Y0": {}}, options={"eps": 0.1, "m1_tol": 1e-2}),
    "drawdowns": _preset(
        experiment="drawdowns", command="walks", kernel="walks", replicates=500,
        claim="logarithmic drawdowns of the embedded walks and the log-LIL statistic vanish",
        statistics={"drawdown_up": {}, "drawdown_down": {}, "lil": {}}),
    "pit-vs-moran": _preset(
        experiment="pit-vs-moran", command="clonal", kernel="clonal", replicates=50,
        b=0.3, N=[1000, 3000, 10000], lam=1.0,
        claim="contender log-frequencies approach the interacting-trajectory system (conjectural)",
        statistics={"m1_max": {"asserted": False}, "m1_resident": {"asserted": False}},
        options={"horizon": 3.0, "m1_tol": 1e-2}),
}

COMMAND_PRESETS = {c: [k for k, v in PRESETS.items() if v["command"] == c]
                   for c in ("sweep", "phases", "m1", "walks", "clonal")}


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    d = copy.deepcopy(PRESETS[name])
    d.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(d)


# --------------------------------------------------------------------------
# results


@dataclass
class ResultRow:
    N: int
    stat: str
    median: float
    mean: float
    se: float
    q10: float
    q50: float
    q90: float
    n: int
    n_failed: int

    @classmethod
    def from_values(cls, N: int, stat: str, values: np.ndarray) -> "ResultRow":
        v = np.sort(np.asarray(values, dtype=np.float64))
        ok = v[np.isfinite(v)]
        failed = len(v) - len(ok)
        if len(ok) == 0:
            nan = math.nan
            return cls(N, stat, nan, nan, nan, nan, nan, nan, 0, failed)
        q10, q50, q90 = np.quantile(ok, [0.1, 0.5, 0.9])
        se = float(ok.std(ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else math.nan
        return cls(N, stat, float(q50), float(ok.mean()), se, float(q10), float(q50), float(q90),
                   len(ok), failed)


@dataclass
class ResultTable:
    config: ExperimentConfig
    rows: list[ResultRow] = field(default_factory=list)
    values: dict = field(default_factory=dict)

    def stats(self) -> list[str]:
        return list(dict.fromkeys(r.stat for r in self.rows))

    def series(self, stat: str) -> list[ResultRow]:
        return sorted((r for r in self.rows if r.stat == stat), key=lambda r: r.N)

    @property
    def partial(self) -> bool:
        return any(r.n_failed for r in self.rows)

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for r in self.rows:
            lines.append(",".join(repr(getattr(r, c)) if isinstance(getattr(r, c), float)
                                  else str(getattr(r, c)) for c in CSV_COLUMNS))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, config: ExperimentConfig) -> "ResultTable":
        lines = text.strip().splitlines()
        if tuple(lines[0].split(",")) != CSV_COLUMNS:
            raise ValueError("unexpected CSV header")
        rows = []
        for line in lines[1:]:
            f = line.split(",")
            rows.append(ResultRow(int(f[0]), f[1], *map(float, f[2:8]), int(f[8]), int(f[9])))
        return cls(config, rows)

    def summary(self, verdicts: list["Verdict"] | None = None) -> dict:
        return {"schema_version": SCHEMA_VERSION, "experiment": self.config.experiment,
                "claim": self.config.claim, "config": self.config.to_dict(),
                "partial": self.partial, "rows": [asdict(r) for r in self.rows],
                "verdicts": [asdict(v) for v in verdicts or []]}

    def write(self, out_dir, verdicts: list["Verdict"] | None = None) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.config.experiment}.csv"
        json_path = out / f"{self.config.experiment}.json"
        csv_path.write_text(self.to_csv())
        json_path.write_text(json.dumps(self.summary(verdicts), indent=1, sort_keys=True) + "\n")
        return csv_path, json_path


def _replicate(cfg: ExperimentConfig, fn: Callable, params: ModelParams, seed: int) -> dict:
    g = np.random.default_rng(int(seed))
    try:
        return fn(cfg, params, g)
    except CapExceeded:
        return {}


def run_experiment(config: ExperimentConfig, persist: bool = True) -> ResultTable:
    """Run every grid cell; persist CSV + JSON under the output directory if requested."""
    table = ResultTable(config)
    kid, fn = KERNELS[config.kernel]
    if config.replicates == 0:
        warnings.warn(f"experiment {config.experiment!r} has zero replicates; table is empty")
        return table
    for N in config.N:
        params = config.params(N)
        seeds = replicate_seeds(config.seed, config.replicates, kid, N)
        if config.threads > 1:
            with ThreadPoolExecutor(config.threads) as pool:
                results = list(pool.map(lambda s: _replicate(config, fn, params, s), seeds))
        else:
            results = [_replicate(config, fn, params, s) for s in seeds]
        names = sorted({k for r in results for k in r})
        for stat in names:
            vals = np.array([r.get(stat, math.nan) for r in results], dtype=np.float64)
            table.values[(N, stat)] = vals
            table.rows.append(ResultRow.from_values(N, stat, vals))
    if persist:
        out = config.out or os.environ.get(OUT_ENV) or "housesweep-out"
        table.write(out, convergence_report([table]))
    return table


# --------------------------------------------------------------------------
# verdicts


@dataclass
class Verdict:
    experiment: str
    stat: str
    verdict: str
    medians: list
    final_gap: float
    threshold: float | None
    reason: str


def convergence_report(tables: list[ResultTable], target=None,
                       threshold: float | None = None) -> list[Verdict]:
    """Trend-plus-gap verdict for every statistic with a target.

    PASS iff the distance of the median to the target never increases by
    more than one standard error from one grid point to the next and the
    distance at the largest ``N`` is at most the threshold (if any).
    ``target``/``threshold`` override the per-statistic configuration;
    statistics configured with ``asserted=False`` get ``REPORT``.
    """
    out = []
    for table in tables:
        cfg = table.config
        for stat in table.stats():
            spec = cfg.statistics.get(stat)
            if spec is None and target is None:
                continue
            spec = copy.copy(spec) if spec is not None else StatSpec()
            if target is not None:
                spec.target = target
            if threshold is not None:
                spec.threshold = threshold
            series = table.series(stat)
            if len(series) < 3:
                raise ValueError(f"{cfg.experiment}/{stat}: need at least 3 grid points, "
                                 f"got {len(series)}")
            t = spec.target_value
            gaps = [abs(r.median - t) for r in series]
            meds = [r.median for r in series]
            reason = []
            if any(math.isnan(g) for g in gaps):
                reason.append("missing values")
            for i in range(1, len(series)):
                slack = series[i].se if math.isfinite(series[i].se) else 0.0
                if gaps[i] > gaps[i - 1] + slack:
                    reason.append(f"gap grows between N={series[i - 1].N} and N={series[i].N}")
            if spec.threshold is not None and not gaps[-1] <= spec.threshold:
                reason.append(f"final gap {gaps[-1]:.4g} exceeds {spec.threshold}")
            verdict = "PASS" if not reason else "FAIL"
            if not spec.asserted:
                verdict = "REPORT"
            out.append(Verdict(cfg.experiment, stat, verdict, meds, gaps[-1], spec.threshold,
                               "; ".join(reason) or "monotone toward target"))
    return out
