"""Experiment configuration, Monte Carlo orchestration and result files.

Per deployment, covariances, the CMD feature matrix, the chart and every
allocation are computed once (per axis value when the axis changes them).
Each trial then draws an active set, channels, pilot noise and one QPSK
data vector from its own generator, seeded by a stable hash of
``(seed, method, axis value, deployment, trial)``; results therefore do not
depend on the number of worker threads.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy
import yaml

from . import __version__
from .allocation import (cmd_allocate, contamination_objective, exhaustive_search,
                         nn_greedy_allocate, random_allocate, real_position_allocate)
from .charting import ChartEmbedding, adaptive_chart, correlation_matrix, isomap
from .config import ConfigError, SystemConfig, check_exhaustive_feasible
from .detection import detect_symbols, random_qpsk, robust_combiner, sinr_all
from .estimation import estimate_channels, hadamard_codebook, synthesize_received
from .geometry import covariance_set, deploy_ues, draw_channels, gain_normalization

METHODS = ("random", "cmd", "cc", "real_position", "exhaustive", "perfect_csi_bound")
AXES = ("snr_db", "tau", "sigma_theta_deg", "eps", "M")

RAW_COLUMNS = ("experiment", "method", "axis", "axis_value", "deployment", "trial", "seed",
               "status", "nmse_ce", "ce_err", "ce_energy", "mse_sd", "ser", "sum_rate",
               "objective", "chart_dim", "residual")


def stable_seed(*parts) -> int:
    """64-bit seed from a stable hash of the given parts."""
    digest = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    methods: tuple = ("random", "cmd", "cc", "real_position")
    axis: str = "snr_db"
    values: tuple = (10.0,)
    trials: int = 100
    deployments: int = 1
    xi_values: Optional[tuple] = None
    base: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("methods", "at least one method is required")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError("methods", f"unknown method {m!r}; choose from {METHODS}")
        if self.axis not in AXES:
            raise ConfigError("axis", f"unknown axis {self.axis!r}; choose from {AXES}")
        if not self.values:
            raise ConfigError("values", "axis values must be nonempty")
        if self.trials < 1:
            raise ConfigError("trials", "must be >= 1")
        if self.deployments < 1:
            raise ConfigError("deployments", "must be >= 1")
        if self.xi_values is not None:
            if self.axis != "eps":
                raise ConfigError("xi_values", "only meaningful on the eps axis")
            if len(self.xi_values) != len(self.values):
                raise ConfigError("xi_values", "must match the axis values in length")

    def point_config(self, config: SystemConfig, index: int) -> SystemConfig:
        """System configuration at the ``index``-th axis point."""
        v = self.values[index]
        if self.axis == "snr_db":
            return config.with_snr(float(v))
        if self.axis == "tau":
            return config.replace(pilot_len=int(v))
        if self.axis == "sigma_theta_deg":
            return config.replace(angular_std=math.radians(float(v)))
        if self.axis == "M":
            return config.replace(antennas_per_sector=int(v))
        xi = float(v) if self.xi_values is None else float(self.xi_values[index])
        return config.replace(eps=float(v), xi=xi)

    def validate(self, config: SystemConfig) -> None:
        for i in range(len(self.values)):
            cfg = self.point_config(config, i)
            if "exhaustive" in self.methods:
                check_exhaustive_feasible(cfg.n_ues, cfg.pilot_len)

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)


_SNR = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
_BASELINES = ("random", "cmd", "cc", "real_position")

PRESETS = {
    "fig3": ExperimentSpec("fig3", ("cc",), "eps", (0.5, 0.1, 1e-2, 1e-4),
                           xi_values=(0.1, 0.01, 1e-2, 1e-4)),
    "fig4": ExperimentSpec("fig4", _BASELINES, "sigma_theta_deg",
                           (4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0)),
    "fig5": ExperimentSpec("fig5", _BASELINES + ("perfect_csi_bound",), "snr_db", _SNR),
    "fig6": ExperimentSpec("fig6", _BASELINES, "M", (8, 16, 32, 64)),
    "fig7": ExperimentSpec("fig7", _BASELINES, "tau", (16, 32, 64, 128)),
    "fig8": ExperimentSpec("fig8", _BASELINES + ("exhaustive", "perfect_csi_bound"), "snr_db",
                           _SNR, base={"n_ues": 10, "n_active": 10, "pilot_len": 4,
                                       "antennas_per_sector": 16}),
}

_DEG_KEYS = {"angular_std_deg": "angular_std", "beamwidth_3db_deg": "beamwidth_3db"}
_SYSTEM_KEYS = {f.name for f in dataclasses.fields(SystemConfig)} | set(_DEG_KEYS) | {"snr_db"}
_EXPERIMENT_KEYS = {f.name for f in dataclasses.fields(ExperimentSpec)} - {"name"}


def system_from_dict(values: dict, base: Optional[SystemConfig] = None) -> SystemConfig:
    """Apply overrides (YAML ``system`` section) on top of ``base``."""
    values = dict(values or {})
    unknown = sorted(set(values) - _SYSTEM_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown system key")
    snr = values.pop("snr_db", None)
    for deg_key, key in _DEG_KEYS.items():
        if deg_key in values:
            if key in values:
                raise ConfigError(deg_key, f"give either {deg_key} or {key}, not both")
            values[key] = math.radians(float(values.pop(deg_key)))
    cfg = (base or SystemConfig()).replace(**values)
    return cfg.with_snr(float(snr)) if snr is not None else cfg


def experiment_from_dict(name: str, values: dict) -> ExperimentSpec:
    values = dict(values or {})
    unknown = sorted(set(values) - _EXPERIMENT_KEYS)
    if unknown:
        raise ConfigError(f"experiments.{name}.{unknown[0]}", "unknown experiment key")
    base = PRESETS.get(name, ExperimentSpec(name))
    for key in ("methods", "values", "xi_values"):
        if values.get(key) is not None:
            values[key] = tuple(values[key])
    merged_base = dict(base.base)
    merged_base.update(values.pop("base", None) or {})
    return base.replace(name=name, base=merged_base, **values)


def load_config(path=None, experiment: Optional[str] = None):
    """Read a YAML config file.

    Returns ``(SystemConfig, ExperimentSpec)`` for the named experiment (file
    entries override the built-in ``fig3``..``fig8`` presets), or
    ``(SystemConfig, dict of specs)`` when ``experiment`` is None. An empty or
    missing file yields the default system.
    """
    data = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
            raise ConfigError(str(path), f"parse error at {where}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(str(path), "top level must be a mapping")
    unknown = sorted(set(data) - {"system", "experiments"})
    if unknown:
        raise ConfigError(unknown[0], "unknown top-level section")
    system = system_from_dict(data.get("system") or {})
    specs = dict(PRESETS)
    for name, values in (data.get("experiments") or {}).items():
        specs[name] = experiment_from_dict(name, values)
    if experiment is None:
        return system, specs
    if experiment not in specs:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}; "
                                        f"available: {sorted(specs)}")
    spec = specs[experiment]
    config = system_from_dict(spec.base, system)
    spec.validate(config)
    return config, spec


@dataclass
class MetricsRecord:
    experiment: str
    method: str
    axis: str
    axis_value: float
    deployment: int
    trial: int
    seed: int
    status: str = "ok"
    nmse_ce: float = float("nan")
    ce_err: float = float("nan")
    ce_energy: float = float("nan")
    mse_sd: float = float("nan")
    ser: float = float("nan")
    sum_rate: float = float("nan")
    objective: float = float("nan")
    chart_dim: int = 0
    residual: float = float("nan")
    wall_time_ms: float = 0.0


@dataclass
class Scenario:
    """Everything shared read-only by the trials of one (deployment, axis point)."""
    config: SystemConfig
    ues: list
    covs: np.ndarray
    scale: float
    correlation: np.ndarray
    assignments: dict
    chart: Optional[ChartEmbedding]


def build_chart(F: np.ndarray, config: SystemConfig) -> ChartEmbedding:
    if config.fixed_chart_dim is not None:
        return isomap(F, min(config.fixed_chart_dim, F.shape[0]), config.knn)
    return adaptive_chart(F, config.eps, config.xi, config.chart_dim_cap, config.knn)


class _ScenarioCache:
    """Reuses covariances and charts across axis points of one deployment."""

    def __init__(self, ues, seed, deployment):
        self.ues = ues
        self.seed = seed
        self.deployment = deployment
        self._covs_key = None
        self._chart_key = None

    def build(self, config: SystemConfig, methods: Sequence[str]) -> Scenario:
        ckey = (config.angular_std, config.antennas_per_sector, config.quadrature_points)
        if ckey != self._covs_key:
            covs = covariance_set(self.ues, config)
            scale = gain_normalization(covs) if config.normalize_gain else 1.0
            covs *= scale
            self._covs = covs, scale, correlation_matrix(covs)
            self._covs_key, self._chart_key = ckey, None
        covs, scale, delta = self._covs
        F = 1.0 - delta
        np.fill_diagonal(F, 0.0)

        chart = None
        if "cc" in methods:
            hkey = (config.eps, config.xi, config.knn, config.max_chart_dim, config.fixed_chart_dim)
            if hkey != self._chart_key:
                self._chart = build_chart(F, config)
                self._chart_key = hkey
            chart = self._chart

        n, tau = config.n_ues, config.pilot_len
        start = int(np.random.default_rng(stable_seed(self.seed, "start", self.deployment))
                    .integers(n))
        assignments = {}
        for m in methods:
            if m == "random":
                rng = np.random.default_rng(stable_seed(self.seed, "random", self.deployment, tau))
                assignments[m] = random_allocate(n, tau, rng)
            elif m == "cmd":
                assignments[m] = cmd_allocate(F, tau, start)
            elif m == "cc":
                assignments[m] = nn_greedy_allocate(chart.Z, tau, start)
            elif m == "real_position":
                assignments[m] = real_position_allocate(self.ues, tau, start)
            elif m == "exhaustive":
                assignments[m] = exhaustive_search(delta, tau)[0]
        return Scenario(config, self.ues, covs, scale, delta, assignments, chart)


def run_trial(scenario: Scenario, method: str, rng: np.random.Generator) -> dict:
    """One coherence block: pilot phase, estimation, combining and detection."""
    cfg = scenario.config
    N, K = cfg.n_ues, cfg.n_active
    active = np.sort(rng.choice(N, K, replace=False))
    H = draw_channels([scenario.ues[i] for i in active], cfg, rng, scale=scenario.scale)
    if method == "perfect_csi_bound":
        H_hat, err_covs = H, None
    else:
        assignment = scenario.assignments[method][active]
        codebook = hadamard_codebook(cfg.pilot_len)
        Y = synthesize_received(H, assignment, codebook, cfg.pilot_power, cfg.noise_power, rng)
        est = estimate_channels(Y, assignment, scenario.covs[active], codebook,
                                cfg.pilot_power, cfg.noise_power)
        H_hat, err_covs = est.H_hat, est.error_covs
    empty = np.zeros((0,))
    errs = err_covs if err_covs is not None else empty
    p_data = cfg.p_data
    W = robust_combiner(H_hat, errs, cfg.noise_power, p_data)
    gamma = sinr_all(H_hat, errs, cfg.noise_power, p_data)
    _, mse_sd, ser = detect_symbols(W, H, random_qpsk(K, rng), cfg.noise_power, p_data, rng)
    ce_err = float(np.linalg.norm(H_hat - H) ** 2)
    ce_energy = float(np.linalg.norm(H) ** 2)
    return dict(nmse_ce=ce_err / ce_energy, ce_err=ce_err, ce_energy=ce_energy,
                mse_sd=mse_sd, ser=ser, sum_rate=float(np.log2(1.0 + gamma).sum()))


def _run_block(spec, scenario, method, axis_value, deployment, trials, seed):
    rows = []
    if method in scenario.assignments:
        objective = contamination_objective(scenario.assignments[method], scenario.correlation)
    else:
        objective = float("nan")
    chart = scenario.chart if method == "cc" else None
    for t in trials:
        trial_seed = stable_seed(seed, method, float(axis_value), deployment, t)
        rec = MetricsRecord(spec.name, method, spec.axis, float(axis_value), deployment, t,
                            trial_seed, objective=objective,
                            chart_dim=chart.dim if chart is not None else 0,
                            residual=chart.residual if chart is not None else float("nan"))
        t0 = time.perf_counter()
        try:
            values = run_trial(scenario, method, np.random.default_rng(trial_seed))
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            rec.status = f"failed: {type(exc).__name__}"
        else:
            if all(math.isfinite(v) for v in values.values()):
                for k, v in values.items():
                    setattr(rec, k, v)
            else:
                rec.status = "failed: non-finite"
        rec.wall_time_ms = (time.perf_counter() - t0) * 1e3
        rows.append(rec)
    return rows


def run_experiment(spec: ExperimentSpec, config: SystemConfig, seed: Optional[int] = None,
                   trials: Optional[int] = None, deployments: Optional[int] = None,
                   threads: int = 1, out_dir=None, charts_out=None) -> list[MetricsRecord]:
    """Run every (method, axis value, deployment, trial) and return sorted records.

    With ``out_dir``, also writes ``<name>_raw.csv``, ``<name>_summary.csv``
    and ``<name>_manifest.json``.
    """
    config = system_from_dict(spec.base, config)
    seed = config.seed if seed is None else seed
    trials = spec.trials if trials is None else trials
    deployments = spec.deployments if deployments is None else deployments
    spec = spec.replace(trials=trials, deployments=deployments)
    spec.validate(config)
    chunk = max(1, math.ceil(trials / max(1, threads)))
    blocks = [range(lo, min(trials, lo + chunk)) for lo in range(0, trials, chunk)]
    records: list[MetricsRecord] = []
    deploy_seeds = []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for d in range(deployments):
            dseed = stable_seed(seed, "deploy", d)
            deploy_seeds.append(dseed)
            ues = deploy_ues(config, np.random.default_rng(dseed))
            cache = _ScenarioCache(ues, seed, d)
            for i, v in enumerate(spec.values):
                scenario = cache.build(spec.point_config(config, i), spec.methods)
                if charts_out is not None and scenario.chart is not None:
                    charts_out.append((d, v, scenario.chart, scenario.assignments))
                futures = [pool.submit(_run_block, spec, scenario, m, v, d, b, seed)
                           for m in spec.methods for b in blocks]
                for f in futures:
                    records.extend(f.result())
    order = {m: i for i, m in enumerate(spec.methods)}
    vorder = {float(v): i for i, v in enumerate(spec.values)}
    records.sort(key=lambda r: (order[r.method], vorder[r.axis_value], r.deployment, r.trial))
    if out_dir is not None:
        write_outputs(records, spec, config, seed, deploy_seeds, out_dir)
    return records


def _fmt(value) -> str:
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def write_raw_csv(path, records: Sequence[MetricsRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_COLUMNS)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in RAW_COLUMNS])


def _mean_std(x: np.ndarray) -> tuple[float, float]:
    x = x[np.isfinite(x)]
    if x.size == 0:
        return float("nan"), float("nan")
    return float(x.mean()), float(x.std(ddof=1)) if x.size > 1 else 0.0


def emit_summary(records: Sequence[MetricsRecord]) -> list[dict]:
    """Aggregate per (method, axis value): sample mean and std of each metric.

    NMSE-CE is the ratio of the mean error energy to the mean channel
    energy, not the mean of per-trial ratios.
    """
    if not records:
        raise ValueError("no records to summarize")
    groups: dict = {}
    for r in records:
        groups.setdefault((r.method, r.axis_value), []).append(r)
    rows = []
    for (method, value), recs in groups.items():
        ok = [r for r in recs if r.status == "ok"]
        row = {"experiment": recs[0].experiment, "method": method, "axis": recs[0].axis,
               "axis_value": value, "n_trials": len(recs), "n_failed": len(recs) - len(ok)}
        err = np.array([r.ce_err for r in ok])
        energy = np.array([r.ce_energy for r in ok])
        nmse = float(err.mean() / energy.mean()) if ok else float("nan")
        row["nmse_ce"] = nmse
        row["nmse_ce_db"] = 10 * math.log10(nmse) if nmse > 0 else float("-inf") if nmse == 0 else float("nan")
        for name in ("nmse_ce", "mse_sd", "ser", "sum_rate", "objective", "residual"):
            src = ok if name != "objective" and name != "residual" else recs
            mean, std = _mean_std(np.array([getattr(r, name) for r in src], dtype=float))
            key = "nmse_trial" if name == "nmse_ce" else name
            row[f"{key}_mean"], row[f"{key}_std"] = mean, std
        row["chart_dim_mean"] = float(np.mean([r.chart_dim for r in recs]))
        rows.append(row)
    return rows


def write_summary_csv(path, rows: Sequence[dict]) -> None:
    cols = list(rows[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in cols])


def config_hash(config: SystemConfig, spec: ExperimentSpec) -> str:
    payload = json.dumps({"system": config.to_dict(), "experiment": dataclasses.asdict(spec)},
                         sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()


def write_outputs(records, spec, config, seed, deploy_seeds, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_raw_csv(out / f"{spec.name}_raw.csv", records)
    summary = emit_summary(records)
    write_summary_csv(out / f"{spec.name}_summary.csv", summary)
    chart_dims = {}
    for row in summary:
        if row["method"] == "cc":
            chart_dims[repr(row["axis_value"])] = row["chart_dim_mean"]
    timing = {}
    for r in records:
        timing[r.method] = timing.get(r.method, 0.0) + r.wall_time_ms
    manifest = {
        "experiment": spec.name,
        "axis": spec.axis,
        "values": list(spec.values),
        "methods": list(spec.methods),
        "trials": spec.trials,
        "deployments": spec.deployments,
        "seed": seed,
        "deployment_seeds": deploy_seeds,
        "config": config.to_dict(),
        "config_hash": config_hash(config, spec),
        "eps": list(spec.values) if spec.axis == "eps" else config.eps,
        "xi": config.xi if spec.xi_values is None else list(spec.xi_values),
        "knn": config.knn,
        "average_chart_dim": chart_dims,
        "wall_time_ms": timing,
        "versions": {"ccpilot": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }
    with open(out / f"{spec.name}_manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
