"""Multi-trial experiment runner with CSV/JSON outputs.

The contract that matters most here is determinism: the same config must
produce byte-identical files.  Floats are rendered with repr(), JSON keys
are sorted, and no file contains a timestamp.  Trial seeds derive from
(base_seed, trial_index) through a SeedSequence, so the set of streams is
reproducible and trials stay independent of each other.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents.common import AgentConfig, TrainMetrics
from .agents.training import ALGORITHMS, resolve_configs, train
from .env import AssemblyEnv, ConfigError, EnvConfig, UnwantedSpec
from .model import AssemblySpec, builtin_airplane_spec, load_spec
from .oracle import EnumerationLimitError, enumerate_sequences

# Final-performance window: mean deterministic-equivalent duration over
# the last this-many episodes of a trial.
FINAL_WINDOW = 500

TRIAL_CSV_HEADER = (
    "episode,duration_tu,deterministic_equivalent_tu,reward,"
    "unwanted,cumulative_unwanted,epsilon"
)
AGGREGATE_CSV_HEADER = (
    "episode,mean_duration,std_duration,mean_cum_unwanted,std_cum_unwanted"
)

RAINBOW_NOTE = (
    "rainbow here is a reduced variant: double Q targets, a dueling head, "
    "proportional prioritized replay, and 3-step returns with epsilon-greedy "
    "exploration; noisy layers and the distributional head are omitted, and "
    "action masking is off unless the env config enables it"
)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: `trials` independent runs of one algorithm.

    ``agent.episodes`` is kept in lockstep with ``episodes``; the
    top-level field is the single source of truth.
    """

    algorithm: str
    spec_source: str = "builtin:airplane"
    episodes: int = 10000
    trials: int = 20
    base_seed: int = 0
    smoothing_window: int = 100
    workers: int = 1
    out_dir: str | None = None
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(
                f"unknown algorithm {self.algorithm!r}; "
                f"expected one of {', '.join(ALGORITHMS)}"
            )
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.episodes < 1:
            raise ConfigError(f"episodes must be >= 1, got {self.episodes}")
        if self.smoothing_window < 1:
            raise ConfigError(
                f"smoothing_window must be >= 1, got {self.smoothing_window}"
            )
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.agent.episodes != self.episodes:
            object.__setattr__(
                self, "agent",
                dataclasses.replace(self.agent, episodes=self.episodes),
            )


@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed_entropy: tuple[int, int]
    metrics: TrainMetrics
    final_mean_tu: float
    total_unwanted: int


@dataclass(frozen=True, eq=False)
class AggregateResult:
    """Cross-trial statistics plus smoothed learning curves."""

    algorithm: str
    trials: int
    episodes: int
    final_mean_tu: float
    final_std_tu: float
    total_unwanted_mean: float
    total_unwanted_std: float
    per_trial_final_tu: tuple[float, ...]
    per_trial_total_unwanted: tuple[int, ...]
    curve_episode: np.ndarray
    curve_mean_duration: np.ndarray
    curve_std_duration: np.ndarray
    curve_mean_cum_unwanted: np.ndarray
    curve_std_cum_unwanted: np.ndarray


# ------------------------------------------------------------- config IO


def load_spec_source(source: str) -> AssemblySpec:
    """Resolve a spec reference: either ``builtin:<name>`` or a file path."""
    if source.startswith("builtin:"):
        name = source.split(":", 1)[1]
        if name != "airplane":
            raise ConfigError(f"unknown builtin spec {name!r}")
        return builtin_airplane_spec()
    return load_spec(source)


def unwanted_from_dict(data: dict | None) -> UnwantedSpec:
    if data is None:
        return UnwantedSpec()
    unknown = set(data) - {"forbidden_orderings", "forbidden_sequences"}
    if unknown:
        raise ConfigError(f"unknown unwanted keys: {sorted(unknown)}")
    orderings = []
    for pair in data.get("forbidden_orderings") or ():
        if len(pair) != 2:
            raise ConfigError(f"forbidden ordering must be a pair, got {pair!r}")
        orderings.append((int(pair[0]), int(pair[1])))
    sequences = [
        tuple(int(t) for t in s) for s in data.get("forbidden_sequences") or ()
    ]
    return UnwantedSpec(tuple(orderings), tuple(sequences))


def env_config_from_dict(data: dict) -> EnvConfig:
    names = {f.name for f in dataclasses.fields(EnvConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown env config keys: {sorted(unknown)}")
    kwargs = dict(data)
    kwargs["unwanted"] = unwanted_from_dict(kwargs.get("unwanted"))
    return EnvConfig(**kwargs)


def agent_config_from_dict(data: dict) -> AgentConfig:
    names = {f.name for f in dataclasses.fields(AgentConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown agent config keys: {sorted(unknown)}")
    kwargs = dict(data)
    if kwargs.get("hidden_sizes") is not None:
        kwargs["hidden_sizes"] = tuple(int(h) for h in kwargs["hidden_sizes"])
    return AgentConfig(**kwargs)


_EXPERIMENT_KEYS = {
    "spec", "algorithm", "episodes", "trials", "base_seed",
    "smoothing_window", "workers", "out_dir", "env", "agent",
    "agent_overrides",
}


def experiment_from_dict(data: dict) -> ExperimentConfig:
    """Build a resolved config from a JSON-shaped dict.

    ``agent_overrides`` maps algorithm names to agent-config fragments;
    the fragment for the selected algorithm is folded into ``agent``
    before construction, so the returned config is self-contained.
    """
    unknown = set(data) - _EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}")
    algorithm = data.get("algorithm")
    if not algorithm:
        raise ConfigError(
            "experiment config needs an 'algorithm' (or pass --algo)"
        )
    overrides = data.get("agent_overrides") or {}
    bad = set(overrides) - set(ALGORITHMS)
    if bad:
        raise ConfigError(f"agent_overrides for unknown algorithms: {sorted(bad)}")
    agent_data = dict(data.get("agent") or {})
    agent_data.update(overrides.get(algorithm) or {})
    return ExperimentConfig(
        algorithm=str(algorithm),
        spec_source=str(data.get("spec", "builtin:airplane")),
        episodes=int(data.get("episodes", 10000)),
        trials=int(data.get("trials", 20)),
        base_seed=int(data.get("base_seed", 0)),
        smoothing_window=int(data.get("smoothing_window", 100)),
        workers=int(data.get("workers", 1)),
        out_dir=data.get("out_dir"),
        env=env_config_from_dict(data.get("env") or {}),
        agent=agent_config_from_dict(agent_data),
    )


def experiment_to_dict(config: ExperimentConfig) -> dict:
    """Inverse of experiment_from_dict for the resolved (no overrides) form."""
    env = dataclasses.asdict(config.env)
    env["unwanted"] = {
        "forbidden_orderings": [list(p) for p in config.env.unwanted.forbidden_orderings],
        "forbidden_sequences": [list(s) for s in config.env.unwanted.forbidden_sequences],
    }
    agent = dataclasses.asdict(config.agent)
    agent["hidden_sizes"] = list(config.agent.hidden_sizes)
    return {
        "spec": config.spec_source,
        "algorithm": config.algorithm,
        "episodes": config.episodes,
        "trials": config.trials,
        "base_seed": config.base_seed,
        "smoothing_window": config.smoothing_window,
        "workers": config.workers,
        "out_dir": config.out_dir,
        "env": env,
        "agent": agent,
    }


# ------------------------------------------------------------ trial runs


def run_trial(config: ExperimentConfig, trial: int) -> TrialResult:
    spec = load_spec_source(config.spec_source)
    entropy = (config.base_seed, trial)
    metrics = train(
        config.algorithm, spec, config.env, config.agent,
        seed=np.random.SeedSequence(entropy),
    )
    return TrialResult(
        trial=trial,
        seed_entropy=entropy,
        metrics=metrics,
        final_mean_tu=metrics.final_mean_duration(FINAL_WINDOW),
        total_unwanted=int(metrics.cumulative_unwanted[-1]),
    )


def _trial_worker(payload: str, trial: int) -> TrialResult:
    return run_trial(experiment_from_dict(json.loads(payload)), trial)


def moving_average(series, window: int) -> np.ndarray:
    """Trailing mean over up to `window` entries; window=1 is the identity."""
    x = np.asarray(series, dtype=np.float64)
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if window == 1:
        return x.copy()
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(len(x))
    lo = np.maximum(0, idx - window + 1)
    return (csum[idx + 1] - csum[lo]) / (idx + 1 - lo)


def _sample_std(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size <= 1:
        return 0.0
    return float(v.std(ddof=1))


def aggregate(results: list[TrialResult], window: int = 100) -> AggregateResult:
    """Cross-trial mean/std of finals plus smoothed per-episode bands.

    Curves track the deterministic-equivalent duration (identical to the
    experienced duration in the deterministic setting) so the two settings
    stay comparable.
    """
    if not results:
        raise ValueError("aggregate needs at least one trial result")
    results = sorted(results, key=lambda r: r.trial)
    algorithms = {r.metrics.algorithm for r in results}
    if len(algorithms) > 1:
        raise ValueError(f"mixed algorithms in one aggregate: {sorted(algorithms)}")
    lengths = {r.metrics.episodes for r in results}
    if len(lengths) > 1:
        raise ValueError(f"trials of unequal length: {sorted(lengths)}")

    det = np.stack([
        np.asarray(r.metrics.deterministic_equivalent, dtype=np.float64)
        for r in results
    ])
    cum = np.stack([
        np.asarray(r.metrics.cumulative_unwanted, dtype=np.float64)
        for r in results
    ])
    finals = tuple(float(r.final_mean_tu) for r in results)
    totals = tuple(int(r.total_unwanted) for r in results)
    episodes = det.shape[1]

    def std_rows(matrix):
        if matrix.shape[0] <= 1:
            return np.zeros(matrix.shape[1])
        return matrix.std(axis=0, ddof=1)

    return AggregateResult(
        algorithm=algorithms.pop(),
        trials=len(results),
        episodes=episodes,
        final_mean_tu=float(np.mean(finals)),
        final_std_tu=_sample_std(finals),
        total_unwanted_mean=float(np.mean(totals)),
        total_unwanted_std=_sample_std(totals),
        per_trial_final_tu=finals,
        per_trial_total_unwanted=totals,
        curve_episode=np.arange(1, episodes + 1),
        curve_mean_duration=moving_average(det.mean(axis=0), window),
        curve_std_duration=moving_average(std_rows(det), window),
        curve_mean_cum_unwanted=moving_average(cum.mean(axis=0), window),
        curve_std_cum_unwanted=moving_average(std_rows(cum), window),
    )


# -------------------------------------------------------------- file IO


def _f(x) -> str:
    return repr(float(x))


def write_trial_csv(path, metrics: TrainMetrics) -> None:
    lines = [TRIAL_CSV_HEADER]
    for i in range(metrics.episodes):
        lines.append(",".join((
            str(i + 1),
            _f(metrics.duration[i]),
            _f(metrics.deterministic_equivalent[i]),
            _f(metrics.reward[i]),
            str(int(metrics.unwanted[i])),
            str(int(metrics.cumulative_unwanted[i])),
            _f(metrics.epsilon[i]),
        )))
    Path(path).write_text("\n".join(lines) + "\n")


def write_aggregate_csv(path, agg: AggregateResult) -> None:
    lines = [AGGREGATE_CSV_HEADER]
    for i in range(agg.episodes):
        lines.append(",".join((
            str(int(agg.curve_episode[i])),
            _f(agg.curve_mean_duration[i]),
            _f(agg.curve_std_duration[i]),
            _f(agg.curve_mean_cum_unwanted[i]),
            _f(agg.curve_std_cum_unwanted[i]),
        )))
    Path(path).write_text("\n".join(lines) + "\n")


def oracle_min_duration(spec: AssemblySpec, pickup_costs_change: bool) -> float | None:
    """Exact optimum by enumeration; None when the spec is too large."""
    try:
        records = enumerate_sequences(spec, pickup_costs_change=pickup_costs_change)
    except EnumerationLimitError:
        return None
    return min(r.duration for r in records)


def build_summary(
    config: ExperimentConfig,
    resolved_env: EnvConfig,
    agg: AggregateResult,
    oracle_min: float | None,
) -> dict:
    notes = []
    if config.algorithm == "rainbow":
        notes.append(RAINBOW_NOTE)
    return {
        "algorithm": agg.algorithm,
        "base_seed": config.base_seed,
        "conventions": {
            "duration_metric": "deterministic_equivalent",
            "final_window_episodes": FINAL_WINDOW,
            "masking": resolved_env.masking,
            "mode": resolved_env.mode,
            "noise_fraction": resolved_env.noise_fraction,
            "pickup_costs_change": resolved_env.pickup_costs_change,
            "smoothing_window": config.smoothing_window,
            "unwanted_enabled": bool(resolved_env.unwanted),
        },
        "episodes": agg.episodes,
        "final_mean_tu": agg.final_mean_tu,
        "final_std_tu": agg.final_std_tu,
        "notes": notes,
        "oracle_min_tu": oracle_min,
        "per_trial_final_tu": list(agg.per_trial_final_tu),
        "per_trial_total_unwanted": list(agg.per_trial_total_unwanted),
        "total_unwanted_mean": agg.total_unwanted_mean,
        "total_unwanted_std": agg.total_unwanted_std,
        "trials": agg.trials,
    }


def write_json(path, payload: dict) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n")


# --------------------------------------------------------- orchestration


def run_experiment(
    config: ExperimentConfig, out_dir: str | None = None
) -> AggregateResult:
    """Run all trials, aggregate, and (when an output dir is set) write
    per-trial CSVs, the aggregate CSV, summary.json, and a config echo.

    Trials run in the calling process when workers == 1, otherwise in a
    process pool; all file writes happen here in the coordinator.
    """
    out = config.out_dir if out_dir is None else out_dir
    spec = load_spec_source(config.spec_source)
    resolved_env, _ = resolve_configs(config.algorithm, config.env, config.agent)
    # fail fast on a bad env config before spending time on trials
    AssemblyEnv(spec, resolved_env, rng=np.random.default_rng(0))

    if config.workers > 1 and config.trials > 1:
        payload = json.dumps(experiment_to_dict(config), sort_keys=True)
        with ProcessPoolExecutor(
            max_workers=min(config.workers, config.trials)
        ) as pool:
            results = list(
                pool.map(
                    _trial_worker,
                    [payload] * config.trials,
                    range(config.trials),
                )
            )
    else:
        results = [run_trial(config, t) for t in range(config.trials)]

    agg = aggregate(results, config.smoothing_window)

    if out is not None:
        out_path = Path(out)
        out_path.mkdir(parents=True, exist_ok=True)
        write_json(out_path / "config.json", experiment_to_dict(config))
        for r in results:
            write_trial_csv(out_path / f"trial_{r.trial:03d}.csv", r.metrics)
        write_aggregate_csv(out_path / "aggregate.csv", agg)
        oracle_min = oracle_min_duration(spec, resolved_env.pickup_costs_change)
        write_json(
            out_path / "summary.json",
            build_summary(config, resolved_env, agg, oracle_min),
        )
    return agg
