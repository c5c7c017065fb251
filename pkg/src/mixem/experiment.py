"""Random-restart success-rate studies.

For each ``(K, d)`` cell and ground-truth instance the harness draws a
Gaussian mixture with means ``N(0, 5 I)``, samples from it, and runs every
configured algorithm from the same set of random initializations. A trial
succeeds when, after optimal matching, every fitted mean lies within
``success_threshold`` of its true mean.

Every random quantity comes from its own stream keyed by
``(master_seed, purpose, K, d, instance[, init])``, so any single trial can be
rerun in isolation and results do not depend on execution order or the number
of worker threads.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .fitting import FitConfig, fit
from .metrics import DEFAULT_SUCCESS_THRESHOLD, match_components, moment_residual
from .mixture import GAUSSIAN, MixtureModel, SampleSet, center_samples, format_float, sample
from .rng import STREAM_INIT, STREAM_LAMBDA, STREAM_MODEL, STREAM_SAMPLES, derive_seed, make_rng

log = logging.getLogger(__name__)

PRIOR_VARIANCE = 5.0
INIT_METHODS = ("normal", "data", "truth")


@dataclass(frozen=True)
class ExperimentSpec:
    K_values: tuple[int, ...] = (3,)
    d_values: tuple[int, ...] = (1,)
    n_samples: int = 30_000
    n_inits: int = 1000
    max_iters: int = 3000
    algorithms: tuple[FitConfig, ...] = (FitConfig("naive"),)
    success_threshold: float = DEFAULT_SUCCESS_THRESHOLD
    master_seed: int = 0
    n_instances: int = 1
    center_data: bool = True
    init_method: str = "normal"
    param_tol: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "K_values", tuple(int(k) for k in self.K_values))
        object.__setattr__(self, "d_values", tuple(int(d) for d in self.d_values))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        counts = [*self.K_values, *self.d_values, self.n_samples, self.n_inits, self.max_iters, self.n_instances]
        if not self.K_values or not self.d_values or min(counts) < 1:
            raise InvalidArgumentError("all experiment counts must be at least 1")
        if not self.algorithms:
            raise InvalidArgumentError("at least one algorithm is required")
        if not self.success_threshold > 0:
            raise InvalidArgumentError("success_threshold must be positive")
        if self.init_method not in INIT_METHODS:
            raise InvalidArgumentError(f"init_method must be one of {INIT_METHODS}")
        if not self.param_tol >= 0:
            raise InvalidArgumentError("param_tol must be >= 0")
        labels = [a.label for a in self.algorithms]
        if len(set(labels)) != len(labels):
            raise InvalidArgumentError(f"duplicate algorithm labels {labels}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["K_values"] = list(self.K_values)
        out["d_values"] = list(self.d_values)
        out["algorithms"] = [a.to_dict() for a in self.algorithms]
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentSpec":
        obj = dict(obj)
        if "algorithms" in obj:
            obj["algorithms"] = tuple(FitConfig.from_dict(a) for a in obj["algorithms"])
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgumentError(f"unknown experiment keys {sorted(unknown)}")
        return cls(**obj)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]

    # per-purpose seeds
    def model_seed(self, K: int, d: int, instance: int) -> int:
        return derive_seed(self.master_seed, STREAM_MODEL, K, d, instance)

    def sample_seed(self, K: int, d: int, instance: int) -> int:
        return derive_seed(self.master_seed, STREAM_SAMPLES, K, d, instance)

    def init_seed(self, K: int, d: int, instance: int, init_index: int) -> int:
        return derive_seed(self.master_seed, STREAM_INIT, K, d, instance, init_index)

    def lambda_seed(self, K: int, d: int, instance: int, init_index: int) -> int:
        return derive_seed(self.master_seed, STREAM_LAMBDA, K, d, instance, init_index)


@dataclass
class TrialResult:
    K: int
    d: int
    instance_index: int
    init_index: int
    algorithm: str
    success: bool
    final_max_distance: float
    final_loglik: float
    moment_residual: float
    iterations_used: int
    converged: bool
    wall_time: float = 0.0

    @property
    def key(self):
        return (self.K, self.d, self.instance_index, self.init_index, self.algorithm)


@dataclass
class SuccessRow:
    K: int
    d: int
    algorithm: str
    n_instances: int
    n_inits: int
    n_trials: int
    n_success: int

    @property
    def success_rate(self) -> float:
        return self.n_success / self.n_trials if self.n_trials else float("nan")


@dataclass
class SuccessTable:
    rows: list[SuccessRow]
    spec_hash: str
    truncated: bool = False
    trials: list[TrialResult] = field(default_factory=list)

    def rate(self, K: int, d: int, algorithm: str) -> float:
        for r in self.rows:
            if (r.K, r.d, r.algorithm) == (K, d, algorithm):
                return r.success_rate
        raise KeyError((K, d, algorithm))

    def to_csv(self) -> str:
        lines = [f"# spec_hash={self.spec_hash}" + (" truncated=true" if self.truncated else "")]
        lines.append("K,d,algorithm,n_instances,n_inits,n_trials,n_success,success_rate")
        for r in self.rows:
            lines.append(
                f"{r.K},{r.d},{r.algorithm},{r.n_instances},{r.n_inits},{r.n_trials},{r.n_success},"
                f"{format_float(r.success_rate)}"
            )
        return "\n".join(lines) + "\n"


TRIAL_HEADER = (
    "K,d,instance_index,init_index,algorithm,success,final_max_distance,final_loglik,"
    "moment_residual,iterations_used,converged,wall_time"
)


def trials_to_csv(trials: list[TrialResult], spec_hash: str) -> str:
    lines = [f"# spec_hash={spec_hash}", TRIAL_HEADER]
    for t in sorted(trials, key=_trial_order):
        lines.append(
            ",".join([
                str(t.K), str(t.d), str(t.instance_index), str(t.init_index), t.algorithm,
                str(int(t.success)), format_float(t.final_max_distance), format_float(t.final_loglik),
                format_float(t.moment_residual), str(t.iterations_used), str(int(t.converged)),
                format_float(t.wall_time),
            ])
        )
    return "\n".join(lines) + "\n"


# --- instance generation -----------------------------------------------------------


def generate_instance(K: int, d: int, seed: int) -> MixtureModel:
    """Gaussian mixture with unit variance and means drawn i.i.d. from ``N(0, 5 I)``."""
    if K < 1 or d < 1:
        raise InvalidArgumentError("K and d must be at least 1")
    rng = make_rng(seed)
    return MixtureModel(GAUSSIAN, rng.normal(0.0, math.sqrt(PRIOR_VARIANCE), size=(K, d)), 1.0)


def generate_initialization(K: int, d: int, seed: int) -> np.ndarray:
    """Initial means drawn i.i.d. from ``N(0, 5 I)``."""
    if K < 1 or d < 1:
        raise InvalidArgumentError("K and d must be at least 1")
    rng = make_rng(seed)
    return rng.normal(0.0, math.sqrt(PRIOR_VARIANCE), size=(K, d))


def _initial_means(model: MixtureModel, fit_samples: SampleSet, shift: np.ndarray, seed: int, method: str):
    if method == "normal":
        return generate_initialization(model.K, model.d, seed)
    if method == "truth":
        return model.means - shift
    # K distinct data points
    rng = make_rng(seed)
    if fit_samples.n < model.K:
        raise InvalidArgumentError("fewer samples than components for data initialization")
    idx = rng.choice(fit_samples.n, size=model.K, replace=False)
    return fit_samples.data[np.sort(idx)].copy()


def _prepare(samples: SampleSet, center: bool) -> tuple[SampleSet, np.ndarray]:
    if center:
        return center_samples(samples)
    return samples, np.zeros(samples.d)


def run_trial(
    model: MixtureModel,
    samples: SampleSet,
    init_index: int,
    spec: ExperimentSpec,
    *,
    algorithm: FitConfig | None = None,
    instance_index: int = 0,
    prepared: tuple[SampleSet, np.ndarray] | None = None,
) -> TrialResult:
    """Fit from one random initialization and score it against ``model``.

    ``samples`` are raw draws from ``model``; they are centred first when the
    spec asks for it, and the shift is added back before scoring.
    ``prepared`` may carry an already-centred ``(samples, shift)`` pair.
    """
    algorithm = algorithm or spec.algorithms[0]
    K, d = model.K, model.d
    fit_samples, shift = prepared if prepared is not None else _prepare(samples, spec.center_data)
    init = _initial_means(
        model, fit_samples, shift, spec.init_seed(K, d, instance_index, init_index), spec.init_method
    )
    config = algorithm.with_(
        max_iters=spec.max_iters,
        param_tol=spec.param_tol,
        seed=spec.lambda_seed(K, d, instance_index, init_index),
    )
    t0 = time.perf_counter()
    res = fit(init, fit_samples, config)
    wall = time.perf_counter() - t0
    report = match_components(res.means + shift, model.means)
    return TrialResult(
        K=K,
        d=d,
        instance_index=instance_index,
        init_index=init_index,
        algorithm=algorithm.label,
        success=report.max_distance <= spec.success_threshold,
        final_max_distance=report.max_distance,
        final_loglik=res.trace.loglik[-1],
        moment_residual=moment_residual(res.means),
        iterations_used=res.iterations_used,
        converged=res.converged,
        wall_time=wall,
    )


def _trial_order(t: TrialResult):
    return (t.K, t.d, t.instance_index, t.init_index, t.algorithm)


def aggregate(trials: list[TrialResult], spec: ExperimentSpec, threshold: float | None = None) -> list[SuccessRow]:
    """Success-rate rows in spec order; ``threshold`` re-scores stored distances."""
    rows = []
    for K in spec.K_values:
        for d in spec.d_values:
            for alg in spec.algorithms:
                cell = [t for t in trials if t.K == K and t.d == d and t.algorithm == alg.label]
                if threshold is None:
                    n_ok = sum(t.success for t in cell)
                else:
                    n_ok = sum(t.final_max_distance <= threshold for t in cell)
                rows.append(SuccessRow(K, d, alg.label, spec.n_instances, spec.n_inits, len(cell), n_ok))
    return rows


def run_experiment(spec: ExperimentSpec, threads: int = 1, progress_every: int = 100) -> SuccessTable:
    """Run every trial in ``spec`` and tabulate success rates.

    Output is identical for any ``threads``; on ``KeyboardInterrupt`` the
    trials finished so far are returned with ``truncated=True``.
    """
    if threads < 1:
        raise InvalidArgumentError("threads must be at least 1")
    jobs = []
    for K in spec.K_values:
        for d in spec.d_values:
            for inst in range(spec.n_instances):
                model = generate_instance(K, d, spec.model_seed(K, d, inst))
                raw = sample(model, spec.n_samples, spec.sample_seed(K, d, inst))
                prepared = _prepare(raw, spec.center_data)
                for init in range(spec.n_inits):
                    for alg in spec.algorithms:
                        jobs.append((model, raw, init, alg, inst, prepared))

    def work(job):
        model, raw, init, alg, inst, prepared = job
        return run_trial(model, raw, init, spec, algorithm=alg, instance_index=inst, prepared=prepared)

    total = len(jobs)
    log.info("experiment %s: %d trials on %d thread(s)", spec.digest(), total, threads)
    results: list[TrialResult] = []
    truncated = False
    t0 = time.perf_counter()

    def note(done):
        if progress_every and done % progress_every == 0:
            log.info("%d/%d trials (%.0f s)", done, total, time.perf_counter() - t0)

    try:
        if threads == 1:
            for job in jobs:
                results.append(work(job))
                note(len(results))
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = [pool.submit(work, job) for job in jobs]
                try:
                    for fut in futures:
                        results.append(fut.result())
                        note(len(results))
                except KeyboardInterrupt:
                    for fut in futures:
                        fut.cancel()
                    raise
    except KeyboardInterrupt:
        truncated = True
        log.warning("interrupted after %d/%d trials; table is partial", len(results), total)

    results.sort(key=_trial_order)
    return SuccessTable(aggregate(results, spec), spec.digest(), truncated=truncated, trials=results)


def write_table(table: SuccessTable, out_dir, spec: ExperimentSpec, trial_log: bool = False) -> dict:
    """Write ``success_table.csv``, ``experiment.json`` and optionally ``trials.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"table": out / "success_table.csv", "meta": out / "experiment.json"}
    paths["table"].write_text(table.to_csv(), encoding="utf-8", newline="\n")
    meta = {"spec_hash": table.spec_hash, "truncated": table.truncated, "spec": spec.to_dict()}
    paths["meta"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if trial_log:
        paths["trials"] = out / "trials.csv"
        paths["trials"].write_text(trials_to_csv(table.trials, table.spec_hash), encoding="utf-8", newline="\n")
    return paths
