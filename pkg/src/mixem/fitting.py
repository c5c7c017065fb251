"""Sample-based EM for equal-weight, unit-variance Gaussian mixtures.

Three variants share one update::

    mu_k <- (E[x w_k] + lam K mu_k - lam sum_j mu_j) / (lam K + E[w_k])

with expectations taken as sample averages and responsibilities ``w_k``
computed once per outer iteration from the previous means.

* ``naive``: ``lam = 0``, plain EM.
* ``regularized``: fixed ``lam = M``; ascends the log-likelihood penalised by
  ``(M/2) ||sum_k mu_k||^2`` (the centred-data first-moment condition).
* ``stochastic``: a fresh ``lam`` drawn from a :class:`LambdaSchedule` each
  outer iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError
from .metrics import moment_residual
from .mixture import GAUSSIAN, MixtureModel, SampleSet, format_float, log_likelihood
from .rng import STREAM_LAMBDA, make_rng

ALGORITHMS = ("naive", "regularized", "stochastic")

_LOG_2PI = math.log(2.0 * math.pi)
_TINY = 1e-300


@dataclass(frozen=True)
class LambdaSchedule:
    """Distribution of the penalty weight drawn by the stochastic variant.

    ``kind`` is ``"loguniform"`` (``lo``..``hi``, both positive),
    ``"uniform"`` (``lo``..``hi``) or ``"constant"`` (``value``).
    """

    kind: str = "loguniform"
    lo: float = 1e-2
    hi: float = 1.0
    value: float = 0.0

    def __post_init__(self):
        if self.kind == "constant":
            if not (math.isfinite(self.value) and self.value >= 0):
                raise InvalidArgumentError(f"constant lambda must be finite and >= 0, got {self.value}")
        elif self.kind in ("loguniform", "uniform"):
            if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
                raise InvalidArgumentError("schedule bounds must be finite")
            if not self.lo < self.hi:
                raise InvalidArgumentError(f"schedule needs lo < hi, got {self.lo}, {self.hi}")
            if self.kind == "loguniform" and self.lo <= 0:
                raise InvalidArgumentError("log-uniform schedule needs lo > 0")
            if self.kind == "uniform" and self.lo < 0:
                raise InvalidArgumentError("uniform schedule needs lo >= 0")
        else:
            raise InvalidArgumentError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "LambdaSchedule":
        """Parse ``loguniform:LO,HI``, ``uniform:LO,HI`` or ``constant:V``."""
        kind, _, args = text.strip().partition(":")
        kind = kind.lower()
        try:
            vals = [float(v) for v in args.split(",")] if args else []
        except ValueError as exc:
            raise InvalidArgumentError(f"bad schedule {text!r}") from exc
        if kind == "constant" and len(vals) == 1:
            return cls(kind="constant", value=vals[0])
        if kind in ("loguniform", "uniform") and len(vals) == 2:
            return cls(kind=kind, lo=vals[0], hi=vals[1])
        raise InvalidArgumentError(f"bad schedule {text!r}")

    def __str__(self):
        if self.kind == "constant":
            return f"constant:{self.value:g}"
        return f"{self.kind}:{self.lo:g},{self.hi:g}"

    def draw(self, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return float(self.value)
        u = rng.random()
        if self.kind == "uniform":
            return self.lo + (self.hi - self.lo) * u
        a, b = math.log(self.lo), math.log(self.hi)
        return math.exp(a + (b - a) * u)

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, obj: dict) -> "LambdaSchedule":
        return cls(**obj)


@dataclass(frozen=True)
class FitConfig:
    algorithm: str = "naive"
    M: float = 0.0
    schedule: LambdaSchedule | None = None
    max_iters: int = 3000
    param_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidArgumentError(f"unknown algorithm {self.algorithm!r}")
        if self.max_iters < 1:
            raise InvalidArgumentError("max_iters must be at least 1")
        if not (self.M >= 0 and math.isfinite(self.M)):
            raise InvalidArgumentError(f"M must be finite and >= 0, got {self.M}")
        if not self.param_tol >= 0:
            raise InvalidArgumentError("param_tol must be >= 0")
        if self.algorithm == "stochastic" and self.schedule is None:
            object.__setattr__(self, "schedule", LambdaSchedule())

    @property
    def label(self) -> str:
        if self.algorithm == "regularized":
            return f"regularized(M={self.M:g})"
        if self.algorithm == "stochastic":
            return f"stochastic({self.schedule})"
        return "naive"

    def to_dict(self) -> dict:
        out = {
            "algorithm": self.algorithm,
            "M": self.M,
            "max_iters": self.max_iters,
            "param_tol": self.param_tol,
            "seed": self.seed,
        }
        if self.schedule is not None:
            out["schedule"] = self.schedule.to_dict()
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "FitConfig":
        obj = dict(obj)
        if obj.get("schedule") is not None:
            obj["schedule"] = LambdaSchedule.from_dict(obj["schedule"])
        return cls(**obj)

    def with_(self, **changes) -> "FitConfig":
        return replace(self, **changes)


@dataclass
class Trace:
    """Per-iteration diagnostics, one entry per outer iteration."""

    loglik: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    moment_residual: list = field(default_factory=list)
    max_step: list = field(default_factory=list)
    lam: list = field(default_factory=list)

    def __len__(self):
        return len(self.loglik)

    def append(self, loglik, objective, residual, step, lam):
        self.loglik.append(loglik)
        self.objective.append(objective)
        self.moment_residual.append(residual)
        self.max_step.append(step)
        self.lam.append(lam)

    def rows(self):
        for i in range(len(self)):
            yield (i + 1, self.loglik[i], self.objective[i], self.moment_residual[i], self.max_step[i], self.lam[i])


@dataclass
class FitResult:
    means: np.ndarray
    trace: Trace
    converged: bool
    iterations_used: int
    lambda_draws: list = field(default_factory=list)
    degenerate_components: list = field(default_factory=list)
    initial_loglik: float = float("nan")

    def means_json(self, seed: int | None = None) -> dict:
        return {
            "means": self.means.tolist(),
            "converged": self.converged,
            "iterations_used": self.iterations_used,
            "seed": seed,
        }


# --- kernels -------------------------------------------------------------------


class _Data:
    """Samples laid out for the E-step: ``xT`` is (d, n) and C-contiguous."""

    __slots__ = ("xT", "n", "d", "half_sq_mean")

    def __init__(self, samples):
        x = samples.data if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise InvalidArgumentError(f"samples must be n x d, got shape {x.shape}")
        if x.shape[0] == 0:
            raise InvalidArgumentError("EM needs at least one sample")
        self.xT = np.ascontiguousarray(x.T)
        self.d, self.n = self.xT.shape
        self.half_sq_mean = 0.5 * float(np.mean(np.sum(x * x, axis=1)))


def _check_means(means, data: _Data) -> np.ndarray:
    m = np.array(means, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or m.shape[0] < 1:
        raise InvalidArgumentError(f"means must be K x d, got shape {m.shape}")
    if m.shape[1] != data.d:
        raise InvalidArgumentError(f"means dimension {m.shape[1]} does not match samples dimension {data.d}")
    return m


def _e_step(means: np.ndarray, data: _Data):
    """Return ``(E[w_k], E[x w_k], loglik)`` at ``means``."""
    K = means.shape[0]
    # log f(x; mu_k) up to the per-sample constant -|x|^2/2 - d/2 log 2pi
    lw = means @ data.xT
    lw -= 0.5 * np.sum(means * means, axis=1)[:, None]
    top = lw.max(axis=0)
    lw -= top
    np.exp(lw, out=lw)
    norm = lw.sum(axis=0)
    lw /= norm
    sw = lw.sum(axis=1) / data.n
    sxw = (lw @ data.xT.T) / data.n
    ll = float(np.mean(top + np.log(norm))) - data.half_sq_mean - 0.5 * data.d * _LOG_2PI - math.log(K)
    return sw, sxw, ll


def _m_step(means: np.ndarray, sw: np.ndarray, sxw: np.ndarray, lam: float):
    """The penalised update with weight ``lam``; ``lam == 0`` is plain EM.

    Components with vanishing responsibility mass keep their mean and are
    reported in the returned index list.
    """
    K = means.shape[0]
    if lam == 0:
        num = sxw
        den = sw
    else:
        num = sxw + lam * K * means - lam * means.sum(axis=0)
        den = lam * K + sw
    ok = den >= _TINY
    if ok.all():
        return num / den[:, None], []
    if lam != 0:
        k = int(np.argmin(ok))
        raise NumericalFailureError(f"update denominator {den[k]!r} vanishes for component {k}")
    out = means.copy()
    out[ok] = num[ok] / den[ok, None]
    return out, [int(k) for k in np.flatnonzero(~ok)]


# --- public steps and objectives --------------------------------------------------


def naive_em_step(means, samples) -> np.ndarray:
    """One plain EM update of all means."""
    data = _Data(samples)
    m = _check_means(means, data)
    sw, sxw, _ = _e_step(m, data)
    return _m_step(m, sw, sxw, 0.0)[0]


def regularized_em_step(means, samples, M: float) -> np.ndarray:
    """One moment-penalised EM update; ``M = 0`` reproduces :func:`naive_em_step` exactly."""
    if not (M >= 0 and math.isfinite(M)):
        raise InvalidArgumentError(f"M must be finite and >= 0, got {M}")
    data = _Data(samples)
    m = _check_means(means, data)
    sw, sxw, _ = _e_step(m, data)
    return _m_step(m, sw, sxw, float(M))[0]


def _model(means) -> MixtureModel:
    return MixtureModel(GAUSSIAN, means, 1.0)


def regularized_objective(means, samples, M: float) -> float:
    """Average log-likelihood minus ``(M/2) ||sum_k mu_k||^2``."""
    ll = log_likelihood(_model(means), samples)
    return ll - 0.5 * M * moment_residual(means) ** 2


def surrogate(means, anchor, samples, M: float) -> float:
    """Minorizer of :func:`regularized_objective` built at ``anchor``.

    Tight at ``means == anchor`` and maximised by
    ``regularized_em_step(anchor, samples, M)``.
    """
    data = _Data(samples)
    mu = _check_means(means, data)
    a = _check_means(anchor, data)
    if mu.shape != a.shape:
        raise InvalidArgumentError(f"means shape {mu.shape} differs from anchor shape {a.shape}")
    K = a.shape[0]
    x = data.xT.T
    w = np.exp(_log_resp(a, x))
    # log f(x; mu_k) - log f(x; a_k) for unit-variance Gaussians
    sq_mu = np.sum((x[:, None, :] - mu[None, :, :]) ** 2, axis=-1)
    sq_a = np.sum((x[:, None, :] - a[None, :, :]) ** 2, axis=-1)
    expected = float(np.mean(np.sum(w * (0.5 * (sq_a - sq_mu)), axis=1)))
    delta = mu - a
    prox = 0.5 * M * K * float(np.sum(delta * delta))
    linear = M * float(np.dot(delta.sum(axis=0), a.sum(axis=0)))
    return expected - prox - linear + regularized_objective(a, samples, M)


def _log_resp(means: np.ndarray, x: np.ndarray) -> np.ndarray:
    lw = x @ means.T - 0.5 * np.sum(means * means, axis=1)
    top = lw.max(axis=1, keepdims=True)
    lw = lw - top
    return lw - np.log(np.sum(np.exp(lw), axis=1, keepdims=True))


# --- driver --------------------------------------------------------------------


def fit(init_means, samples, config: FitConfig) -> FitResult:
    """Run the configured EM variant from ``init_means``.

    Stops after ``config.max_iters`` outer iterations, or earlier once the
    largest per-component move is below ``config.param_tol``.
    """
    data = _Data(samples)
    means = _check_means(init_means, data).copy()

    rng = None
    if config.algorithm == "stochastic":
        rng = make_rng(STREAM_LAMBDA, config.seed)

    sw, sxw, ll = _e_step(means, data)
    result = FitResult(means=means, trace=Trace(), converged=False, iterations_used=0, initial_loglik=ll)
    degenerate: set[int] = set()

    for _ in range(config.max_iters):
        if config.algorithm == "naive":
            lam = 0.0
        elif config.algorithm == "regularized":
            lam = float(config.M)
        else:
            lam = config.schedule.draw(rng)
            result.lambda_draws.append(lam)

        new, deg = _m_step(means, sw, sxw, lam)
        degenerate.update(deg)
        step = float(np.max(np.linalg.norm(new - means, axis=1)))
        means = new
        sw, sxw, ll = _e_step(means, data)
        resid = moment_residual(means)
        result.trace.append(ll, ll - 0.5 * lam * resid * resid, resid, step, lam)
        result.iterations_used += 1
        if step < config.param_tol:
            result.converged = True
            break

    result.means = means
    result.degenerate_components = sorted(degenerate)
    return result


TRACE_HEADER = "iter,loglik,objective,moment_residual,max_step,lambda"


def write_trace_csv(result: FitResult, path) -> None:
    lines = [TRACE_HEADER]
    for it, *vals in result.trace.rows():
        lines.append(",".join([str(it)] + [format_float(v) for v in vals]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
