"""Equal-weight Gaussian and Laplacian mixtures.

Densities, responsibilities and log-likelihoods are evaluated in log space
with log-sum-exp; well-separated components (K=9 and beyond) underflow
otherwise.

The multivariate Laplacian is the product of independent per-coordinate
Laplacians. Only the one-dimensional case is used by the population analysis;
d > 1 is an experimental extension.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidArgumentError
from .rng import make_rng

GAUSSIAN = "gaussian"
LAPLACIAN = "laplacian"
FAMILIES = (GAUSSIAN, LAPLACIAN)

_LOG_2PI = math.log(2.0 * math.pi)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MixtureModel:
    """Equal-weight mixture with ``K`` components in ``d`` dimensions.

    ``scale`` is the standard deviation for the Gaussian family and the
    Laplace parameter ``b`` for the Laplacian family. Weights are implicit
    and all equal to ``1/K``.
    """

    family: str
    means: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgumentError(f"unknown family {self.family!r}")
        means = np.array(self.means, dtype=float)
        if means.ndim == 1:
            # K scalar means
            means = means[:, None]
        if means.ndim != 2 or means.shape[0] < 1 or means.shape[1] < 1:
            raise InvalidArgumentError(f"means must be a non-empty K x d array, got shape {means.shape}")
        if not np.all(np.isfinite(means)):
            raise InvalidArgumentError("means must be finite")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise InvalidArgumentError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "means", _frozen(means))
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.K, 1.0 / self.K)

    def with_means(self, means) -> "MixtureModel":
        return MixtureModel(self.family, means, self.scale)

    def to_dict(self) -> dict:
        return {"family": self.family, "scale": self.scale, "means": self.means.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "MixtureModel":
        return cls(obj["family"], obj["means"], obj.get("scale", 1.0))


@dataclass(frozen=True)
class SampleSet:
    """An ``n x d`` sample matrix plus the seed that produced it."""

    data: np.ndarray
    seed: int | None = None
    centered: bool = False

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[1] < 1:
            raise InvalidArgumentError(f"sample data must be n x d, got shape {data.shape}")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


def _as_points(model: MixtureModel, x) -> tuple[np.ndarray, bool]:
    """Return ``x`` as an (n, d) array and whether the input was a single point."""
    if isinstance(x, SampleSet):
        x = x.data
    x = np.asarray(x, dtype=float)
    single = False
    if x.ndim == 0:
        x = x.reshape(1, 1)
        single = True
    elif x.ndim == 1:
        if model.d == 1 and x.shape[0] != 1:
            raise InvalidArgumentError(
                f"ambiguous 1-D input of length {x.shape[0]} for a d=1 model; pass an (n, 1) array"
            )
        x = x[None, :]
        single = True
    if x.ndim != 2 or x.shape[1] != model.d:
        raise InvalidArgumentError(f"point dimension {x.shape[-1]} does not match model dimension {model.d}")
    return x, single


def component_log_densities(model: MixtureModel, x) -> np.ndarray:
    """``log f(x_i; mu_k)`` as an (n, K) array."""
    pts, _ = _as_points(model, x)
    diff = pts[:, None, :] - model.means[None, :, :]
    s = model.scale
    if model.family == GAUSSIAN:
        return -0.5 * np.sum(diff * diff, axis=-1) / (s * s) - 0.5 * model.d * (_LOG_2PI + 2.0 * math.log(s))
    return -np.sum(np.abs(diff), axis=-1) / s - model.d * math.log(2.0 * s)


def log_density(model: MixtureModel, x):
    """Log of the mixture density; scalar for a single point, else one value per row."""
    pts, single = _as_points(model, x)
    out = logsumexp(component_log_densities(model, pts), axis=1) - math.log(model.K)
    return float(out[0]) if single else out


def density(model: MixtureModel, x):
    """Mixture density ``(1/K) sum_k f(x; mu_k)``.

    The value is ``exp(log_density)``; use :func:`log_density` far in the
    tails, where the Gaussian density is below the smallest double.
    """
    ld = log_density(model, x)
    return math.exp(ld) if isinstance(ld, float) else np.exp(ld)


def log_likelihood(model: MixtureModel, samples) -> float:
    """Average log-likelihood ``(1/n) sum_i log p(x_i)``."""
    pts, _ = _as_points(model, samples)
    if pts.shape[0] == 0:
        raise InvalidArgumentError("log-likelihood of an empty sample set")
    return float(np.mean(log_density(model, pts)))


def responsibilities(model: MixtureModel, x) -> np.ndarray:
    """Posterior component probabilities; shape (K,) for one point, (n, K) for many."""
    pts, single = _as_points(model, x)
    lc = component_log_densities(model, pts)
    w = np.exp(lc - logsumexp(lc, axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    return w[0] if single else w


def sample(model: MixtureModel, n: int, seed: int) -> SampleSet:
    """Draw ``n`` points: a uniform component index, then that component's noise.

    Output is a deterministic function of ``(model, n, seed)``.
    """
    if n < 0:
        raise InvalidArgumentError(f"n must be non-negative, got {n}")
    rng = make_rng(seed)
    z = rng.integers(0, model.K, size=n)
    if model.family == GAUSSIAN:
        noise = rng.standard_normal((n, model.d))
    else:
        noise = rng.laplace(0.0, 1.0, size=(n, model.d))
    return SampleSet(model.means[z] + model.scale * noise, seed=seed, centered=False)


def center_samples(samples: SampleSet) -> tuple[SampleSet, np.ndarray]:
    """Subtract the column mean. Returns the centered set and the shift removed."""
    if samples.n == 0:
        raise InvalidArgumentError("cannot center an empty sample set")
    shift = samples.data.mean(axis=0)
    centered = samples.data - shift
    # a second pass removes the O(eps * |shift|) residue of the first
    residue = centered.mean(axis=0)
    centered = centered - residue
    return SampleSet(centered, seed=samples.seed, centered=True), shift + residue


# --- serialization -------------------------------------------------------------


def format_float(v: float) -> str:
    return "%.17g" % v


def write_samples_csv(samples: SampleSet, path) -> None:
    header = ",".join(f"x{j + 1}" for j in range(samples.d))
    lines = [header]
    for row in samples.data:
        lines.append(",".join(format_float(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_samples_csv(path, seed: int | None = None) -> SampleSet:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith("x1"):
        raise InvalidArgumentError(f"{path}: missing x1,...,xd header")
    d = len(text[0].split(","))
    rows = [[float(v) for v in line.split(",")] for line in text[1:] if line.strip()]
    if any(len(r) != d for r in rows):
        raise InvalidArgumentError(f"{path}: ragged rows")
    data = np.array(rows, dtype=float).reshape(len(rows), d)
    return SampleSet(data, seed=seed)


def write_model_json(model: MixtureModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n", encoding="utf-8")


def read_model_json(path) -> MixtureModel:
    return MixtureModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
