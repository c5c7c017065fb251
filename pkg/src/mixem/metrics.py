"""Permutation-aware comparison of estimated means with the ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidArgumentError

DEFAULT_SUCCESS_THRESHOLD = 0.5


@dataclass(frozen=True)
class MatchReport:
    """Result of optimally pairing estimated means with true means.

    ``permutation[k]`` is the row of the estimate matched to true component
    ``k`` (0-based).
    """

    permutation: tuple[int, ...]
    per_component_distance: np.ndarray
    max_distance: float
    total_sq_distance: float
    moment_residual: float

    def to_dict(self) -> dict:
        return {
            "permutation": list(self.permutation),
            "distances": self.per_component_distance.tolist(),
            "max_distance": self.max_distance,
            "moment_residual": self.moment_residual,
        }


def _as_matrix(a, name: str) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or m.shape[0] < 1:
        raise InvalidArgumentError(f"{name} must be a non-empty K x d array, got shape {m.shape}")
    return m


def moment_residual(means) -> float:
    """``||sum_k mu_k||_2``."""
    m = _as_matrix(means, "means")
    return float(np.linalg.norm(m.sum(axis=0)))


def sq_distance_matrix(estimated, truth) -> np.ndarray:
    """``C[k, j] = ||truth_k - estimated_j||^2``."""
    est = _as_matrix(estimated, "estimated")
    tru = _as_matrix(truth, "truth")
    if est.shape != tru.shape:
        raise InvalidArgumentError(f"shape mismatch: estimated {est.shape} vs truth {tru.shape}")
    diff = tru[:, None, :] - est[None, :, :]
    return np.sum(diff * diff, axis=-1)


def _assignment_cost(cost: np.ndarray) -> float:
    if cost.size == 0:
        return 0.0
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].sum())


def _lexicographic_optimum(cost: np.ndarray) -> tuple[int, ...]:
    # Fix rows in order, each to the smallest column that keeps the total optimal.
    K = cost.shape[0]
    best = _assignment_cost(cost)
    slack = 1e-12 * max(1.0, best)
    rows = list(range(K))
    cols = list(range(K))
    perm = []
    acc = 0.0
    for k in range(K):
        rest_rows = rows[k + 1:]
        for j in sorted(cols):
            rest_cols = [c for c in cols if c != j]
            sub = cost[np.ix_(rest_rows, rest_cols)]
            if acc + cost[k, j] + _assignment_cost(sub) <= best + slack:
                perm.append(j)
                acc += cost[k, j]
                cols.remove(j)
                break
        else:  # pragma: no cover - rounding pathologies only
            r, c = linear_sum_assignment(cost)
            return tuple(int(v) for v in c[np.argsort(r)])
    return tuple(perm)


def match_components(estimated, truth) -> MatchReport:
    """Pair components to minimise the summed squared distance.

    The optimum is found with the Hungarian-type solver in scipy; among
    equally good pairings the lexicographically smallest permutation wins.
    """
    est = _as_matrix(estimated, "estimated")
    cost = sq_distance_matrix(est, truth)
    perm = _lexicographic_optimum(cost)
    sq = cost[np.arange(cost.shape[0]), list(perm)]
    dist = np.sqrt(sq)
    return MatchReport(
        permutation=perm,
        per_component_distance=dist,
        max_distance=float(dist.max()),
        total_sq_distance=float(sq.sum()),
        moment_residual=moment_residual(est),
    )


def is_success(estimated, truth, threshold: float = DEFAULT_SUCCESS_THRESHOLD) -> bool:
    """True when every matched component lies within ``threshold`` of its true mean."""
    if not threshold > 0:
        raise InvalidArgumentError(f"threshold must be positive, got {threshold}")
    return match_components(estimated, truth).max_distance <= threshold
