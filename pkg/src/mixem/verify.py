"""Built-in invariant checks run by ``mixem verify``.

Functions are looked up through their modules at call time so that a
patched (mutated) implementation is what gets checked.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from . import experiment, fitting, metrics, mixture, population


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _fd(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2 * h)


def check_fixed_points(points=(0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0, 4.0, -4.0)):
    worst = max(abs(population.em_map_quadrature(x, x) - x) for x in points)
    return worst <= 1e-8, f"max |M(x,x)-x| = {worst:.2e}"


def check_closed_form(pairs=None):
    if pairs is None:
        pairs = [(lam, lam + gap) for lam in (0.1, 0.5, 1.0, 2.0) for gap in (0.05, 0.5, 3.0)]
    worst = max(abs(population.em_map_closed(l, e) - population.em_map_quadrature(l, e)) for l, e in pairs)
    return worst <= 1e-8, f"max |closed - quadrature| = {worst:.2e}"


def check_dlambda(grid=(0.1, 0.5, 1.0, 2.0, 4.0)):
    worst = 0.0
    positive = True
    for lam, mu in itertools.product(grid, grid):
        if lam == mu:
            continue
        val = population.dM_dlambda_closed(lam, mu)
        fd = _fd(lambda t: population.em_map_quadrature(t, mu), lam)
        positive &= val > 0
        worst = max(worst, abs(val - fd) / abs(fd))
    return positive and worst <= 1e-4, f"max rel err vs finite differences {worst:.2e}, positive={positive}"


def check_deta(lams=(0.1, 0.5, 1.0, 2.0), gaps=(0.1, 1.0, 5.0)):
    worst = 0.0
    positive = True
    for lam in lams:
        for gap in gaps:
            eta = lam + gap
            val = population.dM_deta_closed(lam, eta)
            fd = _fd(lambda m: population.em_map_quadrature(lam, m), eta)
            positive &= val > 0
            worst = max(worst, abs(val - fd) / abs(fd))
    return positive and worst <= 1e-4, f"max rel err vs finite differences {worst:.2e}, positive={positive}"


def check_contraction(grid=(0.1, 0.3, 1.0, 2.0, 4.0), iters=60):
    worst_excess = -math.inf
    sign_ok = True
    for lam0, mu in itertools.product(grid, grid):
        traj = population.run_population_em(lam0, mu, max_iters=iters, tol=1e-9)
        if traj.ratios:
            worst_excess = max(worst_excess, max(traj.ratios) - traj.kappa)
        sign_ok &= all(v > 0 for v in traj.iterates)
    ok = worst_excess <= 1e-6 and sign_ok
    return ok, f"max(ratio - kappa) = {worst_excess:.3e}, signs preserved={sign_ok}"


def check_form_equivalence(n=6):
    grid = np.linspace(-3, 3, n)
    worst = max(
        abs(population.em_map_ratio_form(l, m) - population.em_map_quadrature(l, m))
        for l, m in itertools.product(grid, grid)
    )
    return worst <= 1e-7, f"max |ratio form - symmetric form| = {worst:.2e}"


def _instance(seed, K, d, n):
    model = experiment.generate_instance(K, d, seed)
    data, _ = mixture.center_samples(mixture.sample(model, n, seed + 1))
    return model, data


def check_em_ascent(n_instances=3, n=1000):
    worst = 0.0
    for i in range(n_instances):
        K, d = (2, 3, 5)[i % 3], (1, 3)[i % 2]
        _, data = _instance(100 + i, K, d, n)
        init = experiment.generate_initialization(K, d, 200 + i)
        for cfg in (fitting.FitConfig("naive", max_iters=100), fitting.FitConfig("regularized", M=0.1, max_iters=100)):
            res = fitting.fit(init, data, cfg)
            seq = np.array(res.trace.objective)
            if len(seq) > 1:
                worst = min(worst, float(np.min(np.diff(seq))))
    return worst >= -1e-9, f"largest objective decrease {-worst:.2e}"


def check_m0_reduction(n_instances=2):
    for i in range(n_instances):
        _, data = _instance(300 + i, 3, 2, 500)
        init = experiment.generate_initialization(3, 2, 400 + i)
        a = fitting.fit(init, data, fitting.FitConfig("naive", max_iters=50))
        b = fitting.fit(init, data, fitting.FitConfig("regularized", M=0.0, max_iters=50))
        if not np.array_equal(a.means, b.means):
            return False, f"instance {i}: M=0 differs from naive"
    return True, "identical"


def check_assignment(n_pairs=30, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n_pairs):
        K = int(rng.integers(1, 6))
        est, tru = rng.normal(size=(K, 2)), rng.normal(size=(K, 2))
        cost = metrics.sq_distance_matrix(est, tru)
        brute = min(sum(cost[k, p[k]] for k in range(K)) for p in itertools.permutations(range(K)))
        got = metrics.match_components(est, tru).total_sq_distance
        if abs(got - brute) > 1e-12 * max(1.0, brute):
            return False, f"K={K}: {got} vs brute force {brute}"
    return True, f"{n_pairs} pairs match brute force"


def check_sampling_determinism():
    model = mixture.MixtureModel("gaussian", [[-1.0], [1.0]])
    a = mixture.sample(model, 100, 7).data
    b = mixture.sample(model, 100, 7).data
    return bool(np.array_equal(a, b)), "same seed, same draws"


FAST = [
    ("fixed points", check_fixed_points),
    ("closed form M", check_closed_form),
    ("dM/dlambda closed form", lambda: check_dlambda(grid=(0.5, 1.0, 2.0))),
    ("dM/deta closed form", lambda: check_deta(lams=(0.5, 1.0), gaps=(0.1, 1.0))),
    ("symmetric vs ratio form", lambda: check_form_equivalence(n=3)),
    ("EM ascent", lambda: check_em_ascent(n_instances=2, n=500)),
    ("M=0 reduction", check_m0_reduction),
    ("assignment vs brute force", check_assignment),
    ("sampling determinism", check_sampling_determinism),
]

FULL = [
    ("fixed points", check_fixed_points),
    ("closed form M", check_closed_form),
    ("dM/dlambda closed form", check_dlambda),
    ("dM/deta closed form", check_deta),
    ("contraction grid", check_contraction),
    ("symmetric vs ratio form", lambda: check_form_equivalence(n=10)),
    ("EM ascent", check_em_ascent),
    ("M=0 reduction", check_m0_reduction),
    ("assignment vs brute force", lambda: check_assignment(n_pairs=200)),
    ("sampling determinism", check_sampling_determinism),
]


def run_suites(level: str = "fast") -> list[SuiteResult]:
    suites = FULL if level == "full" else FAST
    out = []
    for name, fn in suites:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(SuiteResult(name, bool(ok), detail, time.perf_counter() - t0))
    return out
