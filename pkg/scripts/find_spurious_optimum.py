"""Scan (model seed, init seed) pairs for a naive-EM spurious local optimum.

K = 3, d = 1: looks for a run that converges (max step < 1e-8) to a point
whose average log-likelihood is at least ``--gap`` below that of the true
means and that fails the recovery criterion. Prints the first hits.
"""

import argparse

from mixem.experiment import generate_initialization, generate_instance
from mixem.fitting import FitConfig, fit
from mixem.metrics import is_success
from mixem.mixture import center_samples, log_likelihood, sample


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--models", type=int, default=20)
    ap.add_argument("--inits", type=int, default=20)
    ap.add_argument("--gap", type=float, default=0.01)
    ap.add_argument("--hits", type=int, default=5)
    args = ap.parse_args()

    hits = 0
    for model_seed in range(args.models):
        model = generate_instance(3, 1, model_seed)
        data, shift = center_samples(sample(model, args.n, model_seed + 10_000))
        truth_ll = log_likelihood(model.with_means(model.means - shift), data)
        for init_seed in range(args.inits):
            res = fit(generate_initialization(3, 1, init_seed), data, FitConfig("naive", max_iters=3000))
            gap = truth_ll - res.trace.loglik[-1]
            ok = is_success(res.means + shift, model.means)
            if res.converged and gap >= args.gap and not ok:
                print(f"model_seed={model_seed} init_seed={init_seed} iters={res.iterations_used} "
                      f"gap={gap:.4f} means={res.means.ravel() + shift} truth={model.means.ravel()}")
                hits += 1
                if hits >= args.hits:
                    return


if __name__ == "__main__":
    main()
