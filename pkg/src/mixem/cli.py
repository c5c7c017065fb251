"""Command-line front end.

Subcommands: ``sample``, ``fit``, ``population-k2``, ``experiment``, ``verify``.

Every subcommand reads an optional JSON config (``--config``), applies the
explicit flags and then ``--set key=value`` overrides, and writes the
resulting effective config to ``<out>/config.json`` alongside its outputs, so
rerunning with ``--config <out>/config.json`` reproduces the run.

Exit codes: 0 ok, 1 usage, 2 validation, 3 numerical failure, 4 verification
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment as exp
from . import fitting, mixture, population, verify
from .errors import InvalidArgumentError, NumericalFailureError

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3, 4

log = logging.getLogger("mixem")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# defaults per subcommand; keys double as config-file keys and flag dests
DEFAULTS = {
    "sample": {
        "family": "gaussian", "k": None, "d": 1, "means": None, "scale": 1.0, "n": None, "seed": 0,
    },
    "fit": {
        "samples": None, "init": None, "k": None, "algorithm": "naive", "M": 0.0,
        "lambda_dist": "loguniform:0.01,1", "max_iters": 3000, "param_tol": 1e-8, "seed": 0, "center": False,
    },
    "population-k2": {
        "mu_star": None, "lambda0": None, "max_iters": 100, "tol": 1e-10, "allow_saddle": False,
        "abs_tol": 1e-10, "rel_tol": 1e-10, "tail_halfwidth": 40.0,
    },
    "experiment": {**exp.ExperimentSpec().to_dict(), "threads": 1, "trial_log": False},
    "verify": {"level": "fast"},
}

REQUIRED = {
    "sample": ("n",),
    "fit": ("samples",),
    "population-k2": ("mu_star", "lambda0"),
    "experiment": (),
    "verify": (),
}


def parse_means(text: str) -> list[list[float]]:
    """``"-1;1"`` -> ``[[-1], [1]]``; rows split on ``;``, coordinates on ``,``."""
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.split(";") if row.strip()]
    except ValueError as exc:
        raise InvalidArgumentError(f"cannot parse means {text!r}") from exc
    if not rows or len({len(r) for r in rows}) != 1:
        raise InvalidArgumentError(f"means {text!r} must be K rows of equal length")
    return rows


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def config_digest(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults <- config file <- explicit flags <- ``--set`` overrides."""
    cfg = dict(DEFAULTS[command])
    if args.config:
        path = Path(args.config)
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidArgumentError(f"cannot read config {path}: {exc}") from exc
        loaded.pop("config_digest", None)
        _merge(cfg, loaded, command, "config file")
    flags = {k: v for k, v in vars(args).items() if k in cfg and v is not None}
    cfg.update(flags)
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        overrides[key.strip().replace("-", "_")] = _parse_value(value)
    _merge(cfg, overrides, command, "--set")
    missing = [k for k in REQUIRED[command] if cfg.get(k) is None]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return cfg


def _merge(cfg: dict, new: dict, command: str, origin: str):
    unknown = sorted(set(new) - set(cfg))
    if unknown:
        raise InvalidArgumentError(f"{origin}: unknown key(s) for {command}: {unknown}")
    cfg.update(new)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _save_config(out: Path, cfg: dict) -> str:
    digest = config_digest(cfg)
    _write_json(out / "config.json", {**cfg, "config_digest": digest})
    return digest


# --- subcommands ---------------------------------------------------------------------


def cmd_sample(cfg: dict, out: Path) -> int:
    family = cfg["family"].lower()
    if cfg["means"] is not None:
        means = parse_means(cfg["means"]) if isinstance(cfg["means"], str) else cfg["means"]
    else:
        if cfg["k"] is None:
            raise UsageError("give --means or --k (means then drawn from N(0, 5I))")
        means = exp.generate_instance(int(cfg["k"]), int(cfg["d"]), int(cfg["seed"])).means
    model = mixture.MixtureModel(family, means, float(cfg["scale"]))
    if cfg["k"] is not None and model.K != int(cfg["k"]):
        raise InvalidArgumentError(f"--k {cfg['k']} disagrees with {model.K} means")
    if family == mixture.LAPLACIAN and model.d > 1:
        print(
            "warning: multivariate Laplacian is a product of independent per-coordinate Laplacians "
            "(experimental extension)",
            file=sys.stderr,
        )
    samples = mixture.sample(model, int(cfg["n"]), int(cfg["seed"]))
    digest = _save_config(out, cfg)
    _write_json(out / "model.json", {**model.to_dict(), "config_digest": digest})
    mixture.write_samples_csv(samples, out / "samples.csv")
    print(f"wrote {samples.n} samples to {out / 'samples.csv'}")
    return EXIT_OK


def cmd_fit(cfg: dict, out: Path) -> int:
    samples = mixture.read_samples_csv(cfg["samples"])
    shift = np.zeros(samples.d)
    if cfg["center"]:
        samples, shift = mixture.center_samples(samples)
    if cfg["init"] is not None:
        init = cfg["init"]
        if isinstance(init, str):
            p = Path(init)
            init = json.loads(p.read_text())["means"] if p.suffix == ".json" and p.exists() else parse_means(init)
        init = np.asarray(init, dtype=float) - shift
    else:
        if cfg["k"] is None:
            raise UsageError("give --init or --k (initial means then drawn from N(0, 5I))")
        init = exp.generate_initialization(int(cfg["k"]), samples.d, int(cfg["seed"]))
    schedule = None
    if cfg["algorithm"] == "stochastic":
        schedule = fitting.LambdaSchedule.parse(cfg["lambda_dist"])
    config = fitting.FitConfig(
        algorithm=cfg["algorithm"],
        M=float(cfg["M"]),
        schedule=schedule,
        max_iters=int(cfg["max_iters"]),
        param_tol=float(cfg["param_tol"]),
        seed=int(cfg["seed"]),
    )
    result = fitting.fit(init, samples, config)
    result.means = result.means + shift
    digest = _save_config(out, cfg)
    fitting.write_trace_csv(result, out / "trace.csv")
    meta = result.means_json(seed=int(cfg["seed"]))
    meta.update({"algorithm": config.label, "lambda_draws": result.lambda_draws, "config_digest": digest,
                 "degenerate_components": result.degenerate_components})
    _write_json(out / "means.json", meta)
    print(f"{config.label}: {result.iterations_used} iterations, converged={result.converged}")
    return EXIT_OK


def cmd_population_k2(cfg: dict, out: Path) -> int:
    mu_star, lambda0 = float(cfg["mu_star"]), float(cfg["lambda0"])
    if not cfg["allow_saddle"]:
        if mu_star == 0:
            raise InvalidArgumentError("mu_star = 0 is the degenerate single-component case; pass --allow-saddle")
        if lambda0 == 0:
            raise InvalidArgumentError(
                "lambda0 = 0 is a fixed point of the EM map (lambda in {mu*, -mu*, 0}); "
                "the iteration would never leave it. Pass --allow-saddle to run anyway"
            )
    settings = population.QuadratureSettings(
        abs_tol=float(cfg["abs_tol"]), rel_tol=float(cfg["rel_tol"]), tail_halfwidth=float(cfg["tail_halfwidth"])
    )
    traj = population.run_population_em(lambda0, mu_star, int(cfg["max_iters"]), float(cfg["tol"]), settings)
    digest = _save_config(out, cfg)
    lines = ["t,lambda,abs_err,ratio"]
    for t, (lam, err) in enumerate(zip(traj.iterates, traj.abs_errors())):
        ratio = mixture.format_float(traj.ratios[t - 1]) if t > 0 else ""
        lines.append(f"{t},{mixture.format_float(lam)},{mixture.format_float(err)},{ratio}")
    (out / "trajectory.csv").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    _write_json(out / "trajectory.json", {**traj.summary(), "config_digest": digest})
    print(f"lambda -> {traj.final!r} after {len(traj.iterates) - 1} steps, converged={traj.converged}")
    return EXIT_OK


def build_spec(cfg: dict) -> exp.ExperimentSpec:
    spec_keys = set(exp.ExperimentSpec.__dataclass_fields__)
    return exp.ExperimentSpec.from_dict({k: v for k, v in cfg.items() if k in spec_keys})


def cmd_experiment(cfg: dict, out: Path) -> int:
    spec = build_spec(cfg)
    _save_config(out, cfg)
    table = exp.run_experiment(spec, threads=int(cfg["threads"]))
    paths = exp.write_table(table, out, spec, trial_log=bool(cfg["trial_log"]))
    sys.stdout.write(table.to_csv())
    if table.truncated:
        print(f"interrupted: partial table written to {paths['table']}", file=sys.stderr)
        return 130
    return EXIT_OK


def cmd_verify(cfg: dict, out: Path | None = None) -> int:
    results = verify.run_suites(cfg["level"])
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail} ({r.seconds:.1f}s)")
    ok = all(r.passed for r in results)
    print("all suites passed" if ok else "verification FAILED")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {
    "sample": cmd_sample,
    "fit": cmd_fit,
    "population-k2": cmd_population_k2,
    "experiment": cmd_experiment,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mixem", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    parser.subparsers = sub.choices

    def common(p, with_out=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        if with_out:
            p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("sample", help="draw samples from a mixture")
    common(p)
    p.add_argument("--family", choices=mixture.FAMILIES, type=str.lower)
    p.add_argument("--k", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--means", help='component means, e.g. "-1;1" or "0,0;3,1"')
    p.add_argument("--scale", type=float)
    p.add_argument("--n", type=int, help="number of samples (required)")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("fit", help="run one EM variant on a sample CSV")
    common(p)
    p.add_argument("--samples", help="CSV with header x1,...,xd")
    p.add_argument("--init", help='initial means ("-1;1") or a JSON file with a "means" key')
    p.add_argument("--k", type=int, help="draw K initial means from N(0, 5I) when --init is absent")
    p.add_argument("--algorithm", choices=fitting.ALGORITHMS)
    p.add_argument("--M", type=float, dest="M")
    p.add_argument("--lambda-dist", dest="lambda_dist", help="loguniform:LO,HI | uniform:LO,HI | constant:V")
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--param-tol", dest="param_tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--center", action="store_const", const=True, default=None)

    p = sub.add_parser("population-k2", help="population EM for the symmetric 2-component Laplacian mixture")
    common(p)
    p.add_argument("--mu-star", dest="mu_star", type=float)
    p.add_argument("--lambda0", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--allow-saddle", dest="allow_saddle", action="store_const", const=True, default=None)
    p.add_argument("--abs-tol", dest="abs_tol", type=float)
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p.add_argument("--tail-halfwidth", dest="tail_halfwidth", type=float)

    p = sub.add_parser("experiment", help="random-restart success-rate study")
    common(p)
    p.add_argument("--threads", type=int)
    p.add_argument("--trial-log", dest="trial_log", action="store_const", const=True, default=None)

    p = sub.add_parser("verify", help="run the built-in invariant suites")
    p.add_argument("--config", help=argparse.SUPPRESS)
    p.add_argument("--set", action="append", help=argparse.SUPPRESS)
    p.add_argument("level", nargs="?", choices=("fast", "full"))
    return parser


_VALUE_FLAGS = ("--means", "--init", "--lambda-dist")


def _glue_negative_values(argv: list[str]) -> list[str]:
    # "--means -1;1" would otherwise be read as two options
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _VALUE_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(_glue_negative_values(argv))
    except SystemExit as exc:  # argparse errors and --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(name)s %(message)s"
    )
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = resolve_config(args.command, args)
        if args.command == "verify":
            return cmd_verify(cfg)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except UsageError as exc:
        parser.subparsers[args.command].print_usage(sys.stderr)
        print(f"mixem {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InvalidArgumentError, ValueError, TypeError, KeyError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
