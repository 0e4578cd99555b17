"""Command-line entry point: ``filterstab <subcommand> [options]``.

Summaries go to stdout, diagnostics to stderr and data only to files under
the output directory. Exit codes: 0 success, 1 config or validation error,
2 runtime failure (including FAILED or REJECTED runs and failed criteria).
"""
import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigInvalid, FilterStabError, PartialFailure
from .filtering import likelihood_ratio, run_filter
from .harness import canned_experiments, load_config, run_experiment
from .models import PerStateChannel, Categorical, SignalKernel, simulate_path
from .seeding import derive_seed
from .stability import _jsonable, _prior_weights, check_conditions, mixing_constants, solve_g

PRECEDENCE = "Values given on the command line override the config file, which overrides built-in defaults."


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _nonneg_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {value}")
    return value


def _matrix(text):
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.strip().split(";") if row.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse matrix {text!r}; use rows like '0.7,0.3;0.3,0.7'")
    if not rows or len({len(r) for r in rows}) != 1:
        raise argparse.ArgumentTypeError(f"matrix {text!r} has ragged rows")
    return np.array(rows)


def _vector(text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse vector {text!r}; use '1,0'")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config (JSON)")
    common.add_argument("--seed", type=_nonneg_int, metavar="N", help="master seed override")
    common.add_argument("--trials", type=_positive_int, metavar="N", help="trial count override")
    common.add_argument("--nmax", type=_positive_int, metavar="N", help="horizon override")
    common.add_argument("--out", metavar="DIR", help="output directory override")
    common.add_argument("--workers", type=_positive_int, metavar="N",
                        help="worker threads (default: FILTERSTAB_WORKERS or 1)")
    common.add_argument("--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="filterstab", description="Filter stability experiments. " + PRECEDENCE)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="simulate signal/observation paths to CSV")
    p = sub.add_parser("filter", parents=[common], help="run both filters along one path")
    p.add_argument("--observations", metavar="PATH", help="CSV with a 'y' column starting at Y_0 = 0")
    sub.add_parser("stability", parents=[common], help="run the configured stability experiment")
    p = sub.add_parser("mixing", parents=[common], help="mixing constants of a finite kernel")
    p.add_argument("--matrix", type=_matrix, help="row-stochastic matrix, rows separated by ';'")
    sub.add_parser("conditions", parents=[common], help="check the predictor-stability hypotheses")
    p = sub.add_parser("solve-g", parents=[common], help="solve f(x) = sum_y g(y) gamma(x, y)")
    p.add_argument("--gamma", type=_matrix, default=np.array([[0.8, 0.2], [0.3, 0.7]]),
                   help="channel matrix gamma[x, y] (default '0.8,0.2;0.3,0.7')")
    p.add_argument("--f", type=_vector, default=np.array([1.0, 0.0]), help="f on the states (default '1,0')")
    p = sub.add_parser("reproduce", parents=[common], help="run every canned experiment and the acceptance table")
    p.add_argument("--dry-run", action="store_true", help="validate the canned configs without computing")
    return parser


def _config(args, required=True):
    if args.config is None:
        if required:
            raise ConfigInvalid("--config", "this subcommand needs a config file")
        return None
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, trials=args.trials, n_max=args.nmax, output_dir=args.out)


def _out_dir(args, cfg):
    out = Path(args.out or (cfg.output_dir if cfg is not None else "results"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _simulation_source(model):
    return model.source if model.grid is not None else model


def cmd_simulate(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    model = _simulation_source(cfg.model)
    path = out / "simulate.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "step", "x", "y"])
        for t in range(cfg.trials):
            x, y = simulate_path(model, cfg.n_max, derive_seed(cfg.seed, t))
            for n in range(cfg.n_max + 1):
                writer.writerow([t, n, repr(float(x[n])), repr(float(y[n]))])
    print(f"simulated {cfg.trials} paths of {cfg.n_max} steps -> {path}")
    return 0


def _read_observations(path):
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "y" not in reader.fieldnames:
                raise ConfigInvalid(str(path), "observation CSV needs a 'y' column")
            return np.array([float(row["y"]) for row in reader])
    except OSError as exc:
        raise ConfigInvalid(str(path), f"cannot read observations: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise ConfigInvalid(str(path), f"bad observation value: {exc}") from exc


def cmd_filter(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    model = cfg.model
    if args.observations:
        y = _read_observations(args.observations)
    else:
        _, y = simulate_path(_simulation_source(model), cfg.n_max, derive_seed(cfg.seed, 0))
    nu, nu_bar = _prior_weights(model, cfg.nu), _prior_weights(model, cfg.nu_bar)
    traj = run_filter(model, nu, y)
    traj_bar = run_filter(model, nu_bar, y)
    rho = likelihood_ratio(traj, traj_bar)
    traj.to_csv(out / "filter-true-prior.csv", rho)
    traj_bar.to_csv(out / "filter-filter-prior.csv", rho)
    tv = np.abs(traj.weights - traj_bar.weights).sum(axis=1)
    print(f"filtered {len(y) - 1} steps; final TV distance {tv[-1]:.3e}; log rho_n {rho.log_values[-1]:.6g}")
    print(f"wrote {out / 'filter-true-prior.csv'} and {out / 'filter-filter-prior.csv'}")
    return 0


def _print_manifest(manifest, out):
    for entry in manifest.outputs:
        print(f"{entry['metric']}: {entry['rows']} rows -> {out / entry['path']}")
    print(f"status {manifest.status}; {manifest.failures['count']} failed trials; "
          f"{manifest.wall_clock_seconds:.1f} s")


def cmd_stability(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    try:
        manifest = run_experiment(cfg, workers=args.workers, output_dir=out)
    except PartialFailure as exc:
        _print_manifest(exc.manifest, out)
        raise
    _print_manifest(manifest, out)
    if manifest.status == "REJECTED":
        print(f"rejected: {manifest.admissibility['message']}", file=sys.stderr)
        return 2
    return 0


def cmd_mixing(args):
    if args.matrix is not None:
        kernel = args.matrix
    else:
        cfg = _config(args)
        if cfg.model.grid is not None:
            raise ConfigInvalid("model.kind", "mixing constants are computed for finite kernels only")
        kernel = cfg.model.signal.matrix
    try:
        report = mixing_constants(SignalKernel.finite(kernel))
    except ValueError as exc:
        raise ConfigInvalid("--matrix", str(exc)) from exc
    circ = "undefined" if report.lambda_circ is None else f"{report.lambda_circ:g}"
    print(f"λ_*={report.lambda_star:g} λ^*={report.lambda_sup:g} λ∘={circ} rate={report.rate_star:.6f}")
    return 0


def cmd_conditions(args):
    cfg = _config(args)
    if cfg.g is None:
        raise ConfigInvalid("functions.g", "the condition check needs g")
    out = _out_dir(args, cfg)
    report = check_conditions(cfg.model, cfg.nu, cfg.nu_bar, cfg.g, horizon=cfg.n_max,
                              trials=cfg.trials, seed=cfg.seed)
    path = out / "conditions.json"
    path.write_text(json.dumps(_jsonable(report.to_dict()), indent=2, sort_keys=True) + "\n")
    print(f"(i) g bounded: {report.condition_i} (sup {report.g_bound:.6g})")
    print(f"(ii) bounded ratio + moment surrogate: {report.condition_ii} (ratio sup {report.ratio_sup:.6g})")
    print(f"(iii) ratio p-moment + moment surrogate: {report.condition_iii}")
    for note in report.notes:
        print(f"note: {note}")
    print(f"report -> {path}")
    return 0


def cmd_solve_g(args):
    gamma, f = args.gamma, args.f
    m, k = gamma.shape
    if len(f) != m:
        raise ConfigInvalid("--f", f"expected {m} values (one per row of gamma), got {len(f)}")
    letters = tuple(range(k))
    try:
        dists = tuple(Categorical(letters, tuple(row)) for row in gamma)
    except ValueError as exc:
        raise ConfigInvalid("--gamma", str(exc)) from exc
    states = np.arange(m)
    channel = PerStateChannel(states, dists)
    g, residual = solve_g(lambda x: f[int(x)], channel, states)
    values = ", ".join(f"{v:.6g}" for v in g.values)
    # residuals below 1e-12 are rounding, not a missing solution
    print(f"g = ({values}), residual {round(residual, 12):g}")
    return 0


def cmd_reproduce(args):
    from .acceptance import evaluate, run_canned

    experiments = canned_experiments()
    if args.dry_run:
        for exp in experiments:
            cfg = exp.config
            print(f"{exp.name}: valid ({', '.join(cfg.metrics)}; n_max {cfg.n_max}, {cfg.trials} trials, "
                  f"seed {cfg.seed})")
        return 0
    if any(v is not None for v in (args.seed, args.trials, args.nmax, args.config)):
        print("reproduce uses the pinned canned configs; --config/--seed/--trials/--nmax are ignored",
              file=sys.stderr)
    root = Path(args.out or "results")
    manifests = run_canned(root, args.workers)
    results = evaluate(root, manifests, args.workers)
    for r in results:
        print(r.line())
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed; outputs under {root}")
    return 0 if passed == len(results) else 2


COMMANDS = {
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "stability": cmd_stability,
    "mixing": cmd_mixing,
    "conditions": cmd_conditions,
    "solve-g": cmd_solve_g,
    "reproduce": cmd_reproduce,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"filterstab: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers is not None:
        os.environ["FILTERSTAB_WORKERS"] = str(args.workers)
    try:
        return COMMANDS[args.command](args)
    except ConfigInvalid as exc:
        print(f"filterstab: config error: {exc}", file=sys.stderr)
        return 1
    except PartialFailure as exc:
        print(f"filterstab: run FAILED: {exc}", file=sys.stderr)
        return 2
    except FilterStabError as exc:
        print(f"filterstab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
