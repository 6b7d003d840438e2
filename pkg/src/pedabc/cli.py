"""Command-line front end: ``pedabc <subcommand> ...``.

Exit codes: 0 success, 2 config or input error, 3 sampler stall,
4 I/O error, 5 sweep budget exceeded.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, bundled_config, load_config
from .data_ingest import (
    CountParseError,
    MissingCounterError,
    bundled_counts,
    counter_means,
    filter_counts,
    load_counts,
    synthesize_mock_counters,
    write_observed,
)
from .inference import EmptyPosteriorError, StallError, run_experiment
from .parallel import parallel_map_simulations
from .persistence import (
    PersistenceError,
    _table,
    _write_text,
    read_run,
    write_population,
    write_posterior_summary,
    write_run,
)
from .posterior import (
    posterior_table,
    prediction_intervals,
    regression_adjust,
    resimulate_mean,
)
from .summaries import get_distance

EXIT_OK, EXIT_CONFIG, EXIT_STALL, EXIT_IO, EXIT_BUDGET = 0, 2, 3, 4, 5

log = logging.getLogger("pedabc")


class BudgetExceeded(RuntimeError):
    pass


def _resolve_config(arg):
    p = Path(arg)
    if p.exists():
        return p
    try:
        return bundled_config(arg)
    except ConfigError:
        raise ConfigError("config %s not found (nor is it a bundled config name)" % arg) from None


def _load(args):
    cfg = load_config(_resolve_config(args.config), args.override)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    return cfg.replace(**changes) if changes else cfg


def _print_table(rows, header, out=None):
    out = out or sys.stdout
    widths = [max(len(str(h)), *(len(_fmt(r[k])) for r in rows)) if rows else len(str(h))
              for k, h in enumerate(header)]
    out.write("  ".join(str(h).ljust(w) for h, w in zip(header, widths)) + "\n")
    for r in rows:
        out.write("  ".join(_fmt(v).ljust(w) for v, w in zip(r, widths)) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.4g" % v
    return str(v)


# ---------------------------------------------------------------------------
# subcommands

def cmd_run(args):
    cfg = _load(args)
    run = run_experiment(cfg)
    out = write_run(run, args.out_dir, mass=cfg.predict_mass)
    ps = run.posterior()
    print("posterior (%d particles, %s)" % (len(ps), cfg.engine))
    _print_table(posterior_table(ps, cfg.predict_mass),
                 ("parameter", "mean", "variance", "ci_lo", "ci_hi"))
    print()
    diag = [(d["population"], d["epsilon"], d["acceptance_rate"], d["iterations"],
             d["mean_distance"], d["mean_attempts"]) for d in run.diagnostics]
    _print_table(diag, ("population", "epsilon", "acceptance", "simulations",
                        "mean_distance", "mean_attempts"))
    print("\nwritten to %s" % out)
    return EXIT_OK


def _grid_values(spec, name):
    spec = spec.strip()
    if spec.lower().startswith("linspace(") and spec.endswith(")"):
        parts = spec[len("linspace("):-1].split(",")
        if len(parts) != 3:
            raise ConfigError("grid.%s: linspace takes (start, stop, num)" % name)
        try:
            lo, hi, num = float(parts[0]), float(parts[1]), int(float(parts[2]))
        except ValueError:
            raise ConfigError("grid.%s: bad linspace %r" % (name, spec)) from None
        return np.linspace(lo, hi, num)
    try:
        return np.array([float(x) for x in spec.split(",") if x.strip()])
    except ValueError:
        raise ConfigError("grid.%s: expected numbers or linspace(a,b,n)" % name) from None


def cmd_sweep(args):
    cfg = _load(args)
    if not cfg.sweep_grid:
        raise ConfigError("[sweep] declares no grid.<parameter> entries")
    names = list(cfg.sweep_grid)
    grids = [_grid_values(cfg.sweep_grid[n], n) for n in names]
    n_points = math.prod(len(g) for g in grids)
    if n_points > cfg.sweep_budget:
        sizes = {len(g) for g in grids}
        form = ("%d^%d" % (sizes.pop(), len(grids))) if len(sizes) == 1 else \
            " x ".join(str(len(g)) for g in grids)
        raise BudgetExceeded("sweep needs N^P = %s = %.0e grid points, over the budget of %.0e; "
                             "brute force grows exponentially in the number of parameters"
                             % (form, n_points, cfg.sweep_budget))
    prior = cfg.prior()
    model = cfg.model()
    for n in names:
        if n not in prior.names:
            raise ConfigError("grid for unknown parameter %r" % n)
        if prior.blocks[prior.names.index(n)].simplex:
            raise ConfigError("grid for simplex parameter %r is not supported" % n)
    for b in prior.blocks:
        if b.name not in names:
            raise ConfigError("parameter %r has no grid" % b.name)
    distance = get_distance(cfg.distance)
    obs = np.asarray(cfg.observed)
    points = list(itertools.product(*grids))
    reps = cfg.sweep_replicates
    proposals = [(dict(zip(names, map(float, pt))), (cfg.seed, 4, i, r))
                 for i, pt in enumerate(points) for r in range(reps)]
    sims = np.vstack(parallel_map_simulations(model, proposals, cfg.workers))
    d = np.atleast_1d(distance(sims, obs)).reshape(len(points), reps).mean(axis=1)
    rows = [(*map(float, pt), float(dd)) for pt, dd in zip(points, d)]
    path = _write_text(Path(args.out_dir) / "sweep.csv",
                       _table((*names, "mean_distance"), rows))
    best = int(np.argmin(d))
    print("%d grid points x %d replicates; closest: %s (mean distance %.4g)"
          % (len(points), reps, dict(zip(names, map(float, points[best]))), d[best]))
    print("written to %s" % path)
    return EXIT_OK


def cmd_adjust(args):
    run = read_run(args.out_dir)
    cfg = run.config
    if args.workers is not None:
        cfg = cfg.replace(workers=args.workers)
    ps = run.posterior()
    adj = regression_adjust(ps, cfg.observed, regressor=cfg.adjust_regressor)
    out = Path(args.out_dir)
    write_posterior_summary(adj, out / "posterior_summary_adjusted.csv", cfg.predict_mass)
    final = run.final
    adjusted_pop = type(final)(adj.thetas, final.weights, final.distances, final.attempts,
                               final.summaries, final.epsilon, final.t)
    write_population(adjusted_pop, out / "adjusted", cfg.prior().columns,
                     cfg.model().summary_names)
    seed = cfg.seed if args.seed is None else args.seed
    before = resimulate_mean(cfg.model(), ps.mean_params(), cfg.predict_draws, seed, cfg.workers)
    after = resimulate_mean(cfg.model(), adj.mean_params(), cfg.predict_draws, seed, cfg.workers)
    names = cfg.model().summary_names
    rows = [(n, o, b, a, abs(a - o)) for n, o, b, a in zip(names, cfg.observed, before, after)]
    _write_text(out / "adjusted_counts.csv",
                _table(("summary", "observed", "simulated", "simulated_adjusted",
                        "abs_difference_adjusted"), rows))
    print("regression-adjusted posterior (%s regressor)" % cfg.adjust_regressor)
    _print_table(posterior_table(adj, cfg.predict_mass),
                 ("parameter", "mean", "variance", "ci_lo", "ci_hi"))
    print()
    _print_table(rows, ("summary", "observed", "simulated", "sim_adjusted", "abs_diff"))
    return EXIT_OK


def cmd_predict(args):
    run = read_run(args.out_dir)
    cfg = run.config
    workers = cfg.workers if args.workers is None else args.workers
    seed = cfg.seed if args.seed is None else args.seed
    ps = run.posterior()
    iv = prediction_intervals(ps, cfg.model(), cfg.predict_draws, cfg.predict_mass,
                              seed, workers)
    rows = []
    for (name, (lo, hi)), obs in zip(iv.items(), cfg.observed):
        rows.append((name, obs, lo, hi, "yes" if lo <= obs <= hi else "no"))
    _write_text(Path(args.out_dir) / "prediction_intervals.csv",
                _table(("summary", "observed", "lo", "hi", "covered"), rows))
    _print_table(rows, ("summary", "observed", "lo", "hi", "covered"))
    covered = all(r[-1] == "yes" for r in rows)
    print("\n%d%% prediction intervals %s all observed values"
          % (round(100 * cfg.predict_mass), "cover" if covered else "do NOT cover"))
    return EXIT_OK


def cmd_ingest(args):
    path = Path(args.counts) if args.counts else bundled_counts()
    records = load_counts(path)
    kept = filter_counts(records, weekdays_only=not args.all_days, hour=args.hour)
    means = counter_means(kept)
    desc = "%s, %s, %02d:00-%02d:00, %d of %d records" % (
        path.name, "all days" if args.all_days else "weekdays", args.hour,
        (args.hour + 1) % 24, len(kept), len(records))
    obs = synthesize_mock_counters(means, node1=args.node1, provenance=desc)
    write_observed(obs, args.out)
    _print_table([(k, v) for k, v in means.items()], ("counter", "mean"))
    print()
    _print_table([(k, v) for k, v in obs.values.items()], ("summary", "observed"))
    print("\nwritten to %s" % args.out)
    return EXIT_OK


def cmd_validate(args):
    cfg = _load(args)
    print("%s: ok (model %s, engine %s, %d parameters)"
          % (args.config, cfg.model_id, cfg.engine, len(cfg.priors)))
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="pedabc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version="pedabc " + __version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True, out_required=True):
        if config:
            sp.add_argument("--config", required=True,
                            help="config file or bundled name (gaussian, cbd, ...)")
            sp.add_argument("--override", action="append", default=[],
                            metavar="SECTION.KEY=VALUE")
        sp.add_argument("--out-dir", required=out_required)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)

    sp = sub.add_parser("run", help="run the configured sampler")
    common(sp)
    sp.set_defaults(func=cmd_run)
    sp = sub.add_parser("sweep", help="brute-force grid evaluation")
    common(sp)
    sp.set_defaults(func=cmd_sweep)
    sp = sub.add_parser("adjust", help="regression-adjust a finished run")
    common(sp, config=False)
    sp.set_defaults(func=cmd_adjust)
    sp = sub.add_parser("predict", help="prediction intervals for a finished run")
    common(sp, config=False)
    sp.set_defaults(func=cmd_predict)
    sp = sub.add_parser("ingest", help="build the observed summary from counter data")
    sp.add_argument("--counts", help="counter export (default: bundled 2018 data)")
    sp.add_argument("--out", required=True, help="observed-summary JSON to write")
    sp.add_argument("--hour", type=int, default=12)
    sp.add_argument("--all-days", action="store_true", help="keep weekends")
    sp.add_argument("--node1", type=float, default=380.0, help="mock count for node 1")
    sp.set_defaults(func=cmd_ingest)
    sp = sub.add_parser("validate-config", help="parse and check a config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")
    sp.set_defaults(func=cmd_validate, seed=None, workers=None)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CountParseError, MissingCounterError) as exc:
        print("error: %s" % (exc.args[0] if isinstance(exc, KeyError) else exc), file=sys.stderr)
        return EXIT_CONFIG
    except (StallError, EmptyPosteriorError) as exc:
        print("stalled: %s" % exc, file=sys.stderr)
        return EXIT_STALL
    except BudgetExceeded as exc:
        print("refused: %s" % exc, file=sys.stderr)
        return EXIT_BUDGET
    except (PersistenceError, OSError) as exc:
        print("i/o error: %s" % exc, file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
