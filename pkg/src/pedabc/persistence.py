"""Run artifacts on disk.

Layout of an output directory::

    config.echo               canonical config text (hashed in meta.json)
    meta.json                 provenance and per-population diagnostics
    populations/pop_001.csv   one particle table per population
    posterior_summary.csv     mean, variance and credible interval per column
    plots/<kind>.csv          long-format tables for external plotting

Floats are written with 17 significant digits so tables round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from pathlib import Path

import numpy as np

from .config import config_hash, config_to_text, parse_config_text
from .kernels import Population
from .posterior import PosteriorSample, posterior_table

__all__ = [
    "PersistenceError",
    "PLOT_KINDS",
    "format_float",
    "write_population",
    "read_population",
    "write_metadata",
    "read_metadata",
    "write_posterior_summary",
    "emit_plot_data",
    "write_run",
    "read_run",
]

PLOT_KINDS = ("posterior_hist", "mean_trajectory", "variance_trajectory",
              "acceptance_epsilon", "distance_vs_param")
SUMMARY_PREFIX = "sum_"
_FIXED = ("particle_id", "weight", "distance", "sim_attempts")


class PersistenceError(OSError):
    pass


def format_float(x):
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _write_text(path, text):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise PersistenceError("cannot write %s: %s" % (path, exc.strerror or exc)) from exc
    return path


def _read_text(path):
    try:
        return Path(path).read_text(encoding="ascii")
    except OSError as exc:
        raise PersistenceError("cannot read %s: %s" % (path, exc.strerror or exc)) from exc


def _table(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v
                    for v in row])
    return buf.getvalue()


def population_filename(t):
    return "pop_%03d.csv" % int(t)


def write_population(pop, out_dir, columns, summary_names=()):
    """Write one particle table and return its path.

    ``columns`` names the parameter columns (scalar parameters, then one
    column per simplex component); ``summary_names`` adds the simulated
    summary of each particle as ``sum_<name>`` columns.
    """
    columns = tuple(columns)
    if len(columns) != pop.thetas.shape[1]:
        raise ValueError("%d column names for %d parameter columns"
                         % (len(columns), pop.thetas.shape[1]))
    header = ["particle_id", *columns, "weight", "distance", "sim_attempts"]
    header += [SUMMARY_PREFIX + n for n in summary_names]
    rows = []
    for i in range(len(pop)):
        row = [i, *map(float, pop.thetas[i]), float(pop.weights[i]),
               float(pop.distances[i]), int(pop.attempts[i])]
        if summary_names:
            row += list(map(float, pop.summaries[i]))
        rows.append(row)
    return _write_text(Path(out_dir) / population_filename(pop.t), _table(header, rows))


def read_population(path, epsilon=math.nan):
    """Read a particle table back into a :class:`Population`.

    Returns ``(population, columns, summary_names)``.
    """
    text = _read_text(path)
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    rows = [r for r in reader if r]
    for name in _FIXED:
        if name not in header:
            raise PersistenceError("%s: missing column %r" % (path, name))
    sum_cols = [h for h in header if h.startswith(SUMMARY_PREFIX)]
    par_cols = [h for h in header if h not in _FIXED and h not in sum_cols]
    idx = {h: k for k, h in enumerate(header)}
    data = np.array([[float(x) for x in r] for r in rows]) if rows else np.empty((0, len(header)))
    order = np.argsort(data[:, idx["particle_id"]], kind="stable") if rows else []
    data = data[order]
    m = re.search(r"pop_(\d+)", Path(path).name)
    t = int(m.group(1)) if m else 1
    pop = Population(
        thetas=data[:, [idx[c] for c in par_cols]].reshape(len(data), len(par_cols)),
        weights=data[:, idx["weight"]],
        distances=data[:, idx["distance"]],
        attempts=data[:, idx["sim_attempts"]].astype(np.int64),
        summaries=data[:, [idx[c] for c in sum_cols]].reshape(len(data), len(sum_cols)),
        epsilon=epsilon,
        t=t,
    )
    return pop, tuple(par_cols), tuple(c[len(SUMMARY_PREFIX):] for c in sum_cols)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


def write_metadata(run, out_dir, echo_text=None):
    """Write ``meta.json`` with provenance and per-population diagnostics."""
    cfg = run.config
    echo_text = echo_text if echo_text is not None else (config_to_text(cfg) if cfg else "")
    model = cfg.model() if cfg is not None else None
    doc = {
        "engine_version": run.provenance.get("version", ""),
        "engine": run.provenance.get("engine", cfg.engine if cfg else ""),
        "seed": run.provenance.get("seed", cfg.seed if cfg else None),
        "config_hash": config_hash(echo_text) if echo_text else "",
        "config_file": "config.echo",
        "n_populations": len(run.populations),
        "epsilons": [p.epsilon for p in run.populations],
        "total_simulations": int(sum(p.diagnostics.get("iterations", 0)
                                     for p in run.populations)),
        "summary_names": list(model.summary_names) if model else [],
        "diagnostics": [p.diagnostics for p in run.populations],
    }
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=False) + "\n"
    return _write_text(Path(out_dir) / "meta.json", text)


def read_metadata(out_dir):
    return json.loads(_read_text(Path(out_dir) / "meta.json"))


def write_posterior_summary(ps, path, mass=0.95):
    rows = posterior_table(ps, mass)
    return _write_text(path, _table(("parameter", "mean", "variance", "ci_lo", "ci_hi"), rows))


def _plot_rows(run, kind):
    prior = run.config.prior()
    cols = prior.columns
    if kind == "posterior_hist":
        pop = run.final
        header = ("population", "parameter", "value", "weight")
        rows = [(pop.t, c, float(pop.thetas[i, j]), float(pop.weights[i]))
                for j, c in enumerate(cols) for i in range(len(pop))]
    elif kind in ("mean_trajectory", "variance_trajectory"):
        header = ("population", "parameter", "mean" if kind == "mean_trajectory" else "variance")
        rows = []
        for pop in run.populations:
            mu = pop.weights @ pop.thetas
            var = pop.weights @ (pop.thetas - mu) ** 2
            vals = mu if kind == "mean_trajectory" else var
            rows += [(pop.t, c, float(vals[j])) for j, c in enumerate(cols)]
    elif kind == "acceptance_epsilon":
        header = ("population", "epsilon", "acceptance_rate", "iterations",
                  "mean_distance", "mean_attempts")
        rows = [(p.t, float(p.epsilon), float(p.diagnostics["acceptance_rate"]),
                 int(p.diagnostics["iterations"]), float(p.diagnostics["mean_distance"]),
                 float(p.diagnostics["mean_attempts"])) for p in run.populations]
    elif kind == "distance_vs_param":
        pop = run.final
        header = ("population", "particle_id", "parameter", "value", "distance")
        rows = [(pop.t, i, c, float(pop.thetas[i, j]), float(pop.distances[i]))
                for i in range(len(pop)) for j, c in enumerate(cols)]
    else:
        raise ValueError("unknown plot kind %r (known: %s)" % (kind, ", ".join(PLOT_KINDS)))
    return header, rows


def emit_plot_data(run, kind, out_dir):
    """Write ``plots/<kind>.csv`` in long format and return its path."""
    header, rows = _plot_rows(run, kind)
    return _write_text(Path(out_dir) / "plots" / ("%s.csv" % kind), _table(header, rows))


def write_run(run, out_dir, mass=0.95, plots=PLOT_KINDS):
    """Write the full artifact for ``run``; returns the output directory."""
    out = Path(out_dir)
    echo = config_to_text(run.config)
    _write_text(out / "config.echo", echo)
    model = run.config.model()
    cols = run.config.prior().columns
    for pop in run.populations:
        write_population(pop, out / "populations", cols, model.summary_names)
    write_metadata(run, out, echo)
    if run.populations:
        write_posterior_summary(run.posterior(), out / "posterior_summary.csv", mass)
        for kind in plots:
            emit_plot_data(run, kind, out)
    return out


def read_run(out_dir):
    """Load a run artifact back into a :class:`RunRecord`."""
    from .inference import RunRecord

    out = Path(out_dir)
    echo = _read_text(out / "config.echo")
    meta = read_metadata(out)
    if meta.get("config_hash") and config_hash(echo) != meta["config_hash"]:
        raise PersistenceError("%s: config.echo does not match the stored hash" % out)
    cfg = parse_config_text(echo)
    pops = []
    for k, diag in enumerate(meta["diagnostics"]):
        eps = float(meta["epsilons"][k])
        pop, _, _ = read_population(out / "populations" / population_filename(k + 1), eps)
        pop.diagnostics = diag
        pops.append(pop)
    prov = {"config_hash": meta.get("config_hash"), "seed": meta.get("seed"),
            "engine": meta.get("engine"), "version": meta.get("engine_version")}
    return RunRecord(pops, cfg, prov)


def read_posterior(out_dir):
    """Final-population :class:`PosteriorSample` of a stored run."""
    run = read_run(out_dir)
    return PosteriorSample.from_population(run.final, run.config.prior(), run=run)
