"""Experiment configuration: the INI grammar, validation and canonical echo.

A config file has the sections ``experiment``, ``priors``, ``kernel``,
``schedule``, ``simulator`` and ``data``, plus optional ``sweep``,
``predict`` and ``adjust``.  Every key is checked against :data:`KEYS`;
unknown sections or keys are errors.  See ``docs/config.md`` for the list.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .distributions import parse_distribution
from .kernels import KernelSpec, parse_kernel
from .parameters import Prior
from .simulators import MODELS
from .summaries import DISTANCES

__all__ = [
    "ConfigError",
    "Schedule",
    "parse_schedule",
    "ExperimentConfig",
    "load_config",
    "parse_config_text",
    "config_to_text",
    "config_hash",
    "bundled_config",
    "BUNDLED_CONFIGS",
    "ENGINES",
    "KEYS",
]


class ConfigError(ValueError):
    pass


ENGINES = ("rejection", "rejection_top_quantile", "smc", "smc_aw")
BUNDLED_CONFIGS = ("gaussian.cfg", "gaussian_mean.cfg", "toy_fork.cfg", "cbd.cfg")


@dataclass(frozen=True)
class Schedule:
    """Epsilon schedule.

    ``kind`` is ``mean_fraction`` (f times the mean distance), ``quantile``
    (alpha-quantile) or ``fixed`` (explicit list, first entry is epsilon_1).
    ``basis`` selects the distances used by the adaptive rules: those of the
    accepted particles (``accepted``) or every simulation of the previous
    population including rejected ones (``all``).
    """

    kind: str = "mean_fraction"
    value: float = 0.75
    values: tuple = ()
    basis: str = "accepted"

    def __post_init__(self):
        if self.kind not in ("mean_fraction", "quantile", "fixed"):
            raise ConfigError("unknown schedule %r" % self.kind)
        if self.basis not in ("accepted", "all"):
            raise ConfigError("schedule basis must be 'accepted' or 'all'")
        if self.kind == "fixed":
            if not self.values:
                raise ConfigError("fixed schedule needs at least one value")
        elif not 0.0 < self.value < 1.0:
            raise ConfigError("schedule fraction must lie in (0, 1)")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __str__(self):
        if self.kind == "fixed":
            return "fixed(%s)" % ",".join(repr(v) for v in self.values)
        tail = ", all" if self.basis == "all" else ""
        return "%s(%r%s)" % (self.kind, self.value, tail)


_SCHEDULE_RE = re.compile(r"^\s*(mean_fraction|quantile|fixed)\s*\(([^)]*)\)\s*$", re.I)


def parse_schedule(text):
    """Parse ``mean_fraction(0.75)``, ``quantile(0.75, all)`` or ``fixed(1,0.5)``."""
    m = _SCHEDULE_RE.match(text)
    if not m:
        raise ConfigError("cannot parse schedule %r" % text)
    kind = m.group(1).lower()
    parts = [p.strip() for p in m.group(2).split(",") if p.strip()]
    try:
        if kind == "fixed":
            return Schedule("fixed", values=tuple(float(p) for p in parts))
        basis = "accepted"
        if len(parts) == 2:
            basis = parts[1].lower()
        elif len(parts) != 1:
            raise ConfigError("schedule %r takes one value and an optional basis" % text)
        return Schedule(kind, float(parts[0]), basis=basis)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class ExperimentConfig:
    """Everything needed to replay one experiment."""

    model_id: str
    priors: tuple
    observed: tuple
    engine: str = "smc"
    name: str = ""
    prior_labels: dict = field(default_factory=dict)
    model_options: dict = field(default_factory=dict)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    data_kernel: str = "auto"
    distance: str = "euclidean"
    summary: str = "mean"
    n_particles: int = 1000
    n_populations: int = 5
    n_total: int = 10000
    keep_fraction: float = 0.01
    epsilon0: float = 1.0
    schedule: Schedule = field(default_factory=Schedule)
    max_attempts: int = 10000
    seed: int = 0
    workers: int = 1
    counts_file: str = ""
    node1_constant: float = 380.0
    sweep_grid: dict = field(default_factory=dict)
    sweep_replicates: int = 1
    sweep_budget: int = 10 ** 6
    predict_draws: int = 1000
    predict_mass: float = 0.95
    adjust_regressor: str = "distance"

    def __post_init__(self):
        self.priors = tuple((str(n), str(s)) for n, s in self.priors)
        self.observed = tuple(float(x) for x in np.atleast_1d(self.observed))
        self.validate()

    def validate(self):
        if self.model_id not in MODELS:
            raise ConfigError("unknown model %r (known: %s)"
                              % (self.model_id, ", ".join(sorted(MODELS))))
        if self.engine not in ENGINES:
            raise ConfigError("unknown engine %r (known: %s)" % (self.engine, ", ".join(ENGINES)))
        if self.distance not in DISTANCES:
            raise ConfigError("unknown distance %r" % self.distance)
        if self.summary != "mean":
            raise ConfigError("unknown summary %r (only 'mean')" % self.summary)
        if not self.priors:
            raise ConfigError("no priors given")
        try:
            for _, spec in self.priors:
                parse_distribution(spec)
            self.prior()
            self.model()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        model = self.model()
        unknown = set(self.prior().names) - set(model.param_names)
        if unknown:
            raise ConfigError("priors for unknown parameters: %s" % ", ".join(sorted(unknown)))
        missing = [p for p in model.param_names
                   if p not in self.prior().names and not hasattr(model, p)]
        if missing:
            raise ConfigError("no prior for parameter(s) %s" % ", ".join(missing))
        if len(self.observed) != len(model.summary_names):
            raise ConfigError("observed summary has %d values, model %s produces %d"
                              % (len(self.observed), self.model_id, len(model.summary_names)))
        for key in ("n_particles", "n_populations", "n_total", "max_attempts",
                    "workers", "sweep_replicates", "sweep_budget", "predict_draws"):
            v = getattr(self, key)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError("%s must be a positive integer" % key)
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ConfigError("keep_fraction must lie in (0, 1]")
        if not self.epsilon0 > 0:
            raise ConfigError("epsilon0 must be positive")
        if not 0.0 < self.predict_mass < 1.0:
            raise ConfigError("predict mass must lie in (0, 1)")
        if self.adjust_regressor not in ("distance", "summaries"):
            raise ConfigError("adjust regressor must be 'distance' or 'summaries'")
        if self.data_kernel != "auto":
            vals = _floats(self.data_kernel, "data_kernel")
            if len(vals) not in (1, len(self.observed)) or min(vals) <= 0:
                raise ConfigError("data_kernel needs 1 or %d positive values" % len(self.observed))

    def prior(self):
        return Prior(self.priors, labels=self.prior_labels)

    def model(self):
        return MODELS[self.model_id](**self.model_options)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# INI grammar

KEYS = {
    "experiment": {"name", "engine", "n_particles", "n_populations", "n_total",
                   "keep_fraction", "max_attempts", "seed", "workers"},
    "kernel": {"perturbation", "data_kernel"},
    "schedule": {"epsilon0", "rule"},
    "simulator": {"model", "distance", "summary"},  # plus model options
    "data": {"observed", "observed_file", "counts_file", "node1_constant"},
    "sweep": {"replicates", "budget"},  # plus grid.<param>
    "predict": {"n_draws", "mass"},
    "adjust": {"regressor"},
    "priors": set(),  # <param> and <param>.labels
}
REQUIRED_SECTIONS = ("experiment", "priors", "simulator", "data")


def _floats(text, key):
    try:
        return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise ConfigError("%s: expected numbers, got %r" % (key, text)) from None


def _int(text, key):
    try:
        v = float(text)
    except ValueError:
        raise ConfigError("%s: expected an integer, got %r" % (key, text)) from None
    if v != int(v):
        raise ConfigError("%s: expected an integer, got %r" % (key, text))
    return int(v)


def _float(text, key):
    try:
        return float(text)
    except ValueError:
        raise ConfigError("%s: expected a number, got %r" % (key, text)) from None


def _model_option(model_id, key, text):
    fields = {f.name: f for f in dataclasses.fields(MODELS[model_id])}
    if key not in fields:
        raise ConfigError("[simulator] unknown key %r for model %s" % (key, model_id))
    default = fields[key].default
    if isinstance(default, tuple):
        return tuple(_floats(text, key))
    if isinstance(default, int):
        return _int(text, key)
    return _float(text, key)


def _read_observed_file(path, base_dir):
    p = Path(path)
    if not p.is_absolute() and base_dir is not None:
        p = Path(base_dir) / p
    try:
        doc = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError("cannot read observed file %s: %s" % (p, exc)) from None
    return doc["summary"]


def parse_config_text(text, overrides=(), base_dir=None):
    """Build an :class:`ExperimentConfig` from INI text.

    ``overrides`` are ``section.key=value`` strings applied after parsing.
    """
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("malformed config: %s" % exc) from None
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError("override must look like section.key=value, got %r" % item)
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key.strip(), value.strip())

    for section in cp.sections():
        if section not in KEYS:
            raise ConfigError("unknown section [%s]" % section)
    for section in REQUIRED_SECTIONS:
        if not cp.has_section(section):
            raise ConfigError("missing section [%s]" % section)

    kw = {}
    sim = dict(cp.items("simulator"))
    if "model" not in sim:
        raise ConfigError("[simulator] needs a model")
    model_id = sim.pop("model")
    if model_id not in MODELS:
        raise ConfigError("unknown model %r" % model_id)
    kw["model_id"] = model_id
    if "distance" in sim:
        kw["distance"] = sim.pop("distance")
    if "summary" in sim:
        kw["summary"] = sim.pop("summary")
    kw["model_options"] = {k: _model_option(model_id, k, v) for k, v in sim.items()}

    exp = dict(cp.items("experiment"))
    for key, value in exp.items():
        if key not in KEYS["experiment"]:
            raise ConfigError("[experiment] unknown key %r" % key)
        if key in ("name", "engine"):
            kw[key] = value
        elif key == "keep_fraction":
            kw[key] = _float(value, key)
        else:
            kw[key] = _int(value, key)

    priors, labels = [], {}
    for key, value in cp.items("priors"):
        if key.endswith(".labels"):
            labels[key[:-len(".labels")]] = tuple(v.strip() for v in value.split(","))
        elif "." in key:
            raise ConfigError("[priors] unknown key %r" % key)
        else:
            priors.append((key, value))
    for name in labels:
        if name not in dict(priors):
            raise ConfigError("[priors] labels for unknown parameter %r" % name)
    kw["priors"] = tuple(priors)
    kw["prior_labels"] = labels

    if cp.has_section("kernel"):
        for key, value in cp.items("kernel"):
            if key not in KEYS["kernel"]:
                raise ConfigError("[kernel] unknown key %r" % key)
            if key == "perturbation":
                try:
                    kw["kernel"] = parse_kernel(value)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None
            else:
                kw["data_kernel"] = value.strip()

    if cp.has_section("schedule"):
        for key, value in cp.items("schedule"):
            if key not in KEYS["schedule"]:
                raise ConfigError("[schedule] unknown key %r" % key)
            if key == "epsilon0":
                kw["epsilon0"] = math.inf if value.strip().lower() in ("inf", "infinity") \
                    else _float(value, key)
            else:
                kw["schedule"] = parse_schedule(value)

    data = dict(cp.items("data"))
    for key in data:
        if key not in KEYS["data"]:
            raise ConfigError("[data] unknown key %r" % key)
    model_cls = MODELS[model_id]
    if "observed" in data:
        kw["observed"] = tuple(_floats(data["observed"], "observed"))
    elif "observed_file" in data:
        summary = _read_observed_file(data["observed_file"], base_dir)
        try:
            kw["observed"] = tuple(float(summary[n]) for n in model_cls.summary_names)
        except KeyError as exc:
            raise ConfigError("observed file lacks counter %s" % exc) from None
    else:
        raise ConfigError("[data] needs observed or observed_file")
    if "counts_file" in data:
        kw["counts_file"] = data["counts_file"]
    if "node1_constant" in data:
        kw["node1_constant"] = _float(data["node1_constant"], "node1_constant")

    if cp.has_section("sweep"):
        grid = {}
        for key, value in cp.items("sweep"):
            if key.startswith("grid."):
                grid[key[len("grid."):]] = value.strip()
            elif key == "replicates":
                kw["sweep_replicates"] = _int(value, key)
            elif key == "budget":
                kw["sweep_budget"] = _int(value, key)
            else:
                raise ConfigError("[sweep] unknown key %r" % key)
        kw["sweep_grid"] = grid
    if cp.has_section("predict"):
        for key, value in cp.items("predict"):
            if key == "n_draws":
                kw["predict_draws"] = _int(value, key)
            elif key == "mass":
                kw["predict_mass"] = _float(value, key)
            else:
                raise ConfigError("[predict] unknown key %r" % key)
    if cp.has_section("adjust"):
        for key, value in cp.items("adjust"):
            if key != "regressor":
                raise ConfigError("[adjust] unknown key %r" % key)
            kw["adjust_regressor"] = value.strip()

    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, overrides=()):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc)) from None
    return parse_config_text(text, overrides, base_dir=path.parent)


def _fmt(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def config_to_text(cfg):
    """Canonical INI echo; parsing it gives back an equal config."""
    out = io.StringIO()
    sections = {
        "experiment": {"name": cfg.name, "engine": cfg.engine,
                       "n_particles": cfg.n_particles, "n_populations": cfg.n_populations,
                       "n_total": cfg.n_total, "keep_fraction": cfg.keep_fraction,
                       "max_attempts": cfg.max_attempts, "seed": cfg.seed,
                       "workers": cfg.workers},
        "priors": {},
        "kernel": {"perturbation": str(cfg.kernel), "data_kernel": cfg.data_kernel},
        "schedule": {"epsilon0": float(cfg.epsilon0), "rule": str(cfg.schedule)},
        "simulator": {"model": cfg.model_id, "distance": cfg.distance,
                      "summary": cfg.summary, **cfg.model_options},
        "data": {"observed": cfg.observed, "node1_constant": cfg.node1_constant},
        "sweep": {"replicates": cfg.sweep_replicates, "budget": cfg.sweep_budget,
                  **{"grid." + k: v for k, v in cfg.sweep_grid.items()}},
        "predict": {"n_draws": cfg.predict_draws, "mass": cfg.predict_mass},
        "adjust": {"regressor": cfg.adjust_regressor},
    }
    for name, spec in cfg.priors:
        sections["priors"][name] = spec
        if name in cfg.prior_labels:
            sections["priors"][name + ".labels"] = ",".join(cfg.prior_labels[name])
    if cfg.counts_file:
        sections["data"]["counts_file"] = cfg.counts_file
    for section, items in sections.items():
        out.write("[%s]\n" % section)
        for key, value in items.items():
            out.write("%s = %s\n" % (key, _fmt(value)))
        out.write("\n")
    return out.getvalue()


def config_hash(cfg_or_text):
    """SHA-256 of the canonical echo (or of the given text)."""
    text = cfg_or_text if isinstance(cfg_or_text, str) else config_to_text(cfg_or_text)
    return hashlib.sha256(text.encode("ascii")).hexdigest()


def bundled_config(name):
    """Path to one of the configs shipped with the package."""
    if not name.endswith(".cfg"):
        name += ".cfg"
    if name not in BUNDLED_CONFIGS:
        raise ConfigError("no bundled config %r (have: %s)" % (name, ", ".join(BUNDLED_CONFIGS)))
    return Path(str(resources.files("pedabc") / "data" / "configs" / name))
