"""ABC engines: rejection, top-quantile rejection, ABC-SMC and ABC-SMC with
data-based (adaptive) resampling weights, plus the synthetic likelihood.

Randomness is keyed rather than streamed.  Proposals for population ``t``
are drawn in rounds; round ``r`` uses the generator keyed
``(seed, PROPOSE, t, r)`` and the simulation for slot ``i`` in that round
uses ``(seed, SIMULATE, t, r, i)``.  A slot that is rejected simply takes
part in the next round.  Because no key depends on scheduling, the output is
identical for any number of workers.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import __version__
from .config import ExperimentConfig, Schedule, config_hash, parse_schedule
from .kernels import (
    Population,
    adaptive_data_weights,
    log_smc_weights,
    normalize_log_weights,
    parse_kernel,
    perturb_many,
    population_scale,
)
from .parallel import parallel_map_simulations
from .simulators import make_model, rng_from_key
from .summaries import get_distance
from .validation import check_positive_int, check_summary

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "StallError",
    "ScheduleStallError",
    "EmptyPosteriorError",
    "DegenerateCovarianceError",
    "abc_rejection",
    "abc_rejection_top_quantile",
    "abc_smc",
    "abc_smc_adaptive",
    "run_experiment",
    "next_epsilon",
    "synthetic_log_likelihood",
    "bsl_log_likelihood",
    "parallel_map_simulations",
    "RejectionABC",
    "TopQuantileRejectionABC",
    "ABCSMC",
]

logger = logging.getLogger(__name__)

PROPOSE, SIMULATE = 0, 1
SPOT_CHECK_SIZE = 10
SPOT_CHECK_RTOL = 1e-10


class StallError(RuntimeError):
    """A population could not be completed (or the schedule stopped decreasing)."""

    def __init__(self, message, population=None, epsilon=None):
        super().__init__(message)
        self.population = population
        self.epsilon = epsilon


class ScheduleStallError(StallError):
    pass


class EmptyPosteriorError(RuntimeError):
    pass


class DegenerateCovarianceError(ArithmeticError):
    pass


@dataclass
class RunRecord:
    """Populations of one run plus per-population diagnostics and provenance."""

    populations: list
    config: ExperimentConfig = None
    provenance: dict = field(default_factory=dict)

    @property
    def diagnostics(self):
        return [p.diagnostics for p in self.populations]

    @property
    def epsilons(self):
        return [p.epsilon for p in self.populations]

    @property
    def final(self):
        return self.populations[-1]

    @property
    def total_simulations(self):
        return int(sum(d["iterations"] for d in self.diagnostics))

    def posterior(self):
        from .posterior import PosteriorSample
        return PosteriorSample.from_population(self.final, self.config.prior(), run=self)


# ---------------------------------------------------------------------------
# epsilon schedules

def next_epsilon(prev_distances, schedule, previous=math.inf, index=None):
    """Threshold for the next population.

    Parameters
    ----------
    prev_distances : array_like
        Distances from the previous population.
    schedule : Schedule or str
    previous : float
        Previous threshold; the result must lie strictly below it.
    index : int, optional
        Position in a fixed schedule (0 is epsilon_1).
    """
    if isinstance(schedule, str):
        schedule = parse_schedule(schedule)
    d = np.asarray(prev_distances, dtype=float)
    if schedule.kind == "fixed":
        if index is None or index >= len(schedule.values):
            raise ScheduleStallError("fixed schedule has no entry %s" % index)
        eps = schedule.values[index]
    else:
        if d.size == 0:
            raise ValueError("no distances to build the next epsilon from")
        d = d[np.isfinite(d)]
        if d.size == 0:
            raise ScheduleStallError("all previous distances are infinite")
        if schedule.kind == "mean_fraction":
            eps = schedule.value * float(d.mean())
        else:
            eps = float(np.quantile(d, schedule.value))
    if not eps < previous:
        raise ScheduleStallError("epsilon schedule stalled: %g is not below %g"
                                 % (eps, previous), epsilon=eps)
    return eps


# ---------------------------------------------------------------------------
# engine internals

class _Problem:
    def __init__(self, cfg):
        self.cfg = cfg
        self.prior = cfg.prior()
        self.model = make_model(cfg.model_id, **cfg.model_options)
        self.observed = check_summary(cfg.observed, len(self.model.summary_names))
        self.distance = get_distance(cfg.distance)

    def simulate(self, thetas, keys):
        params = [self.prior.as_dict(th) for th in thetas]
        sims = parallel_map_simulations(self.model, list(zip(params, keys)),
                                        self.cfg.workers)
        if not sims:
            return np.empty((0, self.observed.size)), np.empty(0)
        s = np.vstack(sims)
        return s, np.atleast_1d(self.distance(s, self.observed))


def _sim_keys(seed, t, r, slots):
    return [(seed, SIMULATE, t, r, int(i)) for i in slots]


def _fill_population(problem, t, epsilon, propose):
    """Repeat-until-accept for every slot, in keyed rounds.

    ``propose(rng, k)`` returns ``k`` candidate parameter vectors.
    Returns accepted thetas, summaries, distances, attempts and the
    distances of every simulation run.
    """
    cfg = problem.cfg
    n = cfg.n_particles
    thetas = np.empty((n, problem.prior.size))
    summaries = np.empty((n, problem.observed.size))
    distances = np.empty(n)
    attempts = np.zeros(n, dtype=np.int64)
    pending = np.arange(n)
    all_d = []
    n_sims = 0
    r = 0
    while pending.size:
        rng = rng_from_key((cfg.seed, PROPOSE, t, r))
        cand = propose(rng, pending.size)
        attempts[pending] += 1
        inside = np.isfinite(problem.prior.log_density(cand))
        idx = np.flatnonzero(inside)
        s, d = problem.simulate(cand[idx], _sim_keys(cfg.seed, t, r, pending[idx]))
        n_sims += idx.size
        all_d.append(d)
        ok = d < epsilon
        acc = idx[ok]
        slots = pending[acc]
        thetas[slots] = cand[acc]
        summaries[slots] = s[ok]
        distances[slots] = d[ok]
        keep = np.ones(pending.size, dtype=bool)
        keep[acc] = False
        pending = pending[keep]
        if pending.size and attempts[pending].max() >= cfg.max_attempts:
            raise StallError("population %d stalled at epsilon %g: %d particle(s) "
                             "unaccepted after %d attempts"
                             % (t, epsilon, pending.size, cfg.max_attempts),
                             population=t, epsilon=epsilon)
        r += 1
    return thetas, summaries, distances, attempts, np.concatenate(all_d), n_sims


def _brute_force_weight(theta, prior, prev_thetas, probs, kernel, scales):
    """Weight by direct summation in linear space; checks the log-space path."""
    x = prior.to_free(theta)
    olds = prior.to_free(prev_thetas)
    if kernel.kind == "component_gaussian":
        sd = [math.sqrt(v) for v in scales]
        total = 0.0
        for j in range(len(olds)):
            k = 1.0
            for c in range(len(x)):
                z = (x[c] - olds[j][c]) / sd[c]
                k *= math.exp(-0.5 * z * z) / (sd[c] * math.sqrt(2 * math.pi))
            total += probs[j] * k
    else:
        cov = np.asarray(scales)
        inv = np.linalg.inv(cov)
        norm = math.sqrt((2 * math.pi) ** len(x) * np.linalg.det(cov))
        total = 0.0
        for j in range(len(olds)):
            dlt = x - olds[j]
            total += probs[j] * math.exp(-0.5 * float(dlt @ inv @ dlt)) / norm
    if total == 0.0:
        return None
    return math.exp(float(prior.log_density(theta))) / total


def _diagnostics(t, eps, distances, attempts, n_sims, start, **extra):
    n = len(distances)
    out = {
        "population": t,
        "epsilon": float(eps),
        "acceptance_rate": n / n_sims if n_sims else 0.0,
        "iterations": int(n_sims),
        "mean_distance": float(np.mean(distances)),
        "mean_attempts": float(np.mean(attempts)),
        "wall_ms": 1000.0 * (time.perf_counter() - start),
    }
    out.update(extra)
    return out


def _data_kernel_scale(cfg, prev):
    """Per-summary sd of the data kernel used for adaptive weights.

    ``auto`` uses sqrt(2) times the weighted sd of the previous population's
    simulated summaries (floored at 1e-8)."""
    if cfg.data_kernel != "auto":
        vals = [float(v) for v in cfg.data_kernel.split(",")]
        return np.broadcast_to(np.asarray(vals), (prev.summaries.shape[1],)).copy()
    w = prev.weights
    mu = w @ prev.summaries
    var = w @ (prev.summaries - mu) ** 2
    return np.sqrt(np.maximum(2.0 * var, 1e-8))


def _provenance(cfg):
    return {"config_hash": config_hash(cfg), "seed": int(cfg.seed),
            "engine": cfg.engine, "version": __version__}


# ---------------------------------------------------------------------------
# engines

def _rejection_draws(problem):
    cfg = problem.cfg
    rng = rng_from_key((cfg.seed, PROPOSE, 1, 0))
    thetas = problem.prior.sample(rng, cfg.n_total)
    s, d = problem.simulate(thetas, _sim_keys(cfg.seed, 1, 0, range(cfg.n_total)))
    return thetas, s, d


def abc_rejection(cfg, epsilon=None):
    """Plain rejection ABC: keep prior draws whose distance is below epsilon.

    Draws ``cfg.n_total`` parameters, simulates each once and keeps those with
    distance strictly below ``epsilon`` (default ``cfg.epsilon0``).
    """
    start = time.perf_counter()
    problem = _Problem(cfg)
    eps = cfg.epsilon0 if epsilon is None else float(epsilon)
    thetas, s, d = _rejection_draws(problem)
    keep = d < eps
    if not keep.any():
        raise EmptyPosteriorError("no simulation fell within epsilon %g of the "
                                  "observed data; raise epsilon or n_total" % eps)
    n = int(keep.sum())
    pop = Population(thetas[keep], np.full(n, 1.0 / n), d[keep], np.ones(n),
                     s[keep], eps, 1)
    pop.diagnostics = _diagnostics(1, eps, d[keep], np.ones(n), cfg.n_total, start)
    return pop


def abc_rejection_top_quantile(cfg, keep_fraction=None):
    """Rejection keeping the closest ``ceil(keep_fraction * n_total)`` draws.

    Ties are broken by draw order (stable sort).  The population epsilon is
    the largest kept distance.
    """
    start = time.perf_counter()
    f = cfg.keep_fraction if keep_fraction is None else float(keep_fraction)
    if not 0.0 < f <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    problem = _Problem(cfg)
    thetas, s, d = _rejection_draws(problem)
    k = max(1, math.ceil(round(f * cfg.n_total, 9)))
    order = np.argsort(d, kind="stable")[:k]
    order.sort()
    eps = float(d[order].max())
    pop = Population(thetas[order], np.full(k, 1.0 / k), d[order], np.ones(k),
                     s[order], eps, 1)
    pop.diagnostics = _diagnostics(1, eps, d[order], np.ones(k), cfg.n_total, start,
                                   keep_fraction=f)
    return pop


def _smc(cfg, adaptive):
    problem = _Problem(cfg)
    prior, kernel = problem.prior, cfg.kernel
    populations = []
    eps = cfg.epsilon0
    prev, prev_all = None, None
    for t in range(1, cfg.n_populations + 1):
        start = time.perf_counter()
        extra = {}
        if prev is None:
            def propose(rng, k):
                return prior.sample(rng, k)
        else:
            eps = next_epsilon(prev_all if cfg.schedule.basis == "all" else prev.distances,
                               cfg.schedule, prev.epsilon, index=t - 1)
            scales = population_scale(prev, kernel, prior)
            probs = prev.weights
            if adaptive:
                h = _data_kernel_scale(cfg, prev)
                probs = adaptive_data_weights(prev, problem.observed, h)
                extra["data_kernel_scale"] = [float(x) for x in h]

            def propose(rng, k, probs=probs, scales=scales):
                idx = rng.choice(len(probs), size=k, p=probs)
                return perturb_many(prev.thetas[idx], kernel, scales, rng, prior)
        if cfg.schedule.kind == "fixed" and t == 1:
            eps = cfg.schedule.values[0] if cfg.schedule.values else eps
        thetas, s, d, att, all_d, n_sims = _fill_population(problem, t, eps, propose)
        if prev is None:
            w = np.full(cfg.n_particles, 1.0 / cfg.n_particles)
        else:
            lw = log_smc_weights(thetas, prior, prev.thetas, probs, kernel, scales)
            w = normalize_log_weights(lw)
            extra["spot_check_rel_err"] = _spot_check(thetas, lw, prior, prev.thetas,
                                                      probs, kernel, scales, t)
        pop = Population(thetas, w, d, att, s, eps, t)
        pop.diagnostics = _diagnostics(t, eps, d, att, n_sims, start,
                                       ess=float(1.0 / np.sum(w ** 2)), **extra)
        logger.info("population %d: epsilon %.6g, acceptance %.4f, %d simulations",
                    t, eps, pop.diagnostics["acceptance_rate"], n_sims)
        populations.append(pop)
        prev, prev_all = pop, all_d
    return RunRecord(populations, cfg, _provenance(cfg))


def _spot_check(thetas, log_w, prior, prev_thetas, probs, kernel, scales, t):
    worst = 0.0
    for i in range(min(SPOT_CHECK_SIZE, len(thetas))):
        ref = _brute_force_weight(thetas[i], prior, prev_thetas, probs, kernel, scales)
        if ref is None or ref == 0.0:
            continue
        err = abs(math.exp(log_w[i]) - ref) / ref
        worst = max(worst, err)
    if worst > SPOT_CHECK_RTOL:
        logger.warning("population %d: weight spot-check relative error %.3g", t, worst)
    return worst


def abc_smc(cfg):
    """ABC-SMC with parameter-weight resampling."""
    return _smc(cfg, adaptive=False)


def abc_smc_adaptive(cfg):
    """ABC-SMC resampling with data-based weights ``v ~ w K_x(x_obs | x)``."""
    return _smc(cfg, adaptive=True)


def run_experiment(cfg):
    """Dispatch on ``cfg.engine``; always returns a :class:`RunRecord`."""
    if cfg.engine in ("smc", "smc_aw"):
        return _smc(cfg, adaptive=cfg.engine == "smc_aw")
    if cfg.engine == "rejection":
        pop = abc_rejection(cfg)
    else:
        pop = abc_rejection_top_quantile(cfg)
    return RunRecord([pop], cfg, _provenance(cfg))


# ---------------------------------------------------------------------------
# synthetic likelihood

def synthetic_log_likelihood(summaries, observed):
    """``log N(observed; mean, cov)`` with the sample mean and (n-1) covariance."""
    s = np.asarray(summaries, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    n, d = s.shape
    if n < 2:
        raise ValueError("need at least 2 simulated summaries")
    obs = np.atleast_1d(np.asarray(observed, dtype=float))
    mu = s.mean(axis=0)
    cov = np.atleast_2d(np.cov(s, rowvar=False, ddof=1))
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise DegenerateCovarianceError("synthetic-likelihood covariance is singular") from None
    z = np.linalg.solve(chol, obs - mu)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return float(-0.5 * (z @ z) - 0.5 * (logdet + d * math.log(2 * math.pi)))


def bsl_log_likelihood(theta, n, model_id, observed_summary, seed, model_options=None):
    """Synthetic log-likelihood at ``theta`` from ``n`` simulations.

    ``theta`` maps parameter names to values.
    """
    n = check_positive_int(n, "n", minimum=2)
    model = make_model(model_id, **(model_options or {}))
    sims = [model.simulate(theta, (int(seed), SIMULATE, 0, 0, i)) for i in range(n)]
    return synthetic_log_likelihood(np.vstack(sims), observed_summary)


# ---------------------------------------------------------------------------
# estimator interface

class _ABCEstimator(BaseEstimator):
    _engine = None

    def _config(self, observed):
        kw = dict(
            model_id=self.model, priors=tuple(self.priors), observed=observed,
            engine=self._engine_name(), prior_labels=dict(self.prior_labels or {}),
            model_options=dict(self.model_options or {}), distance=self.distance,
            seed=self.seed, workers=self.workers,
        )
        kw.update(self._engine_kwargs())
        return ExperimentConfig(**kw)

    def _engine_name(self):
        return self._engine

    def fit(self, X, y=None):
        """Run the sampler against the observed summary ``X``."""
        observed = check_summary(np.ravel(np.asarray(X, dtype=float)))
        self.config_ = self._config(observed)
        self.run_ = run_experiment(self.config_)
        self.population_ = self.run_.final
        self.posterior_ = self.run_.posterior()
        return self

    def posterior_mean(self):
        return self.posterior_.mean()

    def sample(self, n, seed=None):
        """Draw ``n`` parameter vectors from the fitted posterior by weight."""
        rng = np.random.default_rng(seed)
        pop = self.population_
        idx = rng.choice(len(pop), size=n, p=pop.weights)
        return pop.thetas[idx]


class RejectionABC(_ABCEstimator):
    """Rejection ABC with a fixed threshold.

    Parameters
    ----------
    model : str
        Registered simulator id.
    priors : sequence of (name, distribution text)
    epsilon : float
    n_total : int
        Number of prior draws.
    """

    _engine = "rejection"

    def __init__(self, model="gaussian", priors=(), epsilon=1.0, n_total=10000,
                 distance="euclidean", model_options=None, prior_labels=None,
                 seed=0, workers=1):
        self.model = model
        self.priors = priors
        self.epsilon = epsilon
        self.n_total = n_total
        self.distance = distance
        self.model_options = model_options
        self.prior_labels = prior_labels
        self.seed = seed
        self.workers = workers

    def _engine_kwargs(self):
        return {"epsilon0": self.epsilon, "n_total": self.n_total}


class TopQuantileRejectionABC(_ABCEstimator):
    """Rejection ABC keeping the closest ``keep_fraction`` of ``n_total`` draws."""

    _engine = "rejection_top_quantile"

    def __init__(self, model="fork", priors=(), keep_fraction=0.01, n_total=10000,
                 distance="euclidean", model_options=None, prior_labels=None,
                 seed=0, workers=1):
        self.model = model
        self.priors = priors
        self.keep_fraction = keep_fraction
        self.n_total = n_total
        self.distance = distance
        self.model_options = model_options
        self.prior_labels = prior_labels
        self.seed = seed
        self.workers = workers

    def _engine_kwargs(self):
        return {"keep_fraction": self.keep_fraction, "n_total": self.n_total}


class ABCSMC(_ABCEstimator):
    """ABC-SMC sampler.

    Parameters
    ----------
    n_particles, n_populations : int
    epsilon0 : float
        Threshold of the first population.
    schedule : str
        ``mean_fraction(f)``, ``quantile(a)`` (optionally ``, all``) or
        ``fixed(e1,e2,...)``.
    kernel : str
        ``component_gaussian(x2_empirical)``, ``mvn(x2_empirical)`` or a
        ``fixed:`` variant.
    adaptive_weights : bool
        Resample with data-based weights.
    data_kernel : str
        ``auto`` or comma-separated data-kernel sds.
    """

    def __init__(self, model="gaussian", priors=(), n_particles=1000, n_populations=5,
                 epsilon0=1.0, schedule="mean_fraction(0.75)",
                 kernel="component_gaussian(x2_empirical)", distance="euclidean",
                 adaptive_weights=False, data_kernel="auto", max_attempts=10000,
                 model_options=None, prior_labels=None, seed=0, workers=1):
        self.model = model
        self.priors = priors
        self.n_particles = n_particles
        self.n_populations = n_populations
        self.epsilon0 = epsilon0
        self.schedule = schedule
        self.kernel = kernel
        self.distance = distance
        self.adaptive_weights = adaptive_weights
        self.data_kernel = data_kernel
        self.max_attempts = max_attempts
        self.model_options = model_options
        self.prior_labels = prior_labels
        self.seed = seed
        self.workers = workers

    def _engine_name(self):
        return "smc_aw" if self.adaptive_weights else "smc"

    def _engine_kwargs(self):
        sched = self.schedule if isinstance(self.schedule, Schedule) else parse_schedule(self.schedule)
        kern = self.kernel if not isinstance(self.kernel, str) else parse_kernel(self.kernel)
        return {"n_particles": self.n_particles, "n_populations": self.n_populations,
                "epsilon0": self.epsilon0, "schedule": sched, "kernel": kern,
                "data_kernel": self.data_kernel, "max_attempts": self.max_attempts}

    @property
    def epsilons_(self):
        return self.run_.epsilons
