"""End-to-end acceptance checks on the bundled experiments.

Each test records one ``PASS``/``FAIL`` line, printed in the terminal
summary (and immediately with ``-s``).  Run alone with::

    pytest tests/test_acceptance.py -v
"""

import csv
import json
import subprocess
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from pedabc.cli import main
from pedabc.config import bundled_config, load_config
from pedabc.inference import run_experiment
from pedabc.parameters import Prior
from pedabc.posterior import (
    AdjustmentSkipped,
    PosteriorSample,
    regression_adjust,
    weighted_mean,
    weighted_variance,
)

TESTS = Path(__file__).parent

pytestmark = pytest.mark.slow


def report(n, ok, detail, seconds):
    line = "%s criterion %d: %s [%.1f s]" % ("PASS" if ok else "FAIL", n, detail, seconds)
    ACCEPTANCE_LINES[n] = line
    print(line)
    return ok


def timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def gaussian_rejection():
    cfg = load_config(bundled_config("gaussian"),
                      ["experiment.engine=rejection", "schedule.epsilon0=0.5",
                       "experiment.n_total=30000"])
    return timed(run_experiment, cfg)


@pytest.fixture(scope="module")
def cbd_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cbd")
    t0 = time.perf_counter()
    assert main(["run", "--config", "cbd", "--out-dir", str(out)]) == 0
    assert main(["predict", "--out-dir", str(out)]) == 0
    return out, time.perf_counter() - t0


def test_criterion_1_gaussian_rejection(gaussian_rejection):
    run, secs = gaussian_rejection
    ps = run.posterior()
    rate = run.diagnostics[-1]["acceptance_rate"]
    m, s = weighted_mean(ps, "mean"), weighted_mean(ps, "sd")
    ok = abs(rate - 0.035) <= 0.015 and abs(m - 4) <= 0.15 and abs(s - 1.5) <= 0.15 and secs < 30
    assert report(1, ok, "acceptance %.2f%% (3.5 +- 1.5), means (%.3f, %.3f) vs (4, 1.5)"
                  % (100 * rate, m, s), secs)


def test_criterion_2_gaussian_smc(gaussian_rejection):
    rej, _ = gaussian_rejection
    run, secs = timed(run_experiment, load_config(bundled_config("gaussian")))
    ps = run.posterior()
    m, v = weighted_mean(ps, "mean"), weighted_variance(ps, "mean")
    v_rej = weighted_variance(rej.posterior(), "mean")
    eps = ", ".join("%.3f" % e for e in run.epsilons)
    ok = len(run.populations) == 5 and abs(m - 4) <= 0.10 and v < v_rej and secs < 300
    assert report(2, ok, "mean %.3f (4 +- 0.1), variance %.4f < rejection %.4f, epsilons (%s)"
                  % (m, v, v_rej, eps), secs)


def test_criterion_3_gaussian_mean_trajectory():
    run, secs = timed(run_experiment, load_config(bundled_config("gaussian_mean")))
    true_mu = -0.035
    means = [float(p.weights @ p.thetas[:, 0]) for p in run.populations]
    eps = np.array(run.epsilons)
    worst = max(abs(m - true_mu) for m in means[13:])
    ok = (len(means) == 20 and worst <= 0.02 and eps[0] == 1.0
          and np.all(np.diff(eps) < 0) and eps[-1] < 0.01)
    assert report(3, ok, "max |mean - mu| from population 14 on = %.4f (<= 0.02), "
                  "epsilon 1.0 -> %.4f (< 0.01)" % (worst, eps[-1]), secs)


def test_criterion_4_fork_top_quantile():
    cfg = load_config(bundled_config("toy_fork"), ["experiment.engine=rejection_top_quantile"])
    run, secs = timed(run_experiment, cfg)
    ps = run.posterior()
    m = weighted_mean(ps, "p")
    ok = run.diagnostics[-1]["iterations"] == 10000 and len(ps) == 100 and 0.84 <= m <= 0.97 \
        and secs < 600
    assert report(4, ok, "posterior mean of p %.3f in [0.84, 0.97] from top 100 of 10000"
                  % m, secs)


def test_criterion_5_fork_smc_aw():
    run, secs = timed(run_experiment, load_config(bundled_config("toy_fork")))
    m = weighted_mean(run.posterior(), "p")
    sims = sum(d["iterations"] for d in run.diagnostics)
    ok = len(run.populations) == 5 and 0.80 <= m <= 0.95 and sims < 5000
    assert report(5, ok, "posterior mean of p %.3f in [0.80, 0.95]; total simulations %d "
                  "(< 5000)" % (m, sims), secs)


def test_criterion_6_cbd_end_to_end(cbd_run):
    out, secs = cbd_run
    summary = {r["parameter"]: float(r["mean"]) for r in rows(out / "posterior_summary.csv")}
    a, b = summary["theta1_5"], summary["theta1_3"]
    pred = rows(out / "prediction_intervals.csv")
    covered = all(r["covered"] == "yes" for r in pred)
    iv = ", ".join("%s [%.0f, %.0f]" % (r["summary"], float(r["lo"]), float(r["hi"]))
                   for r in pred)
    meta = json.loads((out / "meta.json").read_text())
    rate = meta["diagnostics"][-1]["acceptance_rate"]
    parts = {"a": a - b >= 0.15, "b": covered, "c": rate >= 0.20}
    ok = all(parts.values()) and meta["n_populations"] == 10 and secs < 1800
    detail = ("(a) A=%.3f B=%.3f gap %.3f (>= 0.15) %s; (b) 95%% intervals %s %s; "
              "(c) final acceptance %.1f%% (>= 20%%) %s"
              % (a, b, a - b, "ok" if parts["a"] else "fails", iv,
                 "ok" if parts["b"] else "fails", 100 * rate, "ok" if parts["c"] else "fails"))
    assert report(6, ok, detail, secs)


def test_criterion_7_regression_adjustment(cbd_run):
    out, _ = cbd_run
    t0 = time.perf_counter()
    assert main(["adjust", "--out-dir", str(out)]) == 0
    diff = {r["summary"]: float(r["abs_difference_adjusted"])
            for r in rows(out / "adjusted_counts.csv")}
    # identity on a synthetic run with equal distances
    prior = Prior([("p", "beta(2, 2)")])
    x = np.random.default_rng(0).beta(2, 2, (50, 1))
    ps = PosteriorSample(x, np.ones(50), prior, distances=np.full(50, 3.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdjustmentSkipped)
        identity = np.array_equal(regression_adjust(ps).thetas, x)
    ok = diff["TR"] <= 5 and diff["TA"] <= 5 and identity
    assert report(7, ok, "|sim - obs| TR %.2f, TA %.2f (<= 5); equal-distance identity %s"
                  % (diff["TR"], diff["TA"], identity), time.perf_counter() - t0)


PROPERTY_TESTS = [
    "test_kernels.py::test_normalization_and_rescaling_invariance",
    "test_kernels.py::test_smc_weight_two_particles_matches_brute_force",
    "test_kernels.py::test_smc_weight_brute_force_property",
    "test_kernels.py::test_simplex_perturbation_stays_on_the_simplex",
    "test_kernels.py::test_simplex_invariants_hold_for_any_scale",
    "test_inference.py::test_smc_population_invariants",
    "test_inference.py::test_smc_weight_spot_checks_match_brute_force",
    "test_inference.py::test_rejection_with_infinite_epsilon_recovers_the_prior",
    "test_inference.py::test_smc_single_population_recovers_the_prior",
    "test_inference.py::test_worker_count_does_not_change_results",
    "test_distributions.py::test_closed_form_moments_and_density_match_scipy",
    "test_distributions.py::test_sample_moments_within_five_standard_errors",
    "test_distributions.py::test_dirichlet_and_categorical_moments",
    "test_distributions.py::test_gk_reduces_to_normal_quantile",
    "test_simulators.py::test_fork_matches_markov_oracle",
    "test_simulators.py::test_fork_matches_markov_oracle_other_p",
    "test_simulators.py::test_cbd_matches_markov_oracle",
    "test_simulators.py::test_cbd_matches_markov_oracle_asymmetric",
    "test_persistence.py::test_population_round_trip_is_exact",
    "test_persistence.py::test_replay_from_echo_reproduces_population_files",
]


def test_criterion_8_property_suites():
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *[str(TESTS / t) for t in PROPERTY_TESTS]],
                          capture_output=True, text=True, cwd=TESTS.parent)
    last = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr
    assert report(8, proc.returncode == 0, "%d property checks: %s"
                  % (len(PROPERTY_TESTS), last.strip("= ")), time.perf_counter() - t0), \
        proc.stdout[-3000:]
