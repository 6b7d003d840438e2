import math

import pytest

from pedabc.config import (
    BUNDLED_CONFIGS,
    ConfigError,
    bundled_config,
    config_hash,
    config_to_text,
    load_config,
    parse_config_text,
    parse_schedule,
)

MINIMAL = """
[experiment]
engine = smc
n_particles = 10
n_populations = 2

[priors]
mean = normal(0, 1)

[simulator]
model = gaussian_mean
n = 20

[data]
observed = 0.1
"""


@pytest.mark.parametrize("name", BUNDLED_CONFIGS)
def test_bundled_configs_parse(name):
    cfg = load_config(bundled_config(name))
    cfg.prior()
    assert len(cfg.observed) == len(cfg.model().summary_names)


def test_bundled_values():
    cbd = load_config(bundled_config("cbd"))
    assert cbd.observed == (321, 222, 202, 380)
    assert cbd.prior().columns == ("theta1_1", "theta1_3", "theta1_5",
                                   "theta2_0", "theta2_2", "theta2_4", "n_peds")
    g = load_config(bundled_config("gaussian"))
    assert g.epsilon0 == 1.0 and g.schedule == parse_schedule("quantile(0.8)")


def test_minimal_config_defaults():
    cfg = parse_config_text(MINIMAL)
    assert cfg.engine == "smc" and cfg.seed == 0 and cfg.workers == 1
    assert cfg.model_options == {"n": 20}


@pytest.mark.parametrize("extra", [
    "[experiment]\nflavour = mint\n",
    "[colour]\nred = 1\n",
    "[kernel]\nperturbation = gaussian(x3)\n",
    "[schedule]\nrule = halve(2)\n",
    "[simulator]\nwidth = 3\n",
    "[sweep]\nstride = 2\n",
    "[priors]\nmean.units = m\n",
])
def test_unknown_keys_and_values_are_hard_errors(extra):
    text = MINIMAL
    section = extra.split("]")[0] + "]"
    if section in text:
        text = text.replace(section, extra.rstrip("\n"))
    else:
        text += "\n" + extra
    with pytest.raises(ConfigError):
        parse_config_text(text)


@pytest.mark.parametrize("override", [
    "experiment.n_particles=ten", "experiment.n_particles=2.5", "priors.mean=cauchy(0,1)",
    "experiment.engine=mcmc", "simulator.model=queue", "data.observed=1,2",
])
def test_bad_values_are_errors(override):
    with pytest.raises(ConfigError):
        parse_config_text(MINIMAL, [override])


def test_missing_section():
    with pytest.raises(ConfigError):
        parse_config_text(MINIMAL.replace("[data]\nobserved = 0.1", ""))


def test_overrides_apply():
    cfg = parse_config_text(MINIMAL, ["experiment.seed=9", "schedule.epsilon0=inf"])
    assert cfg.seed == 9 and math.isinf(cfg.epsilon0)
    with pytest.raises(ConfigError):
        parse_config_text(MINIMAL, ["seed=9"])


def test_echo_round_trip_and_hash():
    for name in BUNDLED_CONFIGS:
        cfg = load_config(bundled_config(name))
        text = config_to_text(cfg)
        assert parse_config_text(text) == cfg
        assert config_to_text(parse_config_text(text)) == text
        assert config_hash(cfg) == config_hash(text)
    a = parse_config_text(MINIMAL)
    assert config_hash(a) != config_hash(a.replace(seed=2))


def test_observed_file(tmp_path):
    (tmp_path / "obs.json").write_text('{"summary": {"AW": 1, "TR": 2, "TA": 3, "CPS": 4}}')
    text = config_to_text(load_config(bundled_config("cbd"))).replace(
        "observed = 321.0,222.0,202.0,380.0", "observed_file = obs.json")
    p = tmp_path / "c.cfg"
    p.write_text(text)
    assert load_config(p).observed == (1, 2, 3, 4)


def test_unknown_bundled_name():
    with pytest.raises(ConfigError):
        bundled_config("nope")
