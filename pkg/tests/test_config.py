import dataclasses

import pytest
from hypothesis import given, strategies as st

from rangeloc.config import PRESETS, ConfigError, dump_scenario, load_scenario, parse_scenario


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load_and_roundtrip(name):
    cfg = load_scenario(name)
    assert parse_scenario(dump_scenario(cfg)) == cfg


def test_preset_values():
    fig3 = load_scenario("fig3")
    assert (fig3.n_agents, fig3.consensus_rounds, fig3.iterations, fig3.trials) == (4, 20, 100, 20)
    assert fig3.beta_sigma == 0.001
    spiral = load_scenario("fig10-11")
    assert spiral.scheduler.value == "sequential_all" and spiral.trials == 5 and spiral.beta_sigma == 0.1
    assert load_scenario("fig8").mean_degree == 8.44
    assert load_scenario("fig45").comm_range_fraction == 0.30


def test_unknown_key_has_line():
    with pytest.raises(ConfigError, match=r"s.yaml:3: bogus: unknown key"):
        parse_scenario("name: x\ndim: 2\nbogus: 1\n", "s.yaml")


def test_unknown_nested_key():
    text = "targets:\n  - position: [1, 1]\n    motion: {kind: static, wobble: 2}\n"
    with pytest.raises(ConfigError, match="targets\\[0\\].motion.wobble"):
        parse_scenario(text)


def test_invalid_value_names_field():
    with pytest.raises(ConfigError, match="beta_sigma"):
        parse_scenario("beta_sigma: -1\n", "s.yaml")


def test_missing_file_names_path(tmp_path):
    with pytest.raises(ConfigError, match="nowhere.yaml"):
        load_scenario(tmp_path / "nowhere.yaml")


def test_malformed_yaml():
    with pytest.raises(ConfigError, match="malformed"):
        parse_scenario("a: [1, 2\n")


@given(st.integers(0, 2**32), st.integers(1, 50))
def test_overrides_roundtrip(seed, trials):
    cfg = dataclasses.replace(load_scenario("fig3"), seed=seed, trials=trials)
    assert parse_scenario(dump_scenario(cfg)) == cfg
