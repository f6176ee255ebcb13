"""Strategy-name grammar and hyperparameter validation."""

import pytest

from hierfed.errors import ConfigError
from hierfed.fed.strategy import StrategyConfig, parse_strategy

GRAMMAR = [
    ("sc1-L", "L", "none", "none"),
    ("sc1-G", "G", "none", "none"),
    ("sc1-G-AV", "G", "AV", "none"),
    ("sc1-G-AT", "G", "AT", "none"),
    ("sc1-P-AV", "P", "AV", "none"),
    ("sc1-P-AT", "P", "AT", "none"),
    ("sc2-L", "L", "none", "none"),
    ("sc2-G", "G", "none", "none"),
    ("sc2-G-AV-M", "G", "AV", "M"),
    ("sc2-G-AV-T", "G", "AV", "T"),
    ("sc2-G-AT-M", "G", "AT", "M"),
    ("sc2-G-AT-T", "G", "AT", "T"),
    ("sc2-P-AV-M", "P", "AV", "M"),
    ("sc2-P-AV-B", "P", "AV", "B"),
    ("sc2-P-AT-M", "P", "AT", "M"),
    ("sc2-P-AT-B", "P", "AT", "B"),
    ("sc2-FedIRT", "P", "IRT", "B"),
]


@pytest.mark.parametrize("name,arch,agg,hier", GRAMMAR)
def test_every_valid_name_parses(name, arch, agg, hier):
    s = parse_strategy(name)
    assert s.name == name
    assert s.scenario == name.split("-")[0]
    assert (s.architecture, s.aggregation, s.hierarchy) == (arch, agg, hier)


def test_defaults_follow_the_training_protocol():
    s = parse_strategy("sc2-P-AT-B")
    assert (s.eta, s.beta, s.eps) == (0.3, None, 1.0)
    assert (s.rounds, s.local_iters, s.epochs) == (10, 5, 50)
    assert (s.batch_size, s.per_group, s.clip) == (16, 4, 5.0)
    assert s.attention_mode == "layerwise"


@pytest.mark.parametrize("name", ["", "sc3-G", "fedavg", "SC1-G"])
def test_unknown_scenario_is_blamed_on_token_one(name):
    with pytest.raises(ConfigError, match="token 1 must be sc1 or sc2"):
        parse_strategy(name)


@pytest.mark.parametrize("name,pos", [
    ("sc1-X", 2),
    ("sc1-G-XX", 3),
    ("sc1-G-AV-M", 4),      # one-level names take no hierarchy suffix
    ("sc2-P-AV-T", 4),      # T is only valid on the G forms
    ("sc2-G-AV", 4),        # federated two-level names need a suffix
    ("sc2-P", 3),
    ("sc2-FedIRT-B", 3),
])
def test_error_points_at_the_first_bad_token(name, pos):
    with pytest.raises(ConfigError, match=f"token {pos} unrecognized"):
        parse_strategy(name)


def test_error_lists_the_valid_forms():
    with pytest.raises(ConfigError, match="valid forms: .*sc2-FedIRT"):
        parse_strategy("sc2-P-AT-X")


def base_config(**kw):
    fields = dict(name="sc1-G-AT", scenario="sc1", architecture="G",
                  aggregation="AT", hierarchy="none")
    fields.update(kw)
    return StrategyConfig(**fields)


@pytest.mark.parametrize("kw", [
    {"eta": 0.0},
    {"eta": -1.0},
    {"eps": 0.0},
    {"beta": -0.1},
    {"rounds": 0},
    {"local_iters": 0},
    {"epochs": 0},
    {"attention_mode": "global"},
])
def test_bad_hyperparameters_are_rejected(kw):
    with pytest.raises(ConfigError):
        base_config(**kw)


def test_zero_beta_is_allowed():
    assert base_config(beta=0.0).inner_step == 0.0


def test_inner_step_defaults_to_eta():
    s = parse_strategy("sc1-P-AT")
    assert s.inner_step == s.eta == 0.3
    assert s.with_overrides(beta=0.05).inner_step == 0.05


def test_is_federated_tracks_the_aggregation_rule():
    assert not parse_strategy("sc1-L").is_federated
    assert not parse_strategy("sc1-G").is_federated
    assert not parse_strategy("sc2-G").is_federated
    assert parse_strategy("sc1-G-AV").is_federated
    assert parse_strategy("sc2-P-AT-B").is_federated
    assert parse_strategy("sc2-FedIRT").is_federated


def test_overrides_skip_unset_values_and_revalidate():
    s = parse_strategy("sc2-P-AT-B")
    assert s.with_overrides(eta=None, rounds=None) is s
    t = s.with_overrides(eta=0.1, rounds=3, beta=None)
    assert (t.eta, t.rounds) == (0.1, 3)
    assert t.beta is None
    assert t.name == s.name
    with pytest.raises(ConfigError):
        s.with_overrides(eta=-1.0)
