import json

import pytest

from fedadmm.config import ConfigError, ExperimentConfig, from_dict, load_raw, parse_config


def test_defaults_example1():
    cfg = parse_config()
    ex = cfg.experiment
    assert (ex.example, ex.rounds, ex.clients, ex.subset_size) == ("example1", 100, 100, 10)
    assert (ex.eta, ex.delta, ex.cap, ex.convexity) == (0.01, 0.01, 10, 1.0)
    assert (cfg.adaptive.mu, cfg.adaptive.tau) == (20.0, 2.0)
    assert (cfg.synthetic.n_samples, cfg.synthetic.dim) == (10000, 1000)


def test_minimal_example2_insa(tmp_path):
    path = tmp_path / "ex2.toml"
    path.write_text('[experiment]\nexample = "example2"\nvariant = "insa"\n')
    cfg = parse_config(path)
    assert cfg.experiment.rounds == 200 and cfg.experiment.clients == 100
    assert cfg.experiment.subset_size == 10 and cfg.experiment.eta == 0.01
    assert cfg.mnist.shard_size == 50 and cfg.mnist.n_test == 1000


def test_subset_larger_than_population_names_both_keys():
    with pytest.raises(ConfigError) as err:
        parse_config(overrides=["experiment.subset_size=101"])
    assert "experiment.subset_size" in str(err.value) and "experiment.clients" in str(err.value)


def test_echo_round_trips(tmp_path):
    cfg = parse_config(overrides=["experiment.variant=in", "adaptive.tau=3", "seeds.sampling=9"])
    path = tmp_path / "echo.json"
    path.write_text(cfg.echo())
    assert parse_config(path) == cfg
    assert from_dict(json.loads(cfg.echo())) == cfg


def test_manifest_config_is_unwrapped(tmp_path):
    cfg = parse_config(overrides=["experiment.rounds=3"])
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"config": cfg.to_dict(), "version": "x"}))
    assert parse_config(path) == cfg


def test_flags_win_over_file(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[experiment]\nrounds = 5\neta = 0.5\n")
    cfg = parse_config(path, ["experiment.rounds=7"])
    assert cfg.experiment.rounds == 7 and cfg.experiment.eta == 0.5


def test_integer_accepted_for_float(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[experiment]\nbeta0 = 2\n")
    assert parse_config(path).experiment.beta0 == 2.0


@pytest.mark.parametrize(
    "override, key",
    [
        ("experiment.nonsense=1", "experiment.nonsense"),
        ("nowhere.rounds=1", "nowhere.rounds"),
        ("experiment.rounds=ten", "experiment.rounds"),
        ("experiment.variant=fancy", "experiment.variant"),
        ("experiment.eta=-1", "experiment.eta"),
        ("experiment.sigma_safety=0", "experiment.sigma_safety"),
        ("adaptive.mu=1", "adaptive.mu"),
        ("seeds.data=-2", "seeds.data"),
    ],
)
def test_bad_overrides_name_the_key(override, key):
    with pytest.raises(ConfigError) as err:
        parse_config(overrides=[override])
    assert err.value.key == key


def test_override_needs_equals():
    with pytest.raises(ConfigError):
        parse_config(overrides=["experiment.rounds"])


def test_type_mismatch_in_file(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('[experiment]\nrounds = "many"\n')
    with pytest.raises(ConfigError, match="expected int"):
        parse_config(path)


def test_unknown_section_in_file(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[extras]\nx = 1\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(path)


def test_invalid_toml(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[experiment\n")
    with pytest.raises(ConfigError, match="invalid TOML"):
        load_raw(path)


def test_label_shard_size_equation():
    with pytest.raises(ConfigError) as err:
        parse_config(overrides=["experiment.example=example2", "mnist.n_train=9000"])
    assert err.value.key == "mnist.n_train"
    ok = parse_config(overrides=["experiment.example=example2", "mnist.n_train=9000", "mnist.shard_size=45"])
    assert ok.mnist.n_train == 9000


def test_convexity_follows_gamma():
    assert parse_config(overrides=["synthetic.gamma=0.5"]).experiment.convexity == 0.5
    assert parse_config(overrides=["experiment.example=example2"]).experiment.convexity == 1.0


def test_config_is_frozen():
    cfg = ExperimentConfig()
    with pytest.raises(Exception):
        cfg.experiment.rounds = 3


@pytest.mark.parametrize("name", ["example1.toml", "example2.toml"])
def test_shipped_configs_parse(name):
    from pathlib import Path

    cfg = parse_config(Path(__file__).resolve().parents[1] / "configs" / name)
    assert cfg.experiment.example == name.removesuffix(".toml")
