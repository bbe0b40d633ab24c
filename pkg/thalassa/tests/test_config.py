# thalassa/tests/test_config.py - YAML loading, CLI overrides, config hashing and random streams

import numpy as np
import pytest
import yaml

from thalassa.config import (
    STREAM_OCEAN,
    STREAM_SIMULATE,
    config_from_dict,
    config_hash,
    derive_rng,
    load_config,
    parse_override,
)
from thalassa.errors import ConfigError


def test_defaults_need_only_a_seed():
    config = config_from_dict({"seed": 1})
    assert config.eof.n_eof == 5
    assert config.geometry.n_beam == 500
    assert config.grid.to_grid().count == 151
    assert config.measurement.sigma_t == pytest.approx(1.3333e-5, rel=1e-4)
    assert config.inversion.alpha_grid.size == 17
    assert config.alpha_selection.mode == "baseline"


def test_missing_seed():
    with pytest.raises(ConfigError) as info:
        config_from_dict({})
    assert "seed" in str(info.value)


@pytest.mark.parametrize("item, expected", [
    ("eof.n_eof=7", ("eof.n_eof", 7)),
    ("measurement.sigma_t_s=1.0e-5", ("measurement.sigma_t_s", 1.0e-5)),
    ("inversion.alphas=[1.0e-14, 1.0e-12, 1.0e-10]", ("inversion.alphas", [1e-14, 1e-12, 1e-10])),
    ("dataset.profiles_csv=data/p.csv", ("dataset.profiles_csv", "data/p.csv")),
    ("eof.basis_path=", ("eof.basis_path", None)),
])
def test_parse_override(item, expected):
    assert parse_override(item) == expected


@pytest.mark.parametrize("item", ["eof.n_eof", "=3", "eof.n_eof=[1,"])
def test_bad_override(item):
    with pytest.raises(ConfigError):
        parse_override(item)


def test_exponent_without_a_point_still_validates_as_float():
    # YAML 1.1 reads 1e-5 as a string; the model coerces it
    config = config_from_dict({"seed": 1}, ["measurement.sigma_x_cm=", "measurement.sigma_t_s=1e-5"])
    assert config.measurement.sigma_t == 1e-5


def test_overrides_apply_in_order():
    config = config_from_dict({"seed": 1, "eof": {"n_eof": 3}}, ["eof.n_eof=4", "eof.n_eof=6", "geometry.n_beam=101"])
    assert config.eof.n_eof == 6
    assert config.geometry.n_beam == 101


def test_override_into_a_scalar_is_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"seed": 1}, ["seed.value=3"])


@pytest.mark.parametrize("data", [
    {"seed": 1, "measurement": {"sigma_x_cm": 1.0, "sigma_t_s": 1e-5}},
    {"seed": 1, "measurement": {"sigma_x_cm": None}},
    {"seed": 1, "eof": {"n_eof": 0}},
    {"seed": 1, "eof": {"n_eofs": 5}},
    {"seed": 1, "dataset": {"train_years": [2000, 1990]}},
    {"seed": 1, "alpha_selection": {"mode": "fixed"}},
    {"seed": 1, "alpha_selection": {"mode": "guess"}},
    {"seed": 1, "inversion": {"alphas": [1e-10, 1e-12, 1e-14]}},
])
def test_invalid_configurations(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_sigma_t_directly():
    config = config_from_dict({"seed": 1, "measurement": {"sigma_x_cm": None, "sigma_t_s": 2e-5}})
    assert config.measurement.sigma_t == 2e-5


def test_load_config_from_yaml(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump({"seed": 9, "eof": {"n_eof": 3}, "output_dir": str(tmp_path / "out")}))
    config = load_config(path, ["geometry.swath_width_deg=140"])

    assert (config.seed, config.eof.n_eof, config.geometry.swath_width_deg) == (9, 3, 140.0)
    assert config.basis_path() == tmp_path / "out" / "eof" / "basis.npz"
    assert config.net_path() == tmp_path / "out" / "alpha_net" / "alpha_net.json"


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "list.yaml")
    (tmp_path / "broken.yaml").write_text("seed: [1\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "broken.yaml")


def test_load_config_without_file():
    assert load_config(None, ["seed=4"]).seed == 4


# --- config_hash ---

def test_hash_ignores_where_and_how_fast():
    base = config_from_dict({"seed": 1})
    moved = config_from_dict({"seed": 1, "output_dir": "elsewhere", "performance": {"n_jobs": 8},
                              "observability": {"logging": {"level": "DEBUG"}}})
    assert config_hash(base) == config_hash(moved)
    assert len(config_hash(base)) == 16


@pytest.mark.parametrize("override", ["seed=2", "eof.n_eof=4", "geometry.n_beam=300", "inversion.max_iterations=10"])
def test_hash_follows_result_relevant_fields(override):
    assert config_hash(config_from_dict({"seed": 1})) != config_hash(config_from_dict({"seed": 1}, [override]))


# --- derive_rng ---

def test_streams_are_reproducible():
    a = derive_rng(5, STREAM_SIMULATE, 3).normal(size=4)
    b = derive_rng(5, STREAM_SIMULATE, 3).normal(size=4)
    np.testing.assert_array_equal(a, b)


def test_streams_are_independent():
    draws = [
        derive_rng(5, STREAM_OCEAN).normal(size=1000),
        derive_rng(5, STREAM_SIMULATE).normal(size=1000),
        derive_rng(5, STREAM_SIMULATE, 1).normal(size=1000),
        derive_rng(6, STREAM_OCEAN).normal(size=1000),
    ]
    for i in range(len(draws)):
        for j in range(i + 1, len(draws)):
            assert not np.array_equal(draws[i], draws[j])
            assert abs(np.corrcoef(draws[i], draws[j])[0, 1]) < 0.15
