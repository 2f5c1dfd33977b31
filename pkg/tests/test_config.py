import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptca.config import RunConfig, from_json, parse_config, serialize
from adaptca.errors import ConfigError
from adaptca.ising import SocParams
from adaptca.rate import RateParams
from adaptca.spiking import SpikingParams


def test_empty_input_gives_defaults():
    cfg = parse_config()
    assert cfg == RunConfig()
    assert cfg.size == 64 and cfg.ising.params == SocParams()
    assert cfg.rate.params == RateParams() and cfg.spiking.params == SpikingParams()


def test_flag_overrides_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"size": 64, "rate": {"params": {"g": 2.0}}}))
    cfg = parse_config(path, {"size": 128})
    assert cfg.size == 128 and cfg.rate.params.g == 2.0


def test_file_overrides_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"model": "spiking", "spiking": {"params": {"tau": 20.0}}}))
    cfg = parse_config(path)
    assert cfg.spiking.params.tau == 20.0 and cfg.dt == 1.0


@pytest.mark.parametrize(
    "overrides, key",
    [
        ({"ising.measure_patch": 4}, "ising.measure_patch"),
        ({"ising.update_fraction": 1.5}, "ising.update_fraction"),
        ({"ising.update_fraction": 0.0}, "ising.update_fraction"),
        ({"rate.params.g": -1.0}, "rate.params.g"),
        ({"spiking.params.tau": 0.0}, "spiking.params.tau"),
        ({"size": 4}, "size"),
        ({"bench.steps_per_point": 0}, "bench.steps_per_point"),
        ({"bench.sizes": [128, 64]}, "bench.sizes"),
        ({"typo": 1}, "typo"),
    ],
)
def test_errors_name_key_path(overrides, key):
    with pytest.raises(ConfigError) as info:
        parse_config(overrides=overrides)
    assert info.value.key == key
    assert key in str(info.value)


def test_malformed_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"size": 64,,}')
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    assert "line 1" in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "none.json")


configs = st.fixed_dictionaries(
    {
        "model": st.sampled_from(["ising", "rate", "spiking", "bench"]),
        "size": st.integers(8, 4096),
        "steps": st.integers(0, 10**6),
        "seed": st.integers(0, 2**64 - 1),
        "threads": st.integers(1, 64),
        "snapshot_every": st.integers(0, 1000),
        "ising.mode": st.sampled_from(["local", "global", "fixed"]),
        "ising.temp_init": st.floats(0.01, 100),
        "ising.update_fraction": st.floats(0.01, 1.0),
        "ising.measure_patch": st.sampled_from([None, 1, 3, 5, 7]),
        "ising.params.alpha": st.floats(0, 10),
        "ising.params.eta": st.floats(0, 1),
        "rate.params.p_e": st.floats(0, 1),
        "rate.params.g": st.floats(0, 10),
        "rate.image": st.one_of(st.none(), st.text(min_size=1, max_size=20)),
        "spiking.params.c": st.floats(-10, 10),
        "spiking.stim_on": st.integers(0, 1000),
        "bench.sizes": st.lists(st.integers(8, 64), min_size=1, max_size=4, unique=True).map(sorted),
    }
)


@given(configs)
def test_serialize_round_trip(overrides):
    cfg = parse_config(overrides=overrides)
    assert from_json(serialize(cfg)) == cfg
