import json

import pytest

from dtzfp.config import RunConfig, SystemConfig, TrainingConfig, config_from_dict, load_config, save_config
from dtzfp.errors import InvalidParameterError


def test_round_trip(tmp_path):
    cfg = RunConfig().with_overrides("system", num_aps=64, doppler=50.0)
    path = tmp_path / "c.json"
    save_config(cfg, path)
    back = load_config(path)
    assert back == cfg
    assert back.digest() == cfg.digest()


def test_defaults():
    s = SystemConfig()
    assert (s.num_aps, s.num_ues, s.doppler, s.delay) == (128, 16, 100.0, 1e-3)
    t = TrainingConfig()
    assert (t.num_layers, t.hidden, t.window, t.epochs, t.batch_size) == (2, 25, 20, 200, 64)


def test_unknown_keys_rejected():
    with pytest.raises(InvalidParameterError, match="bogus"):
        config_from_dict({"system": {"bogus": 1}})
    with pytest.raises(InvalidParameterError, match="extra"):
        config_from_dict({"extra": {}})


def test_partial_sections_fill_defaults():
    cfg = config_from_dict({"training": {"cell": "gru"}})
    assert cfg.training.cell == "gru" and cfg.system == SystemConfig()


@pytest.mark.parametrize("section,key,value", [
    ("system", "num_aps", 8),
    ("system", "num_aps", 1.5),
    ("system", "break_d0", 60.0),
    ("training", "cell", "rnn"),
    ("training", "sharing", "per-ap"),
    ("simulation", "estimation", "ls"),
])
def test_invalid_values(section, key, value):
    with pytest.raises(InvalidParameterError):
        config_from_dict({section: {key: value}})


def test_system_digest_ignores_other_sections():
    a = RunConfig()
    b = a.with_overrides("simulation", drops=10)
    assert a.system_digest() == b.system_digest() and a.digest() != b.digest()
    json.loads(a.to_json())
