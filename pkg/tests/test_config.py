import pytest

from eventcloud.config import ModelConfig, RunConfig, dump_config, fnv1a64, load_config, parse_config
from eventcloud.errors import ConfigError


def test_fnv_known_values():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C


def test_parse_and_dump_round_trip(tmp_path):
    cfg = parse_config("task = eye\ndims = 16,32,64\nlr = 0.003  # comment\nseed = 5\ndenoise = true\n")
    assert cfg.model.task == "eye" and cfg.model.dims == [16, 32, 64]
    assert cfg.lr == 0.003 and cfg.seed == cfg.model.seed == 5 and cfg.denoise
    path = tmp_path / "c.cfg"
    path.write_text(dump_config(cfg) + "seed = 5\n")
    again = load_config(str(path))
    assert again == cfg


def test_unknown_key_and_bad_values():
    with pytest.raises(ConfigError, match="unknown"):
        parse_config("colour = red\n")
    with pytest.raises(ConfigError):
        parse_config("epochs = many\n")
    with pytest.raises(ConfigError):
        parse_config("just words\n")
    with pytest.raises(ConfigError):
        parse_config("overlap_us = 600000\n")


def test_digest_ignores_seed_only():
    a = ModelConfig(seed=1)
    assert a.digest() == ModelConfig(seed=2).digest()
    assert a.digest() != ModelConfig(classes=11).digest()


def test_defaults_validate():
    RunConfig().validate()
