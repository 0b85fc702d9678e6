import pytest

from sata.config import RunConfig, build, load, parse_text
from sata.errors import ConfigError


def test_parse_and_build(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# toy run\nseed = 3\nmodel.hidden = 32\nmodel.heads=2\ntrain.lr = 0.002\n"
                    "loss.w_vel = 0.25\nrun.stitch = blend\nmodel.temporal = no\n")
    cfg = load(path, ["train.epochs=5"])
    assert cfg.seed == 3
    assert cfg.model.hidden == 32 and cfg.model.temporal is False
    assert cfg.train.lr == 0.002 and cfg.train.epochs == 5
    assert cfg.loss.w_vel == 0.25
    assert cfg.run.stitch == "blend"
    d = cfg.to_dict()
    assert d["model"]["hidden"] == 32 and d["seed"] == 3


def test_defaults():
    cfg = build({})
    assert cfg == RunConfig()
    assert cfg.train.lr == 1e-4 and cfg.loss.lambda_kl == 1e-4


@pytest.mark.parametrize("key", ["model.bogus", "nosection.x", "model", "train"])
def test_unknown_keys_name_the_key(key):
    with pytest.raises(ConfigError) as e:
        build({key: "1"})
    assert key in str(e.value)


def test_bad_values():
    with pytest.raises(ConfigError, match="model.hidden"):
        build({"model.hidden": "wide"})
    with pytest.raises(ConfigError, match="model.temporal"):
        build({"model.temporal": "maybe"})
    with pytest.raises(ConfigError, match="model"):
        build({"model.hidden": "10", "model.heads": "4"})
    with pytest.raises(ConfigError):
        parse_text("no equals sign here")
    with pytest.raises(ConfigError):
        parse_text("= 3")


def test_later_lines_win():
    assert parse_text("a.b = 1\na.b = 2 # trailing comment") == {"a.b": "2"}
