import pytest

from fcgssl.config import RunConfig, apply_overrides, load_config, parse_config
from fcgssl.errors import ConfigError


def test_defaults():
    cfg = RunConfig()
    assert cfg.loss.gamma == 2.0 and cfg.loss.tau == 0.2
    assert cfg.encoder.variant == "gat" and cfg.ablation == "none"
    cfg.validate()


def test_parse_sections_comments_and_types():
    cfg = parse_config("""
    # comment
    seed = 4
    [data]
    block_sizes = 30, 20   # trailing comment
    p_in = 0.5
    strict = false
    [sweep]
    alpha = 0.1, 1
    """)
    assert cfg.seed == 4
    assert cfg.data.block_sizes == (30, 20)
    assert cfg.data.p_in == 0.5 and cfg.data.p_out is None
    assert cfg.data.strict is False
    assert cfg.sweep.alpha == [0.1, 1.0]


def test_text_round_trip():
    cfg = RunConfig()
    cfg.set("loss.alpha", "0.125").set("encoder.variant", "gatedgcn").set("data.p_in", 0.3)
    assert parse_config(cfg.to_text()).to_dict() == cfg.to_dict()
    assert cfg.copy() is not cfg
    assert all(line.startswith("# ") for line in cfg.to_text("# ").splitlines())


@pytest.mark.parametrize("text", ["nokey = 1", "loss.bogus = 1", "seed = abc",
                                  "data.strict = maybe", "just words", "loss = 3"])
def test_bad_config_text(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_error_reports_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("seed = 1\nseed = x\n")


@pytest.mark.parametrize("key, value", [("ablation", "w/o"), ("corruption.r_N", "1.5"),
                                        ("loss.tau", "0"), ("loss.gamma", "0.5"),
                                        ("optim.epochs", "0"), ("encoder.heads", "3"),
                                        ("eval.pooling", "max")])
def test_validate_rejects(key, value):
    cfg = RunConfig().set(key, value)
    with pytest.raises(ConfigError):
        cfg.validate()


def test_load_and_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("seed = 2\n[optim]\nepochs = 9\n")
    cfg = load_config(p, ["optim.epochs=3", "loss.beta = 0.5"])
    assert (cfg.seed, cfg.optim.epochs, cfg.loss.beta) == (2, 3, 0.5)
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["optim.epochs"])
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")
