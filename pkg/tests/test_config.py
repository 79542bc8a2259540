from pathlib import Path

import numpy as np
import pytest

from ganqp import config as cfgio
from ganqp.harness import TrainConfig, dirac, discrete, gaussian, grid25, ring8
from ganqp.harness.estimation import EstimateConfig


@pytest.mark.parametrize("raw,value", [
    ("true", True), ("False", False), ("none", None), ("12", 12), ("-0.5", -0.5), ("1e-4", 1e-4),
    ("64,64", (64, 64)), ("3.0,", (3.0,)), ("()", ()), ("L1", "L1"), ("auto", "auto"),
])
def test_parse_value(raw, value):
    assert cfgio.parse_value(raw) == value


def test_parse_text_comments_and_duplicates():
    values = cfgio.parse_text("# comment\nobjective = gan_qp  # trailing\n\nlam = 2\n")
    assert values == {"objective": "gan_qp", "lam": 2}
    with pytest.raises(cfgio.ConfigError):
        cfgio.parse_text("lam = 1\nlam = 2\n")
    with pytest.raises(cfgio.ConfigError):
        cfgio.parse_text("just words\n")


def test_raw_keys_skip_tuple_parsing():
    values = cfgio.parse_text("p = gaussian:0,0\n", raw_keys=("p",))
    assert values["p"] == "gaussian:0,0"


def test_build_coerces_and_rejects_unknown_keys():
    cfg = cfgio.build(TrainConfig, {"critic_hidden": 32, "lam": 3, "stop_guides": "false"})
    assert cfg.critic_hidden == (32,) and cfg.lam == 3.0 and cfg.stop_guides is False
    with pytest.raises(cfgio.ConfigError):
        cfgio.build(TrainConfig, {"learning_rate": 0.1})
    with pytest.raises(cfgio.ConfigError):
        cfgio.build(TrainConfig, {"objective": "bigan_qp"})
    with pytest.raises(cfgio.ConfigError):
        cfgio.build(TrainConfig, {"batch_size": "many"})


def test_override_none_keeps_value():
    cfg = cfgio.build(TrainConfig, {"seed": 4}, seed=None)
    assert cfg.seed == 4
    assert cfgio.build(TrainConfig, {"seed": 4}, seed=9).seed == 9


@pytest.mark.parametrize("cfg", [
    TrainConfig().resolved(),
    TrainConfig(objective="bigan_qp", encoder_hidden=(64, 64), beta=(1.5,)).resolved(),
    TrainConfig(data="dirac", alpha=(0.0, 1.0), beta=(2.0, 2.0), lam=0.25).resolved(),
    TrainConfig(data="discrete", support=(0.0, 0.0, 1.0, 0.5), probs=(0.25, 0.75)).resolved(),
])
def test_resolved_config_round_trip(tmp_path, cfg):
    cfgio.write_resolved(tmp_path / "r.txt", cfg)
    back = cfgio.build(TrainConfig, cfgio.read_config(tmp_path / "r.txt"))
    assert back == cfg


def test_estimate_config_round_trip(tmp_path):
    cfg = EstimateConfig(lam=2.0, hidden=(16,), critic_form="pairwise")
    cfgio.write_resolved(tmp_path / "e.txt", cfg)
    assert cfgio.build(EstimateConfig, cfgio.read_config(tmp_path / "e.txt")) == cfg


@pytest.mark.parametrize("spec,dist", [
    ("dirac:0", dirac([0.0])),
    ("dirac:1,2", dirac([1.0, 2.0])),
    ("gaussian:0,0", gaussian([0.0, 0.0])),
    ("gaussian:0,0;2,0,0,1", gaussian([0.0, 0.0], [[2, 0], [0, 1]])),
    ("ring8", ring8()),
    ("ring8:3,0.1", ring8(3.0, 0.1)),
    ("grid25:2,0.05", grid25(2.0, 0.05)),
    ("discrete:0,0@0.2;1,0@0.8", discrete([[0, 0], [1, 0]], [0.2, 0.8])),
])
def test_distribution_specs(spec, dist):
    parsed = cfgio.parse_distribution(spec)
    assert parsed == dist
    assert cfgio.parse_distribution(cfgio.format_distribution(parsed)) == dist


@pytest.mark.parametrize("spec", ["", "moons", "dirac:", "gaussian:0,0;1,0", "discrete:0,0@x", "ring8:1,2,3",
                                  "discrete:0,0@0.5;1@0.5"])
def test_bad_distribution_specs(spec):
    with pytest.raises(cfgio.ConfigError):
        cfgio.parse_distribution(spec)


def test_format_value_single_tuple_round_trip():
    assert cfgio.parse_value(cfgio.format_value((3.0,))) == (3.0,)
    assert cfgio.parse_value(cfgio.format_value(np.float64(0.1))) == 0.1


def test_shipped_configs_parse():
    root = Path(__file__).resolve().parents[1] / "configs"
    for name in ("ring8_gan_qp.txt", "ring8_bigan_qp.txt", "dirac_sgan.txt"):
        cfg = cfgio.build(TrainConfig, cfgio.read_config(root / name))
        assert cfg.resolved().total_gen_steps > 0
    values = cfgio.read_config(root / "dirac_estimate.txt", raw_keys=("p", "q"))
    assert cfgio.parse_distribution(values.pop("p")) == dirac([0.0])
    values.pop("q"), values.pop("objective")
    assert cfgio.build(EstimateConfig, values).lam == 1.0
