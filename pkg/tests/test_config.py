import pytest

from kinn.config import ConfigError, config_from_dict, dump_config, load_config


def test_defaults():
    cfg = load_config(None)
    assert cfg.network.widths == [64, 64, 64]
    assert cfg.network.window == 3
    assert cfg.dataset.season == 48
    assert cfg.kinn.mode == "stack"


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown key network.width"):
        config_from_dict({"network": {"width": [3]}})
    with pytest.raises(ConfigError, match="unknown section"):
        config_from_dict({"networks": {}})


def test_overrides_and_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("network:\n  epochs: 5\n  widths: [4, 4]\n")
    cfg = load_config(path, ["network.epochs=7", "kinn.mode=append", "output_dir=res"])
    assert cfg.network.epochs == 7
    assert cfg.network.widths == [4, 4]
    assert cfg.kinn.mode == "append"
    assert cfg.output_dir == "res"
    assert load_config(None, ["dataset.amplitude=3"]).dataset.amplitude == 3.0


@pytest.mark.parametrize("override", [
    "network.epochs=-1",
    "network.widths=[]",
    "network.widths=[4, 0]",
    "kinn.mode=sideways",
    "dataset.ar_coef=1.0",
    "dataset.train_fraction=0.8",
    "experiment.ids=[6]",
    "expert.noise_distribution=cauchy",
    "network.epochs=abc",
    "dataset.kind=csv",
    "noequals",
    "nosection=1",
])
def test_invalid_values(override):
    with pytest.raises(ConfigError):
        load_config(None, [override])


def test_bad_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("network: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_dump_round_trip(tmp_path):
    cfg = load_config(None, ["network.epochs=3"])
    path = tmp_path / "d.yaml"
    path.write_text(dump_config(cfg))
    assert load_config(path).to_dict() == cfg.to_dict()
