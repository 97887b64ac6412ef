import pytest

from casesim.config import DEFAULTS, PipelineConfig
from casesim.errors import ConfigError


def test_defaults():
    cfg = PipelineConfig.load()
    assert cfg.repeats == 30 and cfg.seed == 0
    assert cfg.cnn_spec().flatten_length == 2048
    assert cfg.split_spec(3).seed == 3
    assert cfg.cluster_params().min_cluster_size == 10
    assert cfg.llm_profile("llm_b").token_budget == 6000
    assert DEFAULTS["repeats"] == 30


def test_file_and_dotted_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("seed: 4\ntrain:\n  lr: 0.01\ncorpus: data\n")
    cfg = PipelineConfig.load(path, {"train.max_epochs": 5, "clustering.min_cluster_size": 3})
    hyper = cfg.train_hyper(9)
    assert (hyper.lr, hyper.max_epochs, hyper.seed) == (0.01, 5, 9)
    assert cfg.cluster_params().min_cluster_size == 3
    assert cfg.seed == 4
    # relative paths resolve against the config file's directory
    assert cfg.path("corpus") == tmp_path / "data"
    assert cfg.path("labeled_pairs") is None


@pytest.mark.parametrize("overrides", [
    {"repeats": 0},
    {"backends": {}},
    {"image_side": 30},
    {"split.test_frac": 0.5},
    {"train.bogus": 1},
    {"cnn.bogus": 1},
    {"llm.llm_a.temperature": 5},
])
def test_invalid_configs(overrides):
    with pytest.raises(ConfigError):
        cfg = PipelineConfig.load(overrides=overrides)
        cfg.train_hyper(0)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        PipelineConfig.load(tmp_path / "nope.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        PipelineConfig.load(tmp_path / "list.yaml")
