import pytest

from videossl.config import RunConfig, from_flat, load_config, parse_config_text, save_config, write_config_text
from videossl.data import SynthVideoSpec
from videossl.errors import ConfigError
from videossl.losses import LossSchedule, PseudoLabelRule
from videossl.models import VideoNetConfig
from videossl.optim import SgdConfig
from videossl.trainer import Method, TrainConfig


def test_default_round_trip():
    cfg = RunConfig()
    assert parse_config_text(write_config_text(cfg)) == cfg


def test_custom_round_trip(tmp_path):
    cfg = RunConfig(
        train=TrainConfig(method=Method.SD, total_iterations=123, batch_size=6, label_fraction=0.05,
                          data_seed=3, init_seed=4, train_seed=5, eval_every=7,
                          model=VideoNetConfig(clip_frames=4, clip_h=16, clip_w=16, block_channels=[2, 3]),
                          pl=PseudoLabelRule(target_value=2.5, delta=0.9, detach_targets=False),
                          schedule=LossSchedule(lambda_d=0.5, tau_fraction=0.25, warmup_mode="linear"),
                          optim=SgdConfig(lr0=0.1, momentum=0.5, weight_decay=0.0, decay_every=17)),
        data=SynthVideoSpec(num_shapes=3, num_motions=3, frames_per_video=10, gen_h=20, gen_w=22,
                            noise_std=0.01, seed=99),
        n_per_class=7, n_test_per_class=2,
    )
    save_config(tmp_path / "c.txt", cfg)
    assert load_config(tmp_path / "c.txt") == cfg


def test_dotted_keys_present():
    text = write_config_text(RunConfig())
    for key in ("optim.lr0", "pl.delta", "schedule.tau_fraction", "data.noise_std", "model.block_channels",
                "method", "total_iterations"):
        assert f"\n{key} = " in "\n" + text


def test_partial_file_uses_defaults():
    cfg = parse_config_text("# comment\nmethod = pl\n\noptim.lr0 = 0.5  # trailing\n")
    assert cfg.train.method is Method.PL and cfg.train.optim.lr0 == 0.5
    assert cfg.train.batch_size == 32


@pytest.mark.parametrize("text", ["optim.lr = 0.1", "bogus = 1", "model.num_classes = 3", "nothing"])
def test_unknown_or_malformed(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


@pytest.mark.parametrize("text", ["batch_size = x", "batch_size = 3", "optim.momentum = 1.5",
                                  "method = FANCY", "pl.detach_targets = maybe"])
def test_bad_values(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("seed = 1\nseed = 2")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.txt")


def test_from_flat_rejects_unknown():
    with pytest.raises(ConfigError):
        from_flat({"data.colour": "red"})
