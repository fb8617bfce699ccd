import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from videossl.data import SynthVideoSpec, build_dataset  # noqa: E402
from videossl.evaluation import ClipGeometry  # noqa: E402
from videossl.models import VideoNetConfig  # noqa: E402
from videossl.optim import SgdConfig  # noqa: E402
from videossl.trainer import Method, TrainConfig, pretrain_teacher  # noqa: E402

# Small enough that a train step takes milliseconds.
TINY_SPEC = SynthVideoSpec(frames_per_video=8, gen_h=12, gen_w=12, seed=3)
TINY_GEOM = ClipGeometry(4, 8, 8)
TINY_MODEL = VideoNetConfig(clip_frames=4, clip_h=8, clip_w=8, block_channels=[4, 6])


def tiny_config(method=Method.VIDEOSSL, **kw) -> TrainConfig:
    base = dict(method=method, total_iterations=30, batch_size=8, label_fraction=0.25,
                eval_every=10, model=TINY_MODEL)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset():
    return build_dataset(TINY_SPEC, n_per_class=4, n_test_per_class=2, label_fraction=0.25,
                         split_seed=0)


@pytest.fixture(scope="session")
def tiny_teacher(tiny_dataset):
    return pretrain_teacher(tiny_dataset, epochs=2, seed=0, batch_size=8, geom=TINY_GEOM,
                            optim=SgdConfig(lr0=0.05, decay_every=10**9)).teacher


# one line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
