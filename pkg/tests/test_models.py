import math

import numpy as np
import pytest

from videossl.autodiff import grad_check, no_grad
from videossl.errors import BadMagicError, ShapeError, TruncatedFileError
from videossl.losses import one_hot, supervised_ce
from videossl.models import (
    Checkpoint,
    ParameterSet,
    TeacherConfig,
    TeacherNet2D,
    VideoNet3D,
    VideoNetConfig,
    init_params,
    load_teacher,
    read_checkpoint,
    save_teacher,
    write_checkpoint,
)

SMALL = VideoNetConfig(num_classes=5, embed_dim=3, clip_frames=2, clip_h=4, clip_w=4, block_channels=[3, 4])


def clips(rng, n, cfg=SMALL):
    return rng.standard_normal((n,) + cfg.clip_shape)


class TestConfig:
    def test_rejects_tiny_heads(self):
        with pytest.raises(ValueError):
            VideoNetConfig(num_classes=1)
        with pytest.raises(ValueError):
            VideoNetConfig(embed_dim=1)

    def test_rejects_indivisible_clip(self):
        with pytest.raises(ValueError, match="divisible"):
            VideoNetConfig(clip_h=30)


class TestVideoForward:
    def test_zero_heads_are_uniform(self, rng):
        model = VideoNet3D(SMALL, init_params(SMALL, 0, zero_heads=True))
        p, q = model.forward(clips(rng, 3))
        np.testing.assert_array_equal(p.data, np.full((3, 5), 1 / 5))
        np.testing.assert_array_equal(q.data, np.full((3, 3), 1 / 3))

    def test_rows_are_distributions(self, rng):
        model = VideoNet3D(SMALL, seed=1)
        p, q = model.forward(clips(rng, 6) * 50)
        for t in (p, q):
            assert (t.data >= 0).all()
            np.testing.assert_allclose(t.data.sum(axis=1), 1.0, atol=1e-9)

    def test_default_shapes(self, rng):
        model = VideoNet3D(VideoNetConfig(), seed=0)
        p, q = model.forward(rng.standard_normal((2, 3, 8, 32, 32)))
        assert p.shape == (2, 8) and q.shape == (2, 4)

    def test_shape_mismatch(self, rng):
        model = VideoNet3D(SMALL)
        with pytest.raises(ShapeError):
            model.forward(rng.standard_normal((1, 3, 2, 8, 8)))

    def test_first_layer_gradcheck(self, rng):
        model = VideoNet3D(SMALL, seed=2)
        x = clips(rng, 2)
        y = one_hot([1, 4], 5)
        w = model.params["block0.conv.weight"]
        err = grad_check(lambda: supervised_ce(model.forward(x)[0], y), [w], max_samples=40)
        assert err < 1e-5

    def test_dual_head_independence(self, rng):
        params = init_params(SMALL, 3)
        x = clips(rng, 4)
        p1, q1 = VideoNet3D(SMALL, params).forward(x)
        zeroed = params.copy()
        zeroed["embed_head.weight"].data[:] = 0.0
        p2, q2 = VideoNet3D(SMALL, zeroed).forward(x)
        np.testing.assert_array_equal(p1.data, p2.data)
        assert not np.array_equal(q1.data, q2.data)

    def test_predict_matches_forward_without_graph(self, rng):
        model = VideoNet3D(SMALL, seed=4)
        x = clips(rng, 5)
        # different batch splits may round differently inside the GEMM
        np.testing.assert_allclose(model.predict(x, batch_size=2), model.forward(x)[0].data,
                                   rtol=0, atol=1e-12)
        out = model.forward(x)[0]
        assert out.node is not None
        with no_grad():
            assert model.forward(x)[0].node is None


class TestInit:
    def test_same_seed_bit_identical(self):
        a, b = init_params(SMALL, 7), init_params(SMALL, 7)
        assert a.checksum() == b.checksum()
        for k in a:
            np.testing.assert_array_equal(a[k].data, b[k].data)

    def test_different_seeds_differ(self):
        assert init_params(SMALL, 7).checksum() != init_params(SMALL, 8).checksum()

    def test_fan_in_scaling(self):
        w = init_params(VideoNetConfig(), 0)["block0.conv.weight"].data
        assert w.shape == (16, 3, 3, 3, 3)
        assert abs(w.std() - 1 / math.sqrt(81)) < 0.2 / math.sqrt(81)
        assert abs(w.mean()) < 0.02

    def test_biases_zero(self):
        params = init_params(SMALL, 0)
        for name, p in params.items():
            if name.endswith("bias"):
                assert not p.data.any()

    def test_unique_names(self):
        ps = ParameterSet()
        ps.add("a", np.zeros(2))
        with pytest.raises(KeyError):
            ps.add("a", np.zeros(2))

    def test_zero_grad_exact(self):
        ps = init_params(SMALL, 0)
        for p in ps.values():
            p.grad = np.ones_like(p.data)
        ps.zero_grad()
        assert all(not p.grad.any() for p in ps.values())


class TestTeacher:
    def test_zero_teacher_uniform(self, rng):
        t = TeacherNet2D(TeacherConfig(num_classes=4), zero=True)
        h = t.forward(rng.standard_normal((3, 3, 8, 8)))
        np.testing.assert_array_equal(h.data, np.full((3, 4), 0.25))

    def test_freeze_stops_gradients(self, rng):
        t = TeacherNet2D(TeacherConfig(num_classes=4), seed=1).freeze()
        assert t.frozen
        h = t.forward(rng.standard_normal((2, 3, 8, 8)))
        assert h.node is None  # nothing to differentiate

    def test_rejects_bad_rank(self, rng):
        t = TeacherNet2D(TeacherConfig())
        with pytest.raises(ShapeError):
            t.forward(rng.standard_normal((2, 3, 1, 8, 8)))

    def test_save_load_roundtrip(self, tmp_path, rng):
        t = TeacherNet2D(TeacherConfig(num_classes=4), seed=5).freeze()
        save_teacher(tmp_path / "t.vsslc", t)
        back = load_teacher(tmp_path / "t.vsslc")
        assert back.frozen and back.checksum() == t.checksum()
        x = rng.standard_normal((2, 3, 8, 8))
        np.testing.assert_array_equal(back.forward(x).data, t.forward(x).data)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        params = {n: p.data for n, p in init_params(SMALL, 0).items()}
        vel = {n: np.full_like(a, 0.5) for n, a in params.items()}
        write_checkpoint(tmp_path / "c", Checkpoint(params, vel, 12, {"k": [1, 2.5]}))
        back = read_checkpoint(tmp_path / "c")
        assert list(back.params) == list(params)
        for n in params:
            np.testing.assert_array_equal(back.params[n], params[n])
            np.testing.assert_array_equal(back.velocities[n], vel[n])
        assert back.opt_step == 12 and back.extra == {"k": [1, 2.5]}

    def test_layout_prefix(self, tmp_path):
        write_checkpoint(tmp_path / "c", Checkpoint({"ab": np.array([1.0])}))
        raw = (tmp_path / "c").read_bytes()
        assert raw[:5] == b"VSSLC"
        assert raw[5:9] == (1).to_bytes(4, "little")
        assert raw[9:13] == (1).to_bytes(4, "little")  # param count
        assert raw[13:15] == (2).to_bytes(2, "little") and raw[15:17] == b"ab"
        assert raw[17:22] == b"VSSLT"

    def test_errors(self, tmp_path):
        write_checkpoint(tmp_path / "c", Checkpoint({"w": np.ones(3)}))
        raw = (tmp_path / "c").read_bytes()
        (tmp_path / "t").write_bytes(raw[:-3])
        with pytest.raises(TruncatedFileError):
            read_checkpoint(tmp_path / "t")
        (tmp_path / "m").write_bytes(b"XXXXX" + raw[5:])
        with pytest.raises(BadMagicError):
            read_checkpoint(tmp_path / "m")
