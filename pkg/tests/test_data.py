import hashlib

import numpy as np
import pytest

from conftest import TINY_SPEC
from videossl.errors import BadMagicError, ShapeError, TruncatedFileError, VersionMismatchError
from videossl.data import (
    SHAPES,
    SynthDataset,
    SynthVideoSpec,
    augment_clip,
    build_dataset,
    center_clip,
    class_names,
    denormalize,
    generate_dataset,
    normalize,
    read_dataset,
    render_video,
    sample_frame,
    split_labels,
    write_dataset,
)


@pytest.fixture(scope="module")
def default_pool():
    # full-size training pool, no test split (about 3 s to render)
    return generate_dataset(SynthVideoSpec(), 100, 0)


class TestGenerate:
    def test_default_counts(self, default_pool):
        samples, m = default_pool
        assert len(samples) == 800 and len(m.train_ids) == 800
        assert m.counts_per_class == [100] * 8
        assert np.bincount(m.train_labels).tolist() == [100] * 8

    def test_label_structure(self, default_pool):
        samples, _ = default_pool
        for s in samples[:40]:
            assert s.class_label == s.shape_label * 2 + s.class_label % 2
            assert s.video.shape == (3, 24, 40, 40)

    def test_pixel_bounds(self, default_pool):
        samples, _ = default_pool
        hi = 1 + 4 * 0.05
        for s in samples:
            assert s.video.min() >= 0.0 and s.video.max() <= hi

    def test_deterministic(self):
        a, _ = generate_dataset(TINY_SPEC, 2, 1)
        b, _ = generate_dataset(TINY_SPEC, 2, 1)
        for x, y in zip(a, b):
            assert x.video.tobytes() == y.video.tobytes()

    def test_seed_changes_pixels(self):
        a, _ = generate_dataset(TINY_SPEC, 2, 0)
        b, _ = generate_dataset(SynthVideoSpec(frames_per_video=8, gen_h=12, gen_w=12, seed=4), 2, 0)
        assert a[0].video.tobytes() != b[0].video.tobytes()

    def test_shapes_are_distinct(self):
        # same random draws for every shape, so only the outline differs
        spec = SynthVideoSpec(num_shapes=4, num_motions=1, noise_std=0.0)
        videos = [render_video(spec, shape, 0, np.random.default_rng(0)) for shape in range(4)]
        digests = {hashlib.sha1(v.tobytes()).hexdigest() for v in videos}
        assert len(digests) == 4
        for a in range(4):
            for b in range(a + 1, 4):
                assert np.abs(videos[a] - videos[b]).max() > 0.25

    def test_rejects_tiny_classes(self):
        with pytest.raises(ValueError):
            generate_dataset(TINY_SPEC, 1, 1)

    def test_class_names(self):
        names = class_names(SynthVideoSpec())
        assert names[0] == "square-drift" and names[7] == "cross-orbit"
        assert len(set(names.values())) == 8 and SHAPES[:4] == ("square", "circle", "triangle", "cross")


class TestSplit:
    def test_ten_percent(self, default_pool):
        _, m = default_pool
        s = split_labels(m, 0.10, 0)
        assert len(s.labeled_ids) == 80 and len(s.unlabeled_ids) == 720
        labels = dict(zip(m.train_ids, m.train_labels))
        assert np.bincount([labels[i] for i in s.labeled_ids]).tolist() == [10] * 8

    def test_full_labels(self, default_pool):
        s = split_labels(default_pool[1], 1.0, 0)
        assert s.unlabeled_ids == [] and len(s.labeled_ids) == 800

    def test_disjoint_and_covering(self, default_pool):
        _, m = default_pool
        for p in (0.01, 0.05, 0.1, 0.37, 0.5):
            s = split_labels(m, p, 3)
            x, z = set(s.labeled_ids), set(s.unlabeled_ids)
            assert not x & z and x | z == set(m.train_ids)
            assert len(x) == int(np.floor(p * 800 + 0.5))

    def test_stratified_adjustment(self):
        # 3 classes of 3: round(0.5 * 3) = 2 each = 6, but round(0.5 * 9) = 5
        _, m = generate_dataset(SynthVideoSpec(num_shapes=3, num_motions=1, frames_per_video=4,
                                               gen_h=8, gen_w=8), 3, 0)
        s = split_labels(m, 0.5, 0)
        labels = dict(zip(m.train_ids, m.train_labels))
        counts = np.bincount([labels[i] for i in s.labeled_ids], minlength=3)
        assert counts.sum() == 5 and counts.max() - counts.min() <= 1

    def test_deterministic(self, default_pool):
        _, m = default_pool
        assert split_labels(m, 0.1, 5).labeled_ids == split_labels(m, 0.1, 5).labeled_ids

    def test_overlap_between_seeds(self, default_pool):
        # per class 10 of 100 twice: expected overlap 10 * 10/100 = 1 per class, 8 total
        _, m = default_pool
        overlaps = []
        for t in range(100):
            a = set(split_labels(m, 0.1, 2 * t).labeled_ids)
            b = set(split_labels(m, 0.1, 2 * t + 1).labeled_ids)
            assert a != b
            overlaps.append(len(a & b))
        assert 4.0 <= np.mean(overlaps) <= 12.0


class TestClips:
    def test_augment_identity(self, rng):
        v = rng.random((3, 6, 5, 7))
        np.testing.assert_array_equal(augment_clip(v, 6, 5, 7, rng), v)

    def test_augment_start_frequency(self, rng):
        # tag every frame with its index so the start can be read back
        v = np.broadcast_to(np.arange(24.0)[None, :, None, None], (3, 24, 40, 40))
        starts = [augment_clip(v, 8, 32, 32, rng)[0, 0, 0, 0] for _ in range(10_000)]
        assert set(starts) == set(range(17))

    def test_augment_shape_and_contiguity(self, rng):
        v = rng.random((3, 24, 40, 40))
        c = augment_clip(v, 8, 32, 32, rng)
        assert c.shape == (3, 8, 32, 32)
        v2 = np.broadcast_to(np.arange(24.0)[None, :, None, None], (3, 24, 40, 40))
        t = augment_clip(v2, 8, 32, 32, rng)[0, :, 0, 0]
        np.testing.assert_array_equal(np.diff(t), 1.0)

    def test_augment_too_big(self, rng):
        with pytest.raises(ShapeError):
            augment_clip(rng.random((3, 4, 8, 8)), 5, 8, 8, rng)

    def test_center_clip(self, rng):
        v = rng.random((3, 24, 40, 40))
        np.testing.assert_array_equal(center_clip(v, 8, 32, 32), v[:, 8:16, 4:36, 4:36])
        np.testing.assert_array_equal(center_clip(v, 24, 40, 40), v)
        assert center_clip(v, 8, 32, 32).tobytes() == center_clip(v, 8, 32, 32).tobytes()

    def test_sample_frame(self, rng):
        clip = rng.random((3, 8, 4, 4))
        counts = np.zeros(8)
        for _ in range(10_000):
            f = sample_frame(clip, rng)
            idx = [i for i in range(8) if np.array_equal(clip[:, i], f)]
            counts[idx[0]] += 1
        freq = counts / counts.sum()
        assert freq.min() >= 0.10 and freq.max() <= 0.15
        one = rng.random((3, 1, 4, 4))
        np.testing.assert_array_equal(sample_frame(one, rng), one[:, 0])


class TestNormalize:
    def test_training_pool_stats(self, default_pool):
        samples, m = default_pool
        x = normalize(np.stack([s.video for s in samples]), m)
        means = x.mean(axis=(0, 2, 3, 4))
        stds = x.std(axis=(0, 2, 3, 4))
        np.testing.assert_allclose(means, 0.0, atol=1e-6)
        np.testing.assert_allclose(stds, 1.0, atol=1e-6)

    def test_round_trip(self, default_pool, rng):
        _, m = default_pool
        x = rng.random((2, 3, 4, 5, 5))
        np.testing.assert_allclose(denormalize(normalize(x, m), m), x, atol=1e-12, rtol=0)
        assert normalize(x, m).tobytes() == normalize(x, m).tobytes()

    def test_channel_axis(self, default_pool, rng):
        _, m = default_pool
        frames = rng.random((3, 3, 4, 4))
        np.testing.assert_array_equal(normalize(frames, m)[:, 1], (frames[:, 1] - m.channel_mean[1]) / m.channel_std[1])


class TestIO:
    @pytest.fixture
    def small(self):
        return build_dataset(TINY_SPEC, n_per_class=1 + 1, n_test_per_class=0, label_fraction=0.5)

    def test_round_trip(self, small, tmp_path):
        small = SynthDataset(small.spec, small.samples[:10], small.manifest)
        write_dataset(tmp_path / "d", small)
        back = read_dataset(tmp_path / "d")
        assert back.spec == small.spec and back.manifest == small.manifest
        assert len(back) == 10
        for a, b in zip(small.samples, back.samples):
            assert (a.id, a.class_label, a.shape_label) == (b.id, b.class_label, b.shape_label)
            assert a.video.tobytes() == b.video.tobytes()

    def test_truncated(self, small, tmp_path):
        write_dataset(tmp_path / "d", small)
        raw = (tmp_path / "d").read_bytes()
        for cut in (3, 20, len(raw) // 2, len(raw) - 1):
            (tmp_path / "t").write_bytes(raw[:cut])
            with pytest.raises(TruncatedFileError):
                read_dataset(tmp_path / "t")

    def test_bad_magic(self, small, tmp_path):
        write_dataset(tmp_path / "d", small)
        raw = bytearray((tmp_path / "d").read_bytes())
        raw[0:5] = b"VSSLX"
        (tmp_path / "m").write_bytes(bytes(raw))
        with pytest.raises(BadMagicError):
            read_dataset(tmp_path / "m")

    def test_version(self, small, tmp_path):
        write_dataset(tmp_path / "d", small)
        raw = bytearray((tmp_path / "d").read_bytes())
        raw[5:9] = (2).to_bytes(4, "little")
        (tmp_path / "v").write_bytes(bytes(raw))
        with pytest.raises(VersionMismatchError):
            read_dataset(tmp_path / "v")


class TestManifest:
    def test_disjoint_and_balanced(self, tiny_dataset):
        m = tiny_dataset.manifest
        x, z, t = set(m.labeled_ids), set(m.unlabeled_ids), set(m.test_ids)
        assert not (x & z or x & t or z & t)
        labels = {s.id: s.class_label for s in tiny_dataset.samples}
        for ids in (m.labeled_ids, m.unlabeled_ids, m.test_ids):
            counts = np.bincount([labels[i] for i in ids], minlength=8)
            assert counts.max() - counts.min() <= 1
