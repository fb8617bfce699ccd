"""Synthetic shape x motion videos, label splits, clip sampling and file I/O.

A video class is the pair (shape, motion); the frame teacher only learns
shapes, so it can narrow a video down to the ``num_motions`` classes that
share a shape but never tell them apart.
"""

import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .autodiff.serialize import check_magic, read_array, read_exact, write_tensor
from .errors import ShapeError, VersionMismatchError

SHAPES = ("square", "circle", "triangle", "cross", "diamond", "ring")
MOTIONS = ("drift", "orbit", "oscillate", "pulse")

DATASET_MAGIC = b"VSSLD"
DATASET_VERSION = 1


@dataclass(frozen=True)
class SynthVideoSpec:
    num_shapes: int = 4
    num_motions: int = 2
    frames_per_video: int = 24
    gen_h: int = 40
    gen_w: int = 40
    noise_std: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.num_shapes <= len(SHAPES):
            raise ValueError(f"num_shapes must be in [1, {len(SHAPES)}]")
        if not 1 <= self.num_motions <= len(MOTIONS):
            raise ValueError(f"num_motions must be in [1, {len(MOTIONS)}]")
        if self.num_classes < 2:
            raise ValueError("need at least two video classes")

    @property
    def num_classes(self) -> int:
        return self.num_shapes * self.num_motions

    def class_name(self, label: int) -> str:
        shape, motion = divmod(label, self.num_motions)
        return f"{SHAPES[shape]}-{MOTIONS[motion]}"


@dataclass
class VideoSample:
    id: int
    class_label: int
    shape_label: int
    video: np.ndarray  # [3, frames, H, W], values in [0, 1 + 4 * noise_std]


@dataclass
class DatasetManifest:
    counts_per_class: List[int]
    train_ids: List[int]
    train_labels: List[int]
    test_ids: List[int]
    channel_mean: List[float]
    channel_std: List[float]
    label_fraction: float = 1.0
    labeled_ids: List[int] = field(default_factory=list)
    unlabeled_ids: List[int] = field(default_factory=list)
    split_seed: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        return cls(**json.loads(text))


@dataclass
class SynthDataset:
    spec: SynthVideoSpec
    samples: List[VideoSample]
    manifest: DatasetManifest

    def __post_init__(self):
        self._by_id = {s.id: s for s in self.samples}

    def __getitem__(self, video_id: int) -> VideoSample:
        return self._by_id[video_id]

    def __len__(self):
        return len(self.samples)

    def subset(self, ids: Sequence[int]) -> List[VideoSample]:
        return [self._by_id[i] for i in ids]

    def with_manifest(self, manifest: DatasetManifest) -> "SynthDataset":
        return SynthDataset(self.spec, self.samples, manifest)


# --- rendering ------------------------------------------------------------


def _sdf(shape: str, dx, dy, r):
    """Approximate signed distance (pixels) to the shape outline, negative inside."""
    if shape == "circle":
        return np.hypot(dx, dy) - r
    if shape == "square":
        return np.maximum(np.abs(dx), np.abs(dy)) - 0.85 * r
    if shape == "triangle":
        ri = 0.55 * r
        return np.maximum.reduce([dy - ri, 0.866 * dx - 0.5 * dy - ri, -0.866 * dx - 0.5 * dy - ri])
    if shape == "cross":
        w = 0.35 * r
        ax, ay = np.abs(dx), np.abs(dy)
        return np.minimum(np.maximum(ax - r, ay - w), np.maximum(ax - w, ay - r))
    if shape == "diamond":
        return (np.abs(dx) + np.abs(dy) - 1.2 * r) / math.sqrt(2)
    if shape == "ring":
        return np.abs(np.hypot(dx, dy) - r) - 0.3 * r
    raise ValueError(shape)


def _trajectory(motion: str, frames: int, lo: float, hi: float, rng):
    """Per-frame centre (cy, cx) and size multiplier inside the box [lo, hi]^2."""
    t = np.arange(frames, dtype=np.float64)
    span = hi - lo
    scale = np.ones(frames)
    if motion == "drift":
        travel = 0.8 * span
        direction = rng.choice([-1.0, 1.0])
        start = lo + rng.uniform(0, span - travel)
        cx = start + travel * t / max(frames - 1, 1)
        if direction < 0:
            cx = cx[::-1].copy()
        cy = np.full(frames, rng.uniform(lo, hi))
    elif motion == "orbit":
        radius = 0.25 * span
        c = rng.uniform(lo + radius, hi - radius, size=2)
        omega = rng.choice([-1.0, 1.0]) * 2 * math.pi / 12
        phase = rng.uniform(0, 2 * math.pi)
        cy = c[0] + radius * np.sin(omega * t + phase)
        cx = c[1] + radius * np.cos(omega * t + phase)
    elif motion == "oscillate":
        amp = 0.3 * span
        cy0 = rng.uniform(lo + amp, hi - amp)
        phase = rng.uniform(0, 2 * math.pi)
        cy = cy0 + amp * np.sin(2 * math.pi * t / 10 + phase)
        cx = np.full(frames, rng.uniform(lo, hi))
    elif motion == "pulse":
        cy = np.full(frames, rng.uniform(lo, hi))
        cx = np.full(frames, rng.uniform(lo, hi))
        scale = 1 + 0.35 * np.sin(2 * math.pi * t / 12 + rng.uniform(0, 2 * math.pi))
    else:
        raise ValueError(motion)
    return cy, cx, scale


def render_video(spec: SynthVideoSpec, shape_label: int, motion: int, rng) -> np.ndarray:
    f, h, w = spec.frames_per_video, spec.gen_h, spec.gen_w
    size = rng.uniform(4.5, 6.5)
    color = rng.uniform(0.55, 1.0, size=3)
    background = rng.uniform(0.0, 0.25)
    lo, hi = 0.3 * min(h, w), 0.7 * min(h, w)
    cy, cx, scale = _trajectory(MOTIONS[motion], f, lo, hi, rng)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64) + 0.5
    dy = yy[None] - cy[:, None, None]
    dx = xx[None] - cx[:, None, None]
    alpha = np.clip(0.5 - _sdf(SHAPES[shape_label], dx, dy, size * scale[:, None, None]), 0.0, 1.0)
    clean = background + (color[:, None, None, None] - background) * alpha[None]
    sigma = spec.noise_std
    noise = np.clip(rng.normal(0.0, sigma, size=clean.shape), -4 * sigma, 4 * sigma)
    return np.maximum(clean + noise, 0.0)


def video_rng(seed: int, video_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, video_id]))


def channel_stats(videos: Sequence[np.ndarray]):
    """Two-pass per-channel mean and population std over whole videos."""
    count = sum(v[0].size for v in videos)
    mean = sum(v.reshape(v.shape[0], -1).sum(axis=1) for v in videos) / count
    var = sum(((v.reshape(v.shape[0], -1) - mean[:, None]) ** 2).sum(axis=1) for v in videos) / count
    return mean, np.sqrt(var)


def generate_dataset(spec: SynthVideoSpec, n_per_class: int, n_test_per_class: int):
    """Render the training pool and the test split; returns (samples, manifest).

    Ids are assigned round-robin over classes, training videos first. The
    returned manifest treats every training video as labeled (P = 1).
    """
    if n_per_class < 2:
        raise ValueError("n_per_class must be >= 2")
    if n_test_per_class < 0:
        raise ValueError("n_test_per_class must be >= 0")
    samples: List[VideoSample] = []
    train_ids, train_labels, test_ids = [], [], []
    next_id = 0
    for split, n in (("train", n_per_class), ("test", n_test_per_class)):
        for _ in range(n):
            for label in range(spec.num_classes):
                shape, motion = divmod(label, spec.num_motions)
                video = render_video(spec, shape, motion, video_rng(spec.seed, next_id))
                samples.append(VideoSample(next_id, label, shape, video))
                if split == "train":
                    train_ids.append(next_id)
                    train_labels.append(label)
                else:
                    test_ids.append(next_id)
                next_id += 1
    mean, std = channel_stats([s.video for s in samples[:len(train_ids)]])
    manifest = DatasetManifest(
        counts_per_class=[n_per_class] * spec.num_classes,
        train_ids=train_ids,
        train_labels=train_labels,
        test_ids=test_ids,
        channel_mean=mean.tolist(),
        channel_std=std.tolist(),
        label_fraction=1.0,
        labeled_ids=list(train_ids),
        unlabeled_ids=[],
    )
    return samples, manifest


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_labels(manifest: DatasetManifest, label_fraction: float, seed: int) -> DatasetManifest:
    """Stratified labeled/unlabeled split of the training pool."""
    if not 0 <= label_fraction <= 1:
        raise ValueError("label_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    labels = np.asarray(manifest.train_labels)
    ids = np.asarray(manifest.train_ids)
    classes = np.unique(labels)
    pool = [ids[labels == c] for c in classes]
    take = np.array([_round_half_up(label_fraction * len(p)) for p in pool])
    diff = _round_half_up(label_fraction * len(ids)) - int(take.sum())
    for ci in rng.permutation(len(classes)):
        if diff == 0:
            break
        step = 1 if diff > 0 else -1
        if 0 <= take[ci] + step <= len(pool[ci]):
            take[ci] += step
            diff -= step
    labeled = []
    for members, k in zip(pool, take):
        labeled.extend(rng.choice(members, size=int(k), replace=False).tolist())
    labeled_set = set(labeled)
    return replace(
        manifest,
        label_fraction=float(label_fraction),
        labeled_ids=sorted(int(i) for i in labeled),
        unlabeled_ids=[int(i) for i in ids if int(i) not in labeled_set],
        split_seed=int(seed),
    )


# --- clip sampling --------------------------------------------------------


def _check_clip(video, clip_frames, crop_h, crop_w):
    _, f, h, w = video.shape
    if clip_frames > f or crop_h > h or crop_w > w:
        raise ShapeError(f"clip ({clip_frames}, {crop_h}, {crop_w}) larger than video {video.shape}")


def augment_clip(video: np.ndarray, clip_frames: int, crop_h: int, crop_w: int, rng) -> np.ndarray:
    """Random temporal start and random spatial crop (temporal jittering + random crop)."""
    _check_clip(video, clip_frames, crop_h, crop_w)
    _, f, h, w = video.shape
    t0 = int(rng.integers(0, f - clip_frames + 1))
    y0 = int(rng.integers(0, h - crop_h + 1))
    x0 = int(rng.integers(0, w - crop_w + 1))
    return video[:, t0:t0 + clip_frames, y0:y0 + crop_h, x0:x0 + crop_w].copy()


def center_clip(video: np.ndarray, clip_frames: int, crop_h: int, crop_w: int,
                start: Optional[int] = None) -> np.ndarray:
    """Spatially centred crop; temporally centred unless ``start`` is given."""
    _check_clip(video, clip_frames, crop_h, crop_w)
    _, f, h, w = video.shape
    t0 = (f - clip_frames) // 2 if start is None else start
    y0, x0 = (h - crop_h) // 2, (w - crop_w) // 2
    return video[:, t0:t0 + clip_frames, y0:y0 + crop_h, x0:x0 + crop_w].copy()


def sample_frame(clip: np.ndarray, rng) -> np.ndarray:
    """One uniformly chosen frame [3, H, W] of a clip [3, T, H, W]."""
    return clip[:, int(rng.integers(0, clip.shape[1]))].copy()


def normalize(batch: np.ndarray, manifest: DatasetManifest, channel_axis: int = 1) -> np.ndarray:
    shape = [1] * batch.ndim
    shape[channel_axis] = -1
    mean = np.asarray(manifest.channel_mean).reshape(shape)
    std = np.asarray(manifest.channel_std).reshape(shape)
    return (batch - mean) / std


def denormalize(batch: np.ndarray, manifest: DatasetManifest, channel_axis: int = 1) -> np.ndarray:
    shape = [1] * batch.ndim
    shape[channel_axis] = -1
    return batch * np.asarray(manifest.channel_std).reshape(shape) + np.asarray(
        manifest.channel_mean).reshape(shape)


def build_dataset(spec: SynthVideoSpec, n_per_class: int = 100, n_test_per_class: int = 20,
                  label_fraction: Optional[float] = None, split_seed: int = 0) -> SynthDataset:
    samples, manifest = generate_dataset(spec, n_per_class, n_test_per_class)
    if label_fraction is not None:
        manifest = split_labels(manifest, label_fraction, split_seed)
    return SynthDataset(spec, samples, manifest)


# --- file I/O -------------------------------------------------------------

_SPEC_FMT = "<IIIIIdQ"


def write_dataset(path, dataset: SynthDataset) -> None:
    s = dataset.spec
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(struct.pack("<I", DATASET_VERSION))
        f.write(struct.pack(_SPEC_FMT, s.num_shapes, s.num_motions, s.frames_per_video,
                            s.gen_h, s.gen_w, s.noise_std, s.seed))
        blob = dataset.manifest.to_json().encode("utf-8")
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<Q", len(dataset.samples)))
        for sample in dataset.samples:
            f.write(struct.pack("<QHH", sample.id, sample.class_label, sample.shape_label))
            write_tensor(f, sample.video)


def read_dataset(path) -> SynthDataset:
    with open(path, "rb") as f:
        check_magic(f, DATASET_MAGIC)
        (version,) = struct.unpack("<I", read_exact(f, 4, "version"))
        if version != DATASET_VERSION:
            raise VersionMismatchError(f"dataset version {version}, expected {DATASET_VERSION}")
        fields = struct.unpack(_SPEC_FMT, read_exact(f, struct.calcsize(_SPEC_FMT), "spec"))
        spec = SynthVideoSpec(*fields)
        (n,) = struct.unpack("<I", read_exact(f, 4, "manifest length"))
        manifest = DatasetManifest.from_json(read_exact(f, n, "manifest").decode("utf-8"))
        (count,) = struct.unpack("<Q", read_exact(f, 8, "sample count"))
        samples = []
        for _ in range(count):
            vid, label, shape = struct.unpack("<QHH", read_exact(f, 12, "sample header"))
            samples.append(VideoSample(vid, label, shape, read_array(f)))
    return SynthDataset(spec, samples, manifest)


def class_names(spec: SynthVideoSpec) -> Dict[int, str]:
    return {c: spec.class_name(c) for c in range(spec.num_classes)}
