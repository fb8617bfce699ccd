"""Clip / video Top-1, per-class accuracy and confident-prediction counts.

Models only need a ``predict(clips) -> probabilities`` method, where clips
is a normalized float array [N, 3, T, H, W].
"""

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .data import DatasetManifest, VideoSample, center_clip, normalize
from .errors import ShapeError


@dataclass
class ClipGeometry:
    clip_frames: int = 8
    crop_h: int = 32
    crop_w: int = 32


@dataclass
class MetricsRecord:
    clip_top1: float
    video_top1: float
    per_class_top1: Dict[int, float] = field(default_factory=dict)
    confident_count: int = 0
    confident_correct: int = 0


def _batched_predict(model, clips_fn, n: int, batch_size: int) -> np.ndarray:
    out = [model.predict(clips_fn(i, min(i + batch_size, n))) for i in range(0, n, batch_size)]
    return np.concatenate(out) if out else np.zeros((0, 0))


def center_clip_probs(model, samples: Sequence[VideoSample], manifest: DatasetManifest,
                      geom: ClipGeometry, batch_size: int = 32) -> np.ndarray:
    def clips(lo, hi):
        batch = np.stack([center_clip(s.video, geom.clip_frames, geom.crop_h, geom.crop_w)
                          for s in samples[lo:hi]])
        return normalize(batch, manifest)

    return _batched_predict(model, clips, len(samples), batch_size)


def _percent(correct, total) -> float:
    return 100.0 * correct / total if total else 0.0


def clip_top1(model, samples, manifest, geom: ClipGeometry, probs: Optional[np.ndarray] = None) -> float:
    """Top-1 of the spatio-temporally centred clip; ties go to the lowest class."""
    if probs is None:
        probs = center_clip_probs(model, samples, manifest, geom)
    labels = np.array([s.class_label for s in samples])
    return _percent(int((probs.argmax(axis=1) == labels).sum()), len(samples))


def video_clip_starts(frames: int, clip_frames: int) -> List[int]:
    n = frames // clip_frames
    if n == 0:
        raise ShapeError(f"video of {frames} frames is shorter than one {clip_frames}-frame clip")
    return [i * clip_frames for i in range(n)]


def video_probs(model, samples, manifest, geom: ClipGeometry, batch_size: int = 32) -> np.ndarray:
    """Average class probabilities over consecutive non-overlapping centre-cropped clips."""
    out = []
    for s in samples:
        starts = video_clip_starts(s.video.shape[1], geom.clip_frames)
        clips = np.stack([center_clip(s.video, geom.clip_frames, geom.crop_h, geom.crop_w, start=t)
                          for t in starts])
        out.append(model.predict(normalize(clips, manifest)).mean(axis=0))
    return np.stack(out) if out else np.zeros((0, 0))


def video_top1(model, samples, manifest, geom: ClipGeometry) -> float:
    probs = video_probs(model, samples, manifest, geom)
    labels = np.array([s.class_label for s in samples])
    return _percent(int((probs.argmax(axis=1) == labels).sum()), len(samples))


def per_class_top1(probs: np.ndarray, labels: Sequence[int], num_classes: int) -> Dict[int, float]:
    labels = np.asarray(labels)
    pred = probs.argmax(axis=1)
    return {
        c: _percent(int((pred[labels == c] == c).sum()), int((labels == c).sum()))
        for c in range(num_classes) if (labels == c).any()
    }


def confident_counts(probs: np.ndarray, labels: Sequence[int], threshold: float) -> Tuple[int, int]:
    conf = probs.max(axis=1) > threshold
    correct = conf & (probs.argmax(axis=1) == np.asarray(labels))
    return int(conf.sum()), int(correct.sum())


def confident_stats(model, samples, manifest, threshold: float = 0.95,
                    geom: Optional[ClipGeometry] = None) -> Tuple[int, int]:
    """(count with max p > threshold, how many of those are correct) over centre clips."""
    geom = geom or ClipGeometry()
    probs = center_clip_probs(model, samples, manifest, geom)
    return confident_counts(probs, [s.class_label for s in samples], threshold)


def confident_ratio(count: int, correct: int) -> str:
    return "n/a" if count == 0 else f"{100.0 * correct / count:.1f}"


def evaluate(model, samples, manifest, geom: ClipGeometry, num_classes: int,
             threshold: float = 0.95, with_video: bool = True) -> MetricsRecord:
    probs = center_clip_probs(model, samples, manifest, geom)
    labels = [s.class_label for s in samples]
    count, correct = confident_counts(probs, labels, threshold) if len(samples) else (0, 0)
    return MetricsRecord(
        clip_top1=clip_top1(model, samples, manifest, geom, probs=probs),
        video_top1=video_top1(model, samples, manifest, geom) if with_video else float("nan"),
        per_class_top1=per_class_top1(probs, labels, num_classes) if len(samples) else {},
        confident_count=count,
        confident_correct=correct,
    )


def per_class_delta(a: Dict[int, float], b: Dict[int, float]) -> List[Tuple[int, float]]:
    """(class, b - a) pairs sorted by delta descending, then class id."""
    deltas = [(c, b[c] - a[c]) for c in sorted(set(a) & set(b))]
    return sorted(deltas, key=lambda kv: (-kv[1], kv[0]))


def write_per_class_report(path, a: Dict[int, float], b: Dict[int, float], names: Dict[int, str]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["class_id", "class_name", "top1_a", "top1_b", "delta"])
        for c, d in per_class_delta(a, b):
            w.writerow([c, names.get(c, str(c)), repr(float(a[c])), repr(float(b[c])), repr(float(d))])
