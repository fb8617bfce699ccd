"""Synthetic moving-shape videos: generation, label split, clips and the file format.

    python demos/02_synthetic_videos.py
"""

import tempfile
from pathlib import Path

import numpy as np

from videossl.data import (
    SynthVideoSpec, augment_clip, build_dataset, center_clip, class_names, read_dataset, sample_frame,
    write_dataset,
)

spec = SynthVideoSpec()
ds = build_dataset(spec, n_per_class=20, n_test_per_class=5, label_fraction=0.1, split_seed=1)
m = ds.manifest
print("classes:", class_names(spec))
print(f"{len(m.train_ids)} train videos, {len(m.test_ids)} test videos")
print(f"labeled {len(m.labeled_ids)}, unlabeled {len(m.unlabeled_ids)} at P={m.label_fraction}")
print("channel mean", np.round(m.channel_mean, 4), "std", np.round(m.channel_std, 4))

# one video is [channels, frames, H, W]
v = ds[m.train_ids[0]]
print("video", v.video.shape, "class", v.class_label, "shape", v.shape_label)

# training clips are random crops with temporal jitter; evaluation uses the center
rng = np.random.default_rng(0)
clip = augment_clip(v.video, 8, 32, 32, rng)
print("random clip", clip.shape, "center clip", center_clip(v.video, 8, 32, 32).shape)
print("one frame for the teacher", sample_frame(clip, rng).shape)

# a frame only shows the shape, so the two motions of a shape look alike frame by frame
same_shape = [s for s in ds.subset(m.train_ids) if s.shape_label == v.shape_label]
print("classes sharing this shape:", sorted({s.class_label for s in same_shape}))

# binary round trip
with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "data.vssld"
    write_dataset(path, ds)
    back = read_dataset(path)
    print(f"wrote {path.stat().st_size} bytes; round trip equal:",
          all(np.array_equal(a.video, b.video) for a, b in zip(ds.samples, back.samples)))
