"""Reduced-scale comparison of SUPERVISED, SD and VIDEOSSL.

The full desk-scale comparison (40x40 videos, 32x32 clips, three conv
blocks, 30,000 iterations) costs hours per run on one core. This script
keeps the class structure, sample counts and label fraction, renders the
videos at 24x24, trains a two-block student on 16x16 clips and scales every
schedule (warm-up point, LR plateaus) to --iterations.

    python demos/05_ordering_experiment.py --iterations 3000 --out /tmp/ordering
"""

import argparse
import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from videossl.cli import run_one
from videossl.config import RunConfig
from videossl.data import SynthVideoSpec, build_dataset
from videossl.evaluation import ClipGeometry
from videossl.models import VideoNetConfig
from videossl.optim import SgdConfig
from videossl.trainer import Method, TrainConfig, pretrain_teacher

ap = argparse.ArgumentParser()
ap.add_argument("--iterations", type=int, default=3000)
ap.add_argument("--fraction", type=float, default=0.1)
ap.add_argument("--seeds", default="1,2,3")
ap.add_argument("--out", default="ordering_out")
args = ap.parse_args()
seeds = [int(s) for s in args.seeds.split(",")]
out = Path(args.out)

# 8 classes, 100 train / 20 test each, as in the full experiment
spec = SynthVideoSpec(gen_h=24, gen_w=24)
ds = build_dataset(spec, 100, 20)
model = VideoNetConfig(clip_frames=8, clip_h=16, clip_w=16, block_channels=[8, 16])
geom = ClipGeometry(model.clip_frames, model.clip_h, model.clip_w)

# the teacher sees frames at the student's crop size
t0 = time.perf_counter()
rep = pretrain_teacher(ds, geom=geom)
print(f"teacher held-out shape accuracy {rep.heldout_accuracy:.1f}% ({time.perf_counter() - t0:.0f}s)")

base = TrainConfig(total_iterations=args.iterations, label_fraction=args.fraction, model=model,
                   eval_every=max(1, args.iterations // 6),
                   optim=SgdConfig(decay_every=max(1, args.iterations // 3)))
results = {}
for method in (Method.SUPERVISED, Method.SD, Method.VIDEOSSL):
    for seed in seeds:
        cfg = replace(base, method=method, data_seed=seed, init_seed=seed, train_seed=seed)
        t0 = time.perf_counter()
        s = run_one(cfg, ds, rep.teacher, out / f"{method.value}_seed{seed}", RunConfig(train=cfg, data=spec))
        results[method.value, seed] = s
        print(f"{method.value:<10} seed {seed}: video top-1 {s['video_top1']:6.2f}  clip top-1 "
              f"{s['clip_top1']:6.2f}  confident {s['confident_correct']}/{s['confident_count']}  "
              f"({time.perf_counter() - t0:.0f}s)", flush=True)

# mean over seeds per method
means = {m.value: float(np.mean([results[m.value, s]["video_top1"] for s in seeds]))
         for m in (Method.SUPERVISED, Method.SD, Method.VIDEOSSL)}
print()
for m, v in means.items():
    print(f"{m:<10} mean video top-1 {v:6.2f}")
print(f"VIDEOSSL - SUPERVISED {means['VIDEOSSL'] - means['SUPERVISED']:+.2f}, "
      f"SD - SUPERVISED {means['SD'] - means['SUPERVISED']:+.2f}, "
      f"VIDEOSSL - SD {means['VIDEOSSL'] - means['SD']:+.2f}")
(out / "means.json").write_text(json.dumps(means, indent=2) + "\n")
