"""Train a small student with and without the unlabeled videos and compare them.

Uses a shrunken geometry so it finishes in a couple of minutes on one core.

    python demos/04_train_and_evaluate.py
"""

import tempfile
from pathlib import Path

from videossl.data import SynthVideoSpec, build_dataset, class_names
from videossl.evaluation import ClipGeometry, evaluate, per_class_delta, write_per_class_report
from videossl.models import VideoNetConfig
from videossl.optim import SgdConfig
from videossl.trainer import Method, TrainConfig, load_state, metrics_csv, pretrain_teacher, train

spec = SynthVideoSpec(frames_per_video=16, gen_h=20, gen_w=20)
ds = build_dataset(spec, n_per_class=30, n_test_per_class=10, label_fraction=0.2, split_seed=0)
model = VideoNetConfig(clip_frames=8, clip_h=16, clip_w=16, block_channels=[8, 16])
geom = ClipGeometry(8, 16, 16)

# frame teacher: trained on shape labels only, then frozen
rep = pretrain_teacher(ds, geom=geom)
print(f"teacher held-out shape accuracy {rep.heldout_accuracy:.1f}%")

base = TrainConfig(total_iterations=600, label_fraction=0.2, model=model, eval_every=200,
                   optim=SgdConfig(decay_every=200))
runs = {}
for method in (Method.SUPERVISED, Method.VIDEOSSL):
    cfg = TrainConfig(**{**vars(base), "method": method})
    res = train(cfg, ds, rep.teacher if method.uses_distillation else None)
    runs[method] = res
    print(method.value)
    print(metrics_csv(res.history))

m = ds.manifest
test = ds.subset(m.test_ids)
recs = {k: evaluate(r.state.model, test, m, geom, spec.num_classes) for k, r in runs.items()}
for k, rec in recs.items():
    print(f"{k.value:<10} clip top-1 {rec.clip_top1:5.1f}  video top-1 {rec.video_top1:5.1f}")

names = class_names(spec)
delta = per_class_delta(recs[Method.SUPERVISED].per_class_top1, recs[Method.VIDEOSSL].per_class_top1)
print("per-class change, largest first:")
for c, d in delta:
    print(f"  {names[c]:<18} {d:+6.1f}")

# checkpoints carry the optimizer and RNG state, so a run can be resumed exactly
with tempfile.TemporaryDirectory() as d:
    ck = str(Path(d) / "half.vsslc")
    cfg = TrainConfig(**{**vars(base), "method": Method.VIDEOSSL, "checkpoint_path": ck})
    train(cfg, ds, rep.teacher, stop_at=300)
    resumed = train(TrainConfig(**{**vars(base), "method": Method.VIDEOSSL}), ds, rep.teacher,
                    state=load_state(ck))
    same = metrics_csv(resumed.history) == metrics_csv(runs[Method.VIDEOSSL].history)
    print("resume from iteration 300 reproduces the run:", same)
    write_per_class_report(Path(d) / "per_class.csv", recs[Method.SUPERVISED].per_class_top1,
                           recs[Method.VIDEOSSL].per_class_top1, names)
