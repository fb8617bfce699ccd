"""Training loop for the four methods: SUPERVISED, PL, SD and VIDEOSSL.

A method only switches loss terms on or off:

=========== ============ ============
method      pseudo-label distillation
=========== ============ ============
SUPERVISED  no           no
PL          yes          no
SD          no           yes
VIDEOSSL    yes          yes
=========== ============ ============

Three independent generators drive batch selection, clip augmentation and
teacher-frame selection, so enabling a term never shifts the random
stream of another.
"""

import csv
import enum
import io
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from .autodiff import backward, no_grad
from .data import (
    SynthDataset,
    augment_clip,
    center_clip,
    normalize,
    sample_frame,
)
from .errors import ConfigError, NonFiniteLossError
from .evaluation import ClipGeometry, center_clip_probs, confident_counts, evaluate
from .losses import (
    LossBreakdown,
    LossSchedule,
    PseudoLabelRule,
    combined_loss,
    distill_soft_ce,
    lambda_u,
    one_hot,
    pseudo_assign,
    pseudo_ce,
    supervised_ce,
)
from .models import (
    Checkpoint,
    TeacherConfig,
    TeacherNet2D,
    VideoNet3D,
    VideoNetConfig,
    params_from_arrays,
    read_checkpoint,
    write_checkpoint,
)
from .optim import OptState, SgdConfig, lr_at, sgd_step

log = logging.getLogger(__name__)

METRICS_HEADER = [
    "iteration", "loss_s", "loss_u", "loss_d", "lambda_u", "loss_total",
    "clip_top1_test", "video_top1_test", "clip_top1_unlabeled",
    "confident_count", "confident_correct",
]


class Method(str, enum.Enum):
    SUPERVISED = "SUPERVISED"
    PL = "PL"
    SD = "SD"
    VIDEOSSL = "VIDEOSSL"

    @property
    def uses_pseudo_labels(self) -> bool:
        return self in (Method.PL, Method.VIDEOSSL)

    @property
    def uses_distillation(self) -> bool:
        return self in (Method.SD, Method.VIDEOSSL)

    @property
    def uses_unlabeled(self) -> bool:
        return self is not Method.SUPERVISED


@dataclass
class TrainConfig:
    method: Method = Method.VIDEOSSL
    total_iterations: int = 30_000
    batch_size: int = 32
    label_fraction: float = 0.1
    data_seed: int = 0
    init_seed: int = 0
    train_seed: int = 0
    eval_every: int = 1000
    checkpoint_every: int = 0
    confident_threshold: float = 0.95
    model: VideoNetConfig = field(default_factory=VideoNetConfig)
    pl: PseudoLabelRule = field(default_factory=PseudoLabelRule)
    schedule: LossSchedule = field(default_factory=LossSchedule)
    optim: SgdConfig = field(default_factory=SgdConfig)
    checkpoint_path: Optional[str] = None

    def __post_init__(self):
        self.method = Method(self.method)
        if self.batch_size < 2 or self.batch_size % 2:
            raise ConfigError(f"batch_size must be even and >= 2, got {self.batch_size}")
        if self.total_iterations < 1:
            raise ConfigError("total_iterations must be >= 1")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")

    @property
    def geometry(self) -> ClipGeometry:
        return ClipGeometry(self.model.clip_frames, self.model.clip_h, self.model.clip_w)


@dataclass
class Batch:
    labeled: np.ndarray
    labels: np.ndarray
    unlabeled: np.ndarray
    labeled_ids: np.ndarray
    unlabeled_ids: np.ndarray

    @property
    def clips(self) -> np.ndarray:
        if len(self.unlabeled) == 0:
            return self.labeled
        return np.concatenate([self.labeled, self.unlabeled])


@dataclass
class TrainState:
    model: VideoNet3D
    teacher: Optional[TeacherNet2D]
    opt: OptState
    rngs: Dict[str, np.random.Generator]
    iteration: int = 0
    history: List[dict] = field(default_factory=list)


def make_rngs(train_seed: int) -> Dict[str, np.random.Generator]:
    children = np.random.SeedSequence(train_seed).spawn(3)
    return {name: np.random.default_rng(ss) for name, ss in zip(("batch", "augment", "frame"), children)}


def student_config(config: TrainConfig, dataset: SynthDataset) -> VideoNetConfig:
    return replace(config.model, num_classes=dataset.spec.num_classes,
                   embed_dim=dataset.spec.num_shapes)


def init_state(config: TrainConfig, dataset: SynthDataset,
               teacher: Optional[TeacherNet2D] = None) -> TrainState:
    if config.method.uses_distillation:
        if teacher is None:
            raise ConfigError(f"method {config.method.value} needs a teacher")
        if not teacher.frozen:
            raise ConfigError("teacher must be frozen before student training")
    model = VideoNet3D(student_config(config, dataset), seed=config.init_seed)
    return TrainState(model, teacher, OptState.for_params(model.params), make_rngs(config.train_seed))


def compose_batch(dataset: SynthDataset, batch_size: int, method: Method, rng_batch, rng_aug,
                  geom: ClipGeometry) -> Batch:
    """Half labeled / half unlabeled (all labeled for SUPERVISED), drawn with replacement."""
    m = dataset.manifest
    pool_x, pool_z = m.labeled_ids, m.unlabeled_ids
    if not pool_x:
        raise ConfigError("labeled pool is empty")
    if method.uses_unlabeled:
        if not pool_z:
            raise ConfigError(f"method {method.value} needs a non-empty unlabeled pool")
        n_lab = n_unl = batch_size // 2
    else:
        n_lab, n_unl = batch_size, 0
    ids_x = np.asarray(pool_x)[rng_batch.integers(0, len(pool_x), size=n_lab)]
    ids_z = np.asarray(pool_z, dtype=np.int64)[rng_batch.integers(0, len(pool_z), size=n_unl)] \
        if n_unl else np.zeros(0, dtype=np.int64)

    def clips(ids):
        if len(ids) == 0:
            return np.zeros((0, 3, geom.clip_frames, geom.crop_h, geom.crop_w))
        raw = np.stack([augment_clip(dataset[int(i)].video, geom.clip_frames, geom.crop_h,
                                     geom.crop_w, rng_aug) for i in ids])
        return normalize(raw, m)

    labeled = clips(ids_x)
    unlabeled = clips(ids_z)
    labels = np.array([dataset[int(i)].class_label for i in ids_x], dtype=np.int64)
    return Batch(labeled, labels, unlabeled, ids_x, ids_z)


def compute_losses(state: TrainState, batch: Batch, config: TrainConfig) -> LossBreakdown:
    """Forward pass and loss assembly for one batch (no parameter update)."""
    model = state.model
    it = state.iteration
    p, q = model.forward(batch.clips)
    k = len(batch.labels)
    loss_s = supervised_ce(p[:k], one_hot(batch.labels, model.config.num_classes))

    w_u = lambda_u(it, config.total_iterations, config.schedule) if config.method.uses_pseudo_labels else 0.0
    w_d = config.schedule.lambda_d if config.method.uses_distillation else 0.0

    loss_u = None
    if w_u != 0.0 and len(batch.unlabeled):
        p_u = p[k:]
        loss_u = pseudo_ce(pseudo_assign(p_u, config.pl), p_u)

    loss_d = None
    if w_d != 0.0:
        frames = np.stack([sample_frame(c, state.rngs["frame"]) for c in batch.clips])
        with no_grad():
            h = state.teacher.forward(frames)
        loss_d = distill_soft_ce(h, q)

    return combined_loss(loss_s, loss_u, loss_d, config.schedule, it, config.total_iterations,
                         lambda_u_value=w_u, lambda_d_value=w_d)


def train_step(state: TrainState, batch: Batch, config: TrainConfig) -> LossBreakdown:
    breakdown = compute_losses(state, batch, config)
    if not breakdown.is_finite():
        breakdown.total_tensor = None
        raise NonFiniteLossError(state.iteration, breakdown)
    params = state.model.params
    params.zero_grad()
    backward(breakdown.total_tensor)
    breakdown.total_tensor = None
    sgd_step(params, None, state.opt, lr_at(state.iteration, config.optim), config.optim)
    state.iteration += 1
    return breakdown


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metrics_row(state: TrainState, dataset: SynthDataset, config: TrainConfig,
                breakdown: Optional[LossBreakdown]) -> dict:
    geom = config.geometry
    m = dataset.manifest
    test = dataset.subset(m.test_ids)
    unl = dataset.subset(m.unlabeled_ids)
    rec = evaluate(state.model, test, m, geom, state.model.config.num_classes,
                   config.confident_threshold) if test else None
    row = dict.fromkeys(METRICS_HEADER)
    row["iteration"] = state.iteration
    if breakdown is not None:
        row.update(loss_s=breakdown.loss_s, loss_u=breakdown.loss_u, loss_d=breakdown.loss_d,
                   lambda_u=breakdown.lambda_u, loss_total=breakdown.total)
    if rec is not None:
        row.update(clip_top1_test=rec.clip_top1, video_top1_test=rec.video_top1)
    if unl:
        probs = center_clip_probs(state.model, unl, m, geom)
        labels = np.array([s.class_label for s in unl])
        row["clip_top1_unlabeled"] = 100.0 * float((probs.argmax(axis=1) == labels).sum()) / len(unl)
        row["confident_count"], row["confident_correct"] = confident_counts(
            probs, labels, config.confident_threshold)
    return row


def metrics_csv(history: List[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for row in history:
        w.writerow([_fmt(row.get(k)) for k in METRICS_HEADER])
    return buf.getvalue()


def write_metrics(path, history: List[dict]) -> None:
    with open(path, "w", newline="") as f:
        f.write(metrics_csv(history))


def save_state(path, state: TrainState, config: TrainConfig) -> None:
    from .config import train_config_to_dict

    extra = {
        "kind": "student",
        "iteration": state.iteration,
        "model_config": asdict(state.model.config),
        "train_config": train_config_to_dict(config),
        "rng_states": {k: g.bit_generator.state for k, g in state.rngs.items()},
        "history": state.history,
    }
    write_checkpoint(path, Checkpoint(
        params={n: p.data for n, p in state.model.params.items()},
        velocities=dict(state.opt.velocities),
        opt_step=state.opt.step,
        extra=extra,
    ))


def load_state(path, teacher: Optional[TeacherNet2D] = None) -> TrainState:
    ckpt = read_checkpoint(path)
    if ckpt.extra.get("kind") != "student":
        raise ValueError(f"{path} is not a student checkpoint")
    cfg = ckpt.extra["model_config"]
    model = VideoNet3D(VideoNetConfig(**cfg), params_from_arrays(ckpt.params))
    rngs = {}
    for name, st in ckpt.extra["rng_states"].items():
        g = np.random.default_rng()
        g.bit_generator.state = st
        rngs[name] = g
    opt = OptState({k: v.copy() for k, v in ckpt.velocities.items()}, ckpt.opt_step)
    return TrainState(model, teacher, opt, rngs, ckpt.extra["iteration"], list(ckpt.extra["history"]))


@dataclass
class TrainResult:
    state: TrainState
    history: List[dict]
    checkpoint_path: Optional[str]


def train(config: TrainConfig, dataset: SynthDataset, teacher: Optional[TeacherNet2D] = None,
          state: Optional[TrainState] = None, stop_at: Optional[int] = None,
          progress: bool = False) -> TrainResult:
    """Run (or resume) training up to ``total_iterations`` (or ``stop_at``).

    Records metrics at iteration 0 and after every ``eval_every`` steps, and
    writes a checkpoint at the end when ``checkpoint_path`` is set.
    """
    if state is None:
        state = init_state(config, dataset, teacher)
    elif teacher is not None:
        state.teacher = teacher
    if config.method.uses_distillation and (state.teacher is None or not state.teacher.frozen):
        raise ConfigError(f"method {config.method.value} needs a frozen teacher")
    teacher_sum = state.teacher.checksum() if state.teacher is not None else None
    if state.iteration == 0 and not state.history:
        state.history.append(metrics_row(state, dataset, config, None))

    end = config.total_iterations if stop_at is None else min(stop_at, config.total_iterations)
    geom = config.geometry
    while state.iteration < end:
        batch = compose_batch(dataset, config.batch_size, config.method, state.rngs["batch"],
                              state.rngs["augment"], geom)
        breakdown = train_step(state, batch, config)
        if state.iteration % config.eval_every == 0:
            row = metrics_row(state, dataset, config, breakdown)
            state.history.append(row)
            if progress:
                log.info("iter %d %s", state.iteration,
                         {k: row[k] for k in ("loss_total", "clip_top1_test", "video_top1_test")})
        if config.checkpoint_every and state.iteration % config.checkpoint_every == 0 \
                and config.checkpoint_path:
            save_state(config.checkpoint_path, state, config)

    if teacher_sum is not None and state.teacher.checksum() != teacher_sum:
        raise RuntimeError("teacher parameters changed during training")
    if config.checkpoint_path:
        save_state(config.checkpoint_path, state, config)
    return TrainResult(state, state.history, config.checkpoint_path)


# --- teacher pretraining --------------------------------------------------


@dataclass
class ShapeFrames:
    """Frame-level training data for the teacher: videos and shape ids only."""

    videos: List[np.ndarray]
    shape_labels: np.ndarray


def shape_frames(dataset: SynthDataset, ids) -> ShapeFrames:
    samples = dataset.subset(ids)
    return ShapeFrames([s.video for s in samples], np.array([s.shape_label for s in samples]))


@dataclass
class TeacherReport:
    teacher: TeacherNet2D
    heldout_accuracy: float
    train_accuracy: float


def teacher_accuracy(teacher: TeacherNet2D, frames: ShapeFrames, manifest, geom: ClipGeometry,
                     batch_size: int = 256) -> float:
    """Shape accuracy over every frame of each video's centre crop."""
    xs, ys = [], []
    for video, label in zip(frames.videos, frames.shape_labels):
        clip = center_clip(video, video.shape[1], geom.crop_h, geom.crop_w)
        xs.append(np.moveaxis(clip, 1, 0))  # [T, 3, H, W]
        ys.append(np.full(clip.shape[1], label))
    x = normalize(np.concatenate(xs), manifest)
    y = np.concatenate(ys)
    correct = 0
    with no_grad():
        for i in range(0, len(x), batch_size):
            correct += int((teacher.forward(x[i:i + batch_size]).data.argmax(axis=1) == y[i:i + batch_size]).sum())
    return 100.0 * correct / len(y)


def pretrain_teacher(dataset: SynthDataset, epochs: int = 15, seed: int = 0, batch_size: int = 32,
                     geom: Optional[ClipGeometry] = None, optim: Optional[SgdConfig] = None,
                     progress: bool = False) -> TeacherReport:
    """Train the frame classifier on shape labels of the training pool, then freeze it.

    Frames come from randomly cropped clips of training videos; held-out
    accuracy is measured on the test videos.
    """
    geom = geom or ClipGeometry()
    optim = optim or SgdConfig(lr0=0.05, momentum=0.9, weight_decay=1e-4, decay_every=10**9)
    m = dataset.manifest
    train_frames = shape_frames(dataset, m.train_ids)
    teacher = TeacherNet2D(TeacherConfig(num_classes=dataset.spec.num_shapes), seed=seed)
    return fit_teacher(teacher, train_frames, shape_frames(dataset, m.test_ids), m, geom, epochs,
                       seed, batch_size, optim, progress)


def fit_teacher(teacher: TeacherNet2D, train_frames: ShapeFrames, heldout: ShapeFrames, manifest,
                geom: ClipGeometry, epochs: int, seed: int, batch_size: int, optim: SgdConfig,
                progress: bool = False) -> TeacherReport:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    opt = OptState.for_params(teacher.params)
    n = len(train_frames.videos)
    n_classes = teacher.config.num_classes
    steps_per_epoch = max(1, n // batch_size)
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        for b in range(steps_per_epoch):
            idx = order[b * batch_size:(b + 1) * batch_size]
            frames = np.stack([
                sample_frame(augment_clip(train_frames.videos[i], geom.clip_frames, geom.crop_h,
                                          geom.crop_w, rng), rng)
                for i in idx
            ])
            x = normalize(frames, manifest)
            probs = teacher.forward(x)
            loss = supervised_ce(probs, one_hot(train_frames.shape_labels[idx], n_classes))
            teacher.params.zero_grad()
            backward(loss)
            sgd_step(teacher.params, None, opt, lr_at(step, optim), optim)
            step += 1
        if progress:
            log.info("teacher epoch %d loss %.4f", epoch, loss.item())
    teacher.freeze()
    heldout_acc = teacher_accuracy(teacher, heldout, manifest, geom) if heldout.videos else float("nan")
    train_acc = teacher_accuracy(teacher, train_frames, manifest, geom)
    return TeacherReport(teacher, heldout_acc, train_acc)
