"""Student 3D network with class and embedding heads, and the 2D frame teacher."""

import hashlib
import json
import math
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .autodiff import (
    Parameter,
    Tensor,
    as_tensor,
    conv2d,
    conv3d,
    global_avg_pool,
    linear,
    no_grad,
    pool2d,
    pool3d,
    relu,
    softmax,
)
from .autodiff.serialize import check_magic, read_array, read_exact, write_tensor
from .errors import ShapeError, VersionMismatchError

CHECKPOINT_MAGIC = b"VSSLC"
CHECKPOINT_VERSION = 1


class ParameterSet(OrderedDict):
    """Ordered name -> Parameter mapping with unique names."""

    def add(self, name: str, data) -> Parameter:
        if name in self:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = Parameter(name, data)
        self[name] = p
        return p

    def zero_grad(self) -> None:
        for p in self.values():
            p.grad = np.zeros_like(p.data)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name, p in self.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
        return h.hexdigest()

    def copy(self) -> "ParameterSet":
        out = ParameterSet()
        for name, p in self.items():
            q = out.add(name, p.data.copy())
            q.requires_grad = p.requires_grad
        return out


def _fan_in_normal(rng, shape):
    fan_in = math.prod(shape[1:])
    return rng.standard_normal(shape) / math.sqrt(fan_in)


@dataclass
class VideoNetConfig:
    num_classes: int = 8
    embed_dim: int = 4
    in_channels: int = 3
    clip_frames: int = 8
    clip_h: int = 32
    clip_w: int = 32
    block_channels: List[int] = field(default_factory=lambda: [16, 32, 64])

    def __post_init__(self):
        if self.num_classes < 2 or self.embed_dim < 2:
            raise ValueError("num_classes and embed_dim must both be >= 2")
        stride = 2 ** len(self.block_channels)
        if self.clip_h % stride or self.clip_w % stride:
            raise ValueError(
                f"clip {self.clip_h}x{self.clip_w} not divisible by cumulative pool stride {stride}"
            )

    @property
    def clip_shape(self) -> tuple:
        return (self.in_channels, self.clip_frames, self.clip_h, self.clip_w)


def init_params(config: VideoNetConfig, seed: int, zero_heads: bool = False) -> ParameterSet:
    """Deterministic fan-in scaled normal init; biases zero."""
    rng = np.random.default_rng(seed)
    params = ParameterSet()
    cin = config.in_channels
    for i, cout in enumerate(config.block_channels):
        params.add(f"block{i}.conv.weight", _fan_in_normal(rng, (cout, cin, 3, 3, 3)))
        params.add(f"block{i}.conv.bias", np.zeros(cout))
        cin = cout
    for head, out in (("class_head", config.num_classes), ("embed_head", config.embed_dim)):
        w = np.zeros((out, cin)) if zero_heads else _fan_in_normal(rng, (out, cin))
        params.add(f"{head}.weight", w)
        params.add(f"{head}.bias", np.zeros(out))
    return params


class VideoNet3D:
    """conv3d-relu-spatial maxpool blocks, global average pool, two softmax heads.

    ``forward`` returns ``(p, q)``: video-class probabilities [N, C] and the
    embedding distribution [N, M] matched to the teacher's frame prediction.
    """

    def __init__(self, config: VideoNetConfig, params: Optional[ParameterSet] = None, seed: int = 0):
        self.config = config
        self.params = params if params is not None else init_params(config, seed)

    def features(self, clips) -> Tensor:
        x = as_tensor(clips)
        if x.shape[1:] != self.config.clip_shape:
            raise ShapeError(f"clip batch {x.shape} does not match config {self.config.clip_shape}")
        p = self.params
        for i in range(len(self.config.block_channels)):
            x = conv3d(x, p[f"block{i}.conv.weight"], p[f"block{i}.conv.bias"], padding=1)
            x = pool3d(relu(x), "max", (1, 2, 2))
        return global_avg_pool(x)

    def forward(self, clips):
        f = self.features(clips)
        p = softmax(linear(f, self.params["class_head.weight"], self.params["class_head.bias"]))
        q = softmax(linear(f, self.params["embed_head.weight"], self.params["embed_head.bias"]))
        return p, q

    __call__ = forward

    def predict(self, clips: np.ndarray, batch_size: int = 32) -> np.ndarray:
        """Class probabilities without recording a graph."""
        out = []
        with no_grad():
            for i in range(0, len(clips), batch_size):
                out.append(self.forward(clips[i:i + batch_size])[0].data)
        return np.concatenate(out) if out else np.zeros((0, self.config.num_classes))


@dataclass
class TeacherConfig:
    num_classes: int = 4
    in_channels: int = 3
    block_channels: List[int] = field(default_factory=lambda: [8, 16])


class TeacherNet2D:
    """Frame classifier over appearance (shape) classes; frozen after pretraining."""

    def __init__(self, config: TeacherConfig, params: Optional[ParameterSet] = None, seed: int = 0,
                 zero: bool = False):
        self.config = config
        if params is None:
            rng = np.random.default_rng(seed)
            params = ParameterSet()
            cin = config.in_channels
            for i, cout in enumerate(config.block_channels):
                shape = (cout, cin, 3, 3)
                params.add(f"block{i}.conv.weight", np.zeros(shape) if zero else _fan_in_normal(rng, shape))
                params.add(f"block{i}.conv.bias", np.zeros(cout))
                cin = cout
            shape = (config.num_classes, cin)
            params.add("head.weight", np.zeros(shape) if zero else _fan_in_normal(rng, shape))
            params.add("head.bias", np.zeros(config.num_classes))
        self.params = params
        self.frozen = False

    def freeze(self) -> "TeacherNet2D":
        for p in self.params.values():
            p.requires_grad = False
        self.frozen = True
        return self

    def checksum(self) -> str:
        return self.params.checksum()

    def forward(self, frames) -> Tensor:
        x = as_tensor(frames)
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ShapeError(f"teacher expects [N,{self.config.in_channels},H,W], got {x.shape}")
        p = self.params
        for i in range(len(self.config.block_channels)):
            x = conv2d(x, p[f"block{i}.conv.weight"], p[f"block{i}.conv.bias"], padding=1)
            x = pool2d(relu(x), "max", 2)
        return softmax(linear(global_avg_pool(x), p["head.weight"], p["head.bias"]))

    __call__ = forward


# --- checkpoints ---------------------------------------------------------


@dataclass
class Checkpoint:
    params: Dict[str, np.ndarray]
    velocities: Dict[str, np.ndarray] = field(default_factory=dict)
    opt_step: int = 0
    extra: dict = field(default_factory=dict)


def _write_named(f, named: Dict[str, np.ndarray]) -> None:
    f.write(struct.pack("<I", len(named)))
    for name, arr in named.items():
        raw = name.encode("utf-8")
        f.write(struct.pack("<H", len(raw)))
        f.write(raw)
        write_tensor(f, arr)


def _read_named(f) -> Dict[str, np.ndarray]:
    (count,) = struct.unpack("<I", read_exact(f, 4, "entry count"))
    out = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", read_exact(f, 2, "name length"))
        name = read_exact(f, n, "name").decode("utf-8")
        out[name] = read_array(f)
    return out


def write_checkpoint(path, ckpt: Checkpoint) -> None:
    """``VSSLC`` v1: params, then velocities, u64 optimizer step, JSON trailer."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        _write_named(f, ckpt.params)
        _write_named(f, ckpt.velocities)
        f.write(struct.pack("<Q", ckpt.opt_step))
        blob = json.dumps(ckpt.extra, sort_keys=True).encode("utf-8")
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        check_magic(f, CHECKPOINT_MAGIC)
        (version,) = struct.unpack("<I", read_exact(f, 4, "version"))
        if version != CHECKPOINT_VERSION:
            raise VersionMismatchError(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
        params = _read_named(f)
        velocities = _read_named(f)
        (step,) = struct.unpack("<Q", read_exact(f, 8, "optimizer step"))
        (n,) = struct.unpack("<I", read_exact(f, 4, "trailer length"))
        extra = json.loads(read_exact(f, n, "trailer").decode("utf-8")) if n else {}
    return Checkpoint(params, velocities, step, extra)


def params_from_arrays(arrays: Dict[str, np.ndarray], requires_grad: bool = True) -> ParameterSet:
    ps = ParameterSet()
    for name, arr in arrays.items():
        ps.add(name, arr).requires_grad = requires_grad
    return ps


def save_teacher(path, teacher: TeacherNet2D, extra: Optional[dict] = None) -> None:
    info = {"kind": "teacher", "config": asdict(teacher.config), "frozen": teacher.frozen}
    info.update(extra or {})
    write_checkpoint(path, Checkpoint({n: p.data for n, p in teacher.params.items()}, extra=info))


def load_teacher(path) -> TeacherNet2D:
    ckpt = read_checkpoint(path)
    if ckpt.extra.get("kind") != "teacher":
        raise ValueError(f"{path} is not a teacher checkpoint")
    teacher = TeacherNet2D(TeacherConfig(**ckpt.extra["config"]), params_from_arrays(ckpt.params))
    return teacher.freeze() if ckpt.extra.get("frozen", True) else teacher
