"""Flat ``key = value`` run configuration files.

Keys without a prefix are TrainConfig fields; ``model.``, ``pl.``,
``schedule.``, ``optim.`` and ``data.`` prefixes address the nested
configs. Unknown keys are an error.
"""

from dataclasses import dataclass, field, fields, replace
from typing import Dict

from .data import SynthVideoSpec
from .errors import ConfigError
from .losses import LossSchedule, PseudoLabelRule
from .optim import SgdConfig
from .trainer import Method, TrainConfig

_TOP_KEYS = ("method", "total_iterations", "batch_size", "label_fraction", "data_seed",
             "init_seed", "train_seed", "eval_every", "checkpoint_every", "confident_threshold")
_MODEL_KEYS = ("clip_frames", "clip_h", "clip_w", "block_channels")
_SECTIONS = {"pl": PseudoLabelRule, "schedule": LossSchedule, "optim": SgdConfig}


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    data: SynthVideoSpec = field(default_factory=SynthVideoSpec)
    n_per_class: int = 100
    n_test_per_class: int = 20


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Method):
        return v.value
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    return str(v)


def _parse(raw: str, like, key: str):
    try:
        if isinstance(like, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(like, Method):
            return Method(raw.upper())
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
        if isinstance(like, list):
            return [int(x) for x in raw.split(",") if x.strip()]
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def to_flat(cfg: RunConfig) -> Dict[str, str]:
    t = cfg.train
    out = {k: _format(getattr(t, k)) for k in _TOP_KEYS}
    out.update({f"model.{k}": _format(getattr(t.model, k)) for k in _MODEL_KEYS})
    for prefix, _ in _SECTIONS.items():
        section = getattr(t, prefix)
        out.update({f"{prefix}.{f.name}": _format(getattr(section, f.name)) for f in fields(section)})
    out.update({f"data.{f.name}": _format(getattr(cfg.data, f.name)) for f in fields(cfg.data)})
    out["data.n_per_class"] = str(cfg.n_per_class)
    out["data.n_test_per_class"] = str(cfg.n_test_per_class)
    return out


def from_flat(flat: Dict[str, str]) -> RunConfig:
    base = RunConfig()
    top, model, data = {}, {}, {}
    sections = {p: {} for p in _SECTIONS}
    extra = {}
    for key, raw in flat.items():
        prefix, _, name = key.rpartition(".")
        if not prefix and key in _TOP_KEYS:
            top[key] = _parse(raw, getattr(base.train, key), key)
        elif prefix == "model" and name in _MODEL_KEYS:
            model[name] = _parse(raw, getattr(base.train.model, name), key)
        elif prefix in sections and name in {f.name for f in fields(_SECTIONS[prefix])}:
            sections[prefix][name] = _parse(raw, getattr(getattr(base.train, prefix), name), key)
        elif prefix == "data" and name in {f.name for f in fields(SynthVideoSpec)}:
            data[name] = _parse(raw, getattr(base.data, name), key)
        elif prefix == "data" and name in ("n_per_class", "n_test_per_class"):
            extra[name] = _parse(raw, 0, key)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        train = replace(
            base.train,
            model=replace(base.train.model, **model),
            **{p: replace(getattr(base.train, p), **v) for p, v in sections.items()},
            **top,
        )
        spec = replace(base.data, **data)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(train, spec, **extra)


def parse_config_text(text: str) -> RunConfig:
    flat = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        if key in flat:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        flat[key] = value.strip()
    return from_flat(flat)


def write_config_text(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in to_flat(cfg).items())


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as f:
            return parse_config_text(f.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def save_config(path, cfg: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(write_config_text(cfg))


def train_config_to_dict(t: TrainConfig) -> Dict[str, str]:
    flat = to_flat(RunConfig(train=t))
    return {k: v for k, v in flat.items() if not k.startswith("data.")}


def train_config_from_dict(flat: Dict[str, str]) -> TrainConfig:
    return from_flat(flat).train
