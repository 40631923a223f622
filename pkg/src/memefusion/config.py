"""Model/training configuration, named presets, and the flat dotted-key config file."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import InputError


@dataclass(frozen=True)
class ViTConfig:
    patch_size: int = 16
    embed_dim: int = 768
    depth: int = 12
    heads: int = 12
    mlp_ratio: float = 4.0
    dropout: float = 0.1
    proj_dim: int = 128
    image_size: int = 224

    def validate(self) -> None:
        _positive(self, "patch_size", "embed_dim", "heads", "proj_dim", "image_size", "mlp_ratio")
        if self.depth < 0:
            raise InputError(f"vit.depth must be >= 0, got {self.depth}")
        if self.embed_dim % self.heads:
            raise InputError(f"vit.embed_dim {self.embed_dim} not divisible by vit.heads {self.heads}")
        if self.image_size % self.patch_size:
            raise InputError(f"vit.patch_size {self.patch_size} does not divide vit.image_size {self.image_size}")
        _probability(self.dropout, "vit.dropout")

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2


@dataclass(frozen=True)
class TextEncoderConfig:
    vocab_size: int = 0  # 0: taken from the vocabulary built at train time
    embed_dim: int = 768
    depth: int = 12
    heads: int = 12
    mlp_ratio: float = 4.0
    max_len: int = 128
    dropout: float = 0.1
    proj_dim: int = 128
    min_freq: int = 1

    def validate(self) -> None:
        _positive(self, "embed_dim", "heads", "proj_dim", "mlp_ratio", "min_freq")
        if self.depth < 0:
            raise InputError(f"text.depth must be >= 0, got {self.depth}")
        if self.vocab_size < 0 or 0 < self.vocab_size < 5:
            raise InputError(f"text.vocab_size must be 0 (auto) or >= 5, got {self.vocab_size}")
        if self.max_len < 2:
            raise InputError(f"text.max_len must be >= 2, got {self.max_len}")
        if self.embed_dim % self.heads:
            raise InputError(f"text.embed_dim {self.embed_dim} not divisible by text.heads {self.heads}")
        _probability(self.dropout, "text.dropout")


@dataclass(frozen=True)
class FusionConfig:
    image_dim: int = 128
    text_dim: int = 128
    fused_dim: int = 256
    dropout: float = 0.1
    threshold: float = 0.5
    modality: str = "both"  # "image" / "text" zero the other branch for unimodal ablations

    def validate(self) -> None:
        if self.fused_dim != self.image_dim + self.text_dim:
            raise InputError(f"fusion.fused_dim {self.fused_dim} != image_dim + text_dim")
        if not 0.0 < self.threshold < 1.0:
            raise InputError(f"fusion.threshold must be in (0, 1), got {self.threshold}")
        if self.modality not in ("both", "image", "text"):
            raise InputError(f"fusion.modality must be both|image|text, got {self.modality!r}")
        _probability(self.dropout, "fusion.dropout")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-5
    batch_size: int = 16
    epochs: int = 4
    warmup_fraction: float = 0.1
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def validate(self) -> None:
        if not self.lr > 0:
            raise InputError(f"train.lr must be > 0, got {self.lr}")
        if self.batch_size < 1 or self.epochs < 1:
            raise InputError("train.batch_size and train.epochs must be >= 1")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise InputError(f"train.warmup_fraction must be in [0, 1), got {self.warmup_fraction}")
        if self.weight_decay < 0:
            raise InputError("train.weight_decay must be >= 0")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise InputError(f"train.{name} must be in [0, 1)")
        if not self.eps > 0:
            raise InputError("train.eps must be > 0")


@dataclass(frozen=True)
class ModelConfig:
    vit: ViTConfig = field(default_factory=ViTConfig)
    text: TextEncoderConfig = field(default_factory=TextEncoderConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)

    def validate(self) -> None:
        self.vit.validate()
        self.text.validate()
        self.fusion.validate()
        if self.vit.proj_dim != self.fusion.image_dim or self.text.proj_dim != self.fusion.text_dim:
            raise InputError("encoder proj_dim must match fusion image_dim/text_dim")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(ViTConfig(**d["vit"]), TextEncoderConfig(**d["text"]), FusionConfig(**d["fusion"]))


@dataclass(frozen=True)
class DataConfig:
    train_manifest: str = ""
    val_manifest: str = ""
    image_root: str = ""
    stopwords: str = ""
    synthetic: bool = False
    synthetic_n_per_class: int = 32
    synthetic_image_side: int = 64

    def validate(self) -> None:
        if not self.synthetic and not self.train_manifest:
            raise InputError("data.train_manifest is required unless data.synthetic = true")
        for name in ("train_manifest", "val_manifest", "stopwords"):
            value = getattr(self, name)
            if value and not Path(value).is_file():
                raise InputError(f"data.{name}: no such file: {value}")
        if self.image_root and not Path(self.image_root).is_dir():
            raise InputError(f"data.image_root: no such directory: {self.image_root}")
        if self.synthetic_n_per_class < 1 or self.synthetic_image_side < 8:
            raise InputError("data.synthetic_n_per_class must be >= 1 and data.synthetic_image_side >= 8")


@dataclass(frozen=True)
class RunConfig:
    preset: str = "test"
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    out_dir: str = "runs/latest"
    threads: int = 1

    def validate(self) -> None:
        self.model.validate()
        self.train.validate()
        self.data.validate()
        if self.threads < 1:
            raise InputError(f"threads must be >= 1, got {self.threads}")


PAPER_MODEL = ModelConfig(
    ViTConfig(patch_size=16, embed_dim=768, depth=12, heads=12, dropout=0.1),
    TextEncoderConfig(embed_dim=768, depth=12, heads=12, max_len=128, dropout=0.1),
    FusionConfig(dropout=0.1),
)
PAPER_TRAIN = TrainConfig(lr=2e-5, batch_size=16, epochs=4)

TEST_MODEL = ModelConfig(
    ViTConfig(patch_size=16, embed_dim=32, depth=2, heads=2, dropout=0.1),
    TextEncoderConfig(embed_dim=32, depth=2, heads=2, max_len=128, dropout=0.1),
    FusionConfig(dropout=0.1),
)
# from-scratch weights need a larger step than the fine-tuning lr
TEST_TRAIN = TrainConfig(lr=1e-3, batch_size=16, epochs=15)

PRESETS = {"paper": (PAPER_MODEL, PAPER_TRAIN), "test": (TEST_MODEL, TEST_TRAIN)}

_SECTIONS = {"vit": ViTConfig, "text": TextEncoderConfig, "fusion": FusionConfig, "train": TrainConfig, "data": DataConfig}
_TOP_LEVEL = {"preset", "out_dir", "seed", "threads"}


def _positive(cfg, *names) -> None:
    for name in names:
        if not getattr(cfg, name) > 0:
            raise InputError(f"{name} must be > 0, got {getattr(cfg, name)}")


def _probability(p: float, name: str) -> None:
    if not 0.0 <= p < 1.0:
        raise InputError(f"{name} must be in [0, 1), got {p}")


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(cls, name: str, value):
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    if name not in types:
        raise InputError(f"unknown config key {cls.__name__}.{name}")
    kind = types[name]
    try:
        if kind == "bool":
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind == "int":
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        if kind == "float":
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise InputError(f"config key {name!r}: expected {kind}, got {value!r}") from None


def build_run_config(values: dict, base_dir: Path | None = None) -> RunConfig:
    """Build a RunConfig from flat dotted keys, starting from the named preset."""
    values = dict(values)
    preset = values.pop("preset", "test")
    if preset not in PRESETS:
        raise InputError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    model, train = PRESETS[preset]
    sections = {
        "vit": dataclasses.asdict(model.vit),
        "text": dataclasses.asdict(model.text),
        "fusion": dataclasses.asdict(model.fusion),
        "train": dataclasses.asdict(train),
        "data": dataclasses.asdict(DataConfig()),
    }
    top = {"out_dir": "runs/latest", "threads": 1}
    for key, value in values.items():
        if key in _TOP_LEVEL:
            if key == "seed":
                sections["train"]["seed"] = _coerce(TrainConfig, "seed", value)
            else:
                top[key] = value
            continue
        section, _, name = key.partition(".")
        if section not in _SECTIONS or not name:
            raise InputError(f"unknown config key {key!r}")
        sections[section][name] = _coerce(_SECTIONS[section], name, value)
    data = sections["data"]
    if base_dir is not None:
        for name in ("train_manifest", "val_manifest", "image_root", "stopwords"):
            if data[name] and not Path(data[name]).is_absolute():
                data[name] = str(base_dir / data[name])
    if base_dir is not None and "out_dir" in values and not Path(str(top["out_dir"])).is_absolute():
        top["out_dir"] = str(base_dir / str(top["out_dir"]))
    if not isinstance(top["threads"], int) or isinstance(top["threads"], bool):
        raise InputError(f"threads must be an integer, got {top['threads']!r}")
    return RunConfig(
        preset=preset,
        model=ModelConfig(ViTConfig(**sections["vit"]), TextEncoderConfig(**sections["text"]), FusionConfig(**sections["fusion"])),
        train=TrainConfig(**sections["train"]),
        data=DataConfig(**data),
        out_dir=str(top["out_dir"]),
        threads=top["threads"],
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"{path}: {exc}") from None
    return build_run_config(_flatten(raw), base_dir=path.parent)
