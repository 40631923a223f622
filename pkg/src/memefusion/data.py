"""Manifest loading, the seeded synthetic dataset, and array preparation."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from .errors import InputError
from .fusion import ClassLabel
from .image import ImageDecodeError, load_image, preprocess
from .text import MAX_LEN, Vocabulary, clean_caption, encode

MANIFEST_HEADER = ("image_path", "caption", "label")
MARKER_TOKEN = "trollmarker"

DEFAULT_CAPTION_WORDS = (
    "meme", "vadivelu", "comedy", "scene", "friends", "college", "exam", "boss", "office", "cricket",
    "movie", "hero", "mass", "neenga", "enna", "paavam", "semma", "thalaivar", "sema", "machi",
    "morning", "monday", "weekend", "food", "biryani", "tea", "rain", "bus", "train", "phone",
)


@dataclass(frozen=True)
class Sample:
    sample_id: str
    caption: str
    label: ClassLabel
    image_path: Path | None = None
    pixels: np.ndarray | None = None  # (H, W, 3) uint8 when held in memory

    def decode(self) -> np.ndarray:
        if self.pixels is not None:
            return self.pixels
        try:
            return load_image(self.image_path)
        except ImageDecodeError as exc:
            raise ImageDecodeError(f"sample {self.sample_id}: {exc}") from exc


@dataclass(frozen=True)
class SplitStats:
    troll: int
    nontroll: int

    @property
    def total(self) -> int:
        return self.troll + self.nontroll

    @classmethod
    def count(cls, samples: Iterable[Sample]) -> "SplitStats":
        labels = [s.label for s in samples]
        return cls(labels.count(ClassLabel.TROLL), labels.count(ClassLabel.NONTROLL))


def load_manifest(path, image_root=None) -> tuple[list[Sample], SplitStats]:
    """Rows of ``image_path,caption,label`` in file order; image paths resolve against ``image_root``."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"manifest not found: {path}")
    root = Path(image_root) if image_root else path.parent
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty manifest")
    if tuple(c.strip() for c in rows[0]) != MANIFEST_HEADER:
        raise InputError(f"{path}: header must be {','.join(MANIFEST_HEADER)}, got {','.join(rows[0])}")
    samples: list[Sample] = []
    seen: set[str] = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise InputError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        rel, caption, label_text = row
        try:
            label = ClassLabel.parse(label_text)
        except ValueError:
            raise InputError(f"{path}:{lineno}: unknown label {label_text!r}") from None
        if rel in seen:
            raise InputError(f"{path}:{lineno}: duplicate image_path {rel!r}")
        seen.add(rel)
        img_path = Path(rel) if Path(rel).is_absolute() else root / rel
        if not img_path.is_file():
            raise InputError(f"{path}:{lineno}: image file not found: {img_path}")
        samples.append(Sample(rel, caption, label, image_path=img_path))
    if not samples:
        raise InputError(f"{path}: empty manifest")
    return samples, SplitStats.count(samples)


def write_manifest(samples: list[Sample], path, image_dir=None) -> Path:
    """Write samples as a manifest; in-memory images are saved as PNG under ``image_dir``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    image_dir = Path(image_dir) if image_dir else path.parent / "images"
    image_dir.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for s in samples:
            if s.pixels is not None:
                target = image_dir / f"{s.sample_id}.png"
                Image.fromarray(s.pixels).save(target, format="PNG")
            else:
                target = Path(s.image_path)
            try:
                rel = target.resolve().relative_to(path.parent.resolve())
            except ValueError:
                rel = target.resolve()
            writer.writerow([rel.as_posix(), s.caption, s.label.slug])
    return path


def synth_dataset(seed: int, n_per_class: int, image_side: int = 64, caption_vocab=DEFAULT_CAPTION_WORDS) -> list[Sample]:
    """Balanced, class-separable samples.

    Every image is uniform noise in [0, 200]; troll images additionally carry a
    saturated (255) block in the top-left third, and troll captions contain
    MARKER_TOKEN.  Classes alternate, starting with troll.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    words = [w for w in caption_vocab if w != MARKER_TOKEN]
    rng = np.random.default_rng(seed)
    block = max(1, image_side // 3)
    samples = []
    for i in range(2 * n_per_class):
        label = ClassLabel.TROLL if i % 2 == 0 else ClassLabel.NONTROLL
        pixels = rng.integers(0, 201, size=(image_side, image_side, 3), dtype=np.uint8)
        n_words = int(rng.integers(3, 9))
        caption = [words[j] for j in rng.integers(0, len(words), size=n_words)]
        if label is ClassLabel.TROLL:
            pixels[:block, :block] = 255
            caption.insert(int(rng.integers(0, n_words + 1)), MARKER_TOKEN)
        samples.append(Sample(f"synth{seed}_{i:05d}", " ".join(caption), label, pixels=pixels))
    return samples


def corner_block_score(pixels: np.ndarray) -> float:
    """Linear functional on raw pixels: mean intensity of the top-left third."""
    block = max(1, pixels.shape[0] // 3)
    return float(pixels[:block, :block].astype(np.float64).mean())


@dataclass
class PreparedSplit:
    """Arrays ready for batching, in sample order."""

    images: np.ndarray  # (n, 3, crop, crop) float32
    ids: np.ndarray  # (n, max_len) int64
    mask: np.ndarray  # (n, max_len) int64
    labels: np.ndarray  # (n,) int64
    sample_ids: list[str]

    def __len__(self) -> int:
        return len(self.labels)


def clean_captions(samples: list[Sample], stopwords=()) -> list[str]:
    return [clean_caption(s.caption, stopwords) for s in samples]


def prepare(samples: list[Sample], vocab: Vocabulary, stopwords=(), max_len: int = MAX_LEN, image_size: int = 224) -> PreparedSplit:
    if not samples:
        raise InputError("dataset is empty")
    resize_to = image_size * 256 // 224
    images = np.stack([preprocess(s.decode(), resize_to, image_size) for s in samples])
    seqs = [encode(c, vocab, max_len) for c in clean_captions(samples, stopwords)]
    return PreparedSplit(
        images=images,
        ids=np.stack([q.ids for q in seqs]),
        mask=np.stack([q.attention_mask for q in seqs]),
        labels=np.array([int(s.label) for s in samples], dtype=np.int64),
        sample_ids=[s.sample_id for s in samples],
    )
