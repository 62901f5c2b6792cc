"""On-disk datasets: PNG files plus a line-delimited JSON manifest."""
from __future__ import annotations

import json
import os
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .engine import LabeledImage, Provenance, Source
from .errors import (
    IoFailure,
    MissingImage,
    NonArtificialRecord,
    ParseError,
    UnknownLabel,
    VocabularyMismatch,
)

MANIFEST_NAME = "manifest.jsonl"
PROVENANCE_NAME = "provenance.jsonl"
MANIFEST_FIELDS = ("path", "codepoint", "char", "source", "split", "digest")


class Split(str, Enum):
    TRAIN = "Train"
    HOLDOUT = "Holdout"


def valid_codepoint(cp) -> bool:
    return isinstance(cp, int) and not isinstance(cp, bool) and 0 <= cp <= 0x10FFFF and not 0xD800 <= cp <= 0xDFFF


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    codepoint: int
    source: Source
    split: Split
    digest: str

    @property
    def char(self) -> str:
        return chr(self.codepoint)

    def to_json(self) -> dict:
        return {
            "path": self.path,
            "codepoint": self.codepoint,
            "char": self.char,
            "source": self.source.value,
            "split": self.split.value,
            "digest": self.digest,
        }

    @classmethod
    def from_json(cls, obj: dict, line_no: int = 0) -> "ManifestRecord":
        if not isinstance(obj, dict):
            raise ParseError(line_no, "record is not a JSON object")
        missing = [k for k in MANIFEST_FIELDS if k not in obj]
        if missing:
            raise ParseError(line_no, f"missing fields {missing}")
        cp = obj["codepoint"]
        if not valid_codepoint(cp):
            raise ParseError(line_no, f"invalid codepoint {cp!r}")
        if obj["char"] != chr(cp):
            raise ParseError(line_no, f"char {obj['char']!r} does not match codepoint U+{cp:04X}")
        try:
            source = Source(obj["source"])
            split = Split(obj["split"])
        except ValueError as exc:
            raise ParseError(line_no, str(exc)) from None
        if not isinstance(obj["path"], str) or not obj["path"]:
            raise ParseError(line_no, "path must be a non-empty string")
        return cls(obj["path"], cp, source, split, str(obj["digest"]))


class Vocabulary:
    """Ordered label space; class index is the position in the list."""

    def __init__(self, codepoints: Iterable[int]):
        self.codepoints = tuple(int(c) for c in codepoints)
        self._index = {cp: i for i, cp in enumerate(self.codepoints)}
        if len(self._index) != len(self.codepoints):
            raise VocabularyMismatch("vocabulary contains duplicates")
        if not all(valid_codepoint(c) for c in self.codepoints):
            raise VocabularyMismatch("vocabulary contains an invalid codepoint")

    @classmethod
    def from_chars(cls, text: str) -> "Vocabulary":
        return cls(ord(c) for c in "".join(text.split()))

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_chars(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def from_records(cls, records: Iterable[ManifestRecord]) -> "Vocabulary":
        return cls(sorted({r.codepoint for r in records}))

    def __len__(self):
        return len(self.codepoints)

    def __getitem__(self, i):
        return self.codepoints[i]

    def __iter__(self):
        return iter(self.codepoints)

    def __contains__(self, cp):
        return cp in self._index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.codepoints == other.codepoints

    def index(self, cp: int) -> int:
        try:
            return self._index[cp]
        except KeyError:
            raise UnknownLabel(f"label U+{cp:04X} ({chr(cp)}) is not in the vocabulary") from None

    def chars(self) -> str:
        return "".join(chr(c) for c in self.codepoints)


def write_dataset(images: Iterable[LabeledImage], out_dir: str | Path, split: Split = Split.TRAIN) -> Path:
    """Write one PNG per image plus ``manifest.jsonl`` and ``provenance.jsonl``."""
    out_dir = Path(out_dir)
    split = Split(split)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest_path = out_dir / MANIFEST_NAME
        with open(manifest_path, "w", encoding="utf-8", newline="\n") as mf, \
                open(out_dir / PROVENANCE_NAME, "w", encoding="utf-8", newline="\n") as pf:
            for n, img in enumerate(images):
                rel = f"images/{n:06d}.png"
                if n == 0:
                    (out_dir / "images").mkdir(exist_ok=True)
                Image.fromarray(img.pixels).save(out_dir / rel, format="PNG")
                digest = img.provenance.digest() if img.provenance is not None else "0" * 16
                rec = ManifestRecord(rel, img.label, Source(img.source), split, digest)
                mf.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")
                if img.provenance is not None:
                    pf.write(json.dumps({"path": rel, **img.provenance.to_dict()}) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write dataset to {out_dir}: {exc}") from exc
    return manifest_path


def _manifest_file(path: str | Path) -> Path:
    path = Path(path)
    return path / MANIFEST_NAME if path.is_dir() else path


def read_manifest(path: str | Path, validate: bool = False) -> list[ManifestRecord]:
    path = _manifest_file(path)
    if not path.is_file():
        raise IoFailure(f"manifest not found: {path}")
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"invalid JSON: {exc.msg}") from None
            records.append(ManifestRecord.from_json(obj, line_no))
    if validate:
        for line_no, rec in enumerate(records, start=1):
            if not (path.parent / rec.path).is_file():
                raise MissingImage(f"{path}: record {line_no} references missing image {rec.path}")
    return records


def read_provenance(path: str | Path) -> dict[str, Provenance]:
    """Provenance sidecar keyed by image path; empty if the dataset has none."""
    path = _manifest_file(path).parent / PROVENANCE_NAME
    if not path.is_file():
        return {}
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    obj = json.loads(line)
                    key = obj.pop("path")
                    out[key] = Provenance.from_dict(obj)
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ParseError(line_no, f"bad provenance record: {exc}") from None
    return out


def stratified_counts(class_sizes: dict[int, int], fraction: float, rng: np.random.Generator) -> dict[int, int]:
    """Per-class stage-1 quotas summing to floor(N * fraction), each within 1 of its own floor."""
    total = sum(class_sizes.values())
    target = int(np.floor(total * fraction + 1e-9))
    quotas = {c: int(np.floor(n * fraction + 1e-9)) for c, n in class_sizes.items()}
    extra = target - sum(quotas.values())
    if extra > 0:
        candidates = [c for c, n in sorted(class_sizes.items()) if quotas[c] < n]
        order = rng.permutation(len(candidates))
        for k in order[:extra]:
            quotas[candidates[k]] += 1
    return quotas


def split_artificial(records: Sequence[ManifestRecord], stage1_fraction: float, seed: int):
    """Seeded stratified split into (stage1, reserve); stage1 gets floor(N * fraction)."""
    if not 0.0 <= stage1_fraction <= 1.0:
        raise ValueError("stage1_fraction must lie in [0, 1]")
    for rec in records:
        if rec.source != Source.ARTIFICIAL:
            raise NonArtificialRecord(f"{rec.path} is tagged {rec.source.value}")
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[int]] = defaultdict(list)
    for i, rec in enumerate(records):
        by_class[rec.codepoint].append(i)
    quotas = stratified_counts({c: len(v) for c, v in by_class.items()}, stage1_fraction, rng)
    stage1, reserve = [], []
    for cp in sorted(by_class):
        idx = np.array(by_class[cp])[rng.permutation(len(by_class[cp]))]
        stage1.extend(idx[:quotas[cp]].tolist())
        reserve.extend(idx[quotas[cp]:].tolist())
    stage1 = [records[i] for i in np.array(stage1, dtype=np.int64)[rng.permutation(len(stage1))]]
    reserve = [records[i] for i in np.array(reserve, dtype=np.int64)[rng.permutation(len(reserve))]]
    return stage1, reserve


@dataclass
class Dataset:
    """Manifest records bound to the directory their paths are relative to."""

    records: list[ManifestRecord]
    root: Path

    @classmethod
    def open(cls, path: str | Path, validate: bool = True) -> "Dataset":
        path = _manifest_file(path)
        return cls(read_manifest(path, validate=validate), path.parent)

    def __len__(self):
        return len(self.records)

    def image_path(self, rec: ManifestRecord) -> Path:
        return self.root / rec.path

    def subset(self, records: Sequence[ManifestRecord]) -> "Dataset":
        return Dataset(list(records), self.root)

    def load_pixels(self) -> np.ndarray:
        return load_pixels(self.image_path(r) for r in self.records)


def read_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB") if im.mode not in ("L", "RGB") else im)
    except FileNotFoundError:
        raise MissingImage(f"image not found: {path}") from None
    except OSError as exc:
        raise IoFailure(f"cannot read image {path}: {exc}") from exc
    return arr[..., None] if arr.ndim == 2 else arr


def load_pixels(paths: Iterable[Path]) -> np.ndarray:
    """Stack images into an N x H x W x C uint8 array."""
    arrays = [read_image(p) for p in paths]
    if not arrays:
        return np.zeros((0, 0, 0, 0), dtype=np.uint8)
    return np.stack(arrays)


def channel_mean(pixels: np.ndarray) -> np.ndarray:
    """Per-channel mean of N x H x W x C uint8 pixels on the [0, 1] scale."""
    return (pixels.reshape(-1, pixels.shape[-1]).astype(np.float64).mean(axis=0) / 255.0).astype(np.float32)


def normalize(pixels: np.ndarray, mean: np.ndarray | None) -> np.ndarray:
    """N x H x W x C uint8 -> N x C x H x W float32: scale by 1/255, subtract channel mean."""
    x = pixels.astype(np.float32).transpose(0, 3, 1, 2) / np.float32(255.0)
    if mean is not None:
        x -= np.asarray(mean, dtype=np.float32).reshape(1, -1, 1, 1)
    return np.ascontiguousarray(x)


def encode_labels(records: Iterable[ManifestRecord], vocabulary: Vocabulary) -> np.ndarray:
    return np.array([vocabulary.index(r.codepoint) for r in records], dtype=np.int64)


def load_batch(dataset: Dataset, vocabulary: Vocabulary, batch_indices: Sequence[int], mean: np.ndarray | None = None):
    """Read the indexed records: (B x C x H x W float32 input, B int64 label indices)."""
    recs = [dataset.records[i] for i in batch_indices]
    labels = encode_labels(recs, vocabulary)
    pixels = load_pixels(dataset.image_path(r) for r in recs)
    return normalize(pixels, mean), labels


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
