"""Top-1 evaluation and the regime x model accuracy grid."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..dataset import Dataset, encode_labels
from ..errors import VocabularyMismatch
from .classifier import Recognizer

# Published accuracies on the two real scene-character benchmarks, keyed by (model, regime).
REFERENCE = {
    ("CNN-7", "A"): (0.42, 0.70),
    ("CNN-7", "S"): (0.38, 0.45),
    ("CNN-7", "A+S"): (0.73, 0.76),
    ("CNN-9", "A"): (0.44, 0.69),
    ("CNN-9", "S"): (0.31, 0.36),
    ("CNN-9", "A+S"): (0.73, 0.75),
}
REFERENCE_COLUMNS = ("reference set 1", "reference set 2")
REGIME_ORDER = ("A", "S", "A+S")


@dataclass
class EvalReport:
    dataset: str
    model: str
    regime: str
    vocabulary: str  # characters in label-index order
    confusion: np.ndarray  # K x K counts, rows = true class, columns = predicted

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def correct(self) -> int:
        return int(np.trace(self.confusion))

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    @property
    def per_class(self) -> dict[str, float]:
        """Accuracy for each class that occurs in the evaluated set."""
        rows = self.confusion.sum(axis=1)
        return {ch: float(self.confusion[i, i] / rows[i]) for i, ch in enumerate(self.vocabulary) if rows[i]}

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "model": self.model,
            "regime": self.regime,
            "vocabulary": self.vocabulary,
            "total": self.total,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "per_class": self.per_class,
            "confusion": self.confusion.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(d["dataset"], d["model"], d["regime"], d["vocabulary"], np.asarray(d["confusion"], dtype=np.int64))


def confusion_matrix(true: np.ndarray, pred: np.ndarray, k: int) -> np.ndarray:
    return np.bincount(true * k + pred, minlength=k * k).reshape(k, k).astype(np.int64)


def evaluate(model: Recognizer, dataset: Dataset, name: str = "holdout", regime: str = "", batch_size: int = 256) -> EvalReport:
    """Top-1 predictions by argmax of the logits (ties resolve to the lowest index)."""
    outside = {r.codepoint for r in dataset.records} - set(model.vocabulary)
    if outside:
        raise VocabularyMismatch(
            f"dataset labels {''.join(sorted(map(chr, outside)))!r} are not in the checkpoint vocabulary"
        )
    k = len(model.vocabulary)
    labels = encode_labels(dataset.records, model.vocabulary)
    if len(labels):
        pred = model.logits(dataset.load_pixels(), batch_size).argmax(axis=1)
    else:
        pred = np.zeros(0, dtype=np.int64)
    return EvalReport(name, model.spec.name, regime, model.vocabulary.chars(), confusion_matrix(labels, pred, k))


@dataclass
class AblationTable:
    datasets: list[str]
    rows: list[dict] = field(default_factory=list)  # {"model", "regime", "accuracy": {dataset: value}}
    reference: bool = False

    def render(self) -> str:
        header = ["model", "regime", *self.datasets]
        if self.reference:
            header += [f"{c} (published)" for c in REFERENCE_COLUMNS]
        body = []
        for row in self.rows:
            cells = [row["model"], row["regime"]]
            cells += [f"{row['accuracy'][d]:.4f}" if d in row["accuracy"] else "-" for d in self.datasets]
            if self.reference:
                ref = REFERENCE.get((row["model"], row["regime"]))
                cells += [f"{v:.2f}" for v in ref] if ref else ["-"] * len(REFERENCE_COLUMNS)
            body.append(cells)
        widths = [max(len(str(r[i])) for r in [header, *body]) for i in range(len(header))]
        lines = ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header, *body]]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        d = {"datasets": self.datasets, "rows": self.rows, "reference": self.reference}
        if self.reference:
            d["published"] = {f"{m}/{r}": dict(zip(REFERENCE_COLUMNS, v)) for (m, r), v in REFERENCE.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "AblationTable":
        return cls(list(d["datasets"]), [dict(r) for r in d["rows"]], bool(d.get("reference", False)))

    @classmethod
    def from_json(cls, text: str) -> "AblationTable":
        return cls.from_dict(json.loads(text))


def ablation_table(reports: list[EvalReport], reference: bool = False) -> AblationTable:
    """Group reports into one row per (model, regime), one column per dataset."""
    datasets: list[str] = []
    grid: dict[tuple[str, str], dict[str, float]] = {}
    for rep in reports:
        if rep.dataset not in datasets:
            datasets.append(rep.dataset)
        grid.setdefault((rep.model, rep.regime), {})[rep.dataset] = rep.accuracy

    def order(key):
        model, regime = key
        rank = REGIME_ORDER.index(regime) if regime in REGIME_ORDER else len(REGIME_ORDER)
        return model, rank, regime

    rows = [{"model": m, "regime": r, "accuracy": grid[(m, r)]} for m, r in sorted(grid, key=order)]
    return AblationTable(datasets, rows, reference)
