"""Two-stage training: artificial data first, then a mixture containing all scene data."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from ..dataset import (
    Dataset,
    ManifestRecord,
    Vocabulary,
    channel_mean,
    encode_labels,
    load_pixels,
    normalize,
    split_artificial,
)
from ..engine import Source
from ..errors import ConfigError, DataError, EmptyDataset, VocabularyMismatch
from ..nn.layers import NetworkSpec
from ..nn.network import Network
from ..nn.optim import SGD
from .classifier import Recognizer

log = logging.getLogger(__name__)


class Regime(str, Enum):
    A = "A"
    S = "S"
    AS = "A+S"


class Mixing(str, Enum):
    REMAINDER_ARTIFICIAL = "RemainderArtificial"
    EQUALIZE_COUNTS = "EqualizeCounts"


@dataclass(frozen=True)
class TrainPlan:
    regime: Regime = Regime.AS
    stage1_fraction: float = 0.95
    stage2_mixing: Mixing = Mixing.EQUALIZE_COUNTS
    stage1_epochs: int = 20
    stage2_epochs: int = 10
    lr: float = 0.01
    lr_decay: float = 0.1
    decay_points: tuple[float, ...] = (0.6, 0.85)
    batch_size: int = 64
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0
    # stop stage 1 once holdout accuracy reaches this value (None trains all epochs)
    stage1_target_accuracy: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        object.__setattr__(self, "stage2_mixing", Mixing(self.stage2_mixing))
        object.__setattr__(self, "decay_points", tuple(float(p) for p in self.decay_points))
        if not 0.0 <= self.stage1_fraction <= 1.0:
            raise ConfigError("stage1_fraction must lie in [0, 1]")
        if self.stage1_epochs < 0 or self.stage2_epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.lr < 0 or self.weight_decay < 0 or not 0 <= self.momentum < 1:
            raise ConfigError("lr and weight_decay must be >= 0, momentum in [0, 1)")
        if any(not 0 < p <= 1 for p in self.decay_points):
            raise ConfigError("decay_points are fractions of a stage in (0, 1]")

    def lr_for_epoch(self, epoch: int, total: int) -> float:
        """Step schedule: multiply by lr_decay at each decay point of the stage."""
        passed = sum(epoch >= int(p * total) for p in self.decay_points)
        return self.lr * self.lr_decay**passed

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regime"] = self.regime.value
        d["stage2_mixing"] = self.stage2_mixing.value
        d["decay_points"] = list(self.decay_points)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainPlan":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train plan keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class StagePlan:
    """Materialized record lists for each stage."""

    stage1: list[ManifestRecord]
    stage2: list[ManifestRecord]
    reserve: list[ManifestRecord]  # artificial records held out of stage 1


@dataclass
class HistoryEntry:
    epoch: int
    stage: int
    loss: float
    holdout_accuracy: float | None
    lr: float
    seconds: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: Recognizer
    history: list[HistoryEntry] = field(default_factory=list)
    stages: StagePlan | None = None


def _check_sources(records: Sequence[ManifestRecord], source: Source, what: str) -> None:
    for rec in records:
        if rec.source != source:
            raise DataError(f"{what} set contains {rec.source.value} record {rec.path}")


def plan_stages(plan: TrainPlan, artificial: Sequence[ManifestRecord], scene: Sequence[ManifestRecord]) -> StagePlan:
    """Decide which records each stage trains on.

    Stage 1 is a seeded stratified ``stage1_fraction`` split of the artificial
    records. Stage 2 holds every scene record plus artificial records chosen by
    ``stage2_mixing``: the reserved remainder, or a seeded subsample of the
    artificial set equal in size to the scene set. Regime A has no stage 2;
    regime S has no stage 1 and its stage 2 is scene data only.
    """
    artificial, scene = list(artificial), list(scene)
    _check_sources(scene, Source.SCENE, "scene")
    if plan.regime == Regime.S:
        if not scene:
            raise EmptyDataset("regime S needs scene records")
        return StagePlan([], scene, [])
    if not artificial:
        raise EmptyDataset(f"regime {plan.regime.value} needs artificial records")
    stage1, reserve = split_artificial(artificial, plan.stage1_fraction, plan.seed)
    if not stage1:
        raise EmptyDataset("stage 1 split is empty")
    if plan.regime == Regime.A:
        return StagePlan(stage1, [], reserve)
    if not scene:
        raise EmptyDataset("regime A+S needs scene records")
    if plan.stage2_mixing == Mixing.REMAINDER_ARTIFICIAL:
        extra = reserve
    else:
        rng = np.random.default_rng([plan.seed, 2])
        take = min(len(scene), len(artificial))
        extra = [artificial[i] for i in np.sort(rng.choice(len(artificial), size=take, replace=False))]
    mixed = scene + extra
    order = np.random.default_rng([plan.seed, 3]).permutation(len(mixed))
    return StagePlan(stage1, [mixed[i] for i in order], reserve)


class ArraySet:
    """Decoded pixels and label indices held in memory."""

    def __init__(self, pixels: np.ndarray, labels: np.ndarray):
        if len(pixels) != len(labels):
            raise ValueError("pixels and labels differ in length")
        self.pixels = pixels
        self.labels = labels

    def __len__(self):
        return len(self.labels)

    @classmethod
    def from_dataset(cls, dataset: Dataset, vocabulary: Vocabulary, records=None) -> "ArraySet":
        sub = dataset if records is None else dataset.subset(records)
        if len(sub) == 0:
            return cls(np.zeros((0, 0, 0, 0), np.uint8), np.zeros(0, np.int64))
        labels = encode_labels(sub.records, vocabulary)
        return cls(sub.load_pixels(), labels)


def accuracy(model: Recognizer, data: ArraySet, batch_size: int = 256) -> float:
    if len(data) == 0:
        return float("nan")
    pred = model.logits(data.pixels, batch_size).argmax(axis=1)
    return float(np.mean(pred == data.labels))


def train_epoch(model: Recognizer, opt: SGD, data: ArraySet, lr: float, batch_size: int, rng: np.random.Generator) -> float:
    """One shuffled pass; returns the sample-weighted mean training loss."""
    order = rng.permutation(len(data))
    total = 0.0
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        x = normalize(data.pixels[idx], model.mean)
        loss, grads = model.network.loss_and_grads(x, data.labels[idx])
        opt.step(model.network.params, grads, lr)
        total += loss * len(idx)
    return total / max(len(data), 1)


def train_stage(
    model: Recognizer,
    data: ArraySet,
    plan: TrainPlan,
    stage: int,
    epochs: int,
    holdout: ArraySet | None = None,
    target_accuracy: float | None = None,
    on_epoch: Callable[[HistoryEntry], None] | None = None,
) -> list[HistoryEntry]:
    """Train ``model`` in place for up to ``epochs`` epochs with a fresh optimizer."""
    opt = SGD(plan.lr, plan.momentum, plan.weight_decay)
    history = []
    for epoch in range(epochs):
        t0 = time.perf_counter()
        lr = plan.lr_for_epoch(epoch, epochs)
        rng = np.random.default_rng([plan.seed, stage, epoch])
        loss = train_epoch(model, opt, data, lr, plan.batch_size, rng)
        acc = accuracy(model, holdout) if holdout is not None and len(holdout) else None
        entry = HistoryEntry(epoch + 1, stage, loss, acc, lr, time.perf_counter() - t0)
        history.append(entry)
        log.info("stage %d epoch %d loss %.4f holdout %s lr %g", stage, epoch + 1, loss, acc, lr)
        if on_epoch:
            on_epoch(entry)
        if target_accuracy is not None and acc is not None and acc >= target_accuracy:
            break
    return history


def _vocabulary_for(records: Sequence[ManifestRecord], vocabulary: Vocabulary | None, spec: NetworkSpec) -> Vocabulary:
    vocab = vocabulary or Vocabulary.from_records(records)
    missing = {r.codepoint for r in records} - set(vocab)
    if missing:
        raise VocabularyMismatch(f"labels outside the vocabulary: {''.join(sorted(map(chr, missing)))!r}")
    if len(vocab) != spec.num_classes:
        raise VocabularyMismatch(f"vocabulary has {len(vocab)} classes, network expects {spec.num_classes}")
    return vocab


def train_two_stage(
    plan: TrainPlan,
    artificial: Dataset | None,
    scene: Dataset | None,
    spec: NetworkSpec,
    vocabulary: Vocabulary | None = None,
    holdout: Dataset | None = None,
    stage1_model: Recognizer | None = None,
    on_epoch: Callable[[HistoryEntry], None] | None = None,
) -> TrainResult:
    """Run the regime's stages and return the trained model and history.

    Normalization statistics come from the first stage actually trained and
    stay frozen afterwards. ``stage1_model`` lets a caller hand in the result
    of an identical earlier stage 1 (for instance the regime A model with the
    same plan and seed) so that only stage 2 runs.
    """
    art_records = artificial.records if artificial is not None else []
    scene_records = scene.records if scene is not None else []
    stages = plan_stages(plan, art_records, scene_records)
    vocab = _vocabulary_for(list(art_records) + list(scene_records), vocabulary, spec)
    hold = ArraySet.from_dataset(holdout, vocab) if holdout is not None else None
    history: list[HistoryEntry] = []

    def arrays(records):
        paths = [(artificial if r.source == Source.ARTIFICIAL else scene).image_path(r) for r in records]
        return ArraySet(load_pixels(paths), encode_labels(records, vocab))

    if stage1_model is not None:
        if plan.regime != Regime.AS:
            raise ConfigError("stage1_model only applies to regime A+S")
        model = stage1_model.copy()
        model.regime = plan.regime.value
    else:
        model = None
        if stages.stage1:
            data1 = arrays(stages.stage1)
            model = Recognizer(Network(spec, seed=plan.seed), channel_mean(data1.pixels), vocab, plan.regime.value)
            history += train_stage(model, data1, plan, 1, plan.stage1_epochs, hold,
                                   plan.stage1_target_accuracy, on_epoch)
            del data1
    if stages.stage2:
        data2 = arrays(stages.stage2)
        if model is None:
            model = Recognizer(Network(spec, seed=plan.seed), channel_mean(data2.pixels), vocab, plan.regime.value)
        epochs = plan.stage1_epochs if plan.regime == Regime.S else plan.stage2_epochs
        history += train_stage(model, data2, plan, 2, epochs, hold, None, on_epoch)
    return TrainResult(model, history, stages)


__all__ = [
    "ArraySet",
    "HistoryEntry",
    "Mixing",
    "Regime",
    "StagePlan",
    "TrainPlan",
    "TrainResult",
    "accuracy",
    "plan_stages",
    "train_stage",
    "train_two_stage",
]
