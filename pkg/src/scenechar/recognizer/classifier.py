"""A network bundled with its input statistics and label vocabulary."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dataset import Vocabulary, normalize, read_image
from ..errors import DataError, VocabularyMismatch
from ..nn import functional as F
from ..nn.checkpoint import read_tensors, write_tensors
from ..nn.layers import NetworkSpec
from ..nn.network import Network

MEAN_KEY = "meta.norm_mean"
VOCAB_KEY = "meta.vocabulary"


@dataclass
class Recognizer:
    network: Network
    mean: np.ndarray  # per-channel mean on the [0, 1] scale
    vocabulary: Vocabulary
    regime: str = ""  # training regime label carried into reports

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float32)
        if len(self.vocabulary) != self.network.spec.num_classes:
            raise VocabularyMismatch(
                f"vocabulary has {len(self.vocabulary)} classes, network outputs {self.network.spec.num_classes}"
            )

    @property
    def spec(self) -> NetworkSpec:
        return self.network.spec

    def copy(self) -> "Recognizer":
        return Recognizer(self.network.copy(), self.mean.copy(), self.vocabulary, self.regime)

    def logits(self, pixels: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Logits for N x H x W x C uint8 pixels."""
        out = [
            self.network.forward(normalize(pixels[i:i + batch_size], self.mean), keep_cache=False)
            for i in range(0, len(pixels), batch_size)
        ]
        if not out:
            return np.zeros((0, len(self.vocabulary)), dtype=np.float32)
        return np.concatenate(out)

    def predict_pixels(self, pixels: np.ndarray, top_k: int = 5) -> list[list[tuple[str, float]]]:
        probs = F.softmax(self.logits(pixels).astype(np.float64))
        top_k = max(1, min(top_k, probs.shape[1]))
        ranked = []
        for row in probs:
            order = np.argsort(-row, kind="stable")[:top_k]
            ranked.append([(chr(self.vocabulary[i]), float(row[i])) for i in order])
        return ranked

    def save(self, path: str | Path) -> None:
        tensors = dict(self.network.params)
        tensors[MEAN_KEY] = self.mean
        tensors[VOCAB_KEY] = np.array(list(self.vocabulary), dtype=np.float32)
        write_tensors(path, tensors, {"network": self.spec.to_dict(), "regime": self.regime})

    @classmethod
    def load(cls, path: str | Path) -> "Recognizer":
        tensors, meta = read_tensors(path)
        if "network" not in meta or MEAN_KEY not in tensors or VOCAB_KEY not in tensors:
            raise DataError(f"{path} lacks the network layout, normalization or vocabulary")
        spec = NetworkSpec.from_dict(meta["network"])
        mean = tensors.pop(MEAN_KEY)
        vocab = Vocabulary(int(round(v)) for v in tensors.pop(VOCAB_KEY))
        return cls(Network(spec, tensors), mean, vocab, meta.get("regime", ""))


def predict(model: Recognizer, image_path: str | Path, top_k: int = 5) -> list[tuple[str, float]]:
    """Ranked (character, probability) pairs for one image file."""
    pixels = read_image(Path(image_path))[None]
    expected = model.spec.input_shape
    if (pixels.shape[3], pixels.shape[1], pixels.shape[2]) != expected:
        raise DataError(f"{image_path}: image is {pixels.shape[1:]} (HWC), the model expects CHW {expected}")
    return model.predict_pixels(pixels, top_k)[0]
