"""Declarative layer stack and the shape bookkeeping that goes with it."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import ClassVar, Union

from ..errors import ConfigError, SpatialUnderflow
from .functional import conv_output_size


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel: tuple[int, int]
    stride: int = 1
    padding: int = 0
    kind: ClassVar[str] = "conv"

    def __post_init__(self):
        object.__setattr__(self, "kernel", _pair(self.kernel))
        if self.out_channels < 1 or min(self.kernel) < 1 or self.stride < 1 or self.padding < 0:
            raise ConfigError(f"invalid conv layer {self}")


@dataclass(frozen=True)
class MaxPool:
    window: int = 2
    stride: int = 2
    kind: ClassVar[str] = "maxpool"

    def __post_init__(self):
        if self.window < 1 or self.stride < 1:
            raise ConfigError(f"invalid pooling layer {self}")


@dataclass(frozen=True)
class FullyConnected:
    out_features: int
    kind: ClassVar[str] = "fc"

    def __post_init__(self):
        if self.out_features < 1:
            raise ConfigError(f"invalid fully connected layer {self}")


@dataclass(frozen=True)
class ReLU:
    kind: ClassVar[str] = "relu"


@dataclass(frozen=True)
class SoftmaxLoss:
    kind: ClassVar[str] = "softmax_loss"


LayerSpec = Union[Conv, MaxPool, FullyConnected, ReLU, SoftmaxLoss]
_KINDS = {cls.kind: cls for cls in (Conv, MaxPool, FullyConnected, ReLU, SoftmaxLoss)}
PARAMETERIZED = (Conv, FullyConnected)


def layer_to_dict(layer: LayerSpec) -> dict:
    d = {"kind": layer.kind, **asdict(layer)}
    if "kernel" in d:
        d["kernel"] = list(d["kernel"])
    return d


def layer_from_dict(d: dict) -> LayerSpec:
    d = dict(d)
    try:
        cls = _KINDS[d.pop("kind")]
    except KeyError as exc:
        raise ConfigError(f"unknown layer kind {exc}") from None
    return cls(**d)


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        fcs = [l for l in self.layers if isinstance(l, FullyConnected)]
        if not fcs or fcs[-1].out_features != self.num_classes:
            raise ConfigError("the last fully connected layer must output num_classes logits")
        if not isinstance(self.layers[-1], SoftmaxLoss):
            raise ConfigError("the layer stack must end with SoftmaxLoss")

    def shapes(self) -> list[tuple[int, ...]]:
        """Per-sample output shape after each layer; raises SpatialUnderflow."""
        shape = self.input_shape
        out = []
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv):
                if len(shape) != 3:
                    raise ConfigError(f"layer {i}: convolution after flattening")
                c, h, w = shape
                kh, kw = layer.kernel
                ho = conv_output_size(h, kh, layer.stride, layer.padding)
                wo = conv_output_size(w, kw, layer.stride, layer.padding)
                if h + 2 * layer.padding < kh or w + 2 * layer.padding < kw or ho < 1 or wo < 1:
                    raise SpatialUnderflow(f"layer {i}: {kh}x{kw} conv does not fit a {h}x{w} map")
                shape = (layer.out_channels, ho, wo)
            elif isinstance(layer, MaxPool):
                if len(shape) != 3:
                    raise ConfigError(f"layer {i}: pooling after flattening")
                c, h, w = shape
                if layer.window > h or layer.window > w:
                    raise SpatialUnderflow(f"layer {i}: pool window {layer.window} exceeds {h}x{w} map")
                shape = (c, (h - layer.window) // layer.stride + 1, (w - layer.window) // layer.stride + 1)
            elif isinstance(layer, FullyConnected):
                shape = (layer.out_features,)
            out.append(shape)
        return out

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        prev = self.input_shape
        counts = {"conv": 0, "fc": 0}
        for layer, out_shape in zip(self.layers, self.shapes()):
            if isinstance(layer, Conv):
                counts["conv"] += 1
                name = f"conv{counts['conv']}"
                shapes[f"{name}.weight"] = (layer.out_channels, prev[0], *layer.kernel)
                shapes[f"{name}.bias"] = (layer.out_channels,)
            elif isinstance(layer, FullyConnected):
                counts["fc"] += 1
                name = f"fc{counts['fc']}"
                fan_in = 1
                for v in prev:
                    fan_in *= v
                shapes[f"{name}.weight"] = (layer.out_features, fan_in)
                shapes[f"{name}.bias"] = (layer.out_features,)
            prev = out_shape
        return shapes

    def param_count(self) -> int:
        total = 0
        for shape in self.param_shapes().values():
            n = 1
            for v in shape:
                n *= v
            total += n
        return total

    def parameterized_layers(self) -> list[LayerSpec]:
        return [l for l in self.layers if isinstance(l, PARAMETERIZED)]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "layers": [layer_to_dict(l) for l in self.layers],
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(d["name"], tuple(d["input_shape"]), tuple(layer_from_dict(l) for l in d["layers"]), int(d["num_classes"]))
