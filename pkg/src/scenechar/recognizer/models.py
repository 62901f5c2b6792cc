"""The two network layouts: a 7-layer large-kernel net and a deeper small-kernel baseline."""
from __future__ import annotations

from ..errors import ConfigError
from ..nn.layers import Conv, FullyConnected, MaxPool, NetworkSpec, ReLU, SoftmaxLoss

DEFAULT_INPUT = (3, 48, 48)


def build_cnn7(
    num_classes: int,
    input_shape=DEFAULT_INPUT,
    channels=(32, 64, 128),
    kernels=(9, 7, 5),
    hidden: int = 512,
) -> NetworkSpec:
    """conv, conv, pool, conv, pool, fc, fc with ReLU after every conv and the hidden FC.

    Widths and kernel sizes are free; the connectivity pattern is not. For a
    48x48 input the spatial sizes run 48 -> 40 -> 34 -> 17 -> 13 -> 6.
    Raises SpatialUnderflow when the input is too small for the kernel chain.
    """
    c1, c2, c3 = channels
    k1, k2, k3 = kernels
    layers = (
        Conv(c1, k1), ReLU(),
        Conv(c2, k2), ReLU(), MaxPool(2, 2),
        Conv(c3, k3), ReLU(), MaxPool(2, 2),
        FullyConnected(hidden), ReLU(),
        FullyConnected(num_classes), SoftmaxLoss(),
    )
    spec = NetworkSpec("CNN-7", tuple(input_shape), layers, num_classes)
    spec.shapes()
    return spec


def build_cnn9(num_classes: int, input_shape=DEFAULT_INPUT) -> NetworkSpec:
    """Four padded small-kernel convs, two pools and three FC layers."""
    layers = (
        Conv(32, 5, padding=2), ReLU(),
        Conv(64, 3, padding=1), ReLU(), MaxPool(2, 2),
        Conv(128, 3, padding=1), ReLU(),
        Conv(128, 3, padding=1), ReLU(), MaxPool(2, 2),
        FullyConnected(1024), ReLU(),
        FullyConnected(512), ReLU(),
        FullyConnected(num_classes), SoftmaxLoss(),
    )
    spec = NetworkSpec("CNN-9", tuple(input_shape), layers, num_classes)
    spec.shapes()
    return spec


BUILDERS = {"CNN-7": build_cnn7, "CNN-9": build_cnn9}


def build_model(name: str, num_classes: int, input_shape=DEFAULT_INPUT) -> NetworkSpec:
    try:
        builder = BUILDERS[name.upper()]
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; choose from {sorted(BUILDERS)}") from None
    return builder(num_classes, input_shape)
