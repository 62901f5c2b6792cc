"""Sequential network executing a NetworkSpec with the functional layer ops."""
from __future__ import annotations

import hashlib

import numpy as np

from . import functional as F
from .layers import Conv, FullyConnected, MaxPool, NetworkSpec, ReLU, SoftmaxLoss


def kaiming_init(spec: NetworkSpec, seed: int, dtype=np.float32) -> dict[str, np.ndarray]:
    """Gaussian weights with std sqrt(2 / fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in spec.param_shapes().items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:]))
            params[name] = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
    return params


class Network:
    def __init__(self, spec: NetworkSpec, params: dict[str, np.ndarray] | None = None, seed: int = 0, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        expected = spec.param_shapes()
        if params is None:
            params = kaiming_init(spec, seed, self.dtype)
        else:
            if set(params) != set(expected):
                raise KeyError(f"parameter names {sorted(params)} do not match spec {sorted(expected)}")
            for name, shape in expected.items():
                if tuple(params[name].shape) != tuple(shape):
                    raise ValueError(f"{name}: shape {params[name].shape}, expected {shape}")
            params = {k: np.array(params[k], dtype=self.dtype) for k in expected}
        self.params = params
        self._caches = []
        self._signature_parts = []

    def astype(self, dtype) -> "Network":
        return Network(self.spec, {k: v.astype(dtype) for k, v in self.params.items()}, dtype=dtype)

    def copy(self) -> "Network":
        return Network(self.spec, {k: v.copy() for k, v in self.params.items()}, dtype=self.dtype)

    def _layer_names(self):
        counts = {"conv": 0, "fc": 0}
        for layer in self.spec.layers:
            if isinstance(layer, (Conv, FullyConnected)):
                key = "conv" if isinstance(layer, Conv) else "fc"
                counts[key] += 1
                yield layer, f"{key}{counts[key]}"
            else:
                yield layer, None

    def forward(self, x: np.ndarray, keep_cache: bool = True) -> np.ndarray:
        """Logits for an N x C x H x W batch."""
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.spec.input_shape:
            raise ValueError(f"input {x.shape[1:]} does not match network input {self.spec.input_shape}")
        caches, signature = [], []
        for layer, name in self._layer_names():
            if isinstance(layer, Conv):
                x, cache = F.conv_forward(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"],
                                          layer.stride, layer.padding)
            elif isinstance(layer, MaxPool):
                x, cache = F.maxpool_forward(x, layer.window, layer.stride)
                signature.append(cache[1])
            elif isinstance(layer, FullyConnected):
                in_shape = x.shape
                x, cache = F.fc_forward(x.reshape(len(x), -1), self.params[f"{name}.weight"], self.params[f"{name}.bias"])
                cache = (cache, in_shape)
            elif isinstance(layer, ReLU):
                x, cache = F.relu_forward(x)
                signature.append(cache)
            else:
                cache = None
            caches.append(cache if keep_cache else None)
        self._caches = caches if keep_cache else []
        self._signature_parts = signature
        return x

    def activation_signature(self) -> bytes:
        """Digest of the ReLU masks and pooling argmaxes of the last forward pass."""
        h = hashlib.blake2b(digest_size=16)
        for part in self._signature_parts:
            h.update(np.ascontiguousarray(part).tobytes())
        return h.digest()

    def backward(self, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
        if not self._caches:
            raise RuntimeError("backward called without a cached forward pass")
        grads = {}
        g = grad_logits
        layers = list(self._layer_names())
        first_param = next(i for i, (l, _) in enumerate(layers) if isinstance(l, (Conv, FullyConnected)))
        for i in range(len(layers) - 1, -1, -1):
            layer, name = layers[i]
            cache = self._caches[i]
            if isinstance(layer, Conv):
                g, gw, gb = F.conv_backward(g, cache, need_input_grad=i > first_param)
                grads[f"{name}.weight"], grads[f"{name}.bias"] = gw, gb
            elif isinstance(layer, MaxPool):
                g = F.maxpool_backward(g, cache)
            elif isinstance(layer, FullyConnected):
                fc_cache, in_shape = cache
                g, gw, gb = F.fc_backward(g, fc_cache)
                g = g.reshape(in_shape)
                grads[f"{name}.weight"], grads[f"{name}.bias"] = gw, gb
            elif isinstance(layer, ReLU):
                g = F.relu_backward(g, cache)
            if g is None:
                break
        return {k: grads[k] for k in self.params}

    def loss_and_grads(self, x: np.ndarray, labels: np.ndarray):
        logits = self.forward(x)
        loss, grad = F.softmax_cross_entropy(logits, labels)
        grads = self.backward(grad)
        self._caches = []
        return loss, grads

    def loss(self, x: np.ndarray, labels: np.ndarray) -> float:
        return F.softmax_cross_entropy(self.forward(x, keep_cache=False), labels)[0]

    def predict_logits(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        out = [self.forward(x[i:i + batch_size], keep_cache=False) for i in range(0, len(x), batch_size)]
        if not out:
            return np.zeros((0, self.spec.num_classes), dtype=self.dtype)
        return np.concatenate(out)


__all__ = ["Network", "kaiming_init", "SoftmaxLoss"]
