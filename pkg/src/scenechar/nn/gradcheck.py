"""Central finite-difference verification of the analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import Network


@dataclass
class GradCheckReport:
    errors: dict[str, float] = field(default_factory=dict)  # per-layer max relative error
    samples: dict[str, int] = field(default_factory=dict)
    skipped: int = 0  # perturbations that crossed a ReLU kink or changed a pool argmax
    tolerance: float = 1e-3

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def summary(self) -> str:
        parts = [f"{k}: {v:.2e} ({self.samples[k]})" for k, v in self.errors.items()]
        return ", ".join(parts) + f"; skipped {self.skipped}"


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradient_check(
    network: Network,
    x: np.ndarray,
    labels: np.ndarray,
    h: float = 1e-3,
    tolerance: float = 1e-3,
    samples_per_layer: int = 200,
    seed: int = 0,
) -> GradCheckReport:
    """Compare backprop against (f(p+h) - f(p-h)) / 2h on sampled parameters.

    The check runs on a float64 copy of the network. Every bias entry is
    checked; weights are subsampled so that each layer contributes at least
    ``samples_per_layer`` entries (all of them when the layer is smaller).
    Perturbations that change the activation pattern are replaced by fresh
    draws since the loss is not differentiable there.
    """
    net = network.astype(np.float64)
    x = np.asarray(x, dtype=np.float64)
    _, grads = net.loss_and_grads(x, labels)
    net.forward(x, keep_cache=False)
    base_sig = net.activation_signature()
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance)

    layers = {}
    for name in net.params:
        layers.setdefault(name.split(".")[0], []).append(name)

    for layer, names in layers.items():
        pool = [(n, i) for n in names for i in range(net.params[n].size)]
        biases = [(n, i) for n, i in pool if n.endswith(".bias")]
        weights = [(n, i) for n, i in pool if not n.endswith(".bias")]
        order = [weights[k] for k in rng.permutation(len(weights))]
        want = max(samples_per_layer, len(biases))
        queue = biases + order
        worst, checked = 0.0, 0
        for name, flat in queue:
            if checked >= want and not name.endswith(".bias"):
                break
            p = net.params[name].reshape(-1)
            orig = p[flat]
            p[flat] = orig + h
            f_plus = net.loss(x, labels)
            sig_plus = net.activation_signature()
            p[flat] = orig - h
            f_minus = net.loss(x, labels)
            sig_minus = net.activation_signature()
            p[flat] = orig
            if sig_plus != base_sig or sig_minus != base_sig:
                report.skipped += 1
                continue
            numeric = (f_plus - f_minus) / (2 * h)
            analytic = float(grads[name].reshape(-1)[flat])
            worst = max(worst, relative_error(analytic, numeric))
            checked += 1
        report.errors[layer] = worst
        report.samples[layer] = checked
    return report
