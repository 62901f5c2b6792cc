import numpy as np


class SGD:
    """Momentum SGD with L2 weight decay folded into the velocity.

    v <- momentum * v + grad + weight_decay * param
    param <- param - lr * v
    """

    def __init__(self, lr=0.01, momentum=0.9, weight_decay=1e-4):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict, lr: float | None = None) -> dict:
        lr = self.lr if lr is None else lr
        for name, p in params.items():
            g = grads[name]
            v = self.velocity.get(name)
            if v is None:
                v = self.velocity[name] = np.zeros_like(p)
            v *= self.momentum
            v += g
            if self.weight_decay:
                v += self.weight_decay * p
            p -= lr * v
        return params


def sgd_step(params, grads, velocity, lr, momentum, weight_decay):
    """Stateless form of one SGD update; mutates and returns ``params`` and ``velocity``."""
    opt = SGD(lr, momentum, weight_decay)
    opt.velocity = velocity
    opt.step(params, grads)
    return params, velocity
