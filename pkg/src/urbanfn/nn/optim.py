"""Adam optimizer for dict-of-arrays parameters."""

from __future__ import annotations

import numpy as np


class Adam:
    """Bias-corrected Adam. Updates parameter dicts in place.

    State tensors are created lazily on the first step so the optimizer
    can be constructed before the parameters exist.
    """

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if not (0 < lr and 0 <= beta1 < 1 and 0 <= beta2 < 1 and eps > 0):
            raise ValueError("invalid Adam hyperparameters")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        for name in params:
            if name not in grads:
                raise ValueError(f"missing gradient for parameter {name}")
            if not np.isfinite(grads[name]).all():
                raise ValueError(f"non-finite gradient in parameter {name}")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            mhat = m / b1t
            vhat = v / b2t
            p -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)
