"""Adam with coupled L2 regularisation and an exponential learning-rate schedule."""
from __future__ import annotations

import numpy as np


def exponential_lr(step, total_steps, lr_start=1e-3, lr_end=1e-5, decay_start=0):
    """Constant ``lr_start`` until ``decay_start``, then geometric decay reaching ``lr_end`` at ``total_steps``."""
    if step < decay_start or total_steps <= decay_start:
        return lr_start
    frac = min(1.0, (step - decay_start) / (total_steps - decay_start))
    return lr_start * (lr_end / lr_start) ** frac


class Adam:
    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-6, l2_weight=1e-6):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.l2_weight = l2_weight
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads, lr):
        """Update ``params`` in place.

        The L2 penalty ``l2_weight / 2 * |theta|^2`` enters through the
        gradient, so a zero loss gradient still moves parameters unless
        ``l2_weight == 0``.
        """
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            if self.l2_weight:
                g = g + self.l2_weight * p
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_dict(self):
        state = {"t": self.t}
        for name in self.m:
            state[f"m.{name}"] = self.m[name]
            state[f"v.{name}"] = self.v[name]
        return state

    def load_state_dict(self, state):
        self.t = int(state["t"])
        self.m = {k[2:]: np.array(v, dtype=np.float64) for k, v in state.items() if k.startswith("m.")}
        self.v = {k[2:]: np.array(v, dtype=np.float64) for k, v in state.items() if k.startswith("v.")}
