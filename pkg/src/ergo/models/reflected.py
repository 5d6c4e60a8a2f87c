"""One-dimensional SDE reflected at 0, with frozen-coefficient one-step schemes."""
from __future__ import annotations

import numpy as np

from ..measure import NONNEGATIVE
from .base import OneStepModel

__all__ = ["Reflected", "bridge_minimum"]


def bridge_minimum(D: np.ndarray, sig: np.ndarray, dt: float, U: np.ndarray) -> np.ndarray:
    """Sample the running minimum of ``D_u = b u + sig W_u`` on ``[0, dt]`` given ``D_dt = D``.

    ``U`` must lie in ``(0, 1]``. The result always satisfies ``m <= min(0, D)``.
    """
    return 0.5 * (D - np.sqrt(D * D - 2.0 * sig * sig * dt * np.log(U)))


class Reflected(OneStepModel):
    """``dX = b(X) dt + sigma(X) dW + dL`` on ``[0, inf)``.

    ``b(x) = a - b_bar x`` and ``sigma(x) = s0 + s1 x``, so ``C_b = b_bar^2``
    and ``C_sigma = s1^2``. Over one step the coefficients are frozen at the
    initial point. ``flavor="exact_skorokhod"`` samples the exact endpoint of
    the frozen reflected process; ``flavor="projected"`` clips at 0.
    """

    name = "reflected"
    constraint = NONNEGATIVE

    def __init__(self, a: float = 0.0, b_bar: float = 1.0, s0: float = 1.0, s1: float = 0.0,
                 flavor: str = "exact_skorokhod", step_cap: float = 1.0):
        if flavor not in ("exact_skorokhod", "projected"):
            raise ValueError(f"unknown flavor {flavor!r}")
        if s0 < 0 or s1 < 0:
            raise ValueError("s0 and s1 must be >= 0 so that sigma >= 0 on the half line")
        self.dim = 1
        self.a, self.b_bar, self.s0, self.s1 = float(a), float(b_bar), float(s0), float(s1)
        self.flavor = flavor
        self.step_cap = float(step_cap)

    def drift(self, x):
        return self.a - self.b_bar * x

    def diffusion(self, x):
        return self.s0 + self.s1 * x

    @property
    def C_b(self) -> float:
        return self.b_bar**2

    @property
    def C_sigma(self) -> float:
        return self.s1**2

    def advance(self, x, law, s, t, dW, noise, sub=None):
        if np.any(x < 0):
            raise ValueError("reflected step needs nonnegative input")
        dt = t - s
        sig = self.diffusion(x)
        D = self.drift(x) * dt + sig * dW
        if self.flavor == "projected" or not np.any(sig > 0):
            return np.maximum(0.0, x + D)
        channel = "bridge" if sub is None else f"bridge:{sub}"
        U = 1.0 - noise.uniform(channel, x.shape[0], 1)
        m = bridge_minimum(D, sig, dt, U)
        # clip guards against sub-ulp negatives from cancellation in x + D - (x + m)
        out = np.maximum(0.0, x + D + np.maximum(0.0, -(x + m)))
        # zero-diffusion particles reflect deterministically
        return np.where(sig > 0, out, np.maximum(0.0, x + D))

    def step(self, x, law, s, t, noise):
        dW = noise.brownian("bm", x.shape[0], 1, t - s)
        return self.advance(x, law, s, t, dW, noise)

    def regime(self):
        return {"condition": "2 b_bar > C_sigma", "holds": 2 * self.b_bar > self.C_sigma,
                "b_bar": self.b_bar, "C_sigma": self.C_sigma}

    def describe(self):
        return {"name": self.name, "a": self.a, "b_bar": self.b_bar, "s0": self.s0, "s1": self.s1,
                "flavor": self.flavor}
