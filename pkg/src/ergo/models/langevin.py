"""Overdamped Langevin dynamics ``dX = b(X) dt + sigma dB`` and its Euler step."""
from __future__ import annotations

import math

import numpy as np

from .base import OneStepModel

__all__ = ["Langevin"]


class Langevin(OneStepModel):
    """Euler step ``x -> x + b(x)(t-s) + sigma (B_t - B_s)``.

    Drift families
    --------------
    ``ou``
        ``b(x) = -k x`` with ``k > 0``.
    ``double_well``
        ``b(x)_i = -x_i^3 + a x_i`` (coordinatewise). Not globally Lipschitz;
        contractive outside the radius ``R = 2 sqrt(dim (a + kappa))``.
    ``affine``
        ``b(x) = A x + c``; ``A = +1`` gives the expanding drift.
    """

    name = "langevin"

    def __init__(self, drift: str = "ou", dim: int = 1, sigma: float = 1.0, k: float = 1.0,
                 a: float = 1.0, kappa: float = 1.0, A=None, c=None, step_cap: float = 1.0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if sigma < 0:
            raise ValueError("sigma must be >= 0")
        self.dim = int(dim)
        self.sigma = float(sigma)
        self.drift_name = drift
        self.step_cap = float(step_cap)
        if drift == "ou":
            if k <= 0:
                raise ValueError("ou rate k must be > 0")
            self.k = float(k)
        elif drift == "double_well":
            if kappa <= 0:
                raise ValueError("kappa must be > 0")
            self.a, self.kappa = float(a), float(kappa)
        elif drift == "affine":
            A = np.eye(self.dim) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
            if A.shape != (self.dim, self.dim):
                raise ValueError(f"A must be {self.dim}x{self.dim}")
            self.A = A
            self.c = np.zeros(self.dim) if c is None else np.asarray(c, dtype=float).reshape(self.dim)
        else:
            raise ValueError(f"unknown drift family {drift!r}")

    def drift(self, x: np.ndarray) -> np.ndarray:
        if self.drift_name == "ou":
            return -self.k * x
        if self.drift_name == "double_well":
            return -(x**3) + self.a * x
        return x @ self.A.T + self.c

    @property
    def lipschitz(self) -> float:
        if self.drift_name == "ou":
            return self.k
        if self.drift_name == "double_well":
            return math.inf
        return float(np.linalg.norm(self.A, 2))

    @property
    def contraction(self) -> tuple[float, float]:
        """``(kappa, R)``: ``<x-y, b(x)-b(y)> <= -kappa |x-y|^2`` whenever ``|x-y| >= R``."""
        if self.drift_name == "ou":
            return self.k, 0.0
        if self.drift_name == "double_well":
            return self.kappa, 2.0 * math.sqrt(self.dim * (self.a + self.kappa))
        lam = float(np.linalg.eigvalsh(0.5 * (self.A + self.A.T)).max())
        return -lam, 0.0

    def advance(self, x, law, s, t, dW, noise, sub=None):
        out = x + self.drift(x) * (t - s)
        if self.sigma:
            out = out + self.sigma * dW
        return out

    def step(self, x, law, s, t, noise):
        dW = noise.brownian("bm", x.shape[0], self.dim, t - s) if self.sigma else None
        return self.advance(x, law, s, t, dW, noise)

    def regime(self):
        kappa, R = self.contraction
        return {"condition": "kappa > 0", "holds": kappa > 0, "kappa": kappa, "R": R, "L_b": self.lipschitz}

    def fl_params(self, h):
        # E|x'|^2 = (1 - k g)^2 E|x|^2 + sigma^2 dim g  <=  (1 - (2k - k^2 h) g) E|x|^2 + sigma^2 dim g
        if self.drift_name != "ou":
            return None
        return 2 * self.k - self.k**2 * h, self.sigma**2 * self.dim

    def describe(self):
        d = {"name": self.name, "drift": self.drift_name, "dim": self.dim, "sigma": self.sigma}
        if self.drift_name == "ou":
            d["k"] = self.k
        elif self.drift_name == "double_well":
            d.update(a=self.a, kappa=self.kappa)
        else:
            d.update(A=self.A.tolist(), c=self.c.tolist())
        return d
