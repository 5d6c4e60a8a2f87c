"""Kinetic Langevin dynamics of McKean-Vlasov type on positions and velocities."""
from __future__ import annotations

import math

import numpy as np

from ..errors import ErgoError
from .base import OneStepModel

__all__ = ["KineticMV"]


class KineticMV(OneStepModel):
    """Euler step for ``dX = Y dt``, ``dY = (u b^E(X) + u E_z b^I(X, z) - g_d Y) dt + sqrt(2 g_d u) dB``.

    The state has ``2 * d`` columns: positions then velocities. The position
    update uses the pre-step velocity. ``b^E(x) = -K x + g(x)``.

    Parameters
    ----------
    d : int
        Position dimension.
    u, gamma_damp : float
        Positive physical constants.
    K : float or array
        Positive definite confinement matrix (a scalar means ``K * I``).
    g : {"zero", "tanh"}
        Perturbation; ``"tanh"`` is ``-L_g tanh(x)`` coordinatewise.
    interaction : {"zero", "attract"}
        ``b^I(x, z) = -c_int (x - z)`` for ``"attract"``.
    """

    name = "kinetic"

    def __init__(self, d: int = 1, u: float = 1.0, gamma_damp: float = 1.0, K=1.0, g: str = "zero",
                 L_g: float = 0.0, interaction: str = "zero", c_int: float = 0.0, step_cap: float = 1.0):
        if u <= 0 or gamma_damp <= 0:
            raise ValueError("u and gamma_damp must be positive")
        self.d = int(d)
        self.dim = 2 * self.d
        self.noise_dim = self.d
        self.u, self.gamma_damp = float(u), float(gamma_damp)
        K = np.asarray(K, dtype=float)
        self.K = K * np.eye(self.d) if K.ndim == 0 else K.reshape(self.d, self.d)
        eig = np.linalg.eigvalsh(0.5 * (self.K + self.K.T))
        if eig.min() <= 0:
            raise ValueError("K must be positive definite")
        self.kappa = float(eig.min())
        if g not in ("zero", "tanh"):
            raise ValueError(f"unknown perturbation {g!r}")
        if interaction not in ("zero", "attract"):
            raise ValueError(f"unknown interaction {interaction!r}")
        self.g_name, self.L_g = g, float(L_g) if g == "tanh" else 0.0
        self.interaction, self.c_int = interaction, float(c_int) if interaction == "attract" else 0.0
        self.mean_field = interaction != "zero"
        self.step_cap = float(step_cap)

    def external(self, x):
        out = -x @ self.K.T
        if self.g_name == "tanh":
            out = out - self.L_g * np.tanh(x)
        return out

    def interaction_mean(self, x, law):
        """``mean_z b^I(x, z)`` over the positions of the law ensemble."""
        if not self.mean_field:
            return 0.0
        if law is None:
            raise ErgoError("kinetic interaction needs a law argument")
        # b^I is affine in z, so the ensemble average is exact in O(N)
        zbar = np.asarray(law)[:, : self.d].mean(axis=0)
        return -self.c_int * (x - zbar)

    def advance(self, x, law, s, t, dW, noise, sub=None):
        dt = t - s
        pos, vel = x[:, : self.d], x[:, self.d :]
        force = self.u * self.external(pos) + self.u * self.interaction_mean(pos, law) - self.gamma_damp * vel
        new_pos = pos + vel * dt
        new_vel = vel + force * dt + math.sqrt(2.0 * self.gamma_damp * self.u) * dW
        return np.hstack([new_pos, new_vel])

    def step(self, x, law, s, t, noise):
        dW = noise.brownian("bm", x.shape[0], self.d, t - s)
        return self.advance(x, law, s, t, dW, noise)

    def regime(self):
        lhs = 2.0 * self.L_g**2 * self.u / self.gamma_damp**2
        return {"condition": "2 L_g^2 u gamma_damp^-2 < kappa", "holds": lhs < self.kappa,
                "lhs": lhs, "kappa": self.kappa}

    def describe(self):
        return {"name": self.name, "d": self.d, "u": self.u, "gamma_damp": self.gamma_damp,
                "K": self.K.tolist(), "g": self.g_name, "L_g": self.L_g,
                "interaction": self.interaction, "c_int": self.c_int}
