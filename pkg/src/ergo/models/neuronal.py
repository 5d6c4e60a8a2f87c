"""Mean-field neuronal model: drift plus state-dependent resets to 0."""
from __future__ import annotations

import numpy as np

from ..measure import NONNEGATIVE
from .base import OneStepModel

__all__ = ["Neuronal"]


class Neuronal(OneStepModel):
    """PDMP one-step scheme with frozen drift and in-step jump intensity.

    Over ``[s, t]`` a particle starting at ``x0`` moves at the constant rate
    ``r = b(x0) + J * mean_law f`` and resets to 0 at the jumps of a point
    process with intensity ``f_M(x_{u-}) = min(f(x_{u-}), M)``, sampled by
    thinning a rate-``M`` Poisson stream.

    ``b(x) = a - c x``. When the frozen rate is negative the post-reset state
    is held at 0, which keeps the state on the half line.

    Rate families: ``linear`` (``f(x) = lam x``, ``C_f = lam``) and
    ``constant`` (``f = lam``, for thinning checks; ``f(0) != 0``).
    """

    name = "neuronal"
    constraint = NONNEGATIVE
    mean_field = True
    noise_kind = "jump"

    def __init__(self, a: float = 1.0, c: float = 1.0, rate: str = "linear", lam: float = 1.0,
                 J: float = 0.0, M: float = 1.0, b_bar: float | None = None, metric: str = "W2"):
        if not M > 0:
            raise ValueError("rate cap M must be > 0")
        if a < 0 or c < 0 or lam < 0 or J < 0:
            raise ValueError("a, c, lam and J must be >= 0")
        if rate not in ("linear", "constant"):
            raise ValueError(f"unknown rate family {rate!r}")
        if metric not in ("W1", "W2"):
            raise ValueError("metric must be W1 or W2")
        self.dim = 1
        self.a, self.c, self.rate, self.lam, self.J, self.M = float(a), float(c), rate, float(lam), float(J), float(M)
        # declared contraction constant; the drift alone contributes 2c (W2) or c (W1)
        self.b_bar = float(b_bar) if b_bar is not None else (2.0 * self.c if metric == "W2" else self.c)
        self.metric = metric
        self.step_cap = min(1.0, 1.0 / self.c) if self.c > 0 else 1.0

    @property
    def C_f(self) -> float:
        return self.lam if self.rate == "linear" else 0.0

    def drift(self, x):
        return self.a - self.c * x

    def f(self, x):
        return self.lam * x if self.rate == "linear" else np.full_like(x, self.lam)

    def f_M(self, x):
        return np.minimum(self.f(x), self.M)

    def step_with_counts(self, x, law, s, t, noise):
        if np.any(x < 0):
            raise ValueError("neuronal step needs nonnegative input")
        law = x if law is None else np.asarray(law)
        dt = t - s
        x0 = x[:, 0]
        r = self.drift(x0) + self.J * float(np.mean(self.f(law[:, 0])))
        M = self.M

        def thin(g, lo, hi):
            y = x0[lo:hi].copy()          # state at the last reset (or at s)
            rr = r[lo:hi]
            since = np.zeros(hi - lo)     # time of last reset, relative to s
            clock = np.zeros(hi - lo)
            jumps = np.zeros(hi - lo, dtype=np.int64)
            active = np.arange(hi - lo)
            while active.size:
                clock[active] += g.exponential(1.0 / M, size=active.size)
                active = active[clock[active] <= dt]
                if not active.size:
                    break
                pre = np.maximum(0.0, y[active] + rr[active] * (clock[active] - since[active]))
                ratio = self.f_M(pre) / M
                assert np.all(ratio <= 1.0)
                hit = active[g.random(active.size) < ratio]
                y[hit] = 0.0
                since[hit] = clock[hit]
                jumps[hit] += 1
            return np.maximum(0.0, y + rr * (dt - since)), jumps

        parts = noise.per_block("spikes", x.shape[0], thin)
        out = np.concatenate([p[0] for p in parts])[:, None]
        counts = np.concatenate([p[1] for p in parts])
        return out, counts

    def step(self, x, law, s, t, noise):
        return self.step_with_counts(x, law, s, t, noise)[0]

    def regime(self):
        k = 2.0 if self.metric == "W2" else 1.0
        margin = self.b_bar - k * self.C_f * self.J
        cond = "b_bar - 2 C_f J > 0" if self.metric == "W2" else "b_bar - C_f J > 0"
        holds = margin > 0 and self.rate == "linear"
        return {"condition": cond, "holds": bool(holds), "margin": margin, "b_bar": self.b_bar,
                "C_f": self.C_f, "J": self.J, "f_zero_at_zero": self.rate == "linear"}

    def fl_params(self, h):
        # x' <= x + r g pathwise, so ||x'||_2 <= (1 - c' g) ||x||_2 + a g with c' = c - J C_f
        if self.rate != "linear":
            return None
        cp = self.c - self.J * self.lam
        if cp <= 0 or cp * h >= 1:
            return None
        return cp * (1.0 - cp * h), self.a**2 * (1.0 / cp + h)

    def describe(self):
        return {"name": self.name, "a": self.a, "c": self.c, "rate": self.rate, "lam": self.lam,
                "J": self.J, "M": self.M, "b_bar": self.b_bar, "metric": self.metric}
