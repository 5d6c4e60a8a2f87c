"""Boltzmann-type jump equations with a finite atomic mark measure.

Jump amplitudes ``c(v, z, x)`` are chosen from three families, each scaled by
the atom value ``z``:

- ``const``: ``c = z``
- ``toward``: ``c = z (v - x)``
- ``linear_v``: ``c = z v``

Here ``v`` is drawn uniformly from the law ensemble.
"""
from __future__ import annotations

import numpy as np

from .base import OneStepModel

__all__ = ["BoltzmannFV", "BoltzmannMartingale"]

AMPLITUDES = ("const", "toward", "linear_v")


def _amplitude(kind: str, z, v, x):
    if kind == "const":
        return np.broadcast_to(np.asarray(z)[..., None], x.shape).astype(float)
    z = np.asarray(z)[..., None]
    if kind == "toward":
        return z * (v - x)
    return z * v


class _Atoms:
    def __init__(self, atoms, weights):
        z = np.asarray(atoms, dtype=float).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if z.size == 0 or z.shape != w.shape:
            raise ValueError("atoms and weights must be non-empty and of equal length")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("atom weights must be positive and finite")
        self.z, self.w = z, w
        self.total = float(w.sum())            # nu(E)
        self.cum = np.cumsum(w) / self.total

    def draw(self, g, n):
        return np.minimum(np.searchsorted(self.cum, g.random(n), side="right"), self.z.size - 1)


class _Boltzmann(OneStepModel):
    mean_field = True
    noise_kind = "jump"

    def __init__(self, dim, b_bar, atoms, weights, amplitude, step_cap):
        if amplitude not in AMPLITUDES:
            raise ValueError(f"unknown amplitude family {amplitude!r}")
        if b_bar < 0:
            raise ValueError("b_bar must be >= 0")
        self.dim = int(dim)
        self.b_bar = float(b_bar)
        self.nu = _Atoms(atoms, weights)
        self.amplitude = amplitude
        self.step_cap = float(step_cap)

    def drift(self, x):
        # b(x) = -b_bar x satisfies <x-y, b(x)-b(y)> = -b_bar |x-y|^2
        return -self.b_bar * x


class BoltzmannFV(_Boltzmann):
    """Finite-variation scheme: raw Poisson measure with thinning by ``gamma_rate / gamma_max``.

    Candidates arrive at rate ``nu(E) * gamma_max``; each draws a mark, an
    ensemble point ``v`` and a uniform, and is accepted with probability
    ``gamma_rate(v, z, x) / gamma_max``. By default the state argument of both
    ``c`` and ``gamma_rate`` is frozen at the step's initial point; with
    ``running_state=True`` it follows the accumulated jumps.

    Rate families: ``const`` (``gamma_rate = g``) and ``decay``
    (``gamma_rate = g / (1 + |x|)``).
    """

    name = "boltzmann_fv"

    def __init__(self, dim: int = 1, b_bar: float = 1.0, atoms=(1.0,), weights=(1.0,),
                 amplitude: str = "toward", rate: str = "const", g: float = 1.0,
                 gamma_max: float | None = None, running_state: bool = False,
                 Q: float | None = None, step_cap: float = 1.0):
        super().__init__(dim, b_bar, atoms, weights, amplitude, step_cap)
        if rate not in ("const", "decay"):
            raise ValueError(f"unknown rate family {rate!r}")
        if g < 0:
            raise ValueError("g must be >= 0")
        self.rate, self.g = rate, float(g)
        self.gamma_max = float(g if gamma_max is None else gamma_max)
        if self.gamma_max < self.g:
            raise ValueError(f"gamma_rate can reach {self.g} > gamma_max = {self.gamma_max}")
        if self.gamma_max <= 0 and self.g > 0:
            raise ValueError("gamma_max must be positive")
        self.running_state = bool(running_state)
        self._Q = None if Q is None else float(Q)

    def gamma_rate(self, v, z, x):
        if self.rate == "const":
            return np.full(x.shape[0], self.g)
        return self.g / (1.0 + np.linalg.norm(x, axis=1))

    @property
    def Q(self) -> float | None:
        """``int c_bar dnu``; computed for constant rates, otherwise as declared."""
        if self._Q is not None:
            return self._Q
        if self.rate != "const":
            return None
        zabs = np.abs(self.nu.z)
        return float(np.sum(self.nu.w * zabs * self.g))

    def step_with_counts(self, x, law, s, t, noise):
        law = x if law is None else np.asarray(law)
        dt = t - s
        base = x + self.drift(x) * dt
        n_law = law.shape[0]
        lam = self.nu.total * self.gamma_max * dt

        def block(gen, lo, hi):
            x0 = x[lo:hi]
            jumps_sum = np.zeros_like(x0)
            cur = x0.copy()
            counts = gen.poisson(lam, size=hi - lo) if lam > 0 else np.zeros(hi - lo, dtype=np.int64)
            accepted = np.zeros(hi - lo, dtype=np.int64)
            for k in range(int(counts.max(initial=0))):
                idx = np.nonzero(counts > k)[0]
                j = self.nu.draw(gen, idx.size)
                v = law[gen.integers(0, n_law, size=idx.size)]
                u = gen.random(idx.size)
                arg = cur[idx] if self.running_state else x0[idx]
                z = self.nu.z[j]
                rate = self.gamma_rate(v, z, arg)
                if np.any(rate > self.gamma_max):
                    raise ValueError("observed gamma_rate above gamma_max")
                ok = u * self.gamma_max < rate
                amp = _amplitude(self.amplitude, z[ok], v[ok], arg[ok])
                jumps_sum[idx[ok]] += amp
                cur[idx[ok]] += amp
                accepted[idx[ok]] += 1
            return jumps_sum, counts, accepted

        parts = noise.per_block("poisson", x.shape[0], block)
        jumps = np.concatenate([p[0] for p in parts])
        counts = np.concatenate([p[1] for p in parts])
        accepted = np.concatenate([p[2] for p in parts])
        return base + jumps, counts, accepted

    def step(self, x, law, s, t, noise):
        return self.step_with_counts(x, law, s, t, noise)[0]

    def regime(self):
        Q = self.Q
        return {"condition": "2 Q < b_bar", "holds": bool(Q is not None and 2 * Q < self.b_bar),
                "Q": Q, "b_bar": self.b_bar}

    def describe(self):
        return {"name": self.name, "dim": self.dim, "b_bar": self.b_bar, "atoms": self.nu.z.tolist(),
                "weights": self.nu.w.tolist(), "amplitude": self.amplitude, "rate": self.rate,
                "g": self.g, "gamma_max": self.gamma_max, "running_state": self.running_state}


class BoltzmannMartingale(_Boltzmann):
    """Martingale scheme: jumps at total rate ``nu(E)`` minus the exact compensator.

    Amplitudes are evaluated at the step's initial point. Because every
    amplitude family is affine in ``v``, the compensator
    ``dt * sum_j w_j mean_law c(., z_j, x0)`` is computed exactly from the
    ensemble mean.
    """

    name = "boltzmann_mart"

    def __init__(self, dim: int = 1, b_bar: float = 1.0, atoms=(1.0,), weights=(1.0,),
                 amplitude: str = "toward", step_cap: float = 1.0):
        super().__init__(dim, b_bar, atoms, weights, amplitude, step_cap)

    def compensator(self, x0, law, dt):
        vbar = np.asarray(law).mean(axis=0)
        zw = float(np.sum(self.nu.w * self.nu.z))
        if self.amplitude == "const":
            comp = np.broadcast_to(zw, x0.shape)
        elif self.amplitude == "toward":
            comp = zw * (vbar - x0)
        else:
            comp = np.broadcast_to(zw * vbar, x0.shape)
        comp = dt * comp
        if not np.all(np.isfinite(comp)):
            raise FloatingPointError("non-finite compensator")
        return comp

    @property
    def Q(self) -> float:
        """``sum_j w_j c_bar(z_j)^2`` with ``c_bar^2 = 2 z^2`` for ``toward`` and ``z^2`` otherwise."""
        k = 2.0 if self.amplitude == "toward" else 1.0
        return float(np.sum(self.nu.w * k * self.nu.z**2))

    def step_with_counts(self, x, law, s, t, noise):
        law = x if law is None else np.asarray(law)
        dt = t - s
        n_law = law.shape[0]
        lam = self.nu.total * dt

        def block(gen, lo, hi):
            x0 = x[lo:hi]
            jumps_sum = np.zeros_like(x0)
            counts = gen.poisson(lam, size=hi - lo)
            for k in range(int(counts.max(initial=0))):
                idx = np.nonzero(counts > k)[0]
                j = self.nu.draw(gen, idx.size)
                v = law[gen.integers(0, n_law, size=idx.size)]
                jumps_sum[idx] += _amplitude(self.amplitude, self.nu.z[j], v, x0[idx])
            return jumps_sum, counts

        parts = noise.per_block("poisson", x.shape[0], block)
        jumps = np.concatenate([p[0] for p in parts])
        counts = np.concatenate([p[1] for p in parts])
        out = x + self.drift(x) * dt + jumps - self.compensator(x, law, dt)
        return out, counts

    def step(self, x, law, s, t, noise):
        return self.step_with_counts(x, law, s, t, noise)[0]

    def regime(self):
        return {"condition": "Q < b_bar", "holds": self.Q < self.b_bar, "Q": self.Q, "b_bar": self.b_bar}

    def describe(self):
        return {"name": self.name, "dim": self.dim, "b_bar": self.b_bar, "atoms": self.nu.z.tolist(),
                "weights": self.nu.w.tolist(), "amplitude": self.amplitude}
