"""One-step operator interface and generic wrappers."""
from __future__ import annotations

import numpy as np

from ..errors import NoiseConventionError
from ..measure import UNCONSTRAINED
from ..noise import StepNoise

__all__ = ["OneStepModel", "Identity", "Refined"]


class OneStepModel:
    """Base class for one-step operators ``Theta_{s,t}`` acting on particle arrays.

    Subclasses set ``dim``, ``constraint``, ``step_cap`` and ``mean_field`` and
    implement :meth:`step`. Diffusive models also implement :meth:`advance`,
    which consumes an explicit Brownian increment and therefore supports
    substepped fine references through :class:`Refined`.
    """

    dim: int = 1
    constraint: str = UNCONSTRAINED
    step_cap: float = 1.0
    mean_field: bool = False
    noise_kind: str = "brownian"   # "brownian", "jump" or "none"
    name: str = "model"

    def step(self, x: np.ndarray, law, s: float, t: float, noise: StepNoise) -> np.ndarray:
        raise NotImplementedError

    def advance(self, x, law, s, t, dW, noise, sub=None):
        raise NoiseConventionError(f"{self.name} does not accept external Brownian increments")

    def regime(self) -> dict:
        """Declared theorem-regime condition, as ``{"condition": str, "holds": bool, ...}``."""
        return {"condition": "none", "holds": True}

    def fl_params(self, h: float):
        """Foster-Lyapunov constants ``(b_bar, C_bar)`` for steps ``<= h``, when derivable."""
        return None

    def describe(self) -> dict:
        return {"name": self.name, "dim": self.dim}


class Identity(OneStepModel):
    """``Theta_{s,t}(mu) = mu``."""

    noise_kind = "none"
    name = "identity"

    def __init__(self, dim: int = 1, constraint: str = UNCONSTRAINED):
        self.dim = dim
        self.constraint = constraint
        self.step_cap = np.inf

    def step(self, x, law, s, t, noise):
        return np.array(x, dtype=float)

    def advance(self, x, law, s, t, dW, noise, sub=None):
        return np.array(x, dtype=float)

    def fl_params(self, h):
        return (1.0, 0.0)


class Refined(OneStepModel):
    """Fine reference: apply ``model`` on ``m`` equal substeps of ``[s, t]``.

    The substeps consume the fine Brownian increments of the step noise, so a
    coarse model driven by the same :class:`StepNoise` sees their sum. Mean-field
    models use the running fine ensemble as the law argument.
    """

    def __init__(self, model: OneStepModel, m: int):
        if m < 1:
            raise ValueError("substep count must be >= 1")
        if model.noise_kind == "jump":
            raise NoiseConventionError(
                f"{model.name}: jump-driven models have no Brownian refinement; "
                "refined references must share the Poisson stream"
            )
        self.model = model
        self.m = int(m)
        self.dim = model.dim
        self.constraint = model.constraint
        self.step_cap = model.step_cap * self.m
        self.mean_field = model.mean_field
        self.noise_kind = model.noise_kind
        self.name = f"refined({model.name},{self.m})"

    def noise_dim(self) -> int:
        return getattr(self.model, "noise_dim", self.model.dim)

    def step(self, x, law, s, t, noise):
        if noise.refine != self.m:
            raise NoiseConventionError(f"noise refined {noise.refine}x, model expects {self.m}x")
        n = x.shape[0]
        if self.noise_kind == "none":
            fine = np.zeros((self.m, n, self.noise_dim()))
        else:
            fine = noise.brownian_fine("bm", n, self.noise_dim(), t - s)
        edges = np.linspace(s, t, self.m + 1)
        cur = np.array(x, dtype=float)
        for j in range(self.m):
            sub_law = cur if self.mean_field else None
            cur = self.model.advance(cur, sub_law, edges[j], edges[j + 1], fine[j], noise, sub=j)
        return cur

    def regime(self):
        return self.model.regime()

    def fl_params(self, h):
        return self.model.fl_params(h)

    def describe(self):
        return {"name": self.name, "base": self.model.describe(), "substeps": self.m}
