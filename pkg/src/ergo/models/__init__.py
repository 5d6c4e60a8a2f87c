"""One-step operators for the supported model families."""
from __future__ import annotations

from ..errors import ConfigError
from .base import Identity, OneStepModel, Refined
from .boltzmann import BoltzmannFV, BoltzmannMartingale
from .kinetic import KineticMV
from .langevin import Langevin
from .neuronal import Neuronal
from .reflected import Reflected

__all__ = [
    "OneStepModel",
    "Identity",
    "Refined",
    "Langevin",
    "KineticMV",
    "Reflected",
    "Neuronal",
    "BoltzmannFV",
    "BoltzmannMartingale",
    "REGISTRY",
    "build_model",
]

REGISTRY = {
    "identity": Identity,
    "langevin": Langevin,
    "kinetic": KineticMV,
    "reflected": Reflected,
    "neuronal": Neuronal,
    "boltzmann_fv": BoltzmannFV,
    "boltzmann_mart": BoltzmannMartingale,
}


def build_model(spec: dict, where: str = "model") -> OneStepModel:
    """Instantiate a registered model from ``{"family": name, **params}``.

    An optional ``"substeps": m`` wraps the model in :class:`Refined`.
    """
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: expected an object")
    params = dict(spec)
    family = params.pop("family", None)
    if family not in REGISTRY:
        raise ConfigError(f"{where}.family: unknown model {family!r}; registered: {sorted(REGISTRY)}")
    substeps = params.pop("substeps", None)
    try:
        model = REGISTRY[family](**params)
        if substeps is not None:
            model = Refined(model, int(substeps))
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return model
