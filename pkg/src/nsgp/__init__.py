"""Nonstationary spatio-temporal GP models with adaptive latent-location
sampling, plus the experiment harness around them."""

from . import errors, gp_core, harness, latent_field, lisal, nonstationary, oracles, selection
from .gp_core import (
    BaseKernelSpec,
    GlobalHypers,
    KernelFamily,
    ObservationSet,
    StationaryGP,
)
from .lisal import LisalConfig, LisalTrace, fit_stationary, lisal_fit
from .nonstationary import FittedNGP, NgpKind

__all__ = [
    "BaseKernelSpec",
    "FittedNGP",
    "GlobalHypers",
    "KernelFamily",
    "LisalConfig",
    "LisalTrace",
    "NgpKind",
    "ObservationSet",
    "StationaryGP",
    "errors",
    "fit_stationary",
    "gp_core",
    "harness",
    "latent_field",
    "lisal",
    "lisal_fit",
    "nonstationary",
    "oracles",
    "selection",
]

__version__ = "0.1.0"
