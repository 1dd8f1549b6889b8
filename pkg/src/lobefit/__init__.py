"""Milling stability lobe diagrams and inverse identification of tool-tip
modal parameters from a measured stability boundary."""

from .errors import LobefitError
from .inverse import FitOptions, fd_sensitivity, fit, mlae, newton_step, random_guesses
from .model import (
    BoundarySamples,
    CuttingParams,
    DirectionalDynamics,
    FitReport,
    Mode,
    ParameterVector,
    axisymmetric_ties,
    flatten,
    unflatten,
)
from .sensitivity import mc_sensitivity, mse, sweep
from .zoa import SldCurve, build_sld, sample_at_speeds

__version__ = "0.1.0"

__all__ = [
    "BoundarySamples",
    "CuttingParams",
    "DirectionalDynamics",
    "FitOptions",
    "FitReport",
    "LobefitError",
    "Mode",
    "ParameterVector",
    "SldCurve",
    "axisymmetric_ties",
    "build_sld",
    "fd_sensitivity",
    "fit",
    "flatten",
    "mc_sensitivity",
    "mlae",
    "mse",
    "newton_step",
    "random_guesses",
    "sample_at_speeds",
    "sweep",
    "unflatten",
]
