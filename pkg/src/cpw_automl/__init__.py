"""Machine-learning characterization of printed coplanar waveguides."""
from .physics import (
    CpwGeometry,
    EffectivePermittivity,
    MaterialParams,
    PropagationConstant,
    PropagationSample,
    cpw_eeff,
    ellipk_ratio,
    propagation,
    sweep_curve,
)

__version__ = "0.1.0"

__all__ = [
    "CpwGeometry",
    "EffectivePermittivity",
    "MaterialParams",
    "PropagationConstant",
    "PropagationSample",
    "cpw_eeff",
    "ellipk_ratio",
    "propagation",
    "sweep_curve",
]
