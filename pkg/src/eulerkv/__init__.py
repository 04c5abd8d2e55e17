"""Eulerian Kelvin-Voigt viscoelastic solids in velocity / deformation-gradient form."""

from .basis import Domain, GalerkinBasis, TensorField
from .constitutive import MaterialParams, StoredEnergyModel
from .dynamics import Scenario, SimState, Solver, run
from .errors import ConfigError, NumericalError

__all__ = [
    "ConfigError", "Domain", "GalerkinBasis", "MaterialParams", "NumericalError",
    "Scenario", "SimState", "Solver", "StoredEnergyModel", "TensorField", "run",
]
__version__ = "0.1.0"
