"""2D finite-element simulator for dynamic phase-field fracture.

Couples an elastodynamic wave equation with damaged stress to an
irreversible damage evolution, in two flavors: the standard model and a
variant with a unilateral contact condition that damages only the
expansion/shear part of the stress. Includes a per-step energy ledger and
the compression + P-wave fault-rupture scenario.
"""

from .elasticity import MaterialParams, SymTensor2, lame_from_engineering
from .mesh import TriMesh, generate_rect_mesh, read_mesh, write_mesh
from .stepper import EnergyRecord, SimState, SolverOptions, TimeStepper, audit_energy_balance

__all__ = [
    "MaterialParams",
    "SymTensor2",
    "lame_from_engineering",
    "TriMesh",
    "generate_rect_mesh",
    "read_mesh",
    "write_mesh",
    "EnergyRecord",
    "SimState",
    "SolverOptions",
    "TimeStepper",
    "audit_energy_balance",
]

__version__ = "0.1.0"
