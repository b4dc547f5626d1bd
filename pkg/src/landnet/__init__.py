"""Optimal planar landing trajectories and neural-network feedback control.

The package solves free-final-time two-point boundary value problems arising
from pointwise Hamiltonian minimization for four planar landing models,
generates datasets of optimal state-control pairs along random walks over the
initial-condition box, trains small dense networks on them from scratch, and
evaluates the trained networks as closed-loop controllers against the optimal
trajectories they imitate.
"""

from .models import Objective, get_model, objective_for

__version__ = "0.1.0"

__all__ = ["Objective", "get_model", "objective_for", "__version__"]
