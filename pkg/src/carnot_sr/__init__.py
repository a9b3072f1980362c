"""Sub-Riemannian geodesics and extremal classification on Carnot groups of step <= 3."""

from .algebra import (
    AlgebraError,
    GradedAlgebra,
    Subalgebra,
    abelian,
    construct_standard,
    engel,
    free,
    free_layer_dims,
    from_brackets,
    heisenberg,
    subalgebra_generated,
    validate,
)
from .curves import ControlGrid, HorizontalPath, energy_length, horizontality_residual, lift, line_lift

__version__ = "0.1.0"
