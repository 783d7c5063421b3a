"""Numerical verification of growth-rate and contact-geometric criteria for flows on 3-manifolds."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .fields import (  # noqa: F401
    DerivSpec,
    KForm,
    ScalarField,
    VectorField,
    bracket,
    contact_volume,
    divergence,
    ext_d,
    from_sympy,
    interior,
    lie_derivative,
    wedge,
)
from .manifolds import ChartModel, ModelFlow, build_model, cat_suspension, t3_pA  # noqa: F401
