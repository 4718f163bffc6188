"""
Core domain layer: models, protocols and errors.

Re-exports the most commonly used names so consumers can write::

    from otmask.core import SemanticMap, PointAnnotation, PseudoMask
"""

from otmask.core.errors import (  # noqa: F401
    CodecError,
    InvariantError,
    NumericalError,
    OtMaskError,
    ShapeError,
    ValidationError,
)
from otmask.core.models import (  # noqa: F401
    STUFF,
    THING,
    BoundaryMap,
    PointAnnotation,
    PseudoMask,
    SemanticMap,
    TransportPlan,
    TransportProblem,
)
