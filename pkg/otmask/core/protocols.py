"""
Protocol interfaces for otmask.

Defines the contracts between components using ``typing.Protocol``.
Consumers depend on these protocols rather than on concrete solvers
or loss functions, which keeps the pipeline open to the exact oracle
and lets the gradient check run against any evaluator.
"""

from typing import Protocol, Tuple, runtime_checkable

import numpy as np

from otmask.core.models import TransportPlan, TransportProblem


# ----------------------------------------------------------------------
# TransportSolver, used by the pseudo-mask pipeline
# ----------------------------------------------------------------------

@runtime_checkable
class TransportSolver(Protocol):
    """Turn a balanced problem into a plan.

    Implemented by :class:`otmask.transport.sinkhorn.SinkhornSolver` and
    by the plain function :func:`otmask.transport.exact.exact_solve`.
    """

    def __call__(self, problem: TransportProblem) -> TransportPlan: ...


# ----------------------------------------------------------------------
# LossEvaluator, used by the finite-difference check
# ----------------------------------------------------------------------

@runtime_checkable
class LossEvaluator(Protocol):
    """Evaluate a scalar loss and its gradient at *values*.

    The gradient has the shape of *values*.
    """

    def __call__(self, values: np.ndarray) -> Tuple[float, np.ndarray]: ...
