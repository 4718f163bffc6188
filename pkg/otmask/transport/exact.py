"""
Exact transport oracle and the transport objective.

``exact_solve`` runs the network simplex of POT (``ot.emd``) on small
problems.  With integral supplies and unit demands the simplex returns
a vertex of the transportation polytope, so the plan is integral.
"""

import numpy as np
import ot

from otmask.config import EXACT_MAX_CELLS, debug_print
from otmask.core.errors import NumericalError, ShapeError, ValidationError
from otmask.core.models import TransportPlan, TransportProblem, marginal_error


def exact_solve(problem: TransportProblem) -> TransportPlan:
    """Minimum-cost plan of *problem*.

    Raises:
        ValidationError: Invalid problem or ``m * n`` above the oracle bound.
        NumericalError:  The network simplex did not reach an optimum.
    """
    problem.validate()
    cells = problem.m * problem.n
    if cells > EXACT_MAX_CELLS:
        raise ValidationError(
            f"exact oracle handles at most {EXACT_MAX_CELLS} cells, problem has {problem.m}x{problem.n}"
        )
    a = np.ascontiguousarray(problem.supply, dtype=np.float64)
    b = np.ascontiguousarray(problem.demand, dtype=np.float64)
    M = np.ascontiguousarray(problem.cost, dtype=np.float64)

    gamma, log = ot.emd(a, b, M, log=True)
    if log.get("warning"):
        raise NumericalError(f"network simplex stopped early: {log['warning']}")
    gamma = np.asarray(gamma, dtype=np.float64)

    err = marginal_error(gamma, a, b)
    debug_print(f"exact {problem.m}x{problem.n}: cost={float(log['cost']):.9g} marginal_error={err:.3g}")
    return TransportPlan(gamma=gamma, converged_marginal_error=err, iterations=0)


def plan_cost(problem: TransportProblem, plan: TransportPlan) -> float:
    """Transport objective ``sum_ij gamma_ij * cost_ij``.

    Raises:
        ShapeError: Plan and cost matrix differ in shape.
    """
    if plan.gamma.shape != problem.cost.shape:
        raise ShapeError(f"plan {plan.gamma.shape} does not fit cost {problem.cost.shape}")
    return float(np.sum(plan.gamma * problem.cost))
