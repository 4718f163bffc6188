"""
Entropic optimal transport by Sinkhorn-Knopp matrix scaling.

With the Gibbs kernel ``K = exp(-C / lambda)`` (``C`` is ``m x n``,
suppliers on rows) each iteration updates::

    u_j = y_j / sum_i K_ij v_i        (consumer side, length n)
    v_i = x_i / sum_j K_ij u_j        (supplier side, length m)

starting from ``u = v = 1``.  The plan is ``Gamma_ij = v_i K_ij u_j``,
so ``v`` scales rows and ``u`` scales columns.  Because ``v`` is updated
last, row sums equal ``x`` up to rounding and the column sums carry
the remaining marginal error.

Costs are divided by their maximum before exponentiation unless
``normalize_cost`` is off.  For small ``lambda`` the kernel underflows;
the log-domain path runs the same updates on ``log u`` / ``log v`` with
log-sum-exp reductions.

A zero-supply row stays in the plan as an all-zero row.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from otmask.config import LAMBDA, LOG_DOMAIN_HINT_LAMBDA, SINKHORN_ITERATIONS, debug_print
from otmask.core.errors import NumericalError, ValidationError
from otmask.core.models import TransportPlan, TransportProblem, marginal_error

# Iterations between two marginal-error checks.
CHECK_EVERY = 10


@dataclass(frozen=True)
class SinkhornConfig:
    """Solver settings.

    Attributes:
        lam:            Entropic regularisation coefficient (> 0).
        iterations:     Number of u/v update rounds T (>= 1).
        log_domain:     Run the log-sum-exp updates.
        normalize_cost: Divide costs by their maximum first.
        stop_threshold: Stop early once the column marginal error at a
                        check falls below this value (None: always run T).
    """

    lam: float = LAMBDA
    iterations: int = SINKHORN_ITERATIONS
    log_domain: bool = False
    normalize_cost: bool = True
    stop_threshold: Optional[float] = None

    def validate(self) -> "SinkhornConfig":
        if not self.lam > 0:
            raise ValidationError(f"lambda must be > 0, got {self.lam}")
        if self.iterations < 1:
            raise ValidationError(f"iterations must be >= 1, got {self.iterations}")
        if self.stop_threshold is not None and self.stop_threshold < 0:
            raise ValidationError(f"stop_threshold must be >= 0, got {self.stop_threshold}")
        return self


def _prepared_cost(problem: TransportProblem, config: SinkhornConfig) -> np.ndarray:
    cost = np.asarray(problem.cost, dtype=np.float64)
    if config.normalize_cost:
        peak = float(cost.max(initial=0.0))
        if peak > 0.0:
            cost = cost / peak
    return cost


def _underflow(config: SinkhornConfig, where: str) -> NumericalError:
    hint = ""
    if config.lam < LOG_DOMAIN_HINT_LAMBDA:
        hint = f" (lambda below {LOG_DOMAIN_HINT_LAMBDA:g} usually needs it)"
    return NumericalError(
        f"Sinkhorn produced non-finite values in {where} at lambda={config.lam:g}; "
        f"rerun with log_domain=True{hint}"
    )


def _scale_plain(
    cost: np.ndarray, x: np.ndarray, y: np.ndarray, config: SinkhornConfig,
) -> Tuple[np.ndarray, int, list]:
    with np.errstate(over="ignore", under="ignore"):
        K = np.exp(-cost / config.lam)
    if not np.isfinite(K).all():
        raise _underflow(config, "the kernel")
    if ((K.sum(axis=0) == 0.0) & (y > 0)).any() or ((K.sum(axis=1) == 0.0) & (x > 0)).any():
        raise _underflow(config, "the kernel")

    m, n = K.shape
    u = np.ones(n)
    v = np.ones(m)
    trace = []
    done = 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for t in range(config.iterations):
            u = np.divide(y, K.T @ v, out=np.zeros(n), where=y > 0)
            v = np.divide(x, K @ u, out=np.zeros(m), where=x > 0)
            done = t + 1
            if not (np.isfinite(u).all() and np.isfinite(v).all()):
                raise _underflow(config, f"the scaling vectors (iteration {done})")
            if t % CHECK_EVERY == 0 or done == config.iterations:
                err = float(np.abs(u * (K.T @ v) - y).max(initial=0.0))
                trace.append(err)
                if config.stop_threshold is not None and err < config.stop_threshold:
                    break

    gamma = v[:, None] * K * u[None, :]
    return gamma, done, trace


def _scale_log(
    cost: np.ndarray, x: np.ndarray, y: np.ndarray, config: SinkhornConfig,
) -> Tuple[np.ndarray, int, list]:
    log_k = -cost / config.lam
    with np.errstate(divide="ignore"):
        log_x = np.log(x)
        log_y = np.log(y)

    m, n = log_k.shape
    g = np.zeros(n)  # log u
    f = np.zeros(m)  # log v
    trace = []
    done = 0
    for t in range(config.iterations):
        g = log_y - logsumexp(log_k + f[:, None], axis=0)
        f = log_x - logsumexp(log_k + g[None, :], axis=1)
        done = t + 1
        if np.isnan(g).any() or np.isnan(f).any() or np.isposinf(g).any() or np.isposinf(f).any():
            raise NumericalError(f"log-domain Sinkhorn diverged at iteration {done}")
        if t % CHECK_EVERY == 0 or done == config.iterations:
            col = np.exp(logsumexp(log_k + f[:, None], axis=0) + g)
            err = float(np.abs(col - y).max(initial=0.0))
            trace.append(err)
            if config.stop_threshold is not None and err < config.stop_threshold:
                break

    gamma = np.exp(f[:, None] + log_k + g[None, :])
    return gamma, done, trace


def sinkhorn_solve(problem: TransportProblem, config: SinkhornConfig = SinkhornConfig()) -> TransportPlan:
    """Solve *problem* approximately with T Sinkhorn iterations.

    Raises:
        ValidationError: Invalid problem or ``lambda <= 0``.
        NumericalError:  Kernel or scaling vectors went non-finite on the
                         plain path; the message advises ``log_domain``.
    """
    config.validate()
    problem.validate()
    x = np.asarray(problem.supply, dtype=np.float64)
    y = np.asarray(problem.demand, dtype=np.float64)
    cost = _prepared_cost(problem, config)

    scale = _scale_log if config.log_domain else _scale_plain
    gamma, done, trace = scale(cost, x, y, config)
    if not np.isfinite(gamma).all():
        raise _underflow(config, "the plan")

    err = marginal_error(gamma, x, y)
    debug_print(
        f"sinkhorn {problem.m}x{problem.n}: T={done} lambda={config.lam:g} "
        f"log_domain={config.log_domain} marginal_error={err:.3g}"
    )
    return TransportPlan(gamma=gamma, converged_marginal_error=err, iterations=done, error_trace=trace)


class SinkhornSolver:
    """:class:`~otmask.core.protocols.TransportSolver` bound to a config."""

    def __init__(self, config: SinkhornConfig = SinkhornConfig()) -> None:
        self._config = config.validate()

    @property
    def config(self) -> SinkhornConfig:
        return self._config

    def __call__(self, problem: TransportProblem) -> TransportPlan:
        return sinkhorn_solve(problem, self._config)
