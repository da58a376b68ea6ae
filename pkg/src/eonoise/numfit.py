"""Least-squares kernels shared by the calibration and extraction code.

:func:`linear_least_squares` is an SVD solve with an explicit rank check.
:func:`nonlinear_least_squares` is a Levenberg-Marquardt iteration with
diagonal (Marquardt) scaling, so it is insensitive to parameter units.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateDesignError, FitFailureError, InvalidInputError, InvalidModelError

__all__ = [
    "FitProblem",
    "FitResult",
    "Tolerances",
    "linear_least_squares",
    "nonlinear_least_squares",
    "finite_difference_jacobian",
]


def linear_least_squares(design, observations, rcond=None):
    """Minimise ``||design @ p - observations||`` and return ``p``.

    Raises :class:`DegenerateDesignError` (with ``rank``) when the design is
    rank deficient at relative tolerance ``rcond`` (default ``max(m, n) * eps``).
    """
    A = np.asarray(design, dtype=float)
    y = np.asarray(observations, dtype=float)
    if A.ndim != 2:
        raise InvalidInputError("design must be a 2-D matrix")
    m, n = A.shape
    if y.shape[0] != m:
        raise InvalidInputError(f"design has {m} rows but {y.shape[0]} observations")
    if m < n:
        raise InvalidInputError(f"need rows >= columns, got {m} x {n}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(y))):
        raise InvalidInputError("non-finite entries in least-squares problem")
    # equilibrate columns so the rank test is independent of column units
    scale = np.linalg.norm(A, axis=0)
    if np.any(scale == 0):
        raise DegenerateDesignError("design has an all-zero column", rank=int(np.sum(scale > 0)))
    if rcond is None:
        rcond = max(m, n) * np.finfo(float).eps
    p, _, rank, sv = np.linalg.lstsq(A / scale, y, rcond=rcond)
    if rank < n:
        raise DegenerateDesignError(f"design matrix is rank deficient (rank {rank} < {n})", rank=int(rank))
    return p / (scale if y.ndim == 1 else scale[:, None])


@dataclass
class FitProblem:
    residual: Callable[[np.ndarray], np.ndarray]
    n_params: int
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    bounds: Optional[tuple] = None  # (lower, upper), each broadcastable to n_params


@dataclass
class Tolerances:
    gtol: float = 1e-10
    xtol: float = 1e-12
    max_iter: int = 200
    damping: float = 1e-3
    damping_factor: float = 10.0
    max_damping: float = 1e16

    def __post_init__(self):
        if not (self.gtol > 0 and self.xtol > 0 and self.max_iter > 0 and self.damping > 0):
            raise InvalidInputError("tolerances must be positive")


@dataclass
class FitResult:
    parameters: np.ndarray
    residual_rms: float
    iterations: int
    converged: bool
    gradient_norm: float
    condition: float
    message: str
    covariance: Optional[np.ndarray] = None
    cost_history: Sequence[float] = field(default_factory=list)


def finite_difference_jacobian(residual, x, rel_step=1e-6):
    """Central-difference Jacobian with step ``rel_step * max(|x_i|, 1)``."""
    x = np.asarray(x, dtype=float)
    h = rel_step * np.maximum(np.abs(x), 1.0)
    cols = []
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        cols.append((np.asarray(residual(xp)) - np.asarray(residual(xm))) / (xp[i] - xm[i]))
    return np.column_stack(cols)


def _scaled_gradient(J, r):
    g = J.T @ r
    cn = np.linalg.norm(J, axis=0)
    ok = cn > 0
    if not np.any(ok):
        return 0.0, g
    return float(np.max(np.abs(g[ok]) / cn[ok])), g


def nonlinear_least_squares(problem, init, tol=None):
    """Damped Gauss-Newton (Levenberg-Marquardt) minimisation of ``0.5*||r(p)||^2``.

    The damping is multiplied by ``tol.damping_factor`` on a rejected step and
    divided by it on an accepted one. Iteration stops when the column-scaled
    gradient ``max_i |J_i . r| / ||J_i||`` drops below ``gtol * (1 + ||r||)``,
    when the step norm drops below ``xtol * (||p|| + xtol)``, or at
    ``max_iter``. ``converged`` reports the gradient test at the final point.
    """
    tol = tol or Tolerances()
    x = np.array(init, dtype=float)
    if x.size != problem.n_params:
        raise InvalidInputError(f"init has {x.size} entries, problem expects {problem.n_params}")
    if problem.bounds is not None:
        lo = np.broadcast_to(np.asarray(problem.bounds[0], dtype=float), x.shape)
        hi = np.broadcast_to(np.asarray(problem.bounds[1], dtype=float), x.shape)
        if np.any(x < lo) or np.any(x > hi):
            raise InvalidInputError("initial parameters outside bounds")
    else:
        lo = hi = None

    def resid(p):
        r = np.asarray(problem.residual(p), dtype=float).ravel()
        if not np.all(np.isfinite(r)):
            raise InvalidModelError("residual evaluated to a non-finite value")
        return r

    def jac(p):
        if problem.jacobian is not None:
            return np.asarray(problem.jacobian(p), dtype=float).reshape(-1, x.size)
        return finite_difference_jacobian(resid, p)

    r = resid(x)
    if r.size < x.size:
        raise InvalidInputError("fewer residuals than parameters")
    cost = 0.5 * float(r @ r)
    history = [cost]
    lam = tol.damping
    message = "maximum iterations reached"
    it = 0
    J = jac(x)
    while it < tol.max_iter:
        gnorm, g = _scaled_gradient(J, r)
        if gnorm <= tol.gtol * (1.0 + np.sqrt(2 * cost)):
            message = "gradient tolerance reached"
            break
        A = J.T @ J
        d = np.diag(A).copy()
        d = np.maximum(d, 1e-12 * max(d.max(), 1e-300))
        accepted = False
        solved_once = False
        step = None
        while lam <= tol.max_damping:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), -g)
                solved_once = True
            except np.linalg.LinAlgError:
                lam *= tol.damping_factor
                continue
            xt = x + step
            if lo is not None:
                xt = np.clip(xt, lo, hi)
                step = xt - x
            try:
                rt = resid(xt)
            except InvalidModelError:
                lam *= tol.damping_factor
                continue
            ct = 0.5 * float(rt @ rt)
            if ct < cost:
                accepted = True
                break
            lam *= tol.damping_factor
        it += 1
        if not accepted:
            if not solved_once:
                raise FitFailureError("singular normal equations; damping exhausted",
                                      best_residual=float(np.sqrt(2 * cost / r.size)))
            message = "no further decrease possible"
            break
        x, r, cost = xt, rt, ct
        history.append(cost)
        lam = max(lam / tol.damping_factor, 1e-300)
        J = jac(x)
        if np.linalg.norm(step) <= tol.xtol * (np.linalg.norm(x) + tol.xtol):
            message = "step tolerance reached"
            break

    gnorm, _ = _scaled_gradient(J, r)
    converged = gnorm <= tol.gtol * (1.0 + np.sqrt(2 * cost))
    try:
        sv = np.linalg.svd(J, compute_uv=False)
        condition = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    except np.linalg.LinAlgError:  # pragma: no cover
        condition = np.inf
    cov = None
    dof = r.size - x.size
    if np.isfinite(condition) and dof > 0:
        try:
            cov = np.linalg.inv(J.T @ J) * (2 * cost / dof)
        except np.linalg.LinAlgError:
            cov = None
    return FitResult(
        parameters=x,
        residual_rms=float(np.sqrt(2 * cost / r.size)),
        iterations=it,
        converged=bool(converged),
        gradient_norm=gnorm,
        condition=condition,
        message=message,
        covariance=cov,
        cost_history=history,
    )
