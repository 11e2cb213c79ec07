"""Box-constrained minimization of a quadratic model over ``K = {|u| <= 1}``.

The solver is a projected gradient method with a monotone Armijo
backtracking line search.  Every iterate is feasible and every accepted step
lowers the model value, so stopping early (loose tolerance, exhausted budget)
never breaks the energy-decrease argument of the outer schemes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .energy import QuadraticModel
from .grid import NonFiniteError, cg_solve, check_field

log = logging.getLogger(__name__)

ARMIJO = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACKS = 60
POWER_ITERS = 10


@dataclass(frozen=True)
class BoxConstraint:
    lower: float = -1.0
    upper: float = 1.0

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"empty box [{self.lower}, {self.upper}]")

    def contains(self, u: np.ndarray, slack: float = 0.0) -> bool:
        return bool(np.all(u >= self.lower - slack) and np.all(u <= self.upper + slack))


UNIT_BOX = BoxConstraint()


@dataclass(frozen=True)
class QpReport:
    iterations: int
    final_model_value: float
    start_model_value: float
    projected_gradient_norm: float
    status: str  # "converged" | "max_iter" | "degenerate_flat"
    hessian_norm_estimate: float = float("nan")


def project_to_K(u: np.ndarray, box: BoxConstraint = UNIT_BOX) -> np.ndarray:
    """Clamp every cell to ``[box.lower, box.upper]``."""
    return np.clip(u, box.lower, box.upper)


def estimate_hessian_norm(m: QuadraticModel, iters: int = POWER_ITERS) -> float:
    """Power-method estimate of the largest Hessian eigenvalue.

    Starts from a fixed checkerboard-plus-ramp vector so the estimate, and
    therefore the whole solve, is deterministic.
    """
    idx = np.indices(m.grid.shape).sum(axis=0)
    v = np.where(idx % 2 == 0, 1.0, -1.0) + np.linspace(0.0, 1.0, m.grid.size).reshape(m.grid.shape)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = m.hessian_apply(v)
        lam = float(np.sum(v * w))
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            break
        v = w / nw
    return max(lam, 1e-300)


def _projected_gradient(x: np.ndarray, grad: np.ndarray, box: BoxConstraint) -> np.ndarray:
    return x - project_to_K(x - grad, box)


def _binding(x: np.ndarray, grad: np.ndarray, box: BoxConstraint) -> np.ndarray:
    """Cells held at a bound by a gradient pointing out of the box."""
    return ((x <= box.lower) & (grad > 0)) | ((x >= box.upper) & (grad < 0))


def _projected_search(m: QuadraticModel, x: np.ndarray, grad: np.ndarray,
                      direction: np.ndarray, step: float, box: BoxConstraint):
    """Backtrack along ``P(x + t * direction)`` until the Armijo test passes.

    The change in model value is taken from the exact quadratic expansion
    ``<grad, d> + <H d, d> / 2`` rather than a difference of two values, so
    tiny decreases near the solution are not lost to cancellation.

    Returns ``(x_new, change)`` or ``None`` when no decrease was found.
    """
    w = m.grid.cell_volume
    t = step
    for _ in range(MAX_BACKTRACKS):
        x_new = project_to_K(x + t * direction, box)
        d = x_new - x
        slope = w * float(np.sum(grad * d))
        if slope < 0.0:
            change = slope + 0.5 * w * float(np.sum(d * m.hessian_apply(d)))
            if change <= ARMIJO * slope:
                return x_new, change
        t *= BACKTRACK
    return None


def solve_box_qp(m: QuadraticModel, start: Optional[np.ndarray] = None,
                 box: BoxConstraint = UNIT_BOX, tol: float = 1e-8,
                 max_iter: Optional[int] = None,
                 callback: Optional[Callable[[np.ndarray], None]] = None) -> tuple[np.ndarray, QpReport]:
    """Minimize ``m`` over the box, starting from a feasible point.

    Each iteration is a projected gradient step ``x <- P(x - alpha * grad)``
    whose step is halved until the Armijo condition holds.  The trial step
    is the exact minimizer along the free part of the gradient (never below
    the inverse of a power-method estimate of the Hessian norm).  Once the
    set of cells pinned at a bound stops changing, the step is followed by
    a conjugate-gradient solve of the model restricted to the free cells and
    another projected backtracking search along that direction.  Both kinds
    of step keep ``x`` feasible and only ever lower the model value.

    Args:
        m: quadratic model to minimize.
        start: feasible starting field; defaults to the model anchor.
        box: feasible box, ``[-1, 1]`` by default.
        tol: stop once ``||x - P(x - grad)||_2 <= tol * (1 + ||grad(start)||_2)``.
        max_iter: iteration budget, ``10 * cells`` by default.
        callback: called with every accepted iterate.

    Returns:
        The final iterate and a :class:`QpReport`.  The final model value
        never exceeds the value at ``start`` whatever the status.
    """
    g = m.grid
    x = check_field(g, m.anchor if start is None else start, "start").copy()
    if not box.contains(x, slack=1e-12):
        raise ValueError("start point is outside the feasible box")
    x = project_to_K(x, box)
    if max_iter is None:
        max_iter = 10 * g.size

    f_start = m.value(x)
    grad = m.gradient(x)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("gradient at the starting point is not finite")
    stop = tol * (1.0 + float(np.linalg.norm(grad)))
    lam = estimate_hessian_norm(m)
    cg_budget = max(50, 2 * int(np.sqrt(g.size)) * g.ndim)

    it = 0
    pg_norm = float(np.linalg.norm(_projected_gradient(x, grad, box)))
    status = "max_iter"
    pinned = _binding(x, grad, box)
    while True:
        if pg_norm <= stop:
            status = "converged"
            break
        if it >= max_iter:
            break
        it += 1

        free_grad = np.where(pinned, 0.0, grad)
        curv = float(np.sum(free_grad * m.hessian_apply(free_grad)))
        gg = float(np.sum(free_grad * free_grad))
        alpha = max(gg / curv, 1.0 / lam) if curv > 0 else 1.0 / lam
        found = _projected_search(m, x, grad, -grad, alpha, box)
        if found is None:
            # no representable decrease left along the projected path
            log.debug("line search stalled at iteration %d (pg=%.3e)", it, pg_norm)
            break
        x = found[0]
        if callback:
            callback(x)
        grad = m.gradient(x)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"gradient became non-finite at iteration {it}")
        new_pinned = _binding(x, grad, box)
        settled = np.array_equal(new_pinned, pinned)
        pinned = new_pinned

        if settled and not np.all(pinned):
            free = ~pinned
            rhs = np.where(free, -grad, 0.0)

            def reduced(v, free=free):
                return np.where(free, m.hessian_apply(np.where(free, v, 0.0)), 0.0)

            sol = cg_solve(reduced, rhs, tol=1e-3, max_iter=cg_budget)
            if np.any(sol.x):
                found = _projected_search(m, x, grad, sol.x, 1.0, box)
                if found is not None:
                    x = found[0]
                    if callback:
                        callback(x)
                    grad = m.gradient(x)
                    if not np.all(np.isfinite(grad)):
                        raise NonFiniteError(f"gradient became non-finite at iteration {it}")
                    pinned = _binding(x, grad, box)
        pg_norm = float(np.linalg.norm(_projected_gradient(x, grad, box)))

    if status == "converged" and m.time_step is None and not np.any(m.anchor):
        # Hessian is the bare negative Laplacian: every constant is a minimizer
        status = "degenerate_flat"
    f = m.value(x)
    if f > f_start:
        # only possible through rounding when the iterate barely moved
        x, f = project_to_K(check_field(g, m.anchor if start is None else start), box), f_start
    return x, QpReport(it, f, f_start, pg_norm, status, lam)


def kkt_residual(m: QuadraticModel, u: np.ndarray, box: BoxConstraint = UNIT_BOX) -> float:
    """First-order optimality violation of ``u`` for ``min_{box} m``.

    Per cell: ``|g|`` in the interior, ``max(0, g)`` at the upper bound and
    ``max(0, -g)`` at the lower bound, with ``g`` the model gradient, so a
    bound is only credited when the gradient pushes against it.  The result
    is the largest entry and vanishes exactly at constrained stationary points.
    """
    u = check_field(m.grid, u)
    if not box.contains(u, slack=1e-12):
        raise ValueError("u is infeasible beyond 1e-12")
    grad = m.gradient(u)
    at_upper = u >= box.upper
    at_lower = u <= box.lower
    viol = np.abs(grad)
    viol = np.where(at_upper, np.maximum(0.0, grad), viol)
    viol = np.where(at_lower, np.maximum(0.0, -grad), viol)
    return float(np.max(viol)) if viol.size else 0.0
