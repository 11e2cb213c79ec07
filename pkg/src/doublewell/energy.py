"""Double-well energy and its convex quadratic majorants.

The potential is ``F(u) = (u^2 - 1)^2 / 4 = p(u)^2`` with ``p(u) = (u^2 - 1) / 2``.
Replacing ``p`` by its tangent line at an anchor ``a``,

    p_L(u; a) = a*u - a^2/2 - 1/2,

gives a quadratic model of the energy that touches it at ``a`` and lies above
it on the box ``|u| <= 1``.  All potential terms use one quadrature point per
cell, so these pointwise facts carry over to the discrete energies exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import Grid, check_field, dirichlet_energy, laplacian_apply


@dataclass(frozen=True)
class EnergyParams:
    """Interface width ``epsilon`` of the double-well energy."""

    epsilon: float

    def __post_init__(self):
        eps = float(self.epsilon)
        if not (np.isfinite(eps) and eps > 0):
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        object.__setattr__(self, "epsilon", eps)

    @property
    def inv_eps2(self) -> float:
        return 1.0 / (self.epsilon * self.epsilon)


def potential_F(s):
    """Double-well potential ``(s^2 - 1)^2 / 4``; works elementwise on arrays."""
    s = np.asarray(s, dtype=np.float64) if not np.isscalar(s) else float(s)
    return 0.25 * (s * s - 1.0) ** 2


def potential_p(s):
    """Square root branch ``(s^2 - 1) / 2`` of the potential."""
    s = np.asarray(s, dtype=np.float64) if not np.isscalar(s) else float(s)
    return 0.5 * (s * s - 1.0)


def p_linearized(s, anchor_s):
    """Tangent line of ``potential_p`` at ``anchor_s`` evaluated at ``s``."""
    if not (np.isscalar(s) and np.isscalar(anchor_s)):
        s = np.asarray(s, dtype=np.float64)
        anchor_s = np.asarray(anchor_s, dtype=np.float64)
    return anchor_s * s - 0.5 * anchor_s * anchor_s - 0.5


def potential_derivative(s):
    """``f(s) = F'(s) = s (s^2 - 1)``."""
    s = np.asarray(s, dtype=np.float64) if not np.isscalar(s) else float(s)
    return s * (s * s - 1.0)


def energy_E(g: Grid, u: np.ndarray, params: EnergyParams) -> float:
    """Discrete energy: Dirichlet part plus ``h^d / eps^2 * sum F(u_i)``."""
    u = check_field(g, u)
    potential = float(np.sum(potential_F(u)))
    return dirichlet_energy(g, u) + g.cell_volume * params.inv_eps2 * potential


def energy_gradient(g: Grid, u: np.ndarray, params: EnergyParams) -> np.ndarray:
    """First variation of :func:`energy_E` in the ``h^d``-weighted inner product."""
    u = check_field(g, u)
    return -laplacian_apply(g, u) + params.inv_eps2 * potential_derivative(u)


@dataclass(frozen=True, eq=False)
class QuadraticModel:
    """Convex quadratic model anchored at a previous iterate.

    Without ``time_step`` this is the majorant ``E_Q(u; anchor)`` used by the
    iterative minimization; with ``time_step = k`` it gains the proximal term
    ``||u - anchor||^2 / (2k)`` and becomes the time-stepping objective
    ``J_Q(u; anchor)``.

    Set ``verify=True`` to check at construction that the model touches the
    true energy at the anchor.
    """

    grid: Grid
    anchor: np.ndarray
    params: EnergyParams
    time_step: Optional[float] = None
    verify: bool = False

    def __post_init__(self):
        anchor = check_field(self.grid, self.anchor, "anchor").copy()
        if not np.all(np.isfinite(anchor)):
            raise ValueError("anchor must be finite")
        anchor.setflags(write=False)
        object.__setattr__(self, "anchor", anchor)
        if self.time_step is not None:
            k = float(self.time_step)
            if not (np.isfinite(k) and k > 0):
                raise ValueError(f"time_step must be > 0, got {self.time_step}")
            object.__setattr__(self, "time_step", k)
        if self.verify:
            e = energy_E(self.grid, anchor, self.params)
            m = self.value(anchor)
            if abs(m - e) > 1e-12 * (1.0 + abs(e)):
                raise AssertionError(f"model not tangent at anchor: {m!r} vs {e!r}")

    @property
    def is_proximal(self) -> bool:
        return self.time_step is not None

    def curvature(self) -> np.ndarray:
        """Diagonal (reaction) part of the Hessian: ``2 a^2 / eps^2 [+ 1/k]``."""
        c = 2.0 * self.params.inv_eps2 * self.anchor * self.anchor
        if self.time_step is not None:
            c = c + 1.0 / self.time_step
        return c

    def value(self, u: np.ndarray) -> float:
        g = self.grid
        u = check_field(g, u)
        pl = p_linearized(u, self.anchor)
        val = dirichlet_energy(g, u) + g.cell_volume * self.params.inv_eps2 * float(np.sum(pl * pl))
        if self.time_step is not None:
            d = u - self.anchor
            val += g.cell_volume * float(np.sum(d * d)) / (2.0 * self.time_step)
        return val

    def gradient(self, u: np.ndarray) -> np.ndarray:
        g = self.grid
        u = check_field(g, u)
        a = self.anchor
        grad = -laplacian_apply(g, u) + 2.0 * self.params.inv_eps2 * a * p_linearized(u, a)
        if self.time_step is not None:
            grad += (u - a) / self.time_step
        return grad

    def hessian_apply(self, v: np.ndarray) -> np.ndarray:
        v = check_field(self.grid, v, "v")
        return -laplacian_apply(self.grid, v) + self.curvature() * v

    def with_anchor(self, anchor: np.ndarray) -> "QuadraticModel":
        return QuadraticModel(self.grid, anchor, self.params, self.time_step, self.verify)


def model_value(m: QuadraticModel, u: np.ndarray) -> float:
    return m.value(u)


def model_gradient(m: QuadraticModel, u: np.ndarray) -> np.ndarray:
    return m.gradient(u)


def model_hessian_apply(m: QuadraticModel, v: np.ndarray) -> np.ndarray:
    return m.hessian_apply(v)
