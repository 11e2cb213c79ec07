"""Iterative minimization and time steppers for the Allen-Cahn equation.

    u_t = laplacian(u) - f(u) / eps^2,    f(u) = u^3 - u,

with homogeneous Neumann boundaries.  Every stepper maps ``u^{n-1}`` to
``u^n`` on a fixed grid; :func:`evolve` drives any of them and records an
:class:`EnergyTrace`.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, TextIO

import numpy as np

from .energy import EnergyParams, QuadraticModel, energy_E, potential_derivative
from .grid import Grid, NonFiniteError, cg_solve, check_field, laplacian_apply, shifted_laplacian
from .qp import UNIT_BOX, project_to_K, solve_box_qp

log = logging.getLogger(__name__)

SCHEMES = (
    "algorithm1",
    "ieq_constrained",
    "ieq_unconstrained",
    "convex_splitting",
    "fully_implicit",
    "semi_implicit_stabilized",
)
CONSTRAINED = ("algorithm1", "ieq_constrained")

TRACE_HEADER = ("step", "energy", "model_value", "max_abs_u", "inner_iters", "inner_status", "wall_ms")


class SchemeError(RuntimeError):
    """An inner solver failed to produce a usable step."""


@dataclass(frozen=True)
class SchemeConfig:
    """Parameters shared by all schemes.

    ``time_step`` is ignored by ``algorithm1``; ``stabilization`` only matters
    for ``semi_implicit_stabilized``.  ``newton_tol`` bounds the max norm of
    the step residual written as ``u - u_prev - k * (laplacian(u) - g(u) / eps^2)``,
    i.e. measured in units of ``u``.  ``constrained=False`` drops the box from
    the quadratic subproblems of ``algorithm1``/``ieq_constrained``; it exists
    for diagnostics only, since without the box the energy decrease is no
    longer guaranteed.
    """

    epsilon: float = 0.1
    scheme: str = "ieq_constrained"
    time_step: float = 1e-2
    steps: int = 100
    stabilization: float = 1.0
    qp_tol: float = 1e-8
    qp_max_iter: Optional[int] = None
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    cg_tol: float = 1e-12
    cg_max_iter: Optional[int] = None
    constrained: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {', '.join(SCHEMES)}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.time_step > 0:
            raise ValueError(f"time_step must be > 0, got {self.time_step}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.stabilization < 0:
            raise ValueError(f"stabilization must be >= 0, got {self.stabilization}")
        for name in ("qp_tol", "newton_tol", "cg_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be >= 1")

    @property
    def params(self) -> EnergyParams:
        return EnergyParams(self.epsilon)

    def cg_budget(self, g: Grid) -> int:
        return self.cg_max_iter if self.cg_max_iter is not None else 10 * g.size


@dataclass
class StepRecord:
    step: int
    energy: float
    max_abs_u: float
    model_value: Optional[float] = None
    inner_iters: Optional[int] = None
    inner_status: Optional[str] = None
    wall_ms: Optional[float] = None
    # (E(u^{n-1}) - E(u^n)) / k and ||(u^n - u^{n-1}) / k||^2
    energy_rate: Optional[float] = None
    velocity_sq: Optional[float] = None

    @property
    def dissipation_ratio(self) -> Optional[float]:
        if self.energy_rate is None or not self.velocity_sq:
            return None
        return self.energy_rate / self.velocity_sq


@dataclass
class EnergyTrace:
    scheme: str
    records: list[StepRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.records])

    @property
    def steps_completed(self) -> int:
        return len(self.records) - 1

    def monotone(self, rel: float = 1e-12) -> bool:
        """True if no step raises the energy by more than ``rel * (1 + |E_prev|)``."""
        e = self.energies
        return bool(np.all(e[1:] <= e[:-1] + rel * (1.0 + np.abs(e[:-1]))))

    def chain_violations(self, rel: float = 1e-12) -> list[tuple[int, str, float]]:
        """Steps where ``E(u^n) <= M(u^n) <= E(u^{n-1})`` fails, ``M`` the model value.

        Each entry is ``(step, which_inequality, excess)``.
        """
        bad = []
        for prev, cur in zip(self.records, self.records[1:]):
            if cur.model_value is None:
                continue
            slack = rel * (1.0 + abs(prev.energy))
            if cur.energy > cur.model_value + slack:
                bad.append((cur.step, "E(u^n) <= model(u^n)", cur.energy - cur.model_value))
            if cur.model_value > prev.energy + slack:
                bad.append((cur.step, "model(u^n) <= E(u^n-1)", cur.model_value - prev.energy))
        return bad

    def write_csv(self, out: TextIO) -> None:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.records:
            w.writerow([
                r.step,
                repr(r.energy),
                "" if r.model_value is None else repr(r.model_value),
                repr(r.max_abs_u),
                "" if r.inner_iters is None else r.inner_iters,
                "" if r.inner_status is None else r.inner_status,
                "" if r.wall_ms is None else f"{r.wall_ms:.3f}",
            ])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


@dataclass(frozen=True)
class StepInfo:
    iterations: int
    status: str
    model_value: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.status in ("converged", "degenerate_flat")


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------

def _require_feasible(u: np.ndarray, what: str) -> None:
    if not UNIT_BOX.contains(u, slack=1e-12):
        raise ValueError(f"{what} must satisfy |u| <= 1 (max |u| = {np.max(np.abs(u)):.6g})")


def _model_step(g: Grid, u_prev: np.ndarray, cfg: SchemeConfig,
                time_step: Optional[float]) -> tuple[np.ndarray, StepInfo]:
    m = QuadraticModel(g, u_prev, cfg.params, time_step)
    if not cfg.constrained:
        sol = cg_solve(m.hessian_apply, -m.gradient(np.zeros(g.shape)), tol=cfg.cg_tol,
                       max_iter=cfg.cg_budget(g), x0=u_prev)
        return sol.x, StepInfo(sol.iterations, sol.status, m.value(sol.x))
    u, rep = solve_box_qp(m, u_prev, UNIT_BOX, tol=cfg.qp_tol, max_iter=cfg.qp_max_iter)
    return u, StepInfo(rep.iterations, rep.status, rep.final_model_value)


def _ieq_unconstrained(g: Grid, u_prev: np.ndarray, cfg: SchemeConfig) -> tuple[np.ndarray, StepInfo]:
    a = u_prev
    k, c = cfg.time_step, cfg.params.inv_eps2
    A = shifted_laplacian(g, 1.0 / k + 2.0 * c * a * a)
    rhs = a / k + c * (a ** 3 + a)
    sol = cg_solve(A, rhs, tol=cfg.cg_tol, max_iter=cfg.cg_budget(g), x0=a)
    m = QuadraticModel(g, a, cfg.params, k)
    return sol.x, StepInfo(sol.iterations, sol.status, m.value(sol.x))


def _semi_implicit(g: Grid, u_prev: np.ndarray, cfg: SchemeConfig) -> tuple[np.ndarray, StepInfo]:
    a = u_prev
    c = cfg.params.inv_eps2
    shift = 1.0 / cfg.time_step + cfg.stabilization * c
    rhs = shift * a - c * potential_derivative(a)
    sol = cg_solve(shifted_laplacian(g, shift), rhs, tol=cfg.cg_tol, max_iter=cfg.cg_budget(g), x0=a)
    return sol.x, StepInfo(sol.iterations, sol.status)


def newton_solve(g: Grid, u_prev: np.ndarray, cfg: SchemeConfig,
                 nonlinear: Callable[[np.ndarray], np.ndarray],
                 nonlinear_diff: Callable[[np.ndarray], np.ndarray]) -> tuple[np.ndarray, StepInfo]:
    """Newton's method for ``u - u_prev - k * (laplacian(u) - nonlinear(u) / eps^2) = 0``.

    Globalized by halving the step (at most 50 times) until the residual
    2-norm decreases.  Converged when the residual max norm drops below
    ``cfg.newton_tol``.
    """
    k, c = cfg.time_step, cfg.params.inv_eps2

    def residual(u):
        return u - u_prev - k * (laplacian_apply(g, u) - c * nonlinear(u))

    u = u_prev.copy()
    r = residual(u)
    rnorm = float(np.linalg.norm(r))
    inner = 0
    for it in range(cfg.newton_max_iter + 1):
        if float(np.max(np.abs(r))) <= cfg.newton_tol:
            return u, StepInfo(it, "converged")
        if it == cfg.newton_max_iter:
            break
        # Jacobian: I - k * laplacian + k * c * nonlinear'(u), scaled by 1/k
        diag = 1.0 / k + c * nonlinear_diff(u)
        sol = cg_solve(shifted_laplacian(g, diag), -r / k, tol=min(1e-2, cfg.cg_tol * 1e6),
                       max_iter=cfg.cg_budget(g))
        inner += sol.iterations
        delta = sol.x
        t = 1.0
        for _ in range(50):
            trial = u + t * delta
            r_trial = residual(trial)
            n_trial = float(np.linalg.norm(r_trial))
            if np.isfinite(n_trial) and n_trial < rnorm:
                break
            t *= 0.5
        else:
            return u, StepInfo(it, "stalled")
        u, r, rnorm = trial, r_trial, n_trial
    return u, StepInfo(cfg.newton_max_iter, "max_iter")


def _convex_splitting(g, u_prev, cfg):
    # f_+(u) - f_-(u_prev) with f_+(u) = u^3, f_-(u) = u
    return newton_solve(g, u_prev, cfg, lambda u: u ** 3 - u_prev, lambda u: 3.0 * u * u)


def _fully_implicit(g, u_prev, cfg):
    return newton_solve(g, u_prev, cfg, potential_derivative, lambda u: 3.0 * u * u - 1.0)


def _algorithm1_step(g, u_prev, cfg):
    return _model_step(g, u_prev, cfg, None)


def _ieq_constrained(g, u_prev, cfg):
    return _model_step(g, u_prev, cfg, cfg.time_step)


_STEPPERS = {
    "algorithm1": _algorithm1_step,
    "ieq_constrained": _ieq_constrained,
    "ieq_unconstrained": _ieq_unconstrained,
    "convex_splitting": _convex_splitting,
    "fully_implicit": _fully_implicit,
    "semi_implicit_stabilized": _semi_implicit,
}


def advance(g: Grid, u_prev: np.ndarray, cfg: SchemeConfig,
            scheme: Optional[str] = None) -> tuple[np.ndarray, StepInfo]:
    """One step of ``scheme`` (default ``cfg.scheme``) with its inner-solver report."""
    scheme = scheme or cfg.scheme
    u_prev = check_field(g, u_prev, "u_prev")
    if scheme in CONSTRAINED and cfg.constrained:
        _require_feasible(u_prev, "u_prev")
    u, info = _STEPPERS[scheme](g, u_prev, cfg)
    if not np.all(np.isfinite(u)):
        raise NonFiniteError(f"{scheme} produced a non-finite field")
    return u, info


def _strict(g, u_prev, cfg, scheme):
    u, info = advance(g, u_prev, cfg, scheme)
    if not info.ok:
        raise SchemeError(f"{scheme}: inner solver finished with status {info.status!r}")
    return u


def step_ieq_constrained(g: Grid, u_prev: np.ndarray, cfg: SchemeConfig) -> np.ndarray:
    """Minimize the proximal quadratic model ``J_Q(.; u_prev)`` over ``|u| <= 1``."""
    return advance(g, u_prev, cfg, "ieq_constrained")[0]


def step_ieq_unconstrained(g: Grid, u_prev: np.ndarray, cfg: SchemeConfig) -> np.ndarray:
    """Linear IEQ step: ``[(1/k) - laplacian + 2 a^2/eps^2] u = a/k + (a^3 + a)/eps^2``."""
    return _strict(g, u_prev, cfg, "ieq_unconstrained")


def step_convex_splitting(g: Grid, u_prev: np.ndarray, cfg: SchemeConfig) -> np.ndarray:
    """Implicit ``u^3``, explicit ``-u``; solved by Newton."""
    return _strict(g, u_prev, cfg, "convex_splitting")


def step_fully_implicit(g: Grid, u_prev: np.ndarray, cfg: SchemeConfig) -> np.ndarray:
    """Backward Euler; only stable for ``k`` of order ``eps^2``."""
    return _strict(g, u_prev, cfg, "fully_implicit")


def step_semi_implicit_stabilized(g: Grid, u_prev: np.ndarray, cfg: SchemeConfig) -> np.ndarray:
    """Explicit ``f`` plus ``S/eps^2 (u - u_prev)`` stabilization; one linear solve."""
    return _strict(g, u_prev, cfg, "semi_implicit_stabilized")


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

StepCallback = Callable[[int, np.ndarray], None]


def _finite_energy(g, u, params, step):
    e = energy_E(g, u, params)
    if not np.isfinite(e):
        raise NonFiniteError(f"energy overflowed at step {step}")
    return e


def _initial_record(g, u, params, timed):
    return StepRecord(0, energy_E(g, u, params), float(np.max(np.abs(u))),
                      wall_ms=0.0 if timed else None)


def _prepare_initial(g: Grid, u0: np.ndarray, cfg: SchemeConfig) -> np.ndarray:
    u = check_field(g, u0, "u0").copy()
    if not np.all(np.isfinite(u)):
        raise ValueError("initial field is not finite")
    if cfg.scheme in CONSTRAINED and cfg.constrained and not UNIT_BOX.contains(u):
        log.warning("initial data leaves [-1, 1] (max |u| = %.6g); projecting", np.max(np.abs(u)))
        u = project_to_K(u)
    return u


def minimize_algorithm1(g: Grid, u0: np.ndarray, cfg: SchemeConfig,
                        callback: Optional[StepCallback] = None,
                        timed: bool = False) -> tuple[np.ndarray, EnergyTrace]:
    """Iterative convex minimization of the double-well energy.

    Each iteration minimizes ``E_Q(.; u^{n-1})`` over the box starting from
    ``u^{n-1}``.  Runs ``cfg.steps`` iterations, or stops early once both the
    energy (relative 1e-12) and the iterate (2-norm 1e-10) stop moving.

    Raises:
        ValueError: if ``u0`` is not in the box.
    """
    u = check_field(g, u0, "u0")
    if cfg.constrained:
        _require_feasible(u, "u0")
    u = u.copy()
    cfg = replace(cfg, scheme="algorithm1")
    params = cfg.params
    trace = EnergyTrace("algorithm1", [_initial_record(g, u, params, timed)])
    if callback:
        callback(0, u)
    for n in range(1, cfg.steps + 1):
        t0 = time.perf_counter()
        u_new, info = advance(g, u, cfg)
        wall = (time.perf_counter() - t0) * 1e3
        e_prev = trace.records[-1].energy
        e = _finite_energy(g, u_new, params, n)
        trace.records.append(StepRecord(n, e, float(np.max(np.abs(u_new))), info.model_value,
                                        info.iterations, info.status, wall if timed else None))
        moved = float(np.linalg.norm(u_new - u))
        u = u_new
        if callback:
            callback(n, u)
        if abs(e_prev - e) <= 1e-12 * (1.0 + abs(e)) and moved <= 1e-10:
            break
    return u, trace


def evolve(g: Grid, u0: np.ndarray, cfg: SchemeConfig,
           callback: Optional[StepCallback] = None,
           timed: bool = False) -> tuple[np.ndarray, EnergyTrace]:
    """Apply the configured scheme ``cfg.steps`` times and record the energy.

    Constrained schemes project initial data that leaves ``[-1, 1]`` (with a
    warning).  Every record after the first also carries the dissipation
    diagnostic ``(E(u^{n-1}) - E(u^n)) / k`` against ``||(u^n - u^{n-1})/k||^2``.
    ``callback(step, u)`` is invoked for the initial state and after each step.

    Raises:
        NonFiniteError: if a step produces NaN/Inf.
    """
    if cfg.scheme == "algorithm1":
        return minimize_algorithm1(g, _prepare_initial(g, u0, cfg), cfg, callback, timed)
    u = _prepare_initial(g, u0, cfg)
    params, k = cfg.params, cfg.time_step
    trace = EnergyTrace(cfg.scheme, [_initial_record(g, u, params, timed)])
    if callback:
        callback(0, u)
    for n in range(1, cfg.steps + 1):
        t0 = time.perf_counter()
        u_new, info = advance(g, u, cfg)
        wall = (time.perf_counter() - t0) * 1e3
        if not info.ok:
            log.warning("step %d of %s: inner solver status %s", n, cfg.scheme, info.status)
        e_prev = trace.records[-1].energy
        e = _finite_energy(g, u_new, params, n)
        vel = (u_new - u) / k
        trace.records.append(StepRecord(
            n, e, float(np.max(np.abs(u_new))), info.model_value, info.iterations, info.status,
            wall if timed else None,
            energy_rate=(e_prev - e) / k,
            velocity_sq=g.cell_volume * float(np.sum(vel * vel)),
        ))
        u = u_new
        if callback:
            callback(n, u)
    return u, trace
