"""Numerical certificates for the energy-stability results.

Every check returns a :class:`CheckResult`; ``run_checks`` executes them in a
fixed order (optionally on a thread pool) and ``format_report`` prints one
``PASS``/``FAIL`` line per check.  The ``full`` level uses the acceptance
sizes, ``quick`` shrinks grids and sweeps to run in seconds.

The oracles here are written against explicit formulas or brute force and do
not call the code path they are checking.
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .config import InitialCondition, make_initial
from .energy import (EnergyParams, QuadraticModel, energy_E, p_linearized, potential_p)
from .grid import Grid, dirichlet_energy, inner_product, laplacian_apply
from .qp import kkt_residual, solve_box_qp
from .schemes import SchemeConfig, advance, evolve, minimize_algorithm1


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    limit: Optional[float] = None

    @property
    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        budget = f" / {self.limit:g}s" if self.limit is not None else ""
        return f"[{tag}] {self.name}: {self.detail} ({self.seconds:.2f}s{budget})"


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------

def bisect(fn: Callable[[float], float], lo: float, hi: float, tol: float = 1e-13) -> float:
    """Root of a scalar function with a sign change on ``[lo, hi]``."""
    flo = fn(lo)
    if flo * fn(hi) > 0:
        raise ValueError("no sign change")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def scan_constant_minimizer(anchor: float, epsilon: float, time_step: Optional[float] = None,
                            step: float = 1e-4) -> float:
    """Brute-force minimizer over constants ``c in [-1, 1]`` of the per-cell model density."""
    c = np.linspace(-1.0, 1.0, int(round(2.0 / step)) + 1)
    pl = anchor * c - 0.5 * anchor ** 2 - 0.5
    dens = pl ** 2 / epsilon ** 2
    if time_step is not None:
        dens = dens + (c - anchor) ** 2 / (2.0 * time_step)
    return float(c[np.argmin(dens)])


def lattice_model_values(anchor: np.ndarray, h: float, epsilon: float,
                         time_step: Optional[float], points: np.ndarray) -> np.ndarray:
    """Model value of a 1D field for every row of ``points``, written out by hand."""
    jumps = np.diff(points, axis=1)
    val = 0.5 * h * np.sum(jumps ** 2, axis=1) / h ** 2
    pl = anchor * points - 0.5 * anchor ** 2 - 0.5
    val = val + h * np.sum(pl ** 2, axis=1) / epsilon ** 2
    if time_step is not None:
        val = val + h * np.sum((points - anchor) ** 2, axis=1) / (2.0 * time_step)
    return val


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

def check_tangency(quick: bool) -> tuple[bool, str]:
    n = 16 if quick else 32
    g = Grid.from_extent((n, n))
    rng = _rng(1)
    worst = 0.0
    count = 10 if quick else 50
    for eps in (0.05, 1.0):
        p = EnergyParams(eps)
        for _ in range(count):
            a = rng.uniform(-1, 1, g.shape)
            e = energy_E(g, a, p)
            worst = max(worst, abs(QuadraticModel(g, a, p).value(a) - e) / (1.0 + abs(e)))
    return worst <= 1e-12, f"max |E_Q(a;a) - E(a)| / (1 + |E(a)|) = {worst:.2e} (tol 1e-12)"


def _central_difference(fn, u, v, s=1e-5):
    return (fn(u + s * v) - fn(u - s * v)) / (2.0 * s)


def check_gradients(quick: bool) -> tuple[bool, str]:
    n = 16 if quick else 32
    g = Grid.from_extent((n, n))
    rng = _rng(2)
    worst = 0.0
    pairs = 5 if quick else 20
    for i in range(pairs):
        p = EnergyParams((0.05, 0.1, 1.0)[i % 3])
        a = rng.uniform(-1, 1, g.shape)
        v = rng.standard_normal(g.shape)
        u = rng.uniform(-1, 1, g.shape)
        for k in (None, 0.01, 1.0):
            m = QuadraticModel(g, a, p, k)
            fd = _central_difference(m.value, u, v)
            an = inner_product(g, m.gradient(u), v)
            worst = max(worst, abs(fd - an) / abs(an))
        # tangency of first variations: model gradient at the anchor vs FD of E
        m = QuadraticModel(g, a, p)
        fd = _central_difference(lambda w: energy_E(g, w, p), a, v)
        an = inner_product(g, m.gradient(a), v)
        worst = max(worst, abs(fd - an) / abs(an))
    return worst <= 1e-6, f"max relative FD mismatch {worst:.2e} (tol 1e-6)"


def check_pointwise(quick: bool) -> tuple[bool, str]:
    n = 101 if quick else 401
    s, a = np.meshgrid(np.linspace(-1, 1, n), np.linspace(-1, 1, n), indexing="ij")
    p, pl = potential_p(s), p_linearized(s, a)
    gap = float(np.min(p - pl))
    bound = float(np.max(p + pl))
    ok = gap >= -1e-12 and bound <= 1e-12
    return ok, f"min p - p_L = {gap:.2e} (>= -1e-12), max p + p_L = {bound:.2e} (<= 1e-12)"


def check_majorization(quick: bool) -> tuple[bool, str]:
    n = 16 if quick else 32
    g = Grid.from_extent((n, n))
    rng = _rng(3)
    worst = -np.inf
    pairs = 20 if quick else 100
    for i in range(pairs):
        p = EnergyParams((0.05, 1.0)[i % 2])
        u = rng.uniform(-1, 1, g.shape)
        a = rng.uniform(-1, 1, g.shape)
        e = energy_E(g, u, p)
        for k in (None, 0.01, 1.0):
            worst = max(worst, e - QuadraticModel(g, a, p, k).value(u))
    return worst <= 1e-12, f"max E(u) - model(u; a) = {worst:.3e} (<= 1e-12)"


def check_algorithm1(quick: bool) -> tuple[bool, str]:
    n = 24 if quick else 64
    g = Grid.from_extent((n, n))
    iters = 40 if quick else 200
    seeds = (0,) if quick else (0, 1, 2)
    worst, worst_abs, runs = -np.inf, 0.0, 0
    for eps in (0.05, 0.1, 0.5):
        for seed in seeds:
            u0 = make_initial(InitialCondition("uniform_random"), g, seed)
            u, trace = minimize_algorithm1(g, u0, SchemeConfig(epsilon=eps, steps=iters))
            e = trace.energies
            worst = max(worst, float(np.max((e[1:] - e[:-1]) / (1.0 + np.abs(e[:-1])))))
            worst_abs = max(worst_abs, float(np.max(np.abs(u))))
            runs += 1
    ok = worst <= 1e-12 and worst_abs <= 1.0
    return ok, (f"{runs} runs: max relative energy increase {worst:.2e} (<= 1e-12), "
                f"terminal max|u| = {worst_abs:.12g}")


K_SWEEP = (1e-3, 1e-2, 1.0, 10.0, 100.0)


def check_ieq_constrained(quick: bool) -> tuple[bool, str]:
    n = 24 if quick else 64
    g = Grid.from_extent((n, n))
    steps = 10 if quick else 50
    u0 = make_initial(InitialCondition("disk"), g, epsilon=0.1)
    problems = []
    for k in K_SWEEP:
        cfg = SchemeConfig(epsilon=0.1, scheme="ieq_constrained", time_step=k, steps=steps)
        _, trace = evolve(g, u0, cfg)
        bad = trace.chain_violations(rel=1e-12)
        if bad or not trace.monotone(1e-12):
            problems.append((k, bad[:1]))
    detail = f"k in {list(K_SWEEP)}, {steps} steps: " + (
        "E(u^n) <= J_Q(u^n;u^n-1) <= E(u^n-1) at every step" if not problems
        else f"violations {problems}")
    return not problems, detail


def check_qp_oracle(quick: bool) -> tuple[bool, str]:
    g = Grid.from_extent((4,))
    h, eps = g.spacing[0], 1.0
    axis = np.round(np.linspace(-1.0, 1.0, 21), 12)
    lattice = np.array(list(itertools.product(axis, repeat=4)))
    anchors = {
        "0.5*ones": np.full(4, 0.5),
        "alternating 0.8": np.array([0.8, -0.8, 0.8, -0.8]),
        "zeros": np.zeros(4),
    }
    worst_dist, worst_kkt, lines = 0.0, 0.0, []
    ok = True
    for (name, a), k in itertools.product(anchors.items(), (None, 1.0)):
        vals = lattice_model_values(a, h, eps, k, lattice)
        best = vals.min()
        # every lattice point tying the minimum is an acceptable reference
        ties = lattice[vals <= best + 1e-12 * (1.0 + abs(best))]
        m = QuadraticModel(g, a, EnergyParams(eps), k)
        u, rep = solve_box_qp(m, a, tol=1e-12)
        dist = float(np.min(np.max(np.abs(ties - u), axis=1)))
        kkt = kkt_residual(m, u)
        worst_dist, worst_kkt = max(worst_dist, dist), max(worst_kkt, kkt)
        if dist > 0.1 + 1e-12 or kkt > 1e-8:
            ok = False
            lines.append(f"{name}, k={k}: dist {dist:.3g}, kkt {kkt:.2e}")
    detail = f"6 cases: max coordinate distance to scan minimizer {worst_dist:.3f} (<= 0.1), " \
             f"max kkt {worst_kkt:.2e} (<= 1e-8)"
    return ok, detail + ("; " + "; ".join(lines) if lines else "")


def check_constant_steps(quick: bool) -> tuple[bool, str]:
    g = Grid.from_extent((4, 4))
    u = g.full(0.5)
    cfg = SchemeConfig(epsilon=1.0, time_step=1.0, stabilization=2.0, qp_tol=1e-12)
    cs_root = bisect(lambda x: x ** 3 + x - 1.0, 0.0, 1.0)
    expected = {
        "algorithm1": (scan_constant_minimizer(0.5, 1.0), 1e-8),
        "ieq_unconstrained": (0.75, 1e-8),
        "ieq_constrained": (0.75, 1e-8),
        "convex_splitting": (cs_root, 1e-6),
        "semi_implicit_stabilized": (0.625, 1e-10),
    }
    errs = {}
    for scheme, (target, tol) in expected.items():
        out, _ = advance(g, u, cfg, scheme)
        errs[scheme] = (float(np.max(np.abs(out - target))), tol)
    ok = all(e <= tol for e, tol in errs.values())
    return ok, ", ".join(f"{s} err {e:.1e}/{tol:g}" for s, (e, tol) in errs.items())


def check_ieq_residual(quick: bool) -> tuple[bool, str]:
    n = 16 if quick else 32
    g = Grid.from_extent((n, n))
    rng = _rng(4)
    eps = 0.1
    worst = 0.0
    for k in (0.01, 1.0):
        for _ in range(2 if quick else 5):
            a = rng.uniform(-1, 1, g.shape)
            cfg = SchemeConfig(epsilon=eps, time_step=k, scheme="ieq_unconstrained")
            u, _ = advance(g, a, cfg)
            res = ((u - a) / k - laplacian_apply(g, u) + 2.0 / eps ** 2 * a ** 2 * u
                   - (a ** 3 + a) / eps ** 2)
            worst = max(worst, float(np.max(np.abs(res))))
    return worst <= 1e-8, f"max-norm residual of the IEQ equation {worst:.2e} (<= 1e-8)"


def check_laplacian(quick: bool) -> tuple[bool, str]:
    errs = []
    for n in (64, 128):
        g = Grid.from_extent((n,))
        x = g.axis_centers(0)
        lap = laplacian_apply(g, np.cos(np.pi * x))
        errs.append(float(np.max(np.abs(lap + np.pi ** 2 * np.cos(np.pi * x)))))
    ratio = errs[0] / errs[1]
    rng = _rng(5)
    sym = semidef = zsum = 0.0
    for g in (Grid.from_extent((37,)), Grid.from_extent((16, 12)), Grid.from_extent((6, 5, 4))):
        u, v = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
        luv = inner_product(g, laplacian_apply(g, u), v)
        sym = max(sym, abs(luv - inner_product(g, u, laplacian_apply(g, v))) / (1.0 + abs(luv)))
        semidef = max(semidef, inner_product(g, laplacian_apply(g, u), u))
        zsum = max(zsum, abs(g.cell_volume * float(np.sum(laplacian_apply(g, u)))))
    ok = 3.6 <= ratio <= 4.4 and sym <= 1e-12 and semidef <= 1e-12 and zsum <= 1e-12
    return ok, (f"error ratio 64->128 = {ratio:.3f} (in [3.6, 4.4]); symmetry {sym:.1e}, "
                f"max <Lu,u> {semidef:.1e}, |sum| {zsum:.1e} (each <= 1e-12)")


def check_dissipation(quick: bool) -> tuple[bool, str]:
    eps = 0.1
    n = 32 if quick else 64
    g = Grid.from_extent((n, 8))
    u0 = make_initial(InitialCondition("stripe"), g, epsilon=eps)
    cfg = SchemeConfig(epsilon=eps, scheme="fully_implicit", time_step=1e-4 * eps ** 2,
                       steps=10, newton_tol=1e-13)
    _, trace = evolve(g, u0, cfg)
    ratios = [r.dissipation_ratio for r in trace.records[1:]]
    worst = max(abs(r - 1.0) for r in ratios)
    return worst <= 0.2, (f"(E(u^n-1)-E(u^n))/k over ||u_t||^2 in "
                          f"[{min(ratios):.4f}, {max(ratios):.4f}] (within 20% of 1)")


# -- extra invariants beyond the acceptance list ---------------------------------

def check_ieq_equivalence(quick: bool) -> tuple[bool, str]:
    n = 16 if quick else 32
    g = Grid.from_extent((n, n))
    rng = _rng(6)
    worst, compared = 0.0, 0
    for k in (1e-3, 1e-2, 1e-1):
        a = 0.9 * rng.uniform(-1, 1, g.shape)
        cfg = SchemeConfig(epsilon=0.1, time_step=k, qp_tol=1e-12)
        free, _ = advance(g, a, cfg, "ieq_unconstrained")
        if np.max(np.abs(free)) > 1.0 - 1e-9:
            continue
        boxed, _ = advance(g, a, cfg, "ieq_constrained")
        worst = max(worst, float(np.max(np.abs(boxed - free))))
        compared += 1
    return compared > 0 and worst <= 1e-6, \
        f"{compared} interior cases: max |constrained - unconstrained| = {worst:.2e} (<= 1e-6)"


def check_stationarity(quick: bool) -> tuple[bool, str]:
    g = Grid.from_extent((8, 8))
    worst = 0.0
    for sign in (1.0, -1.0):
        for scheme in ("algorithm1", "ieq_constrained", "ieq_unconstrained", "convex_splitting",
                       "fully_implicit", "semi_implicit_stabilized"):
            for k in (1e-3, 1.0, 100.0):
                out, _ = advance(g, g.full(sign), SchemeConfig(epsilon=0.1, time_step=k), scheme)
                worst = max(worst, float(np.max(np.abs(out - sign))))
    return worst == 0.0, f"u = +-1 moves by at most {worst:.1e} under every scheme"


def check_stable_baselines(quick: bool) -> tuple[bool, str]:
    n = 16 if quick else 32
    g = Grid.from_extent((n, n))
    u0 = make_initial(InitialCondition("uniform_random"), g, seed=7)
    failures = []
    for scheme in ("convex_splitting", "semi_implicit_stabilized"):
        for k in (0.01, 1.0, 100.0):
            cfg = SchemeConfig(epsilon=0.1, scheme=scheme, time_step=k, stabilization=1.0,
                               steps=5 if quick else 20)
            u, trace = evolve(g, u0, cfg)
            if not trace.monotone(1e-12) or not np.all(np.isfinite(u)):
                failures.append(f"{scheme} k={k}")
    return not failures, ("convex splitting and S=1 semi-implicit traces monotone for k in "
                          "{0.01, 1, 100}" if not failures else f"non-monotone: {failures}")


def check_cg(quick: bool) -> tuple[bool, str]:
    from .grid import cg_solve, shifted_laplacian
    g = Grid.from_extent((4,))
    rng = _rng(8)
    x = rng.standard_normal(g.shape)
    A = shifted_laplacian(g, 1.0)
    sol = cg_solve(A, A(x), tol=1e-14, max_iter=50)
    err = float(np.max(np.abs(sol.x - x)))
    return sol.converged and err <= 1e-12, f"manufactured solve error {err:.1e}, status {sol.status}"


def check_dirichlet_gradient(quick: bool) -> tuple[bool, str]:
    rng = _rng(9)
    worst = 0.0
    for g in (Grid.from_extent((20,)), Grid.from_extent((12, 9)), Grid.from_extent((5, 4, 6))):
        u, v = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
        fd = _central_difference(lambda w: dirichlet_energy(g, w), u, v)
        an = -inner_product(g, laplacian_apply(g, u), v)
        worst = max(worst, abs(fd - an) / abs(an))
    return worst <= 1e-6, f"Dirichlet energy FD vs -<Lu, v>: {worst:.1e} (<= 1e-6)"


def explore_unconstrained_algorithm1(quick: bool) -> tuple[bool, str]:
    """Algorithm 1 without the box; informational, never fails."""
    g = Grid.from_extent((16, 16))
    u0 = make_initial(InitialCondition("uniform_random"), g, seed=10)
    rises = []
    for eps in (0.02, 0.05):
        cfg = SchemeConfig(epsilon=eps, steps=20, constrained=False)
        _, trace = minimize_algorithm1(g, u0, cfg)
        e = trace.energies
        rises.append(f"eps={eps}: {int(np.sum(e[1:] > e[:-1] * (1 + 1e-12) + 1e-12))} rises, "
                     f"max|u| {max(r.max_abs_u for r in trace.records):.3f}")
    return True, "without the box: " + "; ".join(rises)


@dataclass(frozen=True)
class Check:
    name: str
    fn: Callable[[bool], tuple[bool, str]]
    limit: Optional[float] = None  # seconds, enforced at the full level


ACCEPTANCE = (
    Check("1 tangency E_Q(a;a) = E(a)", check_tangency, 1.0),
    Check("2 gradients vs finite differences", check_gradients, 5.0),
    Check("3 pointwise inequalities on the (s, a) lattice", check_pointwise, 1.0),
    Check("4 majorization E <= E_Q, J_Q on K", check_majorization, 5.0),
    Check("5 algorithm 1 energy stability", check_algorithm1, 60.0),
    Check("6 constrained IEQ stability over k sweep", check_ieq_constrained, 120.0),
    Check("7 QP vs exhaustive scan on 4 cells", check_qp_oracle, 60.0),
    Check("8 closed-form constant-field steps", check_constant_steps, 1.0),
    Check("9 IEQ equation residual", check_ieq_residual, 5.0),
    Check("10 Laplacian order and structure", check_laplacian, 1.0),
    Check("11 dissipation-law diagnostic", check_dissipation, 10.0),
)

EXTRA = (
    Check("IEQ constrained = unconstrained inside K", check_ieq_equivalence),
    Check("pure phases are fixed points", check_stationarity),
    Check("stable baselines", check_stable_baselines),
    Check("CG manufactured solution", check_cg),
    Check("Dirichlet energy gradient", check_dirichlet_gradient),
    Check("[info] algorithm 1 without the box", explore_unconstrained_algorithm1),
)

ALL_CHECKS = ACCEPTANCE + EXTRA


def run_check(check: Check, quick: bool = False, enforce_time: bool = True) -> CheckResult:
    t0 = time.perf_counter()
    try:
        passed, detail = check.fn(quick)
    except Exception as exc:  # a crashing check is a failing check
        passed, detail = False, f"{type(exc).__name__}: {exc}"
    seconds = time.perf_counter() - t0
    limit = None if quick else check.limit
    if passed and enforce_time and limit is not None and seconds > limit:
        passed, detail = False, detail + f"; exceeded time budget {limit:g}s"
    return CheckResult(check.name, bool(passed), detail, seconds, limit)


def run_checks(level: str = "quick", threads: int = 1,
               checks=ALL_CHECKS) -> list[CheckResult]:
    """Run ``checks`` and return results in the order given.

    Time budgets apply at the ``full`` level only and are not enforced when
    checks share a thread pool, since they then compete for the CPU.
    """
    if level not in ("quick", "full"):
        raise ValueError(f"level must be 'quick' or 'full', got {level!r}")
    quick = level == "quick"
    if threads <= 1:
        return [run_check(c, quick) for c in checks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda c: run_check(c, quick, enforce_time=False), checks))


def format_report(results: list[CheckResult]) -> str:
    failed = sum(not r.passed for r in results)
    lines = [r.line for r in results]
    lines.append(f"{len(results) - failed}/{len(results)} checks passed")
    return "\n".join(lines)
