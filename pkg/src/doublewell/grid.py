"""Cell-centered tensor grids, the Neumann Laplacian and a matrix-free CG solver.

Fields are plain ``numpy`` arrays of shape ``grid.shape`` (C order, axis 0
slowest).  Every cell carries the same quadrature weight, the cell volume, so
the discrete inner product, the Dirichlet energy and the Laplacian satisfy
summation by parts exactly:

    dirichlet_energy(u) = -0.5 * inner_product(laplacian_apply(u), u)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class GridMismatchError(ValueError):
    """A field does not have the shape of the grid it is used with."""


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on a box in 1, 2 or 3 dimensions.

    Attributes:
        dims: cell counts per axis.
        spacing: cell width per axis.
        origin: lower corner of the box per axis.
    """

    dims: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...] = field(default=())

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        spacing = tuple(float(h) for h in self.spacing)
        origin = tuple(float(o) for o in self.origin) if self.origin else (0.0,) * len(dims)
        if not 1 <= len(dims) <= 3:
            raise ValueError(f"grid must have 1 to 3 axes, got {len(dims)}")
        if len(spacing) != len(dims) or len(origin) != len(dims):
            raise ValueError("dims, spacing and origin must have the same length")
        if any(n < 1 for n in dims):
            raise ValueError(f"every cell count must be >= 1, got {dims}")
        if not all(np.isfinite(h) and h > 0 for h in spacing):
            raise ValueError(f"every spacing must be > 0, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def from_extent(cls, dims: Sequence[int], extent: Sequence[float] | float = 1.0,
                    origin: Optional[Sequence[float]] = None) -> "Grid":
        """Grid covering ``[origin, origin + extent]`` per axis with ``dims`` cells."""
        dims = tuple(int(n) for n in dims)
        if np.isscalar(extent):
            extent = (float(extent),) * len(dims)
        if len(extent) != len(dims):
            raise ValueError("extent must have one entry per axis")
        spacing = tuple(float(L) / n for L, n in zip(extent, dims))
        return cls(dims, spacing, tuple(origin) if origin is not None else ())

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.dims

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def measure(self) -> float:
        return self.cell_volume * self.size

    @property
    def extent(self) -> tuple[float, ...]:
        return tuple(n * h for n, h in zip(self.dims, self.spacing))

    def axis_centers(self, axis: int) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        n, h, o = self.dims[axis], self.spacing[axis], self.origin[axis]
        return o + h * (np.arange(n) + 0.5)

    def cell_centers(self) -> tuple[np.ndarray, ...]:
        """Broadcast cell-center coordinate arrays, one per axis (``ij`` indexing)."""
        return tuple(np.meshgrid(*(self.axis_centers(a) for a in range(self.ndim)),
                                 indexing="ij"))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def full(self, value: float) -> np.ndarray:
        return np.full(self.shape, float(value))


def check_field(g: Grid, u: np.ndarray, name: str = "u") -> np.ndarray:
    """Return ``u`` as a float64 array, raising if it does not live on ``g``."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != g.shape:
        raise GridMismatchError(f"{name} has shape {u.shape}, grid expects {g.shape}")
    return u


def laplacian_apply(g: Grid, u: np.ndarray) -> np.ndarray:
    """Discrete Neumann Laplacian of ``u``.

    Standard second difference along each axis; faces on the boundary carry
    no flux, which is the same as mirroring the boundary cell into a ghost.
    """
    u = check_field(g, u)
    out = np.zeros_like(u)
    for axis, h in enumerate(g.spacing):
        if u.shape[axis] < 2:
            continue
        flux = np.diff(u, axis=axis) / (h * h)
        lo = [slice(None)] * u.ndim
        hi = [slice(None)] * u.ndim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        out[tuple(lo)] += flux
        out[tuple(hi)] -= flux
    return out


def dirichlet_energy(g: Grid, u: np.ndarray) -> float:
    """0.5 * sum over interior faces of (jump / h)^2, times the cell volume."""
    u = check_field(g, u)
    total = 0.0
    for axis, h in enumerate(g.spacing):
        if u.shape[axis] < 2:
            continue
        d = np.diff(u, axis=axis)
        total += float(np.sum(d * d)) / (h * h)
    return 0.5 * g.cell_volume * total


def inner_product(g: Grid, u: np.ndarray, v: np.ndarray) -> float:
    """Discrete L2 pairing ``h^d * sum(u * v)``."""
    u = check_field(g, u, "u")
    v = check_field(g, v, "v")
    return g.cell_volume * float(np.sum(u * v))


def l2_norm(g: Grid, u: np.ndarray) -> float:
    return float(np.sqrt(inner_product(g, u, u)))


# ---------------------------------------------------------------------------
# Conjugate gradients
# ---------------------------------------------------------------------------

LinearOperator = Callable[[np.ndarray], np.ndarray]


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared inside an iterative solver."""


@dataclass(frozen=True)
class CGResult:
    x: np.ndarray
    status: str  # "converged" | "max_iter" | "breakdown"
    iterations: int
    residual: float  # ||A x - b||_2 / ||b||_2, 0 when b = 0

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def cg_solve(A: LinearOperator, b: np.ndarray, tol: float = 1e-12, max_iter: int = 1000,
             x0: Optional[np.ndarray] = None) -> CGResult:
    """Solve ``A x = b`` for symmetric positive definite ``A`` by plain CG.

    Convergence means ``||A x - b||_2 <= tol * ||b||_2`` with the Euclidean
    norm of the flattened arrays; the true residual is recomputed before
    reporting success.  Non-convergence is reported through ``status``,
    never raised.  ``status == "breakdown"`` flags a non-positive curvature
    direction, i.e. ``A`` was not positive definite.

    Raises:
        NonFiniteError: if a NaN/Inf shows up in an iterate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.asarray(b, dtype=np.float64)
    if not np.all(np.isfinite(b)):
        raise NonFiniteError("right-hand side is not finite")
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return CGResult(np.zeros_like(b), "converged", 0, 0.0)
    target = tol * bnorm

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - A(x) if x0 is not None else b.copy()
    rr = float(np.sum(r * r))
    p = r.copy()

    it = 0
    status = "max_iter"
    while True:
        if np.sqrt(rr) <= target:
            # guard against drift of the recursive residual
            r = b - A(x)
            rr = float(np.sum(r * r))
            if np.sqrt(rr) <= target:
                status = "converged"
                break
            p = r.copy()
        if it >= max_iter:
            break
        Ap = A(p)
        pAp = float(np.sum(p * Ap))
        if not np.isfinite(pAp):
            raise NonFiniteError(f"non-finite value in CG at iteration {it}")
        if pAp <= 0.0:
            status = "breakdown"
            break
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = float(np.sum(r * r))
        if not np.isfinite(rr_new):
            raise NonFiniteError(f"non-finite residual in CG at iteration {it}")
        p *= rr_new / rr
        p += r
        rr = rr_new
        it += 1

    res = float(np.linalg.norm(b - A(x))) / bnorm
    return CGResult(x, status, it, res)


def shifted_laplacian(g: Grid, diag: np.ndarray | float) -> LinearOperator:
    """Operator ``v -> diag * v - laplacian(v)``; SPD when ``diag > 0`` somewhere and ``>= 0``."""
    def apply(v: np.ndarray) -> np.ndarray:
        return diag * v - laplacian_apply(g, v)
    return apply
