"""Run configuration files and initial conditions.

Config files are ``key = value`` lines; ``#`` starts a comment.  Only
``scheme`` and ``dims`` are required::

    scheme  = ieq_constrained
    dims    = 64, 64
    epsilon = 0.1
    k       = 1e-2
    steps   = 50
    initial = disk
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .grid import Grid
from .schemes import CONSTRAINED, SCHEMES, SchemeConfig

INITIAL_KINDS = ("constant", "uniform_random", "stripe", "disk")


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class InitialCondition:
    """Initial field recipe.

    ``stripe`` is a ``tanh`` profile across axis 0 centred at ``center[0]``;
    ``disk`` is ``+1`` inside a ball of ``radius`` around ``center`` and
    ``-1`` outside, joined by a ``tanh`` layer.  ``width`` defaults to the
    interface width ``epsilon``.
    """

    kind: str = "uniform_random"
    value: float = 0.0
    center: Optional[tuple[float, ...]] = None
    radius: Optional[float] = None
    width: Optional[float] = None

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ValueError(f"unknown initial condition {self.kind!r}")
        if self.radius is not None and not self.radius > 0:
            raise ValueError("radius must be > 0")
        if self.width is not None and not self.width > 0:
            raise ValueError("width must be > 0")


def make_initial(ic: InitialCondition, g: Grid, seed: int = 0, epsilon: float = 0.1,
                 constrained: bool = True) -> np.ndarray:
    """Build the initial field.

    Random fields come from numpy's PCG64 generator seeded with ``seed``,
    whose uniform doubles are identical on every platform.

    Raises:
        ValueError: for a constant outside ``[-1, 1]`` when ``constrained``.
    """
    if ic.kind == "constant":
        if constrained and abs(ic.value) > 1.0:
            raise ValueError(f"constant initial value {ic.value} is outside [-1, 1]")
        return g.full(ic.value)
    if ic.kind == "uniform_random":
        rng = np.random.Generator(np.random.PCG64(seed))
        return rng.uniform(-1.0, 1.0, size=g.shape)

    width = ic.width if ic.width is not None else epsilon
    lo = np.array(g.origin)
    center = np.array(ic.center) if ic.center is not None else lo + 0.5 * np.array(g.extent)
    if center.shape != (g.ndim,):
        raise ValueError(f"center needs {g.ndim} coordinates")
    xs = g.cell_centers()
    if ic.kind == "stripe":
        return np.tanh((xs[0] - center[0]) / width)
    radius = ic.radius if ic.radius is not None else 0.25 * min(g.extent)
    r = np.sqrt(sum((x - c) ** 2 for x, c in zip(xs, center)))
    return np.tanh((radius - r) / width)


@dataclass(frozen=True)
class RunConfig:
    grid: Grid
    scheme: SchemeConfig
    initial: InitialCondition = field(default_factory=InitialCondition)
    seed: int = 0
    output: Path = Path("out")
    snapshot_stride: int = 0
    wall_time: bool = False

    def initial_field(self) -> np.ndarray:
        return make_initial(self.initial, self.grid, self.seed, self.scheme.epsilon,
                            constrained=self.scheme.scheme in CONSTRAINED and self.scheme.constrained)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _float(s: str) -> float:
    v = float(s)
    if not np.isfinite(v):
        raise ValueError("must be finite")
    return v


def _positive(s: str) -> float:
    v = _float(s)
    if not v > 0:
        raise ValueError("must be > 0")
    return v


def _nonneg(s: str) -> float:
    v = _float(s)
    if v < 0:
        raise ValueError("must be >= 0")
    return v


def _int(s: str) -> int:
    try:
        return int(s)
    except ValueError:
        pass
    f = float(s)
    if not f.is_integer():
        raise ValueError("must be an integer")
    return int(f)


def _count(s: str) -> int:
    v = _int(s)
    if v < 0:
        raise ValueError("must be >= 0")
    return v


def _pos_int(s: str) -> int:
    v = _int(s)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("must be true or false")


def _list(conv):
    def parse(s: str):
        items = [t for t in s.replace(" ", ",").split(",") if t]
        if not items:
            raise ValueError("empty list")
        return tuple(conv(t) for t in items)
    return parse


def _choice(options):
    def parse(s: str):
        if s not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return s
    return parse


def _seed(s: str) -> int:
    v = _int(s)
    if not 0 <= v < 2 ** 64:
        raise ValueError("must be a 64-bit unsigned integer")
    return v


# key -> (canonical name, parser)
_KEYS = {
    "scheme": ("scheme", _choice(SCHEMES)),
    "dims": ("dims", _list(_pos_int)),
    "extent": ("extent", _list(_positive)),
    "origin": ("origin", _list(_float)),
    "epsilon": ("epsilon", _positive),
    "k": ("time_step", _positive),
    "time_step": ("time_step", _positive),
    "steps": ("steps", _count),
    "n": ("steps", _count),
    "stabilization": ("stabilization", _nonneg),
    "s": ("stabilization", _nonneg),
    "qp_tol": ("qp_tol", _positive),
    "qp_max_iter": ("qp_max_iter", _pos_int),
    "newton_tol": ("newton_tol", _positive),
    "newton_max_iter": ("newton_max_iter", _pos_int),
    "cg_tol": ("cg_tol", _positive),
    "cg_max_iter": ("cg_max_iter", _pos_int),
    "constrained": ("constrained", _bool),
    "initial": ("initial", _choice(INITIAL_KINDS)),
    "initial_value": ("initial_value", _float),
    "center": ("center", _list(_float)),
    "radius": ("radius", _positive),
    "width": ("width", _positive),
    "seed": ("seed", _seed),
    "output": ("output", str),
    "snapshot_stride": ("snapshot_stride", _count),
    "wall_time": ("wall_time", _bool),
}

_SCHEME_FIELDS = {f.name for f in fields(SchemeConfig)}


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run configuration.

    Defaults: ``extent = 1`` per axis, ``origin = 0``, ``epsilon = 0.1``,
    ``k = 0.01``, ``steps = 100``, ``stabilization = 1``, ``qp_tol = 1e-8``,
    ``newton_tol = 1e-10``, ``newton_max_iter = 50``, ``cg_tol = 1e-12``,
    ``initial = uniform_random``, ``seed = 0``, ``output = out``,
    ``snapshot_stride = 0``, ``wall_time = false``.  Iteration budgets
    default to multiples of the cell count.

    Raises:
        ConfigError: unknown key, malformed value or violated invariant,
            with the offending line number.
    """
    values: dict[str, object] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, value = key.strip().lower(), value.strip()
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        name, conv = _KEYS[key]
        if name in values:
            raise ConfigError(f"{key!r} given twice (first on line {lines[name]})", lineno)
        if not value:
            raise ConfigError(f"{key!r} has no value", lineno)
        try:
            values[name] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"{key} = {value}: {exc}", lineno) from None
        lines[name] = lineno

    for required in ("scheme", "dims"):
        if required not in values:
            raise ConfigError(f"missing required key {required!r}")

    def fail(name, message):
        raise ConfigError(message, lines.get(name))

    dims = values["dims"]
    if not 1 <= len(dims) <= 3:
        fail("dims", f"dims must list 1 to 3 cell counts, got {len(dims)}")
    extent = values.get("extent", (1.0,))
    if len(extent) == 1:
        extent = extent * len(dims)
    if len(extent) != len(dims):
        fail("extent", f"extent has {len(extent)} entries for {len(dims)} axes")
    origin = values.get("origin", (0.0,) * len(dims))
    if len(origin) != len(dims):
        fail("origin", f"origin has {len(origin)} entries for {len(dims)} axes")
    grid = Grid.from_extent(dims, extent, origin)

    scheme_kwargs = {k: v for k, v in values.items() if k in _SCHEME_FIELDS}
    try:
        scheme = SchemeConfig(**scheme_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), lines.get("scheme")) from None

    center = values.get("center")
    if center is not None and len(center) != len(dims):
        fail("center", f"center has {len(center)} entries for {len(dims)} axes")
    initial = InitialCondition(
        kind=values.get("initial", "uniform_random"),
        value=values.get("initial_value", 0.0),
        center=center,
        radius=values.get("radius"),
        width=values.get("width"),
    )
    if (initial.kind == "constant" and abs(initial.value) > 1.0
            and scheme.scheme in CONSTRAINED and scheme.constrained):
        fail("initial_value", f"initial_value = {initial.value} lies outside [-1, 1], "
                              f"which {scheme.scheme} requires")

    return RunConfig(
        grid=grid,
        scheme=scheme,
        initial=initial,
        seed=values.get("seed", 0),
        output=Path(values.get("output", "out")),
        snapshot_stride=values.get("snapshot_stride", 0),
        wall_time=values.get("wall_time", False),
    )


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())
