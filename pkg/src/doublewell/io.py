"""Field snapshots (raw little-endian float64 + ``.meta`` sidecar) and trace CSV files."""

from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np

from .grid import Grid, check_field
from .schemes import EnergyTrace

PathLike = Union[str, Path]


def _join(values) -> str:
    return ",".join(repr(v) if isinstance(v, float) else str(v) for v in values)


def meta_path(path: PathLike) -> Path:
    return Path(path).with_suffix(".meta")


def write_snapshot(path: PathLike, g: Grid, u: np.ndarray) -> Path:
    """Write ``u`` row-major as ``<f8`` to ``path`` and the grid to ``<stem>.meta``."""
    path = Path(path)
    u = check_field(g, u)
    path.write_bytes(np.ascontiguousarray(u, dtype="<f8").tobytes(order="C"))
    meta_path(path).write_text(
        f"dims={_join(g.dims)}\nspacing={_join(g.spacing)}\norigin={_join(g.origin)}\n"
    )
    return path


def read_meta(path: PathLike) -> Grid:
    fields = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        fields[key.strip()] = [s.strip() for s in value.split(",")]
    try:
        dims = tuple(int(s) for s in fields["dims"])
        spacing = tuple(float(s) for s in fields["spacing"])
        origin = tuple(float(s) for s in fields.get("origin", ["0"] * len(dims)))
    except KeyError as exc:
        raise ValueError(f"{path}: missing {exc.args[0]}") from None
    return Grid(dims, spacing, origin)


def read_snapshot(path: PathLike) -> tuple[Grid, np.ndarray]:
    """Inverse of :func:`write_snapshot`."""
    path = Path(path)
    g = read_meta(meta_path(path))
    data = np.frombuffer(path.read_bytes(), dtype="<f8")
    if data.size != g.size:
        raise ValueError(f"{path}: {data.size} values, grid needs {g.size}")
    return g, data.astype(np.float64).reshape(g.shape)


def snapshot_name(step: int) -> str:
    return f"state_{step}.f64"


def write_trace(path: PathLike, trace: EnergyTrace) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        trace.write_csv(fh)
    return path
