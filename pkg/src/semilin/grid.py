"""Uniform box grids with interior-only storage.

Boundary values are identically zero and never stored.  Interior nodes are
ordered lexicographically with axis 0 varying fastest, i.e. a flat vector
reshapes to the interior array with ``order="F"``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "BoxDomain",
    "GridField",
    "node_coordinates",
    "sup_norm",
    "l2_norm",
    "positive_part",
    "write_csv",
    "read_csv",
    "restrict",
    "common_sup_difference",
]


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box ``[0, L_0] x ... x [0, L_{dim-1}]`` with ``n_i`` cells per axis."""

    lengths: tuple[float, ...]
    cells: tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(float(x) for x in self.lengths)
        cells = tuple(int(n) for n in self.cells)
        if len(lengths) != len(cells):
            raise ValueError("lengths and cells must have the same number of axes")
        if not 1 <= len(lengths) <= 3:
            raise ValueError(f"dim must be 1, 2 or 3, got {len(lengths)}")
        for L in lengths:
            if not (math.isfinite(L) and L > 0):
                raise ValueError(f"box lengths must be positive and finite, got {L}")
        for n in cells:
            if n < 2:
                raise ValueError(f"need at least 2 cells per axis, got {n}")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def uniform(cls, dim: int, length: float = 1.0, cells: int = 16) -> "BoxDomain":
        return cls((length,) * dim, (cells,) * dim)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.cells))

    @property
    def interior_shape(self) -> tuple[int, ...]:
        return tuple(n - 1 for n in self.cells)

    @property
    def size(self) -> int:
        return int(np.prod(self.interior_shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def h_max(self) -> float:
        return max(self.spacing)

    def axes(self, include_boundary: bool = False) -> list[np.ndarray]:
        out = []
        for L, n in zip(self.lengths, self.cells):
            x = np.linspace(0.0, L, n + 1)
            out.append(x if include_boundary else x[1:-1])
        return out

    def coordinates(self) -> np.ndarray:
        """``(N, dim)`` array of interior node coordinates in storage order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel(order="F") for m in mesh], axis=1)

    def refine(self, factor: int = 2) -> "BoxDomain":
        return BoxDomain(self.lengths, tuple(n * factor for n in self.cells))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "lengths": list(self.lengths), "cells": list(self.cells)}


class GridField:
    """Values on the interior nodes of a :class:`BoxDomain`."""

    __slots__ = ("domain", "values")

    def __init__(self, domain: BoxDomain, values):
        values = np.asarray(values, dtype=float).ravel()
        if values.shape != (domain.size,):
            raise ValueError(
                f"field has {values.size} values, domain has {domain.size} interior nodes"
            )
        self.domain = domain
        self.values = values

    @classmethod
    def zeros(cls, domain: BoxDomain) -> "GridField":
        return cls(domain, np.zeros(domain.size))

    @classmethod
    def constant(cls, domain: BoxDomain, c: float) -> "GridField":
        return cls(domain, np.full(domain.size, float(c)))

    @classmethod
    def from_function(cls, domain: BoxDomain, func) -> "GridField":
        """Sample ``func(*coords)`` at the interior nodes."""
        coords = domain.coordinates()
        return cls(domain, func(*coords.T))

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.domain.interior_shape, order="F")

    def full(self) -> np.ndarray:
        """Array over all nodes including the zero boundary layer."""
        out = np.zeros(tuple(n + 1 for n in self.domain.cells))
        out[(slice(1, -1),) * self.domain.dim] = self.as_array()
        return out

    def _check(self, other: "GridField"):
        if other.domain != self.domain:
            raise ValueError("fields live on different domains")

    def __neg__(self):
        return GridField(self.domain, -self.values)

    def __add__(self, other):
        self._check(other)
        return GridField(self.domain, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return GridField(self.domain, self.values - other.values)

    def __mul__(self, c):
        return GridField(self.domain, float(c) * self.values)

    __rmul__ = __mul__

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"GridField(cells={self.domain.cells}, sup={sup_norm(self):.6g})"


def node_coordinates(d: BoxDomain, index: int) -> tuple[float, ...]:
    if not 0 <= index < d.size:
        raise IndexError(f"interior node index {index} out of range [0, {d.size})")
    multi = np.unravel_index(index, d.interior_shape, order="F")
    return tuple((i + 1) * h for i, h in zip(multi, d.spacing))


def sup_norm(u: GridField) -> float:
    if u.values.size == 0:
        return 0.0
    return float(np.max(np.abs(u.values)))


def l2_norm(u: GridField) -> float:
    return float(np.sqrt(np.dot(u.values, u.values) * u.domain.cell_volume))


def positive_part(u: GridField, shift: float = 0.0) -> GridField:
    """``max(u - shift, 0)`` nodewise."""
    return GridField(u.domain, np.maximum(u.values - shift, 0.0))


def write_csv(u: GridField, path, value_name: str = "u") -> Path:
    """Write every node (boundary included, value 0) as ``x[,y[,z]],u`` rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = u.domain
    full = u.full()
    mesh = np.meshgrid(*d.axes(include_boundary=True), indexing="ij")
    cols = [m.ravel(order="F") for m in mesh] + [full.ravel(order="F")]
    header = ["x", "y", "z"][: d.dim] + [value_name]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])
    return path


def read_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`write_csv`: ``(coords, values)`` over all nodes."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :-1], data[:, -1]


def restrict(fine: GridField, coarse: BoxDomain) -> GridField:
    """Inject ``fine`` onto the nodes of ``coarse`` (cells must divide evenly)."""
    fd = fine.domain
    if fd.lengths != coarse.lengths:
        raise ValueError("domains differ in extent")
    slices = []
    for nf, nc in zip(fd.cells, coarse.cells):
        if nf % nc:
            raise ValueError(f"{nf} fine cells do not refine {nc} coarse cells")
        r = nf // nc
        slices.append(slice(r, nf, r))
    full = fine.full()[tuple(slices)]
    return GridField(coarse, full.ravel(order="F"))


def common_sup_difference(coarse: GridField, fine: GridField) -> float:
    return sup_norm(coarse - restrict(fine, coarse.domain))

