"""Periodic grids on the unit torus and grid functions living on them."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on [0,1)^dim with unit period per axis.

    Nodes are ordered row-major over axes: flat index ``i = i1 * n + i2`` in 2D.
    """

    dim: int
    n_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GridError(f"dim must be 1 or 2, got {self.dim}")
        if self.n_per_axis < 2:
            raise GridError(f"n_per_axis must be >= 2, got {self.n_per_axis}")

    @property
    def spacing(self) -> float:
        return 1.0 / self.n_per_axis

    @property
    def size(self) -> int:
        return self.n_per_axis**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_per_axis,) * self.dim

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (size, dim)."""
        axis = np.arange(self.n_per_axis) * self.spacing
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def multi_index(self, node: int) -> tuple[int, ...]:
        if not 0 <= node < self.size:
            raise GridError(f"node {node} out of range [0, {self.size})")
        return tuple(int(k) for k in np.unravel_index(node, self.shape))

    def flat_index(self, idx) -> int:
        idx = tuple(int(k) % self.n_per_axis for k in np.atleast_1d(idx))
        if len(idx) != self.dim:
            raise GridError(f"expected {self.dim} indices, got {len(idx)}")
        return int(np.ravel_multi_index(idx, self.shape))

    def nearest_node(self, point) -> int:
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if point.shape != (self.dim,):
            raise GridError(f"point must have {self.dim} coordinates")
        return self.flat_index(np.rint(np.mod(point, 1.0) * self.n_per_axis).astype(int))

    def function(self, values) -> "GridFunction":
        return GridFunction(self, values)

    def evaluate(self, fn) -> "GridFunction":
        """Sample ``fn(x)`` where ``x`` has shape (size, dim)."""
        return GridFunction(self, fn(self.coords()))


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: PeriodicGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.shape != (self.grid.size,):
            raise GridError(f"expected {self.grid.size} values, got {vals.size}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def reshaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def __add__(self, other):
        if isinstance(other, GridFunction):
            _check_same_grid(self, other)
            other = other.values
        return GridFunction(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            _check_same_grid(self, other)
            other = other.values
        return GridFunction(self.grid, self.values - other)

    def __call__(self, point) -> float:
        return float(self.values[self.grid.nearest_node(point)])

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        coords = self.grid.coords()
        header = [f"x{k + 1}" for k in range(self.grid.dim)] + ["value"]
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for x, v in zip(coords, self.values):
                writer.writerow([repr(float(c)) for c in x] + [repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "GridFunction":
        with Path(path).open() as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        dim = len(header) - 1
        n = round(len(body) ** (1.0 / dim))
        grid = PeriodicGrid(dim, n)
        return cls(grid, [float(r[-1]) for r in body])


def _check_same_grid(u: GridFunction, v: GridFunction) -> None:
    if u.grid != v.grid:
        raise GridError(f"grid mismatch: {u.grid} vs {v.grid}")


def wrap_displacement(a, b, grid: PeriodicGrid | None = None) -> np.ndarray:
    """Nearest-image displacement ``v`` with ``b = a + v (mod 1)``.

    Each component lies in (-1/2, 1/2]; antipodal ties resolve to +1/2.
    Works elementwise on stacked points of shape (..., dim).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise GridError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if grid is not None and a.ndim > 0 and a.shape[-1] != grid.dim:
        raise GridError(f"points must have {grid.dim} coordinates")
    d = np.mod(b - a, 1.0)
    # (-1/2, 1/2] with ties to +1/2
    d = np.where(d > 0.5 + 1e-15, d - 1.0, d)
    return np.where(np.isclose(d, -0.5, rtol=0.0, atol=1e-15), 0.5, d)


def torus_distance(a, b) -> np.ndarray:
    d = wrap_displacement(a, b)
    return np.sqrt(np.sum(np.atleast_1d(d) ** 2, axis=-1))


def upwind_pair(u: GridFunction, node: int, axis: int) -> tuple[float, float]:
    """Backward and forward differences of ``u`` at ``node`` along ``axis``."""
    grid = u.grid
    if not 0 <= axis < grid.dim:
        raise GridError(f"axis {axis} out of range for dim {grid.dim}")
    idx = list(grid.multi_index(node))
    up = list(idx)
    dn = list(idx)
    up[axis] += 1
    dn[axis] -= 1
    ui = u.values[node]
    h = grid.spacing
    return ((ui - u.values[grid.flat_index(dn)]) / h, (u.values[grid.flat_index(up)] - ui) / h)


def one_sided_differences(u: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``upwind_pair`` over all nodes; arrays of shape (dim, size)."""
    grid = u.grid
    arr = u.reshaped()
    h = grid.spacing
    pm, pp = [], []
    for ax in range(grid.dim):
        pm.append(((arr - np.roll(arr, 1, axis=ax)) / h).ravel())
        pp.append(((np.roll(arr, -1, axis=ax) - arr) / h).ravel())
    return np.array(pm), np.array(pp)


def sup_norm_diff(u: GridFunction, v: GridFunction) -> float:
    _check_same_grid(u, v)
    return float(np.max(np.abs(u.values - v.values)))


def lipschitz_estimate(u: GridFunction) -> float:
    """Largest one-sided difference quotient (Euclidean across axes)."""
    pm, _ = one_sided_differences(u)
    return float(np.max(np.sqrt(np.sum(pm**2, axis=0))))


def heat_smooth(u: GridFunction, s: float) -> GridFunction:
    """Apply the periodic heat semigroup for time ``s`` via the multiplier exp(-4 pi^2 |k|^2 s)."""
    if s <= 0:
        return u
    arr = u.reshaped()
    n = u.grid.n_per_axis
    k = np.fft.fftfreq(n, d=1.0 / n)
    ksq = sum(np.meshgrid(*([k**2] * u.grid.dim), indexing="ij"))
    out = np.fft.ifftn(np.fft.fftn(arr) * np.exp(-4 * np.pi**2 * ksq * s)).real
    return GridFunction(u.grid, out.ravel())
