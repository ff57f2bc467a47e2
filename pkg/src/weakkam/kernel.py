"""Min-plus action kernels: h_t, the semi-distance S, the Peierls barrier and the Aubry set.

All finite kernel entries are rounded to multiples of ``QUANTUM`` (2**-40).
With magnitudes below 2**11 every min-plus sum is then exact in binary64,
so composition is associative and h_t (x) h_s == h_{t+s} bit for bit,
independent of factor order. ``BIG`` acts as +infinity with saturation.
"""

from __future__ import annotations

import csv
import os
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import GridFunction, PeriodicGrid
from .hamiltonian import ContactModel, LagrangianTable

BIG = 1e18
QUANTUM = 2.0**-40
EXACT_LIMIT = 2.0**11
MAGIC = b"WKK1"

_threads = os.cpu_count() or 1


def set_threads(n: int | None) -> int:
    """Worker threads for min-plus products (None: all cores). Results do not depend on it."""
    global _threads
    if n is not None and n < 1:
        raise ValueError("threads must be at least 1")
    _threads = n or os.cpu_count() or 1
    return _threads


class KernelError(ValueError):
    pass


def quantize(values: np.ndarray) -> np.ndarray:
    vals = np.asarray(values, dtype=float)
    finite = vals < BIG
    if np.any(np.abs(vals[finite]) >= EXACT_LIMIT):
        raise KernelError("kernel entry exceeds the exact-arithmetic range 2**11")
    out = np.where(finite, np.round(vals / QUANTUM) * QUANTUM, BIG)
    return out


@dataclass(frozen=True, eq=False)
class ActionKernel:
    """K[z, x] ~ h_t(z, x): row = start node, column = end node."""

    grid: PeriodicGrid
    t: float
    values: np.ndarray = field(repr=False)
    c_used: float = 0.0
    steps: int = 1

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.size, self.grid.size):
            raise KernelError(f"kernel must be {self.grid.size}x{self.grid.size}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def to_csv(self, path) -> None:
        write_matrix_csv(self.values, path)

    def to_binary(self, path) -> None:
        write_matrix_binary(self.values, path)


def identity_kernel(grid: PeriodicGrid, c: float = 0.0) -> ActionKernel:
    vals = np.full((grid.size, grid.size), BIG)
    np.fill_diagonal(vals, 0.0)
    return ActionKernel(grid, 0.0, vals, c, 0)


# Construction -------------------------------------------------------------------


def _offsets(grid: PeriodicGrid, tau: float, velocity_box: float) -> np.ndarray:
    n = grid.n_per_axis
    rmax = int(np.floor(velocity_box * tau * n + 1e-9))
    rmax = min(rmax, n // 2)
    axis = np.arange(-rmax, rmax + 1)
    mesh = np.meshgrid(*([axis] * grid.dim), indexing="ij")
    offs = np.stack([m.ravel() for m in mesh], axis=1)
    return offs


def one_step_kernel(L: LagrangianTable, c: float, tau: float, exclude_truncated: bool = True) -> ActionKernel:
    """K[z, x] = tau * (L(midpoint, (x - z)/tau) + c) for displacements inside the velocity box.

    With ``exclude_truncated`` the entries whose Legendre maximiser lies on the
    momentum-box boundary are treated as +infinity.
    """
    if tau <= 0:
        raise KernelError("tau must be positive")
    grid = L.grid
    offs = _offsets(grid, tau, L.velocity_box)
    if len(offs) == 1:
        warnings.warn("tau too small: only self-transitions are feasible", stacklevel=2)
    h = grid.spacing
    coords = grid.coords()
    vals = np.full((grid.size, grid.size), BIG)
    disp = offs * h  # (m, dim)
    vel = disp / tau
    mids = coords[:, None, :] + 0.5 * disp[None, :, :]
    cost, flag = L.lookup(mids.reshape(-1, grid.dim), np.broadcast_to(vel, mids.shape).reshape(-1, grid.dim), True)
    cost = tau * (cost.reshape(grid.size, len(offs)) + c)
    if exclude_truncated:
        cost = np.where(flag.reshape(grid.size, len(offs)), BIG, cost)
    idx = np.array([grid.multi_index(i) for i in range(grid.size)])
    for k, off in enumerate(offs):
        target = np.ravel_multi_index(tuple(((idx + off) % grid.n_per_axis).T), grid.shape)
        vals[np.arange(grid.size), target] = np.minimum(vals[np.arange(grid.size), target], cost[:, k])
    return ActionKernel(grid, tau, quantize(vals), c, 1)


# Min-plus algebra ---------------------------------------------------------------


def minplus_product(A: np.ndarray, B: np.ndarray, block: int | None = None) -> np.ndarray:
    n, m = A.shape
    if B.shape[0] != m:
        raise KernelError("inner dimensions differ")
    out = np.empty((n, B.shape[1]))
    block = block or max(1, 4_000_000 // (m * B.shape[1]))

    def rows(s):
        out[s : s + block] = np.min(A[s : s + block, :, None] + B[None, :, :], axis=1)

    starts = range(0, n, block)
    if _threads > 1 and len(starts) > 1:
        # blocks write disjoint rows and each entry is an exact min, so order is irrelevant
        with ThreadPoolExecutor(min(_threads, len(starts))) as pool:
            list(pool.map(rows, starts))
    else:
        for s in starts:
            rows(s)
    return np.minimum(out, BIG)


def minplus_compose(A: ActionKernel, B: ActionKernel) -> ActionKernel:
    """C[z, x] = min_w A[z, w] + B[w, x] (dynamic programming step)."""
    if A.grid != B.grid:
        raise KernelError("grid mismatch")
    return ActionKernel(A.grid, A.t + B.t, minplus_product(A.values, B.values), A.c_used, A.steps + B.steps)


def minplus_apply(u: np.ndarray, K: np.ndarray) -> np.ndarray:
    """(u (x) K)[x] = min_y u[y] + K[y, x]."""
    return np.minimum(np.min(u[:, None] + K, axis=0), BIG)


def kernel_power(K: ActionKernel, k: int) -> ActionKernel:
    """k-fold min-plus power by repeated squaring, least significant bit first."""
    if k < 0:
        raise KernelError("power must be non-negative")
    result = identity_kernel(K.grid, K.c_used)
    base = K
    while k:
        if k & 1:
            result = minplus_compose(result, base)
        k >>= 1
        if k:
            base = minplus_compose(base, base)
    return result


def _closure_power(K: ActionKernel, m: int) -> ActionKernel:
    """(I min K)^m = entrywise min over j = 0..m of K^j."""
    ident = identity_kernel(K.grid, K.c_used)
    lifted = ActionKernel(K.grid, K.t, np.minimum(K.values, ident.values), K.c_used, K.steps)
    return kernel_power(lifted, m)


def _steps(t: float, tau: float, what: str = "t") -> int:
    k = int(round(t / tau))
    if k < 0 or abs(k * tau - t) > 1e-9 * max(1.0, abs(t)):
        raise KernelError(f"{what}={t} is not a non-negative integer multiple of tau={tau}")
    return k


def action_h_t(L: LagrangianTable | ActionKernel, c: float, tau: float, t: float) -> ActionKernel:
    step = L if isinstance(L, ActionKernel) else one_step_kernel(L, c, tau)
    k = _steps(t, tau)
    if k < 1:
        raise KernelError("t must be at least tau")
    out = kernel_power(step, k)
    return ActionKernel(out.grid, k * tau, out.values, c, k)


# Barriers -------------------------------------------------------------------------


def semi_distance(L: LagrangianTable | ActionKernel, c: float, tau: float, t_max: float) -> np.ndarray:
    """S = entrywise min of h_{k tau} over k = 0..t_max/tau (k = 0 is the t -> 0+ identity)."""
    step = L if isinstance(L, ActionKernel) else one_step_kernel(L, c, tau)
    return _closure_power(step, _steps(t_max, tau, "t_max")).values


def crossing_time(grid: PeriodicGrid, velocity_box: float) -> float:
    return 0.5 * grid.dim / velocity_box


@dataclass(frozen=True)
class BarrierResult:
    h: np.ndarray
    drift: float
    window: tuple


def peierls_barrier(
    L: LagrangianTable | ActionKernel,
    c: float,
    tau: float,
    window: tuple[float, float],
    shift: float | None = None,
    velocity_box: float | None = None,
) -> BarrierResult:
    """min of h_{k tau} over k tau in [T0, T1], with the drift against the shifted window."""
    step = L if isinstance(L, ActionKernel) else one_step_kernel(L, c, tau)
    T0, T1 = window
    vb = velocity_box if velocity_box is not None else (L.velocity_box if isinstance(L, LagrangianTable) else None)
    if T1 <= T0 or (vb is not None and T1 - T0 < crossing_time(step.grid, vb)):
        raise KernelError("barrier window shorter than one crossing time")
    k0, k1 = _steps(T0, tau, "T0"), _steps(T1, tau, "T1")
    shift = (T1 - T0) if shift is None else shift
    ks = _steps(shift, tau, "shift")
    head = kernel_power(step, k0)
    span = _closure_power(step, k1 - k0)
    h = minplus_product(head.values, span.values)
    shifted = minplus_product(minplus_compose(head, kernel_power(step, ks)).values, span.values)
    finite = (h < BIG) & (shifted < BIG)
    drift = float(np.max(np.abs(h[finite] - shifted[finite]))) if np.any(finite) else 0.0
    return BarrierResult(h, drift, (T0, T1))


@dataclass(frozen=True)
class AubrySet:
    nodes: np.ndarray
    tol: float
    fallback: bool = False

    def __contains__(self, node):
        return int(node) in set(self.nodes.tolist())

    def __len__(self):
        return len(self.nodes)


def aubry_set(h: np.ndarray, tol: float) -> AubrySet:
    diag = np.diag(h)
    nodes = np.nonzero(diag <= tol)[0]
    if len(nodes) == 0:
        nodes = np.nonzero(diag <= diag.min())[0]
        return AubrySet(nodes, tol, True)
    return AubrySet(nodes, tol)


def default_aubry_tol(S: np.ndarray, h: np.ndarray, grid: PeriodicGrid) -> float:
    """5 x the observed scheme error on the S/h diagonal.

    The error proxy is the diagonal barrier one spacing away from the cheapest
    node: the smallest round trip the discrete dynamics can resolve.
    """
    diag = np.diag(h)
    z = int(np.argmin(diag))
    idx = np.array(grid.multi_index(z))
    neigh = [grid.flat_index(idx + e) for e in np.eye(grid.dim, dtype=int)]
    neigh += [grid.flat_index(idx - e) for e in np.eye(grid.dim, dtype=int)]
    err = max(float(diag[j] - diag[z]) for j in neigh)
    sdiag = float(np.max(np.abs(np.diag(S))))
    return 5.0 * max(err, sdiag, 1e-12)


def barrier_via_aubry(S: np.ndarray, aubry) -> np.ndarray:
    """h(x, y) = min_{z in A} S(x, z) + S(z, y)."""
    nodes = np.asarray(getattr(aubry, "nodes", aubry), dtype=int)
    if len(nodes) == 0:
        raise KernelError("empty Aubry set")
    out = np.full(S.shape, BIG)
    for z in nodes:
        out = np.minimum(out, S[:, z, None] + S[None, z, :])
    return np.minimum(out, BIG)


def lax_oleinik_evolve(
    u0: GridFunction, L: LagrangianTable | ActionKernel, c: float, tau: float, steps: int
) -> list[GridFunction]:
    """U_k(x) = min_y u0(y) + h_{k tau}(y, x), one kernel application per step."""
    if steps < 0:
        raise KernelError("steps must be non-negative")
    step = L if isinstance(L, ActionKernel) else one_step_kernel(L, c, tau)
    out = [u0]
    u = u0.values.copy()
    for _ in range(steps):
        u = minplus_apply(u, step.values)
        out.append(GridFunction(u0.grid, u))
    return out


def triangle_violation(S: np.ndarray) -> float:
    """max over (x, z, y) of S(x, y) - S(x, z) - S(z, y); <= 0 means the triangle inequality holds."""
    finite = S < BIG
    best = minplus_product(S, S)
    ok = finite & (best < BIG)
    return float(np.max(S[ok] - best[ok])) if np.any(ok) else 0.0


@dataclass(frozen=True)
class EvolutionReport:
    max_deviation: float  # sup_k |U_k - U_0|
    nondecreasing: bool  # U_{k+1} >= U_k everywhere, for every k
    min_increment: float
    steps: int


def lax_oleinik_report(trajectory: list[GridFunction]) -> EvolutionReport:
    u0 = trajectory[0].values
    dev = max(float(np.max(np.abs(u.values - u0))) for u in trajectory)
    incs = [float(np.min(b.values - a.values)) for a, b in zip(trajectory, trajectory[1:])]
    low = min(incs) if incs else 0.0
    return EvolutionReport(dev, low >= 0.0, low, len(trajectory) - 1)


class PreconditionError(ValueError):
    pass


def uni_const_limit(
    h: np.ndarray,
    aubry,
    grid: PeriodicGrid,
    model: ContactModel | None = None,
    c: float | None = None,
    tol: float = 1e-9,
) -> GridFunction:
    """u0(x) = min_{y in A} h(y, x), valid when constants are critical subsolutions."""
    if model is not None and c is not None:
        xs = grid.coords()
        g0 = model.G(xs, np.zeros_like(xs))
        worst = int(np.argmax(g0))
        if g0[worst] > c + tol:
            raise PreconditionError(
                f"constants are not subsolutions: G(x,0) - c = {g0[worst] - c:.3g} at node {worst} (x={xs[worst]})"
            )
    nodes = np.asarray(getattr(aubry, "nodes", aubry), dtype=int)
    if len(nodes) == 0:
        raise KernelError("empty Aubry set")
    return GridFunction(grid, np.min(h[nodes, :], axis=0))


# Bundles -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BarrierBundle:
    S: np.ndarray
    h: np.ndarray
    aubry: AubrySet
    drift: float
    tau: float
    c: float
    grid: PeriodicGrid


def compute_barriers(
    L: LagrangianTable,
    c: float,
    tau: float,
    t_max: float,
    window: tuple[float, float],
    aubry_tol: float | None = None,
) -> BarrierBundle:
    step = one_step_kernel(L, c, tau)
    S = semi_distance(step, c, tau, t_max)
    res = peierls_barrier(step, c, tau, window, velocity_box=L.velocity_box)
    tol = default_aubry_tol(S, res.h, L.grid) if aubry_tol is None else aubry_tol
    return BarrierBundle(S, res.h, aubry_set(res.h, tol), res.drift, tau, c, L.grid)


# I/O -------------------------------------------------------------------------------


def write_matrix_csv(M: np.ndarray, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z", "x", "value"])
        for z in range(M.shape[0]):
            for x in range(M.shape[1]):
                w.writerow([z, x, repr(float(M[z, x]))])


def write_matrix_binary(M: np.ndarray, path) -> None:
    """WKK1 | uint64 rows | uint64 cols | float64 data, little-endian, row-major."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    M = np.ascontiguousarray(M, dtype="<f8")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQ", *M.shape))
        fh.write(M.tobytes(order="C"))


def read_matrix_binary(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise KernelError("not a WKK1 kernel dump")
    rows, cols = struct.unpack("<QQ", data[4:20])
    return np.frombuffer(data[20:], dtype="<f8").reshape(rows, cols).copy()
