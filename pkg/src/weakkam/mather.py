"""Occupation-measure LP for minimizing (Mather) measures and the representation formulas."""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import GridFunction, PeriodicGrid, torus_distance
from .hamiltonian import LagrangianTable, ModelError
from .simplex import Infeasible, LPError, Unbounded, simplex


class MeasureError(ValueError):
    pass


class TransformError(ValueError):
    pass


@dataclass(frozen=True)
class Basis:
    """Closedness test functions.

    ``hat``: one tent function per node, tested in flux form
    (phi(x + v tau) - phi(x)) / tau, exact for lattice velocities m h / tau.
    ``trig``: sin and cos of 2 pi k.x for 1 <= |k|_inf <= K, exact derivatives.
    """

    kind: str = "hat"
    K: int = 0
    tau: float | None = None

    def __post_init__(self):
        if self.kind not in ("hat", "trig"):
            raise MeasureError(f"basis must be hat or trig, got {self.kind!r}")
        if self.kind == "trig" and self.K < 1:
            raise MeasureError("trig basis needs K >= 1")

    @classmethod
    def parse(cls, spec, tau=None) -> "Basis":
        if isinstance(spec, Basis):
            return spec if spec.tau is not None or tau is None else Basis(spec.kind, spec.K, tau)
        if spec == "hat":
            return cls("hat", 0, tau)
        if isinstance(spec, str) and spec.startswith("trig"):
            _, _, k = spec.partition(":")
            return cls("trig", int(k or 3), tau)
        if isinstance(spec, tuple) and spec[0] == "trig":
            return cls("trig", int(spec[1]), tau)
        raise MeasureError(f"cannot parse basis {spec!r}")


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    grid: PeriodicGrid
    velocities: np.ndarray  # (Nv, dim)
    weights: np.ndarray  # (N, Nv)
    tau: float | None = None

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        w = np.array(self.weights, dtype=float)
        if v.shape[1] != self.grid.dim or w.shape != (self.grid.size, len(v)):
            raise MeasureError(f"weights must have shape ({self.grid.size}, {len(v)})")
        if np.any(w < -1e-12):
            raise MeasureError("weights must be nonnegative")
        w = np.maximum(w, 0.0)
        if abs(w.sum() - 1.0) > 1e-9:
            raise MeasureError(f"total mass {w.sum():.12g} differs from 1")
        w.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "weights", w)

    @classmethod
    def point(cls, grid, velocities, node: int, vel_index: int, tau=None) -> "DiscreteMeasure":
        v = np.atleast_2d(np.asarray(velocities, dtype=float))
        w = np.zeros((grid.size, len(v)))
        w[node, vel_index] = 1.0
        return cls(grid, v, w, tau)

    def support(self, threshold: float = 1e-12):
        nodes, vels = np.nonzero(self.weights > threshold)
        return list(zip(nodes.tolist(), vels.tolist()))

    def mass_near(self, point, radius: float, velocity=None) -> float:
        """Mass within torus distance ``radius`` of ``point`` (and of ``velocity`` in v, if given)."""
        xs = self.grid.coords()
        near_x = torus_distance(xs, np.broadcast_to(np.asarray(point, dtype=float), xs.shape)) <= radius + 1e-12
        if velocity is None:
            return float(self.weights[near_x].sum())
        dist_v = np.linalg.norm(self.velocities - np.asarray(velocity, dtype=float), axis=1)
        dx = torus_distance(xs, np.broadcast_to(np.asarray(point, dtype=float), xs.shape))
        total = np.sqrt(dx[:, None] ** 2 + dist_v[None, :] ** 2)
        return float(self.weights[total <= radius + 1e-12].sum())

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        xs = self.grid.coords()
        d = self.grid.dim
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{k + 1}" for k in range(d)] + [f"v{k + 1}" for k in range(d)] + ["weight"])
            for i, j in self.support(0.0):
                w.writerow([repr(float(a)) for a in xs[i]] + [repr(float(a)) for a in self.velocities[j]]
                           + [repr(float(self.weights[i, j]))])


@dataclass
class LPResult:
    measure: DiscreteMeasure
    objective: float
    violation: float
    iterations: int
    basis: Basis

    def summary(self) -> dict:
        return {
            "objective": self.objective,
            "closedness_violation": self.violation,
            "support_size": len(self.measure.support()),
            "iterations": self.iterations,
            "basis": self.basis.kind if self.basis.kind == "hat" else f"trig:{self.basis.K}",
        }

    def to_json(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


# Closedness ------------------------------------------------------------------------


def _hat(grid: PeriodicGrid, pts: np.ndarray) -> np.ndarray:
    """Values of all node hat functions at ``pts``: array (len(pts), N), dense."""
    n = grid.n_per_axis
    s = np.mod(pts, 1.0) * n
    i0 = np.floor(s).astype(int)
    t = s - i0
    out = np.zeros((len(pts), grid.size))
    rows = np.arange(len(pts))
    for corner in itertools.product((0, 1), repeat=grid.dim):
        idx = tuple((i0[:, k] + corner[k]) % n for k in range(grid.dim))
        wt = np.prod([t[:, k] if corner[k] else 1 - t[:, k] for k in range(grid.dim)], axis=0)
        np.add.at(out, (rows, np.ravel_multi_index(idx, grid.shape)), wt)
    return out


def _freqs(dim: int, K: int) -> np.ndarray:
    rng = range(-K, K + 1)
    ks = [k for k in itertools.product(rng, repeat=dim) if max(map(abs, k)) >= 1]
    # one representative per +-k pair
    ks = [k for k in ks if tuple(-a for a in k) > k]
    return np.array(ks, dtype=float)


def closedness_matrix(grid: PeriodicGrid, velocities: np.ndarray, basis: Basis) -> np.ndarray:
    """Rows: test functions; columns: (node, velocity) pairs in row-major order."""
    xs = grid.coords()
    vs = np.atleast_2d(velocities)
    N, Nv = len(xs), len(vs)
    if basis.kind == "hat":
        tau = basis.tau if basis.tau is not None else grid.spacing
        X = np.repeat(xs, Nv, axis=0)
        V = np.tile(vs, (N, 1))
        moved = _hat(grid, X + tau * V)
        here = np.zeros((N * Nv, N))
        here[np.arange(N * Nv), np.repeat(np.arange(N), Nv)] = 1.0
        return ((moved - here) / tau).T
    ks = _freqs(grid.dim, basis.K)
    phase = 2 * np.pi * xs @ ks.T  # (N, nk)
    kv = 2 * np.pi * vs @ ks.T  # (Nv, nk)
    rows_cos = -(np.sin(phase)[:, None, :] * kv[None, :, :])  # d/dt cos
    rows_sin = np.cos(phase)[:, None, :] * kv[None, :, :]
    return np.concatenate([rows_cos.reshape(N * Nv, -1), rows_sin.reshape(N * Nv, -1)], axis=1).T


def check_closed(mu: DiscreteMeasure, basis="hat", tol: float | None = None) -> float:
    """max_k |sum <D phi_k, v> w|, a pure diagnostic (``tol`` is accepted for symmetry)."""
    basis = Basis.parse(basis, mu.tau)
    A = closedness_matrix(mu.grid, mu.velocities, basis)
    return float(np.max(np.abs(A @ mu.weights.ravel()))) if A.size else 0.0


def project_measure(mu: DiscreteMeasure) -> GridFunction:
    """Node weights: sum over velocity samples."""
    return GridFunction(mu.grid, mu.weights.sum(axis=1))


# LP ------------------------------------------------------------------------------


def lattice_velocities(grid: PeriodicGrid, tau: float, velocity_box: float) -> np.ndarray:
    n = grid.n_per_axis
    r = min(int(np.floor(velocity_box * tau * n + 1e-9)), n // 2)
    axis = np.arange(-r, r + 1) / (n * tau)
    mesh = np.meshgrid(*([axis] * grid.dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def lp_costs(L: LagrangianTable, velocities: np.ndarray, tau: float):
    """L at the midpoint of each (node, velocity) step; truncated entries flagged."""
    grid = L.grid
    xs = grid.coords()
    mids = xs[:, None, :] + 0.5 * tau * velocities[None, :, :]
    vals, flag = L.lookup(mids.reshape(-1, grid.dim), np.broadcast_to(velocities, mids.shape).reshape(-1, grid.dim), True)
    return vals.reshape(len(xs), len(velocities)), flag.reshape(len(xs), len(velocities))


def solve_mather_lp(
    L: LagrangianTable,
    basis="hat",
    tol: float = 1e-9,
    tau: float | None = None,
    perturbation: np.ndarray | None = None,
) -> LPResult:
    """Minimize sum L w over closed probability weights on (node, velocity) pairs.

    Velocities are lattice displacements m h per time step ``tau``.
    """
    from .stationary import default_tau

    grid = L.grid
    tau = tau or default_tau(grid, L.velocity_box)
    basis = Basis.parse(basis, tau)
    vs = lattice_velocities(grid, tau, L.velocity_box)
    cost, flag = lp_costs(L, vs, tau)
    cols = np.nonzero(~flag.ravel())[0]
    if not np.any(np.all(vs == 0, axis=1)):
        raise LPError("velocity set lacks v = 0")
    A_full = closedness_matrix(grid, vs, basis)
    A = np.vstack([A_full[:, cols], np.ones(len(cols))])
    b = np.zeros(A.shape[0])
    b[-1] = 1.0
    c = cost.ravel()[cols]
    if perturbation is not None:
        c = c + perturbation[: len(cols)]
    try:
        res = simplex(c, A, b, tol=tol)
    except Unbounded as exc:
        raise ModelError(f"LP unbounded: L is not coercive on the sample set ({exc})") from exc
    except Infeasible as exc:  # cannot happen with v = 0 columns present
        raise LPError(f"internal error: {exc}") from exc
    w = np.zeros(grid.size * len(vs))
    w[cols] = res.x
    w /= w.sum()
    mu = DiscreteMeasure(grid, vs, w.reshape(grid.size, len(vs)), tau)
    objective = float(cost.ravel()[cols] @ res.x[: len(cols)] / res.x.sum())
    return LPResult(mu, objective, check_closed(mu, basis), res.iterations, basis)


def sample_mather_measures(
    L: LagrangianTable,
    basis="hat",
    n_perturb: int = 8,
    seed: int = 0,
    eps: float = 1e-6,
    tol: float = 1e-9,
    tau: float | None = None,
) -> list[LPResult]:
    """Distinct optimal vertices found by re-solving with tiny random objective perturbations.

    Only vertices whose unperturbed objective is within ``100 * eps`` of the
    optimum are kept; the set is a sample, not an enumeration.
    """
    base = solve_mather_lp(L, basis, tol, tau)
    out = [base]
    seen = {_support_key(base.measure)}
    rng = np.random.default_rng(seed)
    n_cols = base.measure.weights.size
    for _ in range(n_perturb):
        res = solve_mather_lp(L, basis, tol, base.measure.tau, perturbation=eps * rng.standard_normal(n_cols))
        key = _support_key(res.measure)
        if key not in seen and res.objective <= base.objective + 100 * eps:
            seen.add(key)
            out.append(res)
    return out


def _support_key(mu: DiscreteMeasure):
    return tuple(sorted((i, j, round(float(mu.weights[i, j]), 9)) for i, j in mu.support(1e-10)))


# Representation formulas ------------------------------------------------------------


def _node_weights(measures) -> list[np.ndarray]:
    out = []
    for m in measures:
        if isinstance(m, LPResult):
            m = m.measure
        if isinstance(m, DiscreteMeasure):
            m = project_measure(m)
        out.append(np.asarray(getattr(m, "values", m), dtype=float))
    return out


def representation_value(h: np.ndarray, measures) -> GridFunction | np.ndarray:
    """u(x) = min over measures of sum_y h(y, x) mu(y)."""
    ws = _node_weights(measures)
    if not ws:
        raise MeasureError("representation needs at least one measure")
    vals = np.min([w @ h for w in ws], axis=0)
    grid = _grid_of(measures)
    return GridFunction(grid, vals) if grid is not None else vals


def weighted_representation(h: np.ndarray, measures, weight) -> GridFunction | np.ndarray:
    """min over measures of sum_y weight(y) h(y, x) mu(y) / sum_y weight(y) mu(y)."""
    wt = np.asarray(getattr(weight, "values", weight), dtype=float)
    if np.any(wt <= 0):
        raise MeasureError("weight must be positive on the grid")
    ws = _node_weights(measures)
    if not ws:
        raise MeasureError("representation needs at least one measure")
    vals = np.min([((wt * w) @ h) / np.sum(wt * w) for w in ws], axis=0)
    grid = _grid_of(measures) or getattr(weight, "grid", None)
    return GridFunction(grid, vals) if grid is not None else vals


def _grid_of(measures):
    for m in measures:
        if isinstance(m, LPResult):
            return m.measure.grid
        if isinstance(m, (DiscreteMeasure, GridFunction)):
            return m.grid
    return None


def integrate(u: GridFunction, mu) -> float:
    """sum_y u(y) mu(y) for a measure (projected when needed)."""
    return float(u.values @ _node_weights([mu])[0])


# Measure transforms -----------------------------------------------------------------


def _rebin(velocities: np.ndarray, targets: np.ndarray, mass: np.ndarray) -> np.ndarray:
    """Split ``mass`` at ``targets`` linearly onto the sample lattice (mass-conserving)."""
    dim = velocities.shape[1]
    axes = [np.unique(velocities[:, k]) for k in range(dim)]
    shape = tuple(len(a) for a in axes)
    out = np.zeros((len(targets),) + shape)
    lo_idx, frac = [], []
    for k, a in enumerate(axes):
        t = targets[:, k]
        if np.any(t < a[0] - 1e-12) or np.any(t > a[-1] + 1e-12):
            raise TransformError("transformed velocity leaves the sampled box; enlarge the velocity box")
        i = np.clip(np.searchsorted(a, t, side="right") - 1, 0, len(a) - 2)
        f = np.clip((t - a[i]) / (a[i + 1] - a[i]), 0.0, 1.0)
        lo_idx.append(i)
        frac.append(f)
    rows = np.arange(len(targets))
    for corner in itertools.product((0, 1), repeat=dim):
        idx = tuple(lo_idx[k] + corner[k] for k in range(dim))
        wt = np.prod([frac[k] if corner[k] else 1 - frac[k] for k in range(dim)], axis=0)
        np.add.at(out, (rows,) + idx, mass * wt)
    # map lattice back to the measure's velocity ordering
    order = [tuple(int(np.searchsorted(axes[k], v[k])) for k in range(dim)) for v in velocities]
    return np.stack([out[(slice(None),) + o] for o in order], axis=1)


def transform_measure(mu: DiscreteMeasure, denom, direction: str = "forward") -> DiscreteMeasure:
    """forward: weight f(x) w at velocity v / f(x), normalised by sum f w;
    inverse: weight w / f(x) at velocity f(x) v, normalised by sum w / f."""
    f = np.asarray(getattr(denom, "values", denom), dtype=float)
    if f.shape != (mu.grid.size,):
        raise TransformError("denominator must be a grid function on the measure's grid")
    if np.any(f <= 0):
        raise TransformError("denominator must be positive")
    if direction not in ("forward", "inverse"):
        raise TransformError(f"direction must be forward or inverse, got {direction!r}")
    scale = 1.0 / f if direction == "forward" else f
    mass_factor = f if direction == "forward" else 1.0 / f
    N, Nv = mu.weights.shape
    new = np.zeros_like(mu.weights)
    nodes, vels = np.nonzero(mu.weights > 0)
    if len(nodes):
        targets = mu.velocities[vels] * scale[nodes, None]
        mass = mu.weights[nodes, vels] * mass_factor[nodes]
        split = _rebin(mu.velocities, targets, mass)
        np.add.at(new, nodes, split)
    total = new.sum()
    return DiscreteMeasure(mu.grid, mu.velocities, new / total, mu.tau)


def measure_objective(mu: DiscreteMeasure, L: LagrangianTable) -> float:
    """sum L(midpoint, v) w for a measure on lattice velocities."""
    tau = mu.tau if mu.tau is not None else 0.0
    cost, _ = lp_costs(L, mu.velocities, tau)
    return float(np.sum(cost * mu.weights))


def mixture_brute_force(h: np.ndarray, node_measures, steps: int = 8) -> np.ndarray:
    """min over convex mixtures (simplex grid with ``steps`` divisions) of sum h(y, x) mu(y)."""
    ws = _node_weights(node_measures)
    best = np.full(h.shape[1], np.inf)
    k = len(ws)
    for combo in itertools.product(range(steps + 1), repeat=k):
        if sum(combo) != steps:
            continue
        mix = sum(cw / steps * w for cw, w in zip(combo, ws))
        best = np.minimum(best, mix @ h)
    return best


__all__ = [
    "Basis",
    "DiscreteMeasure",
    "LPResult",
    "MeasureError",
    "TransformError",
    "check_closed",
    "closedness_matrix",
    "integrate",
    "lattice_velocities",
    "measure_objective",
    "mixture_brute_force",
    "project_measure",
    "representation_value",
    "sample_mather_measures",
    "solve_mather_lp",
    "transform_measure",
    "weighted_representation",
]
