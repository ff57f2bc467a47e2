"""Monotone finite-difference solvers for H^lam(x, Du, u) = c and related experiments.

Every scheme is written as a numerical Hamiltonian Phi(x, u, p-, p+) acting on
the one-sided differences of ``upwind_pair``; the residual is Phi - c.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import expr as E
from .grid import (
    GridFunction,
    PeriodicGrid,
    heat_smooth,
    lipschitz_estimate,
    one_sided_differences,
    sup_norm_diff,
)
from .kernel import PreconditionError
from .hamiltonian import (
    ContactModel,
    MonotonicityProfile,
    _lower,
    _substitute,
    lipschitz_bound_kappa,
    monotonicity_profile,
)

log = logging.getLogger(__name__)

SCHEMES = ("godunov", "lf", "llf")
BRACKET_ROUNDS = 12


class SolverError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


@dataclass
class SolverConfig:
    sigma: float | None = None  # LF viscosity; None -> 1.1 * sampled max |H_p|
    cfl: float = 0.9
    tol: float = 1e-10
    max_iter: int = 200
    clamp: float | None = None
    method: str = "newton"  # or "jacobi" (pseudo-time marching)
    scheme: str = "godunov"
    jacobi_max_iter: int = 2_000_000

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.method not in ("newton", "jacobi"):
            raise ValueError(f"method must be newton or jacobi, got {self.method!r}")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")


@dataclass
class SolveResult:
    u: GridFunction
    iterations: int
    residual: float
    sigma: float
    history: list = field(default_factory=list)


# Numerical Hamiltonians ------------------------------------------------------------


def _bracket_min(f, lo, hi, rounds=BRACKET_ROUNDS, k=17):
    """Minimum of a convex f on [lo, hi], elementwise.

    Each round samples k points in one batched call of ``f`` (which maps an
    array of shape lo.shape + (k,) to the same shape) and keeps the two cells
    around the best sample.
    """
    t = np.linspace(0.0, 1.0, k)
    a, b = lo, hi
    best = None
    for _ in range(rounds):
        q = a[..., None] + (b - a)[..., None] * t
        vals = f(q)
        j = np.argmin(vals, axis=-1)
        v = np.take_along_axis(vals, j[..., None], axis=-1)[..., 0]
        best = v if best is None else np.minimum(best, v)
        jl = np.clip(j - 1, 0, k - 1)[..., None]
        jr = np.clip(j + 1, 0, k - 1)[..., None]
        a, b = np.take_along_axis(q, jl, axis=-1)[..., 0], np.take_along_axis(q, jr, axis=-1)[..., 0]
    return best


def _p_terms(node) -> list[set]:
    """Momentum variables of each additive term (p-free factors are distributed)."""
    if isinstance(node, E.BinOp) and node.op in "+-":
        return _p_terms(node.left) + _p_terms(node.right)
    if isinstance(node, E.Neg):
        return _p_terms(node.operand)
    if isinstance(node, E.BinOp) and node.op in "*/":
        lp = {v for v in E.free_variables(node.left) if v[0] == "p"}
        rp = {v for v in E.free_variables(node.right) if v[0] == "p"}
        if not rp:
            return _p_terms(node.left)
        if not lp and node.op == "*":
            return _p_terms(node.right)
    return [{v for v in E.free_variables(node) if v[0] == "p"}]


def p_separable(model: ContactModel) -> bool:
    """True when H is a sum of terms that each involve at most one momentum component."""
    return all(len(t) <= 1 for t in _p_terms(model._lowered))


def _godunov_phi(model, x, u, pm, pp, lam):
    """Godunov Hamiltonian for H convex in p: per axis, min over [p-, p+] if p- <= p+,
    max over the two endpoints otherwise (axis 1 outermost)."""
    N, dim = pm.shape
    if dim > 1 and p_separable(model):
        # the nested extremum of a separable sum is the sum of per-axis extrema
        zero = np.zeros_like(pm)
        base = model.H(x, zero, u, lam)
        total = -(dim - 1) * base
        for k in range(dim):
            total = total + _godunov_phi(_AxisSlice(model, k, dim), x, u, pm[:, k : k + 1], pp[:, k : k + 1], lam)
        return total

    def lift(a, nd):
        return a.reshape((N,) + (1,) * (nd - 1))

    def ext(prefix, k):
        shape = prefix[-1].shape if prefix else (N,)
        nd = len(shape)
        lo = np.broadcast_to(lift(np.minimum(pm[:, k], pp[:, k]), nd), shape)
        hi = np.broadcast_to(lift(np.maximum(pm[:, k], pp[:, k]), nd), shape)
        rising = np.broadcast_to(lift(pm[:, k] <= pp[:, k], nd), shape)

        def f(q):
            parts = [np.broadcast_to(np.reshape(p, p.shape + (1,) * (q.ndim - p.ndim)), q.shape) for p in prefix]
            parts.append(q)
            if k < dim - 1:
                return ext(parts, k + 1)
            X = x.reshape((N,) + (1,) * (q.ndim - 1) + (x.shape[-1],))
            U = np.reshape(u, (N,) + (1,) * (q.ndim - 1))
            return model.H(X, np.stack(parts, axis=-1), U, lam)

        ends = f(np.stack([lo, hi], axis=-1)).max(axis=-1)
        if not np.any(rising):
            return ends
        return np.where(rising, _bracket_min(f, lo, hi), ends)

    return ext([], 0)


class _AxisSlice:
    """H restricted to momenta along one axis (other components zero)."""

    def __init__(self, model, axis, dim):
        self.model, self.axis, self.dim = model, axis, dim

    def H(self, x, q, u, lam):
        p = np.zeros(q.shape[:-1] + (self.dim,))
        p[..., self.axis] = q[..., 0]
        return self.model.H(x, p, u, lam)


def numerical_hamiltonian(model, x, u, pm, pp, lam, scheme="godunov", sigma=None):
    """Phi(x, u, p-, p+) for ``scheme``; ``pm``, ``pp`` have shape (N, dim)."""
    if scheme == "godunov":
        return _godunov_phi(model, x, u, pm, pp, lam)
    pavg = 0.5 * (pm + pp)
    if scheme == "lf":
        if sigma is None:
            raise ValueError("the lf scheme needs sigma")
        return model.H(x, pavg, u, lam) - 0.5 * sigma * np.sum(pp - pm, axis=1)
    if scheme == "llf":
        # local viscosity: max |H_p| over the corners of the slope box, per axis.
        # A wider difference step than H_p's keeps rounding noise in alpha near
        # 1e-12; alpha only needs to bound |H_p|, so truncation error is harmless.
        alpha = np.zeros_like(pm)
        dim = pm.shape[1]
        for corner in range(2**dim):
            q = np.stack([pp[:, k] if (corner >> k) & 1 else pm[:, k] for k in range(dim)], axis=1)
            for k in range(dim):
                e = np.zeros(dim)
                e[k] = 1e-4 * max(1.0, float(np.max(np.abs(q[:, k]))))
                d = (model.H(x, q + e, u, lam) - model.H(x, q - e, u, lam)) / (2 * e[k])
                alpha[:, k] = np.maximum(alpha[:, k], np.abs(d))
        return model.H(x, pavg, u, lam) - 0.5 * np.sum(alpha * (pp - pm), axis=1)
    raise ValueError(f"unknown scheme {scheme!r}")


def _slopes(u: GridFunction):
    pm, pp = one_sided_differences(u)
    return pm.T, pp.T


def lf_residual(
    model: ContactModel,
    u: GridFunction,
    lam: float,
    c: float,
    sigma: float,
    clamp: float | None = None,
) -> GridFunction:
    """r_i = Theta(H^lam(x_i, (p- + p+)/2, u_i) - c) - sigma/2 * sum_axes (p+ - p-)."""
    if sigma is None:
        raise ValueError("lf_residual needs sigma")
    pm, pp = _slopes(u)
    ham = model.H(u.grid.coords(), 0.5 * (pm + pp), u.values, lam) - c
    if clamp is not None:
        ham = np.minimum(ham, clamp)
    return GridFunction(u.grid, ham - 0.5 * sigma * np.sum(pp - pm, axis=1))


def scheme_residual(
    model: ContactModel,
    u: GridFunction,
    lam: float,
    c: float,
    scheme: str = "godunov",
    sigma: float | None = None,
    clamp: float | None = None,
) -> GridFunction:
    """Phi - c (clamped from above by ``clamp`` when given)."""
    if scheme == "lf":
        return lf_residual(model, u, lam, c, sigma, clamp)
    pm, pp = _slopes(u)
    r = numerical_hamiltonian(model, u.grid.coords(), u.values, pm, pp, lam, scheme, sigma) - c
    if clamp is not None:
        r = np.minimum(r, clamp)
    return GridFunction(u.grid, r)


def godunov_residual(model: ContactModel, u: GridFunction, lam: float, c: float) -> GridFunction:
    return scheme_residual(model, u, lam, c, "godunov")


def estimate_sigma(model: ContactModel, grid: PeriodicGrid, lam: float, slope: float, u_range=(0.0, 0.0)) -> float:
    """1.1 x max |H_p| over nodes, |p|_inf <= slope and the given u range."""
    xs = grid.coords()
    axis = np.linspace(-slope, slope, 41 if model.dim == 1 else 11)
    ps = np.stack([m.ravel() for m in np.meshgrid(*([axis] * model.dim), indexing="ij")], axis=1)
    best = 0.0
    for u in np.unique(np.array([u_range[0], 0.0, u_range[1]], dtype=float)):
        hp = model.H_p(xs[:, None, :], ps[None, :, :], u, lam)
        best = max(best, float(np.max(np.abs(hp))))
    return 1.1 * max(best, 1e-8)


def _hu_bound(model, grid, lam, slope, u_range):
    xs = grid.coords()
    axis = np.linspace(-slope, slope, 21 if model.dim == 1 else 7)
    ps = np.stack([m.ravel() for m in np.meshgrid(*([axis] * model.dim), indexing="ij")], axis=1)
    best = 0.0
    for u in np.linspace(u_range[0], u_range[1], 5):
        best = max(best, float(np.max(model.H_u(xs[:, None, :], ps[None, :, :], u, lam))))
    return best


def _max_slope(u: GridFunction) -> float:
    return float(np.max(np.abs(np.concatenate(one_sided_differences(u), axis=0))))


def _slope_range(model, c, u):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            kappa = lipschitz_bound_kappa(model.with_(momentum_box=max(model.momentum_box, 8.0)), c + 1.0)
        except Exception:
            kappa = model.momentum_box
    return max(1.0, 1.25 * kappa, 1.1 * _max_slope(u))


# Solvers ---------------------------------------------------------------------------


def _neighbors(grid: PeriodicGrid):
    idx = np.arange(grid.size).reshape(grid.shape)
    plus = [np.roll(idx, -1, axis=a).ravel() for a in range(grid.dim)]
    minus = [np.roll(idx, 1, axis=a).ravel() for a in range(grid.dim)]
    return plus, minus


def _local_residual(model, x, lam, c, scheme, sigma, clamp):
    """Nodewise residual as a function of (u_i, p-, p+); inputs may stack several
    copies of the node set along the first axis."""

    def phi(u, pm, pp):
        xs = np.tile(x, (len(u) // len(x), 1))
        if scheme == "lf":
            ham = model.H(xs, 0.5 * (pm + pp), u, lam) - c
            if clamp is not None:
                ham = np.minimum(ham, clamp)
            return ham - 0.5 * sigma * np.sum(pp - pm, axis=1)
        r = numerical_hamiltonian(model, xs, u, pm, pp, lam, scheme, sigma) - c
        return r if clamp is None else np.minimum(r, clamp)

    return phi


def _jacobian(phi, u: GridFunction):
    """Sparse Jacobian of the residual by the chain rule through (u_i, p-, p+).

    All central-difference probes go through ``phi`` in one stacked call.
    """
    grid = u.grid
    h = grid.spacing
    N, dim = grid.size, grid.dim
    pm, pp = _slopes(u)
    uv = u.values
    du = 1e-6 * np.maximum(1.0, np.abs(uv))
    dm = 1e-6 * np.maximum(1.0, np.abs(pm))
    dp = 1e-6 * np.maximum(1.0, np.abs(pp))
    U, PM, PP = [uv + du, uv - du], [pm, pm], [pp, pp]
    for k in range(dim):
        e = np.zeros_like(pm)
        e[:, k] = 1.0
        U += [uv] * 4
        PM += [pm + dm * e, pm - dm * e, pm, pm]
        PP += [pp, pp, pp + dp * e, pp - dp * e]
    vals = phi(np.concatenate(U), np.concatenate(PM), np.concatenate(PP)).reshape(-1, N)
    diag = (vals[0] - vals[1]) / (2 * du)
    plus, minus = _neighbors(grid)
    rows, cols, data = [], [], []
    for k in range(dim):
        d_pm = (vals[2 + 4 * k] - vals[3 + 4 * k]) / (2 * dm[:, k])
        d_pp = (vals[4 + 4 * k] - vals[5 + 4 * k]) / (2 * dp[:, k])
        diag = diag + (d_pm - d_pp) / h
        rows += [np.arange(N), np.arange(N)]
        cols += [plus[k], minus[k]]
        data += [d_pp / h, -d_pm / h]
    rows.append(np.arange(N))
    cols.append(np.arange(N))
    data.append(diag)
    return sp.csc_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))


def _residual_fn(model, grid, lam, c, scheme, sigma, clamp):
    phi = _local_residual(model, grid.coords(), lam, c, scheme, sigma, clamp)

    def res(u: GridFunction):
        pm, pp = _slopes(u)
        return phi(u.values, pm, pp)

    return phi, res


def _newton(model, u, lam, c, sigma, config: SolverConfig):
    """Semismooth Newton with a nonmonotone backtracking line search on the l2 residual."""
    phi, res_fn = _residual_fn(model, u.grid, lam, c, config.scheme, sigma, config.clamp)
    history = []
    merits = []
    for it in range(config.max_iter + 1):
        r = res_fn(u)
        res = float(np.max(np.abs(r)))
        history.append(res)
        merits.append(float(np.linalg.norm(r)))
        if res <= config.tol:
            return u, it, res, history
        if it == config.max_iter or not np.isfinite(res):
            break
        J = _jacobian(phi, u)
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                direction = spla.spsolve(J, -r)
            except (RuntimeError, spla.MatrixRankWarning) as exc:
                raise SolverError(f"Newton linear solve failed: {exc}", history) from exc
        ref = max(merits[-5:])
        step = 1.0
        while step > 1e-7:
            trial = GridFunction(u.grid, u.values + step * direction)
            try:
                rt = res_fn(trial)
                mt = float(np.linalg.norm(rt))
            except (ArithmeticError, ValueError):
                mt = np.inf
            if mt < ref * (1 - 1e-4 * step) or np.max(np.abs(rt)) <= config.tol:
                break
            step *= 0.5
        else:
            raise SolverError(f"Newton line search stalled at residual {res:.3g}", history)
        u = trial
    raise SolverError(f"max_iter={config.max_iter} exceeded (residual {history[-1]:.3g})", history)


def pseudo_time_step(grid: PeriodicGrid, sigma: float, cfl: float, hu_bound: float) -> float:
    """Delta tau = cfl * h / (sigma * dim + h * H_u bound)."""
    h = grid.spacing
    return cfl * h / (sigma * grid.dim + h * max(hu_bound, 0.0))


def jacobi_step(model, u: GridFunction, lam, c, sigma, dt, clamp=None, scheme="lf") -> GridFunction:
    """One pseudo-time update u <- u - dt * r(u)."""
    r = scheme_residual(model, u, lam, c, scheme, sigma, clamp)
    return GridFunction(u.grid, u.values - dt * r.values)


def _jacobi(model, u, lam, c, sigma, config: SolverConfig, hu_bound):
    dt = pseudo_time_step(u.grid, sigma, config.cfl, hu_bound)
    _, res_fn = _residual_fn(model, u.grid, lam, c, config.scheme, sigma, config.clamp)
    history = []
    res = np.inf
    for it in range(config.jacobi_max_iter + 1):
        r = res_fn(u)
        res = float(np.max(np.abs(r)))
        if it % 1000 == 0:
            history.append(res)
        if res <= config.tol:
            return u, it, res, history
        u = GridFunction(u.grid, u.values - dt * r)
    raise SolverError(f"Jacobi iteration exceeded {config.jacobi_max_iter} steps (residual {res:.3g})", history)


def _check_monotone(model, grid, lam, u_scale):
    xs = grid.coords()
    rng = np.random.default_rng(1)
    ps = rng.uniform(-model.momentum_box, model.momentum_box, size=(len(xs), model.dim))
    us = rng.uniform(-u_scale, u_scale, size=len(xs))
    hu = model.H_u(xs, ps, us, lam)
    if np.min(hu) <= 0:
        raise PreconditionError(f"u -> H^lam is not strictly increasing (min sampled H_u = {np.min(hu):.3g})")


def solve_stationary(
    model: ContactModel,
    lam: float,
    c: float,
    config: SolverConfig | None = None,
    grid: PeriodicGrid | None = None,
    u_init: GridFunction | None = None,
    full: bool = False,
):
    """Solve Phi(x, u, Du) = c on the grid to sup|residual| <= config.tol.

    Returns the solution GridFunction, or a SolveResult when ``full``.
    """
    config = config or SolverConfig()
    if u_init is None:
        if grid is None:
            raise ValueError("either grid or u_init is required")
        u = GridFunction(grid, np.zeros(grid.size))
    else:
        u = u_init
        grid = u.grid
    _check_monotone(model, grid, lam, max(1.0, float(np.max(np.abs(u.values)))))
    slope = _slope_range(model, c, u)
    sigma = config.sigma
    auto = sigma is None
    for _ in range(4):
        urange = (float(u.values.min()), float(u.values.max()))
        if auto:
            sigma = estimate_sigma(model, grid, lam, slope, urange)
        if config.method == "jacobi":
            hb = _hu_bound(model, grid, lam, slope, (urange[0] - 1, urange[1] + 1))
            sol, its, res, hist = _jacobi(model, u, lam, c, sigma, config, hb)
        else:
            try:
                sol, its, res, hist = _newton(model, u, lam, c, sigma, config)
            except SolverError as exc:
                if not np.any(u.values):
                    raise
                # warm starts near a different solution branch can stall; restart cold
                log.info("warm-started Newton failed (%s); restarting from zero", exc)
                u = GridFunction(grid, np.zeros(grid.size))
                sol, its, res, hist = _newton(model, u, lam, c, sigma, config)
                hist = exc.history + hist
        if config.scheme != "lf" and config.method == "newton":
            break  # sigma only enters the lf flux and the pseudo-time step
        observed = _max_slope(sol)
        needed = estimate_sigma(model, grid, lam, observed, (float(sol.values.min()), float(sol.values.max())))
        if needed <= sigma * (1 + 1e-9):
            break
        if not auto:
            warnings.warn(f"sigma={sigma:.3g} below measured max|H_p|={needed / 1.1:.3g}; raising", stacklevel=2)
            auto = True
        slope = max(slope * 1.5, observed * 1.1)
    out = SolveResult(sol, its, res, sigma, hist)
    return out if full else sol


# Verification ------------------------------------------------------------------------


@dataclass
class ViscosityReport:
    role: str
    passed: bool
    max_residual: float
    min_residual: float
    worst_node: int
    tol: float
    scheme: str

    def __str__(self):
        verdict = "pass" if self.passed else "FAIL"
        return (
            f"{self.role} check ({self.scheme}) {verdict}: residual in "
            f"[{self.min_residual:.3g}, {self.max_residual:.3g}], worst node {self.worst_node}, tol {self.tol:.3g}"
        )


def verify_viscosity_role(
    model: ContactModel,
    u: GridFunction,
    lam: float,
    c: float,
    role: str,
    tol: float,
    scheme: str = "godunov",
    sigma: float | None = None,
) -> ViscosityReport:
    """Signed residual test: sub <=> max r <= tol, super <=> min r >= -tol.

    ``lam = 0`` tests the frozen equation G(x, Du) = c.
    """
    if role not in ("sub", "super", "solution"):
        raise ValueError(f"role must be sub, super or solution, not {role!r}")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    target, lam_eff = (frozen_model(model), 1.0) if lam == 0 else (model, lam)
    if scheme == "lf" and sigma is None:
        sigma = estimate_sigma(
            target, u.grid, lam_eff, max(1.0, 1.1 * _max_slope(u)), (float(u.values.min()), float(u.values.max()))
        )
    r = scheme_residual(target, u, lam_eff, c, scheme, sigma).values
    rmax, rmin = float(r.max()), float(r.min())
    if role == "sub":
        passed, worst = rmax <= tol, int(np.argmax(r))
    elif role == "super":
        passed, worst = rmin >= -tol, int(np.argmin(r))
    else:
        passed, worst = (rmax <= tol and rmin >= -tol), int(np.argmax(np.abs(r)))
    return ViscosityReport(role, bool(passed), rmax, rmin, worst, tol, scheme)


@dataclass
class AubryEquivalenceReport:
    nodes: list  # detected Aubry nodes
    solution_passed: dict  # node -> S(z, .) passes the solution check
    strict_nodes: list  # non-Aubry nodes with h(z, z) >= strict_factor * aubry tol
    super_failed: dict  # node -> supersolution check fails somewhere
    tol: float
    passed: bool


def aubry_equivalence(
    model: ContactModel,
    S: np.ndarray,
    h: np.ndarray,
    aubry,
    c: float,
    grid: PeriodicGrid,
    tol: float = 0.1,
    strict_factor: float = 10.0,
    scheme: str = "godunov",
) -> AubryEquivalenceReport:
    """z in A  <=>  S(z, .) is a solution of G(x, Du) = c, tested in both directions.

    Every Aubry node must give a solution; every node whose diagonal barrier is
    at least ``strict_factor`` times the Aubry tolerance must fail the
    supersolution check. ``tol`` absorbs the O(h) residual of kernel-derived
    functions under the finite-difference scheme.
    """
    nodes = [int(z) for z in np.asarray(getattr(aubry, "nodes", aubry))]
    atol = float(getattr(aubry, "tol", 0.0))
    sol = {
        z: verify_viscosity_role(model, GridFunction(grid, S[z]), 0.0, c, "solution", tol, scheme).passed
        for z in nodes
    }
    diag = np.diag(h)
    strict = [int(z) for z in np.nonzero(diag >= strict_factor * atol)[0] if int(z) not in sol]
    fails = {
        z: not verify_viscosity_role(model, GridFunction(grid, S[z]), 0.0, c, "super", tol, scheme).passed
        for z in strict
    }
    passed = all(sol.values()) and all(fails.values())
    return AubryEquivalenceReport(nodes, sol, strict, fails, tol, bool(passed))


def frozen_model(model: ContactModel) -> ContactModel:
    """The u-independent model G(x, p) as a ``general`` model."""
    if model.kind in ("discounted", "oscillating"):
        G = model._asts["G"]
    else:
        G = _substitute(_substitute(model._lowered, "u", E.Num(0.0)), "lam", E.Num(float(model.lam)))
    return ContactModel(
        "general",
        {"H": G},
        lam=model.lam,
        momentum_box=model.momentum_box,
        dim=model.dim,
        budget=model.budget,
        name=f"G[{model.name or model.kind}]",
    )


def discounted_of(model: ContactModel) -> ContactModel:
    """lam*u + G(x, p) built from the frozen part of ``model``."""
    G = frozen_model(model)._asts["H"]
    return ContactModel(
        "general",
        {"H": _lower("discounted", {"G": G})},
        lam=model.lam,
        momentum_box=model.momentum_box,
        dim=model.dim,
        budget=model.budget,
        name=f"discounted[{model.name or model.kind}]",
    )


# Critical value ------------------------------------------------------------------------


@dataclass
class CriticalValueReport:
    value: float
    lambdas: list
    discount_estimates: list
    richardson: float
    lax_oleinik: float
    gap: float
    tol: float = float("inf")  # largest accepted estimator gap
    scheme_value: float = float("nan")  # ergodic constant of the discrete scheme itself

    @property
    def passed(self) -> bool:
        return self.gap <= self.tol


def default_tau(grid: PeriodicGrid, velocity_box: float) -> float:
    """Dyadic tau with a one-step reach between 3 and 32 grid spacings."""
    tau = 1.0 / 16
    while velocity_box * tau * grid.n_per_axis > 32 and tau > 1e-6:
        tau /= 2
    while velocity_box * tau * grid.n_per_axis < 3:
        tau *= 2
    return tau


def critical_value(
    model: ContactModel,
    config: SolverConfig | None,
    lambda_schedule,
    grid: PeriodicGrid,
    tau: float | None = None,
    horizon: float = 16.0,
    scheme_tol: float = 0.004,
    velocity_box: float | None = None,
    strict: bool = True,
) -> CriticalValueReport:
    """Discount estimator -lam*mean(u^lam) for lam*u + G = 0 (Richardson-extrapolated),
    cross-checked with the long-time Lax-Oleinik slope at c = 0.

    With ``strict`` a gap above 5 * scheme_tol raises; otherwise the report's
    ``passed`` flag carries the verdict.
    """
    from .hamiltonian import legendre_transform
    from .kernel import lax_oleinik_evolve, one_step_kernel

    lambdas = [float(v) for v in lambda_schedule]
    if not lambdas or any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda schedule must be non-empty and strictly decreasing")
    disc = discounted_of(model)
    config = config or SolverConfig()
    ests = []
    u = None
    for lam in lambdas:
        u = solve_stationary(disc, lam, 0.0, config, grid=grid, u_init=u)
        ests.append(-lam * float(np.mean(u.values)))
    if len(lambdas) >= 2:
        l1, l2 = lambdas[-2], lambdas[-1]
        rich = (l1 * ests[-1] - l2 * ests[-2]) / (l1 - l2)
    else:
        rich = ests[-1]
    # Polish: near rich the solutions stay O(1), so two much smaller lambdas are
    # cheap and -lam*mean(u) is linear in lam there to high accuracy.
    la, lb = lambdas[-1] / 16, lambdas[-1] / 64
    ua = solve_stationary(disc, la, rich, config, grid=grid, u_init=u + rich / lambdas[-1])
    ub = solve_stationary(disc, lb, rich, config, grid=grid, u_init=ua)
    ea, eb = rich - la * float(np.mean(ua.values)), rich - lb * float(np.mean(ub.values))
    scheme_value = (la * eb - lb * ea) / (la - lb)

    G = frozen_model(model)
    vb = velocity_box or G.momentum_box
    tau = tau or default_tau(grid, vb)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        L = legendre_transform(G, grid, vb, 41 if grid.dim == 1 else 9)
    step = one_step_kernel(L, 0.0, tau)
    k = int(round(horizon / tau))
    traj = lax_oleinik_evolve(GridFunction(grid, np.zeros(grid.size)), step, 0.0, tau, 2 * k)
    lo = float(-np.mean(traj[2 * k].values - traj[k].values) / (k * tau))
    gap = abs(rich - lo)
    if strict and gap > 5 * scheme_tol:
        raise SolverError(f"critical value estimators disagree: discount {rich:.5f} vs Lax-Oleinik {lo:.5f}")
    return CriticalValueReport(0.5 * (rich + lo), lambdas, ests, rich, lo, gap, 5 * scheme_tol, scheme_value)


# Sweeps ------------------------------------------------------------------------------------


@dataclass
class SweepReport:
    lambdas: list
    solutions: list
    gaps: list
    residuals: list
    iterations: list
    slope: float
    non_cauchy: bool
    error: str | None = None

    @property
    def limit(self) -> GridFunction | None:
        return self.solutions[-1] if self.solutions else None

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda", "sup_gap_to_previous", "residual", "iterations"])
            for i in range(len(self.solutions)):
                gap = repr(self.gaps[i - 1]) if i > 0 else ""
                w.writerow([repr(self.lambdas[i]), gap, repr(self.residuals[i]), self.iterations[i]])


def detect_non_cauchy(lambdas, gaps) -> bool:
    """True when the normalised gap |u_k - u_k+1| / |lam_k - lam_k+1| grows more than 2x
    between a lambda and the first later lambda at or below half of it."""
    q = [g / abs(a - b) for g, a, b in zip(gaps, lambdas, lambdas[1:])]
    mids = [0.5 * (a + b) for a, b in zip(lambdas, lambdas[1:])]
    for i in range(len(q)):
        for j in range(i + 1, len(q)):
            if mids[j] <= mids[i] / 2:
                if q[j] > 2 * q[i]:
                    return True
                break
    return False


def _best_start(model, lam, c, config, candidates):
    """Candidate with the smallest residual at the new lambda (the previous solution
    can sit on another branch when the family oscillates)."""
    sigma = config.sigma
    if config.scheme == "lf" and sigma is None:
        u = candidates[-1]
        sigma = estimate_sigma(model, u.grid, lam, max(1.0, 1.1 * _max_slope(u)))
    scores = []
    for u in candidates:
        r = scheme_residual(model, u, lam, c, config.scheme, sigma, config.clamp).values
        scores.append(float(np.max(np.abs(r))))
    return candidates[int(np.argmin(scores))]


def lambda_sweep(
    model: ContactModel,
    c: float,
    lambdas,
    config: SolverConfig | None = None,
    grid: PeriodicGrid | None = None,
    u_init: GridFunction | None = None,
) -> SweepReport:
    """Warm-started solves along a decreasing schedule. A failed solve ends the sweep
    with a partial report (``error`` set)."""
    lambdas = [float(v) for v in lambdas]
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambdas must be strictly decreasing")
    config = config or SolverConfig()
    sols, gaps, res, its = [], [], [], []
    u = u_init
    error = None
    for lam in lambdas:
        if len(sols) >= 2:
            u = _best_start(model, lam, c, config, sols[-2:])
        try:
            out = solve_stationary(model, lam, c, config, grid=grid, u_init=u, full=True)
        except (SolverError, PreconditionError, ArithmeticError, ValueError) as exc:
            error = f"lambda={lam}: {exc}"
            break
        if sols:
            gaps.append(sup_norm_diff(sols[-1], out.u))
        sols.append(out.u)
        res.append(out.residual)
        its.append(out.iterations)
        u = out.u
    slope = float("nan")
    g = np.array(gaps)
    if len(g) >= 2 and np.sum(g > 0) >= 2:
        mids = np.array([0.5 * (a + b) for a, b in zip(lambdas, lambdas[1:])][: len(g)])
        ok = g > 0
        slope = float(np.polyfit(np.log(mids[ok]), np.log(g[ok]), 1)[0])
    nc = detect_non_cauchy(lambdas[: len(sols)], gaps)
    return SweepReport(lambdas, sols, gaps, res, its, slope, nc, error)


@dataclass
class BranchReport:
    lambdas: list
    branches: list  # "f" or "g" per solved lambda
    excess: list  # sup|u_lam - target| - lam
    within: bool  # every excess <= slack
    limit_distance: float  # between the last f-branch and the last g-branch solutions
    target_distance: float  # sup|f - g|
    separated: bool  # limit_distance >= fraction * target_distance
    slack: float
    fraction: float


def branch_report(model: ContactModel, sweep: SweepReport, slack: float = 0.02, fraction: float = 0.9) -> BranchReport:
    """Distances of an oscillating-family sweep to its branch targets and between its
    two subsequence limit candidates."""
    br = model.branches
    if br is None:
        raise ValueError("branch_report needs an oscillating model")
    lams = sweep.lambdas[: len(sweep.solutions)]
    names = [br.branch(lam) for lam in lams]
    excess = [
        sup_norm_diff(u, br.f if b == "f" else br.g) - lam for lam, b, u in zip(lams, names, sweep.solutions)
    ]
    last = {b: u for b, u in zip(names, sweep.solutions)}
    dist = sup_norm_diff(last["f"], last["g"]) if len(last) == 2 else float("nan")
    target = sup_norm_diff(br.f, br.g)
    return BranchReport(
        lams,
        names,
        excess,
        bool(all(e <= slack for e in excess)),
        dist,
        target,
        bool(dist >= fraction * target),
        slack,
        fraction,
    )


# Comparison ---------------------------------------------------------------------------------


def comparison_order_check(
    model: ContactModel,
    f: GridFunction,
    g: GridFunction,
    lam: float,
    c: float,
    steps: int,
    cfl: float = 0.9,
    tol: float = 1e-9,
    scheme: str = "lf",
    return_trajectories: bool = False,
):
    """Iterate the monotone pseudo-time map from f and g; True iff every step stays ordered.

    When f is a verified subsolution and g a verified supersolution (same scheme,
    tolerance ``tol``) the last iterates must also satisfy f <= g + tol.
    """
    grid = f.grid
    slope = 1.1 * max(_max_slope(f), _max_slope(g), 1.0)
    urange = (min(f.values.min(), g.values.min()) - 1.0, max(f.values.max(), g.values.max()) + 1.0)
    sigma = estimate_sigma(model, grid, lam, slope, urange)
    dt = pseudo_time_step(grid, sigma, cfl, 1.1 * _hu_bound(model, grid, lam, slope, urange))
    ordered = bool(np.all(f.values <= g.values + tol))
    sub = verify_viscosity_role(model, f, lam, c, "sub", tol, scheme=scheme, sigma=sigma).passed
    sup = verify_viscosity_role(model, g, lam, c, "super", tol, scheme=scheme, sigma=sigma).passed
    fk, gk = f, g
    traj = [(fk, gk)]
    for _ in range(steps):
        fk = jacobi_step(model, fk, lam, c, sigma, dt, scheme=scheme)
        gk = jacobi_step(model, gk, lam, c, sigma, dt, scheme=scheme)
        slack = 1e-12 * max(1.0, float(np.max(np.abs(gk.values))))
        if not np.all(fk.values <= gk.values + slack):
            ordered = False
        if return_trajectories:
            traj.append((fk, gk))
    if sub and sup:
        ordered = ordered and bool(np.all(fk.values <= gk.values + tol))
    return (ordered, traj) if return_trajectories else ordered


# Sandwich ------------------------------------------------------------------------------------


@dataclass
class SandwichReport:
    lam: float
    R0: float
    profile: MonotonicityProfile
    width: float
    passed: bool
    worst_node: int
    worst_violation: float
    u: GridFunction
    w: GridFunction
    covered: bool


def sandwich_check(
    model: ContactModel,
    lam: float,
    R0: float,
    c: float,
    grid: PeriodicGrid,
    config: SolverConfig | None = None,
    tol: float = 1e-8,
    u: GridFunction | None = None,
) -> SandwichReport:
    """Check u^lam - W <= w <= u^lam + W with W = (K - delta) R0 / K, where
    w solves K u + G(x, Du) = c and (delta, K) is the profile at (R0, lam).

    ``covered`` records whether R0 bounds both |u^lam| and its slopes.
    """
    config = config or SolverConfig()
    prof = monotonicity_profile(model, R0, lam)
    width = (prof.kappa - prof.delta) * R0 / prof.kappa
    if u is None:
        u = solve_stationary(model, lam, c, config, grid=grid)
    w = solve_stationary(discounted_of(model), prof.kappa, c, config, grid=grid, u_init=u)
    viol = np.maximum(u.values - width - w.values, w.values - u.values - width)
    worst = int(np.argmax(viol))
    covered = bool(np.max(np.abs(u.values)) <= R0 and _max_slope(u) <= R0)
    return SandwichReport(lam, R0, prof, width, bool(viol[worst] <= tol), worst, float(viol[worst]), u, w, covered)


# Smoothing ------------------------------------------------------------------------------------


class SmoothingError(ValueError):
    pass


def mollify_subsolution(
    u: GridFunction,
    model: ContactModel,
    c: float,
    epsilon: float,
    scheme_tol: float = 1e-3,
) -> GridFunction:
    """Heat-smoothed w with sup|u - w| <= epsilon and G(x, Dw) <= c + epsilon."""
    if epsilon <= 0:
        raise SmoothingError("epsilon must be positive; a kinked subsolution cannot be smoothed exactly")
    base = verify_viscosity_role(model, u, 0.0, c, "sub", scheme_tol)
    if not base.passed:
        raise SmoothingError(f"input is not a subsolution: {base}")
    if np.ptp(u.values) == 0:
        return u
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if sup_norm_diff(u, heat_smooth(u, mid)) <= epsilon:
            lo = mid
        else:
            hi = mid
    w = heat_smooth(u, lo)
    rep = verify_viscosity_role(model, w, 0.0, c + epsilon, "sub", scheme_tol)
    if not rep.passed:
        raise SmoothingError(f"smoothed function violates G <= c + epsilon ({rep}); refine the grid")
    return w


def solution_bounds(solutions) -> float:
    """max over a family of sup-norm and Lipschitz estimate."""
    return max(max(float(np.max(np.abs(s.values))), lipschitz_estimate(s)) for s in solutions)
