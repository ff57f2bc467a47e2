"""Contact Hamiltonians H^lam(x, p, u), their frozen part G and Legendre duals.

Every expression-backed model is lowered to a single expression in
``x1, x2, p1, p2, u, lam`` so that ``eval_H`` and ``G`` share one code path.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import expr as E
from .grid import GridFunction, PeriodicGrid, heat_smooth, sup_norm_diff

KINDS = ("discounted", "general", "app1", "app2", "oscillating")
_REQUIRED = {
    "discounted": {"G"},
    "general": {"H"},
    "app1": {"f", "H"},
    "app2": {"H"},
    "oscillating": {"G"},
}
_OPTIONAL = {"app1": {"f_u"}, "app2": {"H_u"}, "general": {"H_u"}}
FD_STEP = 1e-6


class ModelError(ValueError):
    pass


class TransformError(ValueError):
    pass


@dataclass(frozen=True)
class SamplingBudget:
    x_per_axis: int = 64
    p_per_axis: int = 201
    u_samples: int = 33


@dataclass(frozen=True, eq=False)
class ContactModel:
    """A family lam -> H^lam(x, p, u) with frozen part G(x, p) = H^lam(x, p, 0).

    ``expressions`` holds source strings keyed by role (see ``_REQUIRED``).
    ``branches`` is only used by the oscillating construction.
    """

    kind: str
    expressions: dict
    lam: float = 1.0
    momentum_box: float = 4.0
    dim: int = 1
    budget: SamplingBudget = field(default_factory=SamplingBudget)
    branches: object = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        keys = set(self.expressions)
        missing = _REQUIRED[self.kind] - keys
        unknown = keys - _REQUIRED[self.kind] - _OPTIONAL.get(self.kind, set())
        if missing:
            raise ModelError(f"{self.kind} model needs expressions {sorted(missing)}")
        if unknown:
            raise ModelError(f"unexpected expressions {sorted(unknown)} for kind {self.kind}")
        if self.lam <= 0 or self.momentum_box <= 0:
            raise ModelError("lam and momentum_box must be positive")
        if self.dim not in (1, 2):
            raise ModelError("dim must be 1 or 2")
        asts = {k: E.parse_expr(v) if isinstance(v, str) else v for k, v in self.expressions.items()}
        object.__setattr__(self, "_asts", asts)
        object.__setattr__(self, "_lowered", _lower(self.kind, asts))

    # -- evaluation -----------------------------------------------------
    def _env(self, x, p, u, lam):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        x, p = np.broadcast_arrays(x, p)
        if x.shape[-1] != self.dim:
            raise ModelError(f"points must have {self.dim} coordinates, got shape {x.shape}")
        env = {"u": np.asarray(u, dtype=float), "lam": float(lam)}
        for k in range(self.dim):
            env[f"x{k + 1}"] = x[..., k]
            env[f"p{k + 1}"] = p[..., k]
        if self.dim == 1:
            env["x2"] = np.zeros_like(x[..., 0])
            env["p2"] = np.zeros_like(p[..., 0])
        return env, x.shape[:-1]

    def H(self, x, p, u, lam=None) -> np.ndarray:
        """H^lam at stacked points; ``x``, ``p`` have trailing axis ``dim``."""
        lam = self.lam if lam is None else lam
        env, shape = self._env(x, p, u, lam)
        try:
            if self.kind == "oscillating":
                w = self.branches.branch_values(lam, np.asarray(x, dtype=float))
                base = E.evaluate(self._lowered, **env)
                out = lam * env["u"] + base - lam * w
            else:
                out = E.evaluate(self._lowered, **env)
        except E.EvalError as exc:
            raise ModelError(f"evaluating {self.name or self.kind} model: {exc}") from exc
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast_shapes(shape, np.shape(env["u"]))).copy()

    def G(self, x, p) -> np.ndarray:
        """Frozen Hamiltonian G(x, p) = H^lam(x, p, 0) (the limit part for oscillating)."""
        if self.kind == "oscillating":
            env, shape = self._env(x, p, 0.0, self.lam)
            return np.broadcast_to(E.evaluate(self._lowered, **env), shape).astype(float)
        return self.H(x, p, 0.0)

    def H_u(self, x, p, u, lam=None) -> np.ndarray:
        lam = self.lam if lam is None else lam
        u = np.asarray(u, dtype=float)
        step = FD_STEP * np.maximum(1.0, np.abs(u))
        return (self.H(x, p, u + step, lam) - self.H(x, p, u - step, lam)) / (2 * step)

    def H_p(self, x, p, u, lam=None) -> np.ndarray:
        """Finite-difference momentum gradient, trailing axis ``dim``."""
        p = np.asarray(p, dtype=float)
        out = []
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = FD_STEP * max(1.0, float(np.max(np.abs(p)))) if p.size else FD_STEP
            out.append((self.H(x, p + e, u, lam) - self.H(x, p - e, u, lam)) / (2 * e[k]))
        return np.stack(out, axis=-1)

    def u_derivative_at_zero(self, x, p) -> np.ndarray:
        """d/du of the undiscounted Hamiltonian at u = 0 (f_u(x,0) or H_u(x,p,0))."""
        if self.kind == "app1" and "f_u" in self._asts:
            env, shape = self._env(x, p, 0.0, 1.0)
            return np.broadcast_to(E.evaluate(self._asts["f_u"], **env), shape).astype(float)
        if self.kind in ("app2", "general") and "H_u" in self._asts:
            env, shape = self._env(x, p, 0.0, 1.0)
            return np.broadcast_to(E.evaluate(self._asts["H_u"], **env), shape).astype(float)
        return self.H_u(x, p, 0.0, lam=1.0)

    def with_(self, **changes) -> "ContactModel":
        params = dict(
            kind=self.kind,
            expressions=dict(self.expressions),
            lam=self.lam,
            momentum_box=self.momentum_box,
            dim=self.dim,
            budget=self.budget,
            branches=self.branches,
            name=self.name,
        )
        params.update(changes)
        return ContactModel(**params)

    def to_dict(self) -> dict:
        if self.kind == "oscillating":
            raise ModelError("oscillating models carry grid data and are not serialisable")
        return {
            "kind": self.kind,
            "expressions": {k: (v if isinstance(v, str) else v.to_source()) for k, v in self.expressions.items()},
            "lambda": self.lam,
            "momentum_box": self.momentum_box,
            "dim": self.dim,
            "budget": {
                "x_per_axis": self.budget.x_per_axis,
                "p_per_axis": self.budget.p_per_axis,
                "u_samples": self.budget.u_samples,
            },
        }


MODEL_KEYS = {"kind", "expressions", "lambda", "momentum_box", "dim", "budget", "name"}
BUDGET_KEYS = {"x_per_axis", "p_per_axis", "u_samples"}


def model_from_dict(data: dict, path: str = "model") -> ContactModel:
    """Build a model from its JSON form; unknown keys are rejected with their path."""
    if not isinstance(data, dict):
        raise ModelError(f"{path}: expected an object")
    unknown = set(data) - MODEL_KEYS
    if unknown:
        raise ModelError(f"{path}.{sorted(unknown)[0]}: unknown key")
    for key in ("kind", "expressions"):
        if key not in data:
            raise ModelError(f"{path}.{key}: required key missing")
    exprs = data["expressions"]
    if not isinstance(exprs, dict) or not all(isinstance(v, str) for v in exprs.values()):
        raise ModelError(f"{path}.expressions: expected an object of strings")
    budget = data.get("budget", {})
    unknown = set(budget) - BUDGET_KEYS
    if unknown:
        raise ModelError(f"{path}.budget.{sorted(unknown)[0]}: unknown key")
    try:
        return ContactModel(
            kind=data["kind"],
            expressions=dict(exprs),
            lam=float(data.get("lambda", 1.0)),
            momentum_box=float(data.get("momentum_box", 4.0)),
            dim=int(data.get("dim", 1)),
            budget=SamplingBudget(**budget),
            name=str(data.get("name", "")),
        )
    except E.ParseError as exc:
        raise ModelError(f"{path}.expressions: {exc}") from exc


def _substitute(node, name, replacement):
    if isinstance(node, E.Var):
        return replacement if node.name == name else node
    if isinstance(node, E.Neg):
        return E.Neg(_substitute(node.operand, name, replacement))
    if isinstance(node, E.BinOp):
        return E.BinOp(node.op, _substitute(node.left, name, replacement), _substitute(node.right, name, replacement))
    if isinstance(node, E.Call):
        return E.Call(node.name, tuple(_substitute(a, name, replacement) for a in node.args))
    return node


def _lower(kind, asts):
    lam_u = E.BinOp("*", E.Var("lam"), E.Var("u"))
    if kind == "discounted":
        return E.BinOp("+", lam_u, asts["G"])
    if kind == "app1":
        return E.BinOp("+", _substitute(asts["f"], "u", lam_u), asts["H"])
    if kind == "app2":
        return _substitute(asts["H"], "u", lam_u)
    if kind == "general":
        return asts["H"]
    return asts["G"]  # oscillating: base G only


# Constructors ----------------------------------------------------------------


def discounted(G: str, **kw) -> ContactModel:
    return ContactModel("discounted", {"G": G}, **kw)


def pendulum(**kw) -> ContactModel:
    return discounted("0.5*p1^2 + cos(2*pi*x1)", name=kw.pop("name", "pendulum"), **kw)


def double_well(**kw) -> ContactModel:
    return discounted("0.5*p1^2 + cos(4*pi*x1)", name=kw.pop("name", "double-well"), **kw)


def app2_paper(V: str = "cos(2*pi*x1)", **kw) -> ContactModel:
    return ContactModel(
        "app2",
        {"H": f"u + 0.5*cos(u)^2*sin(p1) + 0.5*p1^2 + {V}", "H_u": "1 + 0*x1"},
        name=kw.pop("name", "app2-paper"),
        **kw,
    )


def app1_cubic(V: str = "cos(2*pi*x1)", **kw) -> ContactModel:
    return ContactModel(
        "app1",
        {"f": f"{V} + u + u^3/3", "H": "0.5*p1^2", "f_u": "1 + 0*x1"},
        name=kw.pop("name", "app1-cubic"),
        **kw,
    )


# Sampling helpers ------------------------------------------------------------


def _x_samples(model: ContactModel, grid: PeriodicGrid | None = None) -> np.ndarray:
    if grid is not None:
        return grid.coords()
    return PeriodicGrid(model.dim, model.budget.x_per_axis).coords()


def _p_samples(dim: int, radius: float, n: int) -> np.ndarray:
    axis = np.linspace(-radius, radius, n)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


# Legendre transform ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LagrangianTable:
    """Sampled L(x_i, v_j) = sup_{|p|_inf <= P} <p, v_j> - G(x_i, p).

    ``lookup`` evaluates the same truncated supremum at arbitrary (x, v).
    ``boundary`` marks entries whose maximiser sits on the momentum box.
    """

    model: ContactModel
    grid: PeriodicGrid
    velocity_box: float
    velocities: np.ndarray
    values: np.ndarray
    boundary: np.ndarray
    momentum_box: float
    p_samples: int

    @property
    def any_truncated(self) -> bool:
        return bool(np.any(self.boundary))

    def lookup(self, x, v, return_flag: bool = False):
        vals, flag = _legendre_sup(self.model, x, v, self.momentum_box, self.p_samples)
        return (vals, flag) if return_flag else vals


def _legendre_sup(model, x, v, P, n_p, refine_rounds=40):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    x, v = np.broadcast_arrays(x, v)
    dim = model.dim
    if dim > 1:
        n_p = min(n_p, 17)  # coarse start only; the refinement below supplies the accuracy
    ps = _p_samples(dim, P, n_p)  # (m, dim)
    best = np.empty(len(x))
    arg = np.empty((len(x), dim))
    chunk = max(1, 2_000_000 // len(ps))
    for s in range(0, len(x), chunk):
        xs, vs = x[s : s + chunk], v[s : s + chunk]
        g = model.G(xs[:, None, :], ps[None, :, :])
        vals = vs @ ps.T - g
        if not np.all(np.isfinite(vals)):
            raise ModelError("non-finite G on the momentum sample set")
        k = np.argmax(vals, axis=1)
        best[s : s + chunk] = vals[np.arange(len(xs)), k]
        arg[s : s + chunk] = ps[k]
    # local pattern refinement (exact for concave objectives up to float rounding)
    step = 2 * P / (n_p - 1)
    offsets = _p_samples(dim, 1.0, 3)
    for _ in range(refine_rounds):
        cand = np.clip(arg[:, None, :] + step * offsets[None, :, :], -P, P)
        vals = np.einsum("nd,nkd->nk", v, cand) - model.G(x[:, None, :], cand)
        k = np.argmax(vals, axis=1)
        improved = vals[np.arange(len(x)), k]
        take = improved > best
        best = np.where(take, improved, best)
        arg = np.where(take[:, None], cand[np.arange(len(x)), k], arg)
        step *= 0.5
    flag = np.any(np.abs(np.abs(arg) - P) <= 1e-9 * max(1.0, P), axis=1)
    return best, flag


def velocity_samples(dim: int, velocity_box: float, v_samples: int) -> np.ndarray:
    return _p_samples(dim, velocity_box, v_samples)


def legendre_transform(
    model: ContactModel,
    grid: PeriodicGrid,
    velocity_box: float,
    v_samples: int = 41,
    p_samples: int | None = None,
) -> LagrangianTable:
    if velocity_box <= 0:
        raise ModelError("velocity_box must be positive")
    p_samples = p_samples or model.budget.p_per_axis
    vs = velocity_samples(grid.dim, velocity_box, v_samples)
    xs = grid.coords()
    X = np.repeat(xs, len(vs), axis=0)
    Vv = np.tile(vs, (len(xs), 1))
    vals, flag = _legendre_sup(model, X, Vv, model.momentum_box, p_samples)
    values = vals.reshape(len(xs), len(vs))
    boundary = flag.reshape(len(xs), len(vs))
    if np.any(boundary):
        warnings.warn(
            "Legendre supremum attained on the momentum box boundary; L is truncated there",
            stacklevel=2,
        )
    return LagrangianTable(model, grid, velocity_box, vs, values, boundary, model.momentum_box, p_samples)


# Structural probes ------------------------------------------------------------


def probe_structure(model: ContactModel, sample_budget: SamplingBudget | None = None) -> dict:
    """Sampled witnesses for convexity, coercivity and strict u-monotonicity."""
    budget = sample_budget or model.budget
    xs = PeriodicGrid(model.dim, budget.x_per_axis).coords()
    P = model.momentum_box
    n_p = min(budget.p_per_axis, 61 if model.dim == 1 else 21)
    ps = _p_samples(model.dim, P, n_p)

    # coercivity: G on the box boundary must exceed G near the origin
    if model.dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        th = np.linspace(0, 2 * np.pi, 16, endpoint=False)
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    g_far = model.G(xs[:, None, :], P * dirs[None, :, :])
    g_mid = model.G(xs[:, None, :], 0.5 * P * dirs[None, :, :])
    g0 = model.G(xs, np.zeros_like(xs))
    witness = float(np.min(g_far) - np.max(g0))
    growth = float(np.min(g_far - g_mid))

    # midpoint convexity in p
    rng = np.random.default_rng(0)
    i = rng.integers(0, len(ps), size=(4000, 2))
    xi = xs[rng.integers(0, len(xs), size=4000)]
    pa, pb = ps[i[:, 0]], ps[i[:, 1]]
    viol = model.G(xi, 0.5 * (pa + pb)) - 0.5 * (model.G(xi, pa) + model.G(xi, pb))
    convexity_violation = float(max(0.0, np.max(viol)))

    # strict u-monotonicity
    us = np.linspace(-P, P, budget.u_samples)
    xu = xs[rng.integers(0, len(xs), size=3000)]
    pu = ps[rng.integers(0, len(ps), size=3000)]
    uu = us[rng.integers(0, len(us), size=3000)]
    hu = model.H_u(xu, pu, uu)
    return {
        "coercivity_witness": witness,
        "coercivity_growth": growth,
        "coercive": bool(witness > 0 and growth > 0),
        "convexity_violation": convexity_violation,
        "u_monotonicity_min_derivative": float(np.min(hu)),
        "u_monotone": bool(np.min(hu) > 0),
    }


@dataclass(frozen=True)
class MonotonicityProfile:
    R: float
    lam: float
    delta: float
    kappa: float

    @property
    def ratio(self) -> float:
        return self.delta / self.kappa


def monotonicity_profile(
    model: ContactModel, R: float, lam: float, sample_budget: SamplingBudget | None = None
) -> MonotonicityProfile:
    """min/max of |H^lam(x,p,u) - H^lam(x,p,0)| / |u| over |p| <= R, 0 < |u| <= R."""
    if R <= 0 or lam <= 0:
        raise ModelError("R and lam must be positive")
    budget = sample_budget or model.budget
    xs = PeriodicGrid(model.dim, budget.x_per_axis).coords()
    n_p = budget.p_per_axis if model.dim == 1 else min(budget.p_per_axis, 41)
    ps = _p_samples(model.dim, R, n_p)
    ps = ps[np.linalg.norm(ps, axis=1) <= R + 1e-12]
    half = np.linspace(0, R, budget.u_samples // 2 + 1)[1:]
    us = np.concatenate([-half[::-1], half])
    X = np.repeat(xs, len(ps), axis=0)
    Pm = np.tile(ps, (len(xs), 1))
    base = model.H(X, Pm, 0.0, lam)
    qmin, qmax = np.inf, -np.inf
    for u in us:
        q = np.abs(model.H(X, Pm, u, lam) - base) / abs(u)
        qmin = min(qmin, float(q.min()))
        qmax = max(qmax, float(q.max()))
    if qmax <= 0:
        raise ModelError("degenerate model: H^lam does not depend on u")
    return MonotonicityProfile(R=R, lam=lam, delta=qmin, kappa=qmax)


# Transforms --------------------------------------------------------------------


def breve_transform(model: ContactModel, c: float, grid: PeriodicGrid | None = None) -> ContactModel:
    """Divide H^lam - c by the u-derivative at u = 0 of the undiscounted Hamiltonian.

    The result is a ``general`` model whose frozen part has critical value 0.
    """
    if model.kind == "oscillating":
        raise TransformError("oscillating models have no u-derivative transform")
    xs = _x_samples(model, grid)
    ps = _p_samples(model.dim, model.momentum_box, 41 if model.dim == 1 else 11)
    den = model.u_derivative_at_zero(xs[:, None, :], ps[None, :, :])
    if np.any(den <= 0):
        raise TransformError(f"non-positive u-derivative sample {float(den.min()):.3g}; transform undefined")
    num = E.BinOp("-", model._lowered, E.Num(float(c)))
    if model.kind == "app1":
        den_ast = model._asts.get("f_u")
        if den_ast is None:
            den_ast = _fd_u_derivative(model._asts["f"])
    elif model.kind in ("app2", "general") and "H_u" in model._asts:
        den_ast = model._asts["H_u"]
    elif model.kind == "discounted":
        den_ast = E.Num(1.0)
    else:
        den_ast = _fd_u_derivative(_substitute(model._lowered, "lam", E.Num(1.0)))
    den_ast = _substitute(_substitute(den_ast, "u", E.Num(0.0)), "lam", E.Num(1.0))
    return ContactModel(
        "general",
        {"H": E.BinOp("/", num, den_ast)},
        lam=model.lam,
        momentum_box=model.momentum_box,
        dim=model.dim,
        budget=model.budget,
        name=f"breve({model.name or model.kind})",
    )


def _fd_u_derivative(ast):
    plus = _substitute(ast, "u", E.Num(FD_STEP))
    minus = _substitute(ast, "u", E.Num(-FD_STEP))
    return E.BinOp("/", E.BinOp("-", plus, minus), E.Num(2 * FD_STEP))


def lipschitz_bound_kappa(model: ContactModel, c: float, grid: PeriodicGrid | None = None) -> float:
    """sup{|p| : G(x, p) <= c} over sampled x, refined by bisection along rays."""
    xs = _x_samples(model, grid)
    P = model.momentum_box
    if model.dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    radii = np.linspace(0, P, model.budget.p_per_axis)
    X = xs[:, None, None, :]
    pts = radii[None, None, :, None] * dirs[None, :, None, :]
    inside = model.G(X, pts) <= c
    if not np.any(inside):
        warnings.warn(f"empty sublevel set {{G <= {c}}}", stacklevel=2)
        return 0.0
    # convex sublevel sets are star-shaped around any interior point; bisect each ray
    best = 0.0
    xi, di = np.nonzero(inside.any(axis=2))
    last = np.array([np.max(np.nonzero(inside[a, b])[0]) for a, b in zip(xi, di)])
    lo = radii[last]
    hi = np.where(last + 1 < len(radii), radii[np.minimum(last + 1, len(radii) - 1)], P)
    open_end = last + 1 >= len(radii)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        ok = model.G(xs[xi], mid[:, None] * dirs[di]) <= c
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    lo = np.where(open_end, P, lo)
    best = float(np.max(lo))
    if best >= P - 1e-12:
        warnings.warn("sublevel set reaches the momentum box; kappa is truncated", stacklevel=2)
    return best


def default_momentum_box(model: ContactModel, c: float) -> float:
    """max(4, 2 * kappa_{c+1}) with kappa computed on a generous provisional box."""
    probe = model.with_(momentum_box=max(model.momentum_box, 64.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        kappa = lipschitz_bound_kappa(probe, c + 1.0)
    return max(4.0, 2.0 * kappa)


# Oscillating family ----------------------------------------------------------------


class ConstructionError(ValueError):
    pass


@dataclass(eq=False)
class OscillatingBranches:
    """Branch targets f (even n) and g (odd n) with per-lam heat smoothing."""

    f: GridFunction
    g: GridFunction
    min_smoothing: float

    def branch(self, lam: float) -> str:
        # lam in (1/(m+1), 1/m]: m even -> f, m odd -> g
        m = int(np.floor(1.0 / lam + 1e-9))
        return "f" if m % 2 == 0 else "g"

    def smoothed(self, lam: float) -> GridFunction:
        return _smoothed_branch(self, self.branch(lam), float(lam))

    def branch_values(self, lam: float, x: np.ndarray) -> np.ndarray:
        w = self.smoothed(lam)
        return _periodic_interp(w, x)


def _smoothed_branch(br: OscillatingBranches, which: str, lam: float) -> GridFunction:
    cache = br.__dict__.setdefault("_cache", {})
    key = (which, lam)
    if key in cache:
        return cache[key]
    target = br.f if which == "f" else br.g
    # largest s with sup|w - w_s| <= lam (bisection on a monotone map)
    lo, hi = 0.0, 1.0
    if sup_norm_diff(target, heat_smooth(target, hi)) <= lam:
        lo = hi
    else:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if sup_norm_diff(target, heat_smooth(target, mid)) <= lam:
                lo = mid
            else:
                hi = mid
    if lo < br.min_smoothing:
        raise ConstructionError(
            f"smoothing width {lo:.3g} needed for lam={lam} is below grid resolution; use a finer grid"
        )
    cache[key] = heat_smooth(target, lo)
    return cache[key]


def _periodic_interp(w: GridFunction, x: np.ndarray) -> np.ndarray:
    grid = w.grid
    n = grid.n_per_axis
    arr = w.reshaped()
    x = np.asarray(x, dtype=float)
    s = np.mod(x, 1.0) * n
    i0 = np.floor(s).astype(int)
    t = s - i0
    if grid.dim == 1:
        a = arr[i0[..., 0] % n]
        b = arr[(i0[..., 0] + 1) % n]
        return a + t[..., 0] * (b - a)
    i, j = i0[..., 0], i0[..., 1]
    tx, ty = t[..., 0], t[..., 1]
    f00 = arr[i % n, j % n]
    f10 = arr[(i + 1) % n, j % n]
    f01 = arr[i % n, (j + 1) % n]
    f11 = arr[(i + 1) % n, (j + 1) % n]
    return (1 - tx) * (1 - ty) * f00 + tx * (1 - ty) * f10 + (1 - tx) * ty * f01 + tx * ty * f11


def build_oscillating(
    G: ContactModel,
    f: GridFunction,
    g: GridFunction,
    c: float | None = None,
    verify_tol: float | None = None,
    min_smoothing: float | None = None,
) -> ContactModel:
    """lam*u + G(x,p) - lam*w_lam(x) with w_lam a smoothed copy of f or g by branch of lam.

    When ``c`` and ``verify_tol`` are given, f and g must pass the Godunov
    solution check for G(x, Du) = c first.
    """
    if f.grid != g.grid:
        raise ConstructionError("f and g must share a grid")
    if c is not None and verify_tol is not None:
        from .stationary import verify_viscosity_role

        for name, w in (("f", f), ("g", g)):
            rep = verify_viscosity_role(G, w, 0.0, c, "solution", verify_tol, scheme="godunov")
            if not rep.passed:
                raise ConstructionError(f"{name} is not a solution of G(x,Du)=c: {rep}")
    h = f.grid.spacing
    branches = OscillatingBranches(f, g, h * h / 8 if min_smoothing is None else min_smoothing)
    expr_G = G.expressions["G"] if G.kind in ("discounted", "oscillating") else None
    if expr_G is None:
        raise ConstructionError("build_oscillating needs a discounted-kind base model")
    return ContactModel(
        "oscillating",
        {"G": expr_G},
        lam=G.lam,
        momentum_box=G.momentum_box,
        dim=G.dim,
        budget=G.budget,
        branches=branches,
        name="oscillating",
    )
