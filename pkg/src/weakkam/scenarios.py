"""Scenario registry: built-in models plus JSON scenario files with validation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import hamiltonian as Hm
from .grid import PeriodicGrid
from .hamiltonian import ContactModel, ModelError


class ScenarioError(ValueError):
    """Schema violation; the message starts with the offending field path."""


DEFAULT_SWEEP = tuple(2.0**-k for k in range(3, 11))
DEFAULT_CRITICAL = (1e-1, 3e-2, 1e-2, 3e-3)
# paired 1/m values so both parities keep appearing as lam decreases
OSCILLATING_SWEEP = tuple(1.0 / m for m in (2, 3, 4, 5, 8, 9, 16, 17, 32, 33, 64, 65))


@dataclass(frozen=True)
class KernelParams:
    tau: float = 1 / 64
    window: tuple = (8.0, 16.0)
    t_max: float = 16.0
    velocity_fraction: float = 0.9  # velocity box as a fraction of the momentum box
    v_samples: int = 41


@dataclass(frozen=True)
class SolverParams:
    tol: float = 1e-10
    max_iter: int = 200
    scheme: str = "godunov"


@dataclass(frozen=True)
class MatherParams:
    basis: str = "hat"
    perturbations: int = 6
    seed: int = 0
    eps: float = 1e-6


@dataclass(frozen=True)
class CheckParams:
    comparison_pairs: int = 100
    comparison_resolution: int = 32
    comparison_steps: int = 50
    lo_steps: int = 100
    represent_tol: float = 0.03
    aubry_check_tol: float = 0.1
    scheme_tol: float | None = None  # None: one grid spacing


@dataclass(frozen=True)
class OscillatingParams:
    f: str = "(1 - cos(2*pi*x1))/pi"
    g: str = "(1 + cos(2*pi*x1))/pi"
    verify_tol: float = 0.1


@dataclass(frozen=True)
class Scenario:
    name: str
    model: ContactModel
    resolution: int = 256
    c: float | None = None
    kernel: KernelParams = field(default_factory=KernelParams)
    solver: SolverParams = field(default_factory=SolverParams)
    mather: MatherParams = field(default_factory=MatherParams)
    checks: CheckParams = field(default_factory=CheckParams)
    lambda_schedule: tuple = DEFAULT_SWEEP
    critical_schedule: tuple = DEFAULT_CRITICAL
    oscillating: OscillatingParams | None = None
    output_dir: str | None = None

    @property
    def grid(self) -> PeriodicGrid:
        return PeriodicGrid(self.model.dim, self.resolution)

    @property
    def scheme_tol(self) -> float:
        """Expected size of the first-order scheme error."""
        return self.checks.scheme_tol if self.checks.scheme_tol is not None else 1.0 / self.resolution

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


def _builtin_models():
    return {
        "pendulum": lambda: Hm.pendulum(),
        "double-well": lambda: Hm.double_well(),
        "app1-cubic": lambda: Hm.app1_cubic(),
        "app2-paper": lambda: Hm.app2_paper(),
        "oscillating": lambda: Hm.double_well(name="oscillating"),
        "pendulum-2d": lambda: Hm.discounted(
            "0.5*(p1^2 + p2^2) + cos(2*pi*x1) + cos(2*pi*x2)",
            dim=2,
            name="pendulum-2d",
            budget=Hm.SamplingBudget(x_per_axis=16, p_per_axis=101, u_samples=17),
        ),
    }


BUILTINS = tuple(_builtin_models())


def builtin(key: str) -> Scenario:
    models = _builtin_models()
    if key not in models:
        raise ScenarioError(f"builtin: unknown key {key!r}; choose from {', '.join(BUILTINS)}")
    model = models[key]()
    model = model.with_(momentum_box=Hm.default_momentum_box(model, 1.0 if model.dim == 1 else 2.0))
    if key == "oscillating":
        return Scenario(
            key,
            model,
            resolution=64,
            c=1.0,
            lambda_schedule=OSCILLATING_SWEEP,
            oscillating=OscillatingParams(),
        )
    if key == "pendulum-2d":
        return Scenario(
            key,
            model,
            resolution=32,
            kernel=KernelParams(tau=1 / 32, window=(4.0, 8.0), t_max=8.0, v_samples=21),
        )
    return Scenario(key, model)


# JSON ingestion --------------------------------------------------------------------

_TOP = {
    "name",
    "builtin",
    "model",
    "resolution",
    "c",
    "kernel",
    "solver",
    "mather",
    "checks",
    "lambda_schedule",
    "critical_schedule",
    "oscillating",
    "output_dir",
}


def _num(data, key, path, kind=float, positive=True, default=None):
    if key not in data:
        return default
    v = data[key]
    ok = isinstance(v, (int, float)) and not isinstance(v, bool)
    if ok and kind is int:
        ok = float(v).is_integer()
    if not ok or not math.isfinite(v):
        raise ScenarioError(f"{path}.{key}: expected {'an integer' if kind is int else 'a number'}, got {v!r}")
    if positive and v <= 0:
        raise ScenarioError(f"{path}.{key}: must be positive")
    return kind(v)


def _section(data, key, cls, path, types):
    sub = data.get(key)
    if sub is None:
        return cls()
    if not isinstance(sub, dict):
        raise ScenarioError(f"{path}.{key}: expected an object")
    unknown = set(sub) - set(types)
    if unknown:
        raise ScenarioError(f"{path}.{key}.{sorted(unknown)[0]}: unknown key")
    out = {}
    for name, t in types.items():
        if name not in sub:
            continue
        p = f"{path}.{key}"
        if t is str:
            if not isinstance(sub[name], str):
                raise ScenarioError(f"{p}.{name}: expected a string")
            out[name] = sub[name]
        elif t == "window":
            w = sub[name]
            if not (isinstance(w, list) and len(w) == 2 and all(isinstance(a, (int, float)) for a in w) and w[0] < w[1]):
                raise ScenarioError(f"{p}.{name}: expected [T0, T1] with T0 < T1")
            out[name] = (float(w[0]), float(w[1]))
        else:
            out[name] = _num(sub, name, p, t)
    return cls(**out)


def _schedule(data, key, path):
    v = data[key]
    if not isinstance(v, list) or not v:
        raise ScenarioError(f"{path}.{key}: expected a non-empty list of numbers")
    out = []
    for i, lam in enumerate(v):
        if not isinstance(lam, (int, float)) or isinstance(lam, bool) or not 0 < lam:
            raise ScenarioError(f"{path}.{key}[{i}]: expected a positive number")
        if out and lam >= out[-1]:
            raise ScenarioError(f"{path}.{key}[{i}]: schedule must be strictly decreasing")
        out.append(float(lam))
    return tuple(out)


def scenario_from_dict(data: dict, path: str = "$") -> Scenario:
    """Validate a scenario document fully before anything is computed."""
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: expected an object")
    unknown = set(data) - _TOP
    if unknown:
        raise ScenarioError(f"{path}.{sorted(unknown)[0]}: unknown key")
    if ("builtin" in data) == ("model" in data):
        raise ScenarioError(f"{path}: exactly one of 'builtin' or 'model' is required")
    if "builtin" in data:
        if not isinstance(data["builtin"], str):
            raise ScenarioError(f"{path}.builtin: expected a string")
        base = builtin(data["builtin"])
    else:
        try:
            model = Hm.model_from_dict(data["model"], f"{path}.model")
        except ModelError as exc:
            msg = str(exc)
            raise ScenarioError(msg if msg.startswith(path) else f"{path}.model: {msg}") from exc
        if "momentum_box" not in data["model"]:
            model = model.with_(momentum_box=Hm.default_momentum_box(model, 1.0))
        base = Scenario("custom", model)
    ch = {}
    if "name" in data:
        if not isinstance(data["name"], str) or not data["name"] or "/" in data["name"]:
            raise ScenarioError(f"{path}.name: expected a non-empty string without '/'")
        ch["name"] = data["name"]
    if "resolution" in data:
        ch["resolution"] = _num(data, "resolution", path, int)
        if ch["resolution"] < 4:
            raise ScenarioError(f"{path}.resolution: must be at least 4")
    if "c" in data and data["c"] is not None:
        ch["c"] = _num(data, "c", path, float, positive=False)
    if "kernel" in data:
        ch["kernel"] = _section(
            data,
            "kernel",
            KernelParams,
            path,
            {"tau": float, "window": "window", "t_max": float, "velocity_fraction": float, "v_samples": int},
        )
    if "solver" in data:
        ch["solver"] = _section(data, "solver", SolverParams, path, {"tol": float, "max_iter": int, "scheme": str})
        if ch["solver"].scheme not in ("godunov", "lf", "llf"):
            raise ScenarioError(f"{path}.solver.scheme: expected godunov, lf or llf")
    if "mather" in data:
        ch["mather"] = _section(
            data, "mather", MatherParams, path, {"basis": str, "perturbations": int, "seed": int, "eps": float}
        )
    if "checks" in data:
        ch["checks"] = _section(
            data,
            "checks",
            CheckParams,
            path,
            {
                "comparison_pairs": int,
                "comparison_resolution": int,
                "comparison_steps": int,
                "lo_steps": int,
                "represent_tol": float,
                "aubry_check_tol": float,
                "scheme_tol": float,
            },
        )
    if "oscillating" in data:
        ch["oscillating"] = _section(
            data, "oscillating", OscillatingParams, path, {"f": str, "g": str, "verify_tol": float}
        )
    for key in ("lambda_schedule", "critical_schedule"):
        if key in data:
            ch[key] = _schedule(data, key, path)
    if "output_dir" in data:
        if not isinstance(data["output_dir"], str):
            raise ScenarioError(f"{path}.output_dir: expected a string")
        ch["output_dir"] = data["output_dir"]
    return base.with_(**ch)


def load_scenario(path_or_key: str) -> Scenario:
    """A built-in key or a path to a JSON scenario document."""
    if path_or_key in BUILTINS:
        return builtin(path_or_key)
    p = Path(path_or_key)
    if not p.exists():
        raise ScenarioError(f"$: no built-in named {path_or_key!r} and no such file")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"$: invalid JSON ({exc})") from exc
    sc = scenario_from_dict(data)
    return sc if "name" in data else sc.with_(name=p.stem)
