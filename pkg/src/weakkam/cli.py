"""Command-line driver: one scenario, one command, artifacts under <out>/<scenario>/<command>/.

Exit status: 0 when every attached property check passes, 2 when one fails,
1 on invalid input or a compute error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import hamiltonian as Hm
from . import kernel as K
from . import mather as M
from . import stationary as St
from .grid import GridFunction, sup_norm_diff
from .scenarios import BUILTINS, Scenario, ScenarioError, load_scenario

REPORT_VERSION = 1
COMMANDS = ("critical", "solve", "sweep", "barrier", "aubry", "mather", "represent", "verify", "example42")
OUT_ENV = "WEAKKAM_OUT"
MATRIX_CSV_LIMIT = 300  # larger kernels are written in the binary format


# Serialisation ---------------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def dump_json(data: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(data), sort_keys=True, indent=2) + "\n")


def _check(value, threshold, passed, note=None):
    out = {"value": value, "threshold": threshold, "passed": bool(passed)}
    if note:
        out["note"] = note
    return out


# Run context ------------------------------------------------------------------------


class Run:
    """Caches the expensive intermediate objects shared by commands of one scenario."""

    def __init__(self, scenario: Scenario, out_root: Path):
        self.sc = scenario
        self.grid = scenario.grid
        self.dir = out_root / scenario.name
        self.config = St.SolverConfig(
            tol=scenario.solver.tol, max_iter=scenario.solver.max_iter, scheme=scenario.solver.scheme
        )
        self._cache = {}

    def _memo(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def base(self):
        return self.sc.model

    @property
    def model(self):
        """The family the solver commands act on (oscillating scenarios build theirs)."""
        if self.sc.oscillating is None:
            return self.base
        return self._memo("osc", self._build_oscillating)

    def _build_oscillating(self):
        op = self.sc.oscillating
        f = _expr_on_grid(op.f, self.grid)
        g = _expr_on_grid(op.g, self.grid)
        return Hm.build_oscillating(self.base, f, g, c=self.c, verify_tol=op.verify_tol)

    @property
    def frozen(self):
        return self._memo("G", lambda: St.frozen_model(self.base))

    def critical(self) -> St.CriticalValueReport:
        return self._memo(
            "critical",
            lambda: St.critical_value(
                self.base,
                self.config,
                list(self.sc.critical_schedule),
                self.grid,
                tau=self.sc.kernel.tau,
                scheme_tol=self.sc.scheme_tol,
                strict=False,
            ),
        )

    def _critical_value(self, field: str) -> float:
        if self.sc.c is not None:
            return float(self.sc.c)
        saved = self.dir / "critical" / "critical.json"
        if saved.exists():
            return float(json.loads(saved.read_text())[field])
        rep = self.critical()
        return float(rep.scheme_value if field == "c_scheme" else rep.lax_oleinik)

    @property
    def c(self) -> float:
        """Critical value as seen by the finite-difference scheme (solver commands)."""
        return self._critical_value("c_scheme")

    @property
    def c_kernel(self) -> float:
        """Critical value of the discrete action kernel (barrier, Aubry and LP commands)."""
        return self._critical_value("c_kernel")

    @property
    def c_source(self) -> str:
        if self.sc.c is not None:
            return "scenario"
        return "critical.json" if (self.dir / "critical" / "critical.json").exists() else "computed"

    @property
    def lagrangian(self) -> Hm.LagrangianTable:
        def build():
            G = self.frozen
            vb = self.sc.kernel.velocity_fraction * G.momentum_box
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return Hm.legendre_transform(G, self.grid, vb, self.sc.kernel.v_samples)

        return self._memo("L", build)

    def barriers(self) -> K.BarrierBundle:
        kp = self.sc.kernel
        return self._memo(
            "barriers", lambda: K.compute_barriers(self.lagrangian, self.c_kernel, kp.tau, kp.t_max, kp.window)
        )

    def sweep(self) -> St.SweepReport:
        return self._memo(
            "sweep", lambda: St.lambda_sweep(self.model, self.c, list(self.sc.lambda_schedule), self.config, self.grid)
        )

    def measures(self) -> list:
        mp = self.sc.mather
        return self._memo(
            "measures",
            lambda: M.sample_mather_measures(
                self.lagrangian, mp.basis, n_perturb=mp.perturbations, seed=mp.seed, eps=mp.eps
            ),
        )

    def limit_tol(self, u: GridFunction) -> float:
        """Residual allowance for a sweep limit tested against the frozen equation."""
        lam = min(self.sc.lambda_schedule)
        return 10 * self.sc.solver.tol + lam * float(np.max(np.abs(u.values)))

    def half_node(self) -> int:
        return self.grid.nearest_node([0.5] * self.grid.dim)


def _expr_on_grid(source: str, grid) -> GridFunction:
    from . import expr as E

    node = E.parse_expr(source)
    xs = grid.coords()
    env = {f"x{k + 1}": xs[:, k] for k in range(grid.dim)}
    if grid.dim == 1:
        env["x2"] = np.zeros(len(xs))
    vals = E.evaluate(node, **env)
    return GridFunction(grid, np.broadcast_to(vals, (len(xs),)))


def _write_matrix(M_: np.ndarray, folder: Path, name: str) -> str:
    if M_.shape[0] <= MATRIX_CSV_LIMIT:
        K.write_matrix_csv(M_, folder / f"{name}.csv")
        return f"{name}.csv"
    K.write_matrix_binary(M_, folder / f"{name}.wkk")
    return f"{name}.wkk"


# Commands ---------------------------------------------------------------------------


def cmd_critical(run: Run, folder: Path):
    rep = run.critical()
    checks = {"estimator_gap": _check(rep.gap, rep.tol, rep.passed)}
    data = {
        "c": rep.value,
        "c_scheme": rep.scheme_value,
        "c_kernel": rep.lax_oleinik,
        "richardson": rep.richardson,
        "lax_oleinik": rep.lax_oleinik,
        "gap": rep.gap,
        "lambdas": rep.lambdas,
        "discount_estimates": rep.discount_estimates,
    }
    return data, checks, f"c={rep.value:.6f} (discount {rep.richardson:.6f}, Lax-Oleinik {rep.lax_oleinik:.6f})"


def cmd_solve(run: Run, folder: Path):
    lam = min(run.sc.lambda_schedule)
    c = run.c
    out = St.solve_stationary(run.model, lam, c, run.config, run.grid, full=True)
    out.u.to_csv(folder / "solution.csv")
    tol = 10 * run.sc.solver.tol
    rep = St.verify_viscosity_role(run.model, out.u, lam, c, "solution", tol, scheme=run.sc.solver.scheme)
    checks = {"residual": _check(max(abs(rep.max_residual), abs(rep.min_residual)), tol, rep.passed)}
    data = {"lambda": lam, "c": c, "c_source": run.c_source, "iterations": out.iterations, "residual": out.residual}
    return data, checks, f"lambda={lam:g} residual={out.residual:.2e} iterations={out.iterations}"


def cmd_sweep(run: Run, folder: Path):
    rep = run.sweep()
    rep.to_csv(folder / "sweep.csv")
    if rep.error is not None:
        raise St.SolverError(f"sweep stopped early: {rep.error}")
    u = rep.limit
    u.to_csv(folder / "limit.csv")
    tol = run.limit_tol(u)
    ver = St.verify_viscosity_role(run.model, u, 0.0, run.c, "solution", tol, scheme=run.sc.solver.scheme)
    checks = {
        "cauchy": _check(rep.non_cauchy, False, not rep.non_cauchy),
        "limit_solution": _check(max(abs(ver.max_residual), abs(ver.min_residual)), tol, ver.passed),
    }
    data = {
        "c": run.c,
        "c_source": run.c_source,
        "lambdas": rep.lambdas,
        "gaps": rep.gaps,
        "residuals": rep.residuals,
        "iterations": rep.iterations,
        "slope": rep.slope,
        "non_cauchy": rep.non_cauchy,
        "limit_at_half": float(u.values[run.half_node()]),
        "limit_range": float(np.ptp(u.values)),
    }
    msg = f"limit(0.5)={data['limit_at_half']:.6f} slope={rep.slope:.3f}"
    if rep.non_cauchy:
        msg += "; non-Cauchy sweep detected"
    return data, checks, msg


def cmd_barrier(run: Run, folder: Path):
    B = run.barriers()
    names = {"S": _write_matrix(B.S, folder, "S"), "h": _write_matrix(B.h, folder, "h")}
    z, y = 0, run.half_node()
    tri = K.triangle_violation(B.S)
    via = K.barrier_via_aubry(B.S, B.aubry)
    rng_h = float(np.ptp(B.h[B.h < K.BIG]))
    via_gap = float(np.max(np.abs(via - B.h))) / rng_h if rng_h > 0 else 0.0
    checks = {
        "triangle": _check(tri, 1e-9, tri <= 1e-9),
        "barrier_via_aubry": _check(via_gap, 0.03, via_gap <= 0.03, "sup gap relative to the range of h"),
    }
    data = {
        "c": B.c,
        "c_source": run.c_source,
        "tau": B.tau,
        "S_0_half": float(B.S[z, y]),
        "h_0_half": float(B.h[z, y]),
        "drift": B.drift,
        "aubry_tol": B.aubry.tol,
        "aubry_size": len(B.aubry),
        "files": names,
    }
    return data, checks, f"S(0,0.5)={data['S_0_half']:.6f} h(0,0.5)={data['h_0_half']:.6f} |A|={len(B.aubry)}"


def cmd_aubry(run: Run, folder: Path):
    B = run.barriers()
    xs = run.grid.coords()
    folder.mkdir(parents=True, exist_ok=True)
    with (folder / "aubry.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node"] + [f"x{k + 1}" for k in range(run.grid.dim)] + ["h_diag"])
        for z in B.aubry.nodes:
            w.writerow([int(z)] + [repr(float(v)) for v in xs[z]] + [repr(float(B.h[z, z]))])
    rep = St.aubry_equivalence(
        run.frozen, B.S, B.h, B.aubry, run.c_kernel, run.grid, tol=run.sc.checks.aubry_check_tol, scheme=run.sc.solver.scheme
    )
    bad_sol = [z for z, ok in rep.solution_passed.items() if not ok]
    bad_sup = [z for z, ok in rep.super_failed.items() if not ok]
    checks = {
        "aubry_nodes_are_solutions": _check(len(bad_sol), 0, not bad_sol),
        "strict_nodes_fail_super": _check(len(bad_sup), 0, not bad_sup),
    }
    data = {
        "nodes": rep.nodes,
        "points": [xs[z].tolist() for z in rep.nodes],
        "tol": B.aubry.tol,
        "fallback": B.aubry.fallback,
        "check_tol": rep.tol,
        "strict_nodes": len(rep.strict_nodes),
        "failures": {"solution": bad_sol, "super": bad_sup},
    }
    return data, checks, f"|A|={len(rep.nodes)} strict nodes tested={len(rep.strict_nodes)}"


def cmd_mather(run: Run, folder: Path):
    results = run.measures()
    for k, r in enumerate(results):
        r.measure.to_csv(folder / f"measure_{k}.csv")
    base = results[0]
    c = run.c_kernel
    viol = max(r.violation for r in results)
    h = run.grid.spacing
    origin = run.grid.coords()[int(np.argmax(run.frozen.G(run.grid.coords(), np.zeros((run.grid.size, run.grid.dim)))))]
    checks = {
        "closedness": _check(viol, 1e-8, viol <= 1e-8),
        "objective_vs_critical": _check(abs(base.objective + c), 0.05, abs(base.objective + c) <= 0.05),
    }
    data = {
        "objective": base.objective,
        "objectives": [r.objective for r in results],
        "violations": [r.violation for r in results],
        "support_sizes": [len(r.measure.support(1e-10)) for r in results],
        "iterations": [r.iterations for r in results],
        "n_measures": len(results),
        "c": c,
        "mass_near_argmax_V": base.measure.mass_near(tuple(origin), 2 * h, velocity=(0.0,) * run.grid.dim),
        "argmax_V": origin.tolist(),
        "tau": base.measure.tau,
    }
    return data, checks, f"objective={base.objective:.6f} violation={viol:.1e} measures={len(results)}"


def _denominator(run: Run):
    """f_u(x,0) or H_u(x,p,0) sampled on the grid; None when it depends on p."""
    G = run.base
    xs = run.grid.coords()
    ps = np.linspace(-G.momentum_box, G.momentum_box, 9)
    P = np.stack(np.meshgrid(*([ps] * run.grid.dim), indexing="ij"), -1).reshape(-1, run.grid.dim)
    d = G.u_derivative_at_zero(xs[:, None, :], P[None, :, :])
    if np.max(np.ptp(d, axis=1)) > 1e-9 * max(1.0, float(np.max(np.abs(d)))):
        return None
    return GridFunction(run.grid, d[:, 0])


def cmd_represent(run: Run, folder: Path):
    B = run.barriers()
    results = run.measures()
    sweep = run.sweep()
    if sweep.error is not None:
        raise St.SolverError(f"sweep stopped early: {sweep.error}")
    u0 = sweep.limit
    weight = _denominator(run)
    checks = {}
    data = {"c": run.c, "n_measures": len(results)}
    if weight is None:
        # p-dependent denominator: compare barriers of G and of the transformed G
        breve = St.frozen_model(Hm.breve_transform(run.base, run.c_kernel, run.grid))
        vb = run.sc.kernel.velocity_fraction * breve.momentum_box
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            Lb = Hm.legendre_transform(breve, run.grid, vb, run.sc.kernel.v_samples)
        kp = run.sc.kernel
        Bb = K.compute_barriers(Lb, 0.0, kp.tau, kp.t_max, kp.window)
        finite = (B.h < K.BIG) & (Bb.h < K.BIG)
        gap = float(np.max(np.abs(B.h[finite] - Bb.h[finite]))) / float(np.ptp(B.h[finite]))
        checks["barrier_identity"] = _check(gap, run.sc.checks.represent_tol, gap <= run.sc.checks.represent_tol)
        data["weight"] = "p-dependent"
        u_rep = M.representation_value(B.h, results)
    else:
        u_rep = M.weighted_representation(B.h, results, weight)
        data["weight"] = "constant" if np.ptp(weight.values) == 0 else "x-dependent"
    u_rep.to_csv(folder / "u_rep.csv")
    R = float(np.ptp(u0.values))
    gap = float(np.max(np.abs(u_rep.values - u0.values)))
    rel = gap / R if R > 0 else gap
    ints = [M.integrate(u0, r) for r in results]
    tol = run.sc.checks.represent_tol
    checks["sweep_limit_gap"] = _check(rel, tol, rel <= tol, "sup gap relative to the range of the sweep limit")
    checks["integral_against_measures"] = _check(max(ints), 0.02, max(ints) <= 0.02)
    data.update(
        {
            "u_rep_at_half": float(u_rep.values[run.half_node()]),
            "limit_at_half": float(u0.values[run.half_node()]),
            "sup_gap": gap,
            "relative_gap": rel,
            "integrals": ints,
        }
    )
    return data, checks, f"u_rep(0.5)={data['u_rep_at_half']:.6f} gap={100 * rel:.2f}% of range"


def cmd_verify(run: Run, folder: Path):
    ck = run.sc.checks
    model = run.model
    c = run.c
    from .grid import PeriodicGrid

    g32 = PeriodicGrid(run.grid.dim, ck.comparison_resolution)
    rng = np.random.default_rng(run.sc.mather.seed)
    lam = max(run.sc.lambda_schedule)
    passed_pairs = 0
    for _ in range(ck.comparison_pairs):
        a = rng.normal(size=g32.size)
        b = a + np.abs(rng.normal(size=g32.size))
        passed_pairs += St.comparison_order_check(model, GridFunction(g32, a), GridFunction(g32, b), lam, c, ck.comparison_steps)
    u_hi = St.solve_stationary(model, lam, c, run.config, u_init=GridFunction(g32, np.full(g32.size, 10.0)))
    u_lo = St.solve_stationary(model, lam, c, run.config, u_init=GridFunction(g32, np.full(g32.size, -10.0)))
    uniq = sup_norm_diff(u_hi, u_lo)

    sweep = run.sweep()
    if sweep.error is not None:
        raise St.SolverError(f"sweep stopped early: {sweep.error}")
    kp = run.sc.kernel
    ck_ = run.c_kernel
    step = K.one_step_kernel(run.lagrangian, ck_, kp.tau)
    stat = K.lax_oleinik_report(K.lax_oleinik_evolve(sweep.limit, step, ck_, kp.tau, ck.lo_steps))
    # constants are subsolutions only when G(x, 0) <= c everywhere; otherwise there is nothing to test
    xs = run.grid.coords()
    g0 = float(np.max(run.frozen.G(xs, np.zeros_like(xs))))
    const = None
    if g0 <= ck_ + 1e-12:
        const = K.lax_oleinik_report(
            K.lax_oleinik_evolve(GridFunction(run.grid, np.zeros(run.grid.size)), step, ck_, kp.tau, ck.lo_steps)
        )
    checks = {
        "comparison_pairs": _check(passed_pairs, ck.comparison_pairs, passed_pairs == ck.comparison_pairs),
        "uniqueness": _check(uniq, 2 * run.sc.solver.tol, uniq <= 2 * run.sc.solver.tol),
        "lax_oleinik_stationary": _check(
            stat.max_deviation, 2 * run.sc.scheme_tol, stat.max_deviation <= 2 * run.sc.scheme_tol
        ),
    }
    if const is not None:
        checks["lax_oleinik_constant_nondecreasing"] = _check(const.min_increment, 0.0, const.nondecreasing)
    data = {
        "c": c,
        "comparison_lambda": lam,
        "comparison_resolution": ck.comparison_resolution,
        "uniqueness_gap": uniq,
        "lo_steps": ck.lo_steps,
        "lo_max_deviation": stat.max_deviation,
        "lo_constant_min_increment": None if const is None else const.min_increment,
        "max_G_at_zero_momentum": g0,
    }
    return data, checks, f"comparison {passed_pairs}/{ck.comparison_pairs}, uniqueness gap {uniq:.1e}, LO drift {stat.max_deviation:.1e}"


def cmd_example42(run: Run, folder: Path):
    if run.sc.oscillating is None:
        raise ScenarioError("$.oscillating: example42 needs an oscillating scenario")
    rep = run.sweep()
    rep.to_csv(folder / "sweep.csv")
    if rep.error is not None:
        raise St.SolverError(f"sweep stopped early: {rep.error}")
    br = St.branch_report(run.model, rep)
    for k, (lam, b, u) in enumerate(zip(br.lambdas, br.branches, rep.solutions)):
        u.to_csv(folder / f"solution_{k:02d}_{b}.csv")
    checks = {
        "branch_targets": _check(max(br.excess), br.slack, br.within, "max over lambda of sup|u - target| - lambda"),
        "limit_separation": _check(br.limit_distance, br.fraction * br.target_distance, br.separated),
        "non_cauchy_detected": _check(rep.non_cauchy, True, rep.non_cauchy),
    }
    data = {
        "lambdas": br.lambdas,
        "branches": br.branches,
        "excess": br.excess,
        "limit_distance": br.limit_distance,
        "target_distance": br.target_distance,
        "gaps": rep.gaps,
    }
    msg = f"limit candidates {br.limit_distance:.4f} apart (sup|f-g|={br.target_distance:.4f})"
    if rep.non_cauchy:
        msg += "; non-Cauchy sweep detected (expected)"
    return data, checks, msg


HANDLERS = {
    "critical": cmd_critical,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "barrier": cmd_barrier,
    "aubry": cmd_aubry,
    "mather": cmd_mather,
    "represent": cmd_represent,
    "verify": cmd_verify,
    "example42": cmd_example42,
}


def run_scenario(scenario: Scenario, command: str, out_root: Path, stream=None) -> int:
    """Run one command, write its artifacts and print a one-line summary; returns the exit status."""
    if command not in HANDLERS:
        raise ScenarioError(f"command: unknown {command!r}")
    run = Run(scenario, out_root)
    folder = run.dir / command
    folder.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    data, checks, msg = HANDLERS[command](run, folder)
    ok = all(ch["passed"] for ch in checks.values())
    data.update(
        {
            "report_version": REPORT_VERSION,
            "scenario": scenario.name,
            "command": command,
            "resolution": scenario.resolution,
            "checks": checks,
            "passed": ok,
            "runtime_s": round(time.perf_counter() - t0, 3),
        }
    )
    dump_json(data, folder / f"{command}.json")
    verdicts = " ".join(f"{k}={'PASS' if v['passed'] else 'FAIL'}" for k, v in sorted(checks.items()))
    print(f"{scenario.name} {command}: {msg} | {verdicts} -> {'PASS' if ok else 'FAIL'}", file=stream)
    return 0 if ok else 2


# Report bundle -------------------------------------------------------------------------

# stable top-level names for the numbers the acceptance suite reads
BUNDLE_KEYS = {
    "c": ("critical", "c"),
    "critical_gap": ("critical", "gap"),
    "S_0_half": ("barrier", "S_0_half"),
    "h_0_half": ("barrier", "h_0_half"),
    "objective": ("mather", "objective"),
    "limit_at_half": ("sweep", "limit_at_half"),
    "u_rep_at_half": ("represent", "u_rep_at_half"),
    "represent_relative_gap": ("represent", "relative_gap"),
    "limit_distance": ("example42", "limit_distance"),
}


def export_report(run_dir: Path) -> dict:
    """Collect every <command>/<command>.json under ``run_dir`` into report.json."""
    run_dir = Path(run_dir)
    found, missing = {}, []
    for cmd in COMMANDS:
        p = run_dir / cmd / f"{cmd}.json"
        if p.exists():
            found[cmd] = json.loads(p.read_text())
        else:
            missing.append(str(p.relative_to(run_dir)) if run_dir.exists() else str(p))
    if not found:
        raise FileNotFoundError("no command artifacts found; missing: " + ", ".join(missing))
    bundle = {"report_version": REPORT_VERSION, "run_dir": run_dir.name, "commands": found, "absent": missing}
    for key, (cmd, field) in BUNDLE_KEYS.items():
        if cmd in found and field in found[cmd]:
            bundle[key] = found[cmd][field]
    bundle["passed"] = all(d.get("passed", False) for d in found.values())
    dump_json(bundle, run_dir / "report.json")
    return bundle


# Entry point ----------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for failed property checks here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="weakkam", description="Numerical weak-KAM experiments on flat tori.")
    p.add_argument("command", choices=COMMANDS + ("export-report",))
    p.add_argument("run_dir", nargs="?", help="run directory (export-report only)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="PATH", help="scenario JSON file")
    src.add_argument("--builtin", metavar="KEY", help=f"built-in scenario: {', '.join(BUILTINS)}")
    p.add_argument("--out", metavar="DIR", help=f"output root (default: ${OUT_ENV}, the scenario's output_dir, or ./runs)")
    p.add_argument("--threads", type=int, metavar="N", help="worker threads for min-plus products (default: all cores)")
    p.add_argument("--tol", type=float, metavar="X", help="solver residual tolerance")
    p.add_argument("--resolution", type=int, metavar="N", help="grid points per axis")
    p.add_argument("--lambda-schedule", metavar="CSV", help="comma-separated decreasing lambda values")
    return p


def _scenario_from_args(args) -> Scenario:
    if args.config is None and args.builtin is None:
        raise ScenarioError("$: one of --config or --builtin is required")
    sc = load_scenario(args.config if args.config is not None else args.builtin)
    if args.builtin is not None and args.builtin not in BUILTINS:
        raise ScenarioError(f"builtin: unknown key {args.builtin!r}")
    changes = {}
    if args.tol is not None:
        if not args.tol > 0:
            raise ScenarioError("--tol: must be positive")
        changes["solver"] = sc.solver.__class__(args.tol, sc.solver.max_iter, sc.solver.scheme)
    if args.resolution is not None:
        if args.resolution < 4:
            raise ScenarioError("--resolution: must be at least 4")
        changes["resolution"] = args.resolution
    if args.lambda_schedule is not None:
        try:
            lams = tuple(float(v) for v in args.lambda_schedule.split(",") if v.strip())
        except ValueError as exc:
            raise ScenarioError(f"--lambda-schedule: {exc}") from exc
        if not lams or any(v <= 0 for v in lams) or any(b >= a for a, b in zip(lams, lams[1:])):
            raise ScenarioError("--lambda-schedule: expected positive, strictly decreasing values")
        changes["lambda_schedule"] = lams
    return sc.with_(**changes) if changes else sc


def _out_root(args, sc: Scenario | None) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    if sc is not None and sc.output_dir:
        return Path(sc.output_dir)
    return Path("runs")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.threads is not None:
            K.set_threads(args.threads)
        if args.command == "export-report":
            if args.run_dir:
                run_dir = Path(args.run_dir)
            else:
                sc = _scenario_from_args(args)
                run_dir = _out_root(args, sc) / sc.name
            bundle = export_report(run_dir)
            print(f"report written to {run_dir / 'report.json'} ({len(bundle['commands'])} commands)")
            return 0
        sc = _scenario_from_args(args)
        return run_scenario(sc, args.command, _out_root(args, sc))
    except (ScenarioError, Hm.ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # compute failures surface the module's own message
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
