"""Dense two-phase tableau simplex for  min c.x  s.t.  A x = b, x >= 0.

Entering columns follow Dantzig's most-negative reduced cost; after a run of
degenerate pivots the solver switches to Bland's smallest-index rule, which
cannot cycle, and returns to Dantzig after the next nondegenerate pivot.
Phase 2 runs on a slightly shifted right-hand side so that the flux-balance
LPs, which are massively degenerate, do not stall on ties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LPError(RuntimeError):
    pass


class Infeasible(LPError):
    pass


class Unbounded(LPError):
    pass


@dataclass
class SimplexResult:
    x: np.ndarray
    objective: float
    iterations: int
    basis: np.ndarray


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    factor = T[:, col].copy()
    factor[row] = 0.0
    touch = np.nonzero(factor)[0]  # tableaux of flux LPs are mostly zero in the pivot column
    T[touch] -= np.outer(factor[touch], T[row])


def _iterate(T, basis, allowed, tol, max_iter, rule, degenerate_limit, counter, rhs=-1):
    """Pivot until no reduced cost in columns [0, allowed) is below -tol.

    ``rhs`` selects the column used by the ratio test; the tableau may carry an
    extra right-hand side that is updated by the same pivots.
    """
    m = T.shape[0] - 1
    degenerate_run = 0
    while True:
        if counter[0] >= max_iter:
            raise LPError(f"simplex exceeded {max_iter} pivots")
        d = T[-1, :allowed]
        neg = np.nonzero(d < -tol)[0]
        if len(neg) == 0:
            return
        use_bland = rule == "bland" or degenerate_run >= degenerate_limit
        col = int(neg[0]) if use_bland else int(neg[np.argmin(d[neg])])
        a = T[:m, col]
        rows = np.nonzero(a > tol)[0]
        if len(rows) == 0:
            raise Unbounded(f"objective unbounded below along column {col}")
        ratios = T[rows, rhs] / a[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol * max(1.0, abs(best))]
        row = int(ties[np.argmin(basis[ties])])  # smallest basic index among ties
        degenerate_run = degenerate_run + 1 if best <= tol else 0
        _pivot(T, row, col)
        basis[row] = col
        counter[0] += 1


def simplex(
    c,
    A_eq,
    b_eq,
    tol: float = 1e-9,
    max_iter: int = 100_000,
    rule: str = "dantzig",
    degenerate_limit: int = 50,
    perturb: float = 1e-7,
    seed: int = 0,
) -> SimplexResult:
    """Solve the standard-form LP. ``rule`` is "dantzig" (with the Bland fallback) or "bland".

    ``perturb`` > 0 shifts the phase-2 basic values by tiny positive amounts
    (deterministic ``seed``) and reports the vertex for the exact data.
    """
    if rule not in ("dantzig", "bland"):
        raise ValueError(f"unknown pivot rule {rule!r}")
    c = np.asarray(c, dtype=float)
    A = np.array(A_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("shape mismatch between c, A_eq and b_eq")
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1

    # phase 1: artificial basis
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = np.arange(n, n + m)
    counter = [0]
    _iterate(T, basis, n + m, tol, max_iter, rule, degenerate_limit, counter)
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if -T[-1, -1] > tol * scale * 10:
        raise Infeasible(f"phase 1 ended with infeasibility {-T[-1, -1]:.3g}")

    # drive remaining artificials out of the basis; drop redundant rows
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] >= n:
            cand = np.nonzero(np.abs(T[r, :n]) > tol)[0]
            if len(cand):
                _pivot(T, r, int(cand[0]))
                basis[r] = int(cand[0])
            else:
                keep[r] = False
    rows = np.nonzero(keep)[0]
    k = len(rows)
    # columns: n structural, exact rhs, perturbed rhs
    T2 = np.zeros((k + 1, n + 2))
    T2[:-1, :n] = T[rows, :n]
    T2[:-1, n] = T[rows, -1]
    T2[:-1, n + 1] = T[rows, -1]
    basis = basis[rows]
    T2[-1, :n] = c
    T2[-1] -= c[basis] @ T2[:-1]
    if perturb > 0:
        # positive shift of the basic values = consistent rhs b + B r, which
        # removes the degenerate ties that make this phase stall
        rng = np.random.default_rng(seed)
        T2[:-1, n + 1] += perturb * scale * rng.uniform(0.5, 1.0, k)
    _iterate(T2, basis, n, tol, max_iter, rule, degenerate_limit, counter, rhs=n + 1)
    xb = T2[:-1, n]
    if perturb > 0 and np.any(xb < -1e-7 * scale):
        # the perturbed optimum is not a feasible vertex for the exact rhs: redo unperturbed
        return simplex(c, A_eq, b_eq, tol, max_iter, rule, degenerate_limit, perturb=0.0)
    x = np.zeros(n)
    x[basis] = np.maximum(xb, 0.0)
    return SimplexResult(x, float(c @ x), counter[0], basis.copy())
