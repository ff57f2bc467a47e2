import warnings

import numpy as np
import pytest

from weakkam import hamiltonian as Hm
from weakkam import kernel as K
from weakkam import mather as M
from weakkam import stationary as St
from weakkam.scenarios import builtin

# filled by the acceptance tests, echoed once at the end of the session
ACCEPTANCE: dict = {}

TWO_OVER_PI = 2.0 / np.pi


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


class Lab:
    """Lazily computed objects for one built-in scenario, shared across test modules."""

    def __init__(self, key):
        self.sc = builtin(key)
        self.grid = self.sc.grid
        self.model = self.sc.model
        self.G = St.frozen_model(self.model)
        self.config = St.SolverConfig()
        self._c = {}

    def _get(self, k, fn):
        if k not in self._c:
            self._c[k] = fn()
        return self._c[k]

    @property
    def L(self):
        def build():
            vb = self.sc.kernel.velocity_fraction * self.G.momentum_box
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return Hm.legendre_transform(self.G, self.grid, vb, self.sc.kernel.v_samples)

        return self._get("L", build)

    def critical(self):
        return self._get(
            "crit",
            lambda: St.critical_value(
                self.model, self.config, list(self.sc.critical_schedule), self.grid, tau=self.sc.kernel.tau, strict=False
            ),
        )

    def barriers(self, c=1.0):
        kp = self.sc.kernel
        return self._get(("B", c), lambda: K.compute_barriers(self.L, c, kp.tau, kp.t_max, kp.window))

    def sweep(self, c=1.0, model=None):
        return self._get(
            ("sweep", c),
            lambda: St.lambda_sweep(model or self.model, c, list(self.sc.lambda_schedule), self.config, self.grid),
        )

    def measures(self):
        return self._get("mu", lambda: M.sample_mather_measures(self.L, "hat", n_perturb=self.sc.mather.perturbations))


_LABS = {}


def lab(key) -> Lab:
    if key not in _LABS:
        _LABS[key] = Lab(key)
    return _LABS[key]


@pytest.fixture(scope="session")
def pendulum():
    return lab("pendulum")


@pytest.fixture(scope="session")
def double_well():
    return lab("double-well")


@pytest.fixture(scope="session")
def app1():
    return lab("app1-cubic")


@pytest.fixture(scope="session")
def app2():
    return lab("app2-paper")


@pytest.fixture(scope="session")
def pendulum2d():
    return lab("pendulum-2d")
