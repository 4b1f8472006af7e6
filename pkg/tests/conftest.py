import time

import numpy as np
import pytest

from sfwot.flow import SfwConfig, default_initial, reference_run, run
from sfwot.uav import build_scenario
from sfwot.verify import desk_config

SWEEP_ALPHAS = (0.01, 0.02, 0.04)
SWEEP_HORIZON = 2.0

_CRITERIA = {}


def record_criterion(number, title, passed, detail=""):
    _CRITERIA[number] = (title, bool(passed), detail)


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {title}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def desk():
    return build_scenario(desk_config())


@pytest.fixture(scope="session")
def desk_reference(desk):
    P0 = default_initial(desk.kernel)
    v_star, final, trace = reference_run(P0, desk.kernel, desk.model)
    return v_star, final, trace


@pytest.fixture(scope="session")
def desk_sweep(desk, desk_reference):
    """Fixed-horizon runs at each step size, gaps against the reference energy."""
    v_star = desk_reference[0]
    P0 = default_initial(desk.kernel)
    out = {}
    for a in SWEEP_ALPHAS:
        cfg = SfwConfig(alpha=a, max_outer=int(round(SWEEP_HORIZON / a)), outer_tol=0.0, v_ref=v_star)
        t0 = time.perf_counter()
        final, trace = run(P0, desk.kernel, desk.model, cfg)
        out[a] = (final, trace, time.perf_counter() - t0)
    return out
