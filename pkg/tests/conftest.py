import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from shockfit.background import background_constants, solve_normal_shock
from shockfit.config import RunConfig
from shockfit.gas import FlowState, GasModel, IgnitionParams
from shockfit.locator import NozzlePerturbation, Profile

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")

IGN = IgnitionParams(0.5, 1.0, 1.0, 1.0)


def make_gas(gamma=1.4, q_e=1.0, kappa=0.0):
    return GasModel(gamma, 2.5, IGN, q_e=q_e, kappa=kappa)


@pytest.fixture(scope="session")
def gas():
    return make_gas()


@pytest.fixture(scope="session")
def shock(gas):
    return solve_normal_shock(gas, FlowState.from_mach(gas, 1.0, 1.0, 2.0, Z=1.0))


@pytest.fixture(scope="session")
def consts(shock):
    return background_constants(shock)


@pytest.fixture(scope="session")
def cubic():
    return Profile.polynomial([0.0, 0.0, 0.0, 1.0])


def nozzle(theta=None, ps=0.0, pk=0.0, sigma=0.0, kappa=0.0, L=1.0):
    theta = theta if theta is not None else Profile.polynomial([0.0, 0.0, 0.0, 1.0])
    as_profile = lambda v: v if isinstance(v, Profile) else Profile.constant(v)
    return NozzlePerturbation(L, theta, as_profile(ps), as_profile(pk), sigma, kappa)


@pytest.fixture(scope="session")
def default_cfg():
    return RunConfig.default()


def max_abs(a):
    return float(np.max(np.abs(a)))


# ---------------------------------------------------------------- acceptance report

_ACCEPT = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """record(criterion, part, ok, detail) collects one entry per acceptance sub-check."""
    book = request.config.stash.setdefault(_ACCEPT, {})

    def record(criterion, part, ok, detail=""):
        book.setdefault(criterion, []).append((part, bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, config):
    book = config.stash.get(_ACCEPT, None)
    if not book:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(book):
        parts = book[crit]
        ok = all(p[1] for p in parts)
        bad = [p for p in parts if not p[1]]
        detail = "; ".join(f"{n}: {d}" for n, _, d in (bad or parts))
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {crit}: {detail}")
