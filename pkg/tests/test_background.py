import numpy as np
import pytest
from hypothesis import given, strategies as st

from shockfit.background import (NoShockError, background_constants, critical_speed_squared,
                                 k2_identity_defect, rh_residuals, solve_normal_shock)
from shockfit.gas import FlowState, GasModel, IgnitionParams, bernoulli, entropy

from conftest import IGN, make_gas
from oracles import REF, normal_shock_ratios

MACHS = (1.2, 1.5, 2.0, 3.0, 5.0)
GAMMAS = (1.2, 1.4, 5.0 / 3.0)


def bg(gamma=1.4, M=2.0, q_e=1.0, p=1.0, rho=1.0, ign=IGN):
    gas = GasModel(gamma, 2.5, ign, q_e=q_e)
    return solve_normal_shock(gas, FlowState.from_mach(gas, p, rho, M), check_ignition=False)


def test_reference_shock(shock):
    assert shock.p_plus == pytest.approx(REF["p_plus"], rel=1e-10)
    assert shock.rho_plus == pytest.approx(REF["rho_plus"], rel=1e-10)
    assert shock.M_plus == pytest.approx(np.sqrt(REF["M_plus_sq"]), rel=1e-10)
    assert shock.q_plus == pytest.approx(REF["q_plus"], rel=1e-12)
    assert shock.T_plus == pytest.approx(REF["T_plus"], rel=1e-12)
    assert np.max(np.abs(rh_residuals(shock))) < 1e-12
    assert shock.mass_flux == pytest.approx(shock.rho_plus * shock.q_plus, rel=1e-14)


@pytest.mark.parametrize("gamma", GAMMAS)
@pytest.mark.parametrize("M", MACHS)
def test_rh_sweep(gamma, M):
    sh = bg(gamma, M)
    assert np.max(np.abs(rh_residuals(sh))) < 1e-11
    assert sh.M_minus > 1 > sh.M_plus
    assert sh.p_plus > sh.p_minus
    assert sh.downstream.S > sh.upstream.S
    pr, rr, M2 = normal_shock_ratios(gamma, M)
    assert sh.p_plus / sh.p_minus == pytest.approx(pr, rel=1e-12)
    assert sh.rho_plus / sh.rho_minus == pytest.approx(rr, rel=1e-12)
    assert sh.M_plus ** 2 == pytest.approx(M2, rel=1e-12)
    assert background_constants(sh).K1 > 0


@pytest.mark.parametrize("gamma", GAMMAS)
@pytest.mark.parametrize("M", MACHS)
def test_prandtl_relation(gamma, M):
    sh = bg(gamma, M)
    B = float(bernoulli(sh.gas, sh.upstream, include_reaction=False))
    c_star2 = 2.0 * (gamma - 1.0) / (gamma + 1.0) * B
    assert sh.q_minus * sh.q_plus == pytest.approx(c_star2, rel=1e-10)
    assert critical_speed_squared(sh) == pytest.approx(c_star2, rel=1e-12)


def test_weak_shock_limit():
    sh = bg(M=1.0 + 1e-4)
    assert 0 < sh.jump_p < 5e-4 * 1.4 * sh.p_minus * 4.0 / 2.4
    assert np.max(np.abs(rh_residuals(sh))) < 1e-12


def test_subsonic_inflow_rejected():
    with pytest.raises(NoShockError):
        bg(M=0.9)


@given(st.floats(0.05, 20.0), st.floats(0.05, 20.0))
def test_ratios_independent_of_units(p, rho):
    """Jump ratios and Mach numbers depend on (gamma, M-) only, not on mass-flux scaling."""
    a, b = bg(p=1.0, rho=1.0), bg(p=p, rho=rho)
    assert b.p_plus / b.p_minus == pytest.approx(a.p_plus / a.p_minus, rel=1e-12)
    assert b.T_plus / b.T_minus == pytest.approx(a.T_plus / a.T_minus, rel=1e-12)
    assert b.M_plus == pytest.approx(a.M_plus, rel=1e-12)


def test_reference_constants(shock, consts):
    assert consts.K1 == pytest.approx(REF["K1"], rel=1e-13)
    assert consts.K2 == pytest.approx(REF["K2"], rel=1e-12)
    assert consts.f1_plus == pytest.approx(REF["f1_plus"], rel=1e-12)
    assert consts.f1_minus == pytest.approx(REF["f1_minus"], rel=1e-12)
    # K1 = [p] ((gamma-1)/(gamma p+) + 1/(rho+ q+^2)) with rho+ q+^2 = 2.1
    assert consts.K1 == pytest.approx(3.5 * (0.4 / 6.3 + 1.0 / 2.1), rel=1e-13)
    assert abs(k2_identity_defect(shock, consts)) < 1e-15
    assert consts.K2 > 0


def test_no_heat_release_constants():
    sh = bg(q_e=0.0)
    c = background_constants(sh)
    assert c.K2 == 0.0
    assert c.f1_plus == c.f1_minus == c.f4_plus == c.f4_minus == 0.0
    # the species still burns: f5 = phi(T) Z / q carries no heat-release factor
    phi = sh.T_plus * np.exp(-1.0 / (sh.T_plus - 0.5))
    assert c.f5_plus == pytest.approx(phi / sh.q_plus, rel=1e-13)


def test_detonation_style_constants():
    """Cold upstream, ignited downstream: only the + sources are active."""
    ign = IgnitionParams(1.2, 1.0, 1.0, 1.0)
    sh = bg(ign=ign)
    c = background_constants(sh)
    assert sh.T_minus < 1.2 <= sh.T_plus
    assert c.f1_minus == c.f4_minus == c.f5_minus == 0.0
    assert c.f1_plus > 0 and c.f4_plus > 0 and c.f5_plus > 0
    T = sh.T_plus
    phi = T * np.exp(-1.0 / (T - 1.2))
    expected = 1.0 / (1.4 * 2.5) / T * sh.Z * phi / sh.momentum_flux(+1)
    assert c.K2 == pytest.approx(expected, rel=1e-13)


def test_ignition_check_rejects_cold_inflow():
    from shockfit.gas import DomainError
    gas = GasModel(1.4, 2.5, IgnitionParams(1.2, 1.0, 1.0, 1.0), q_e=1.0, kappa=0.01)
    with pytest.raises(DomainError, match="ignition"):
        solve_normal_shock(gas, FlowState.from_mach(gas, 1.0, 1.0, 2.0))


@pytest.mark.parametrize("gamma", GAMMAS)
@pytest.mark.parametrize("M", MACHS)
def test_k2_identity_sweep(gamma, M):
    sh = bg(gamma, M)
    c = background_constants(sh)
    assert abs(k2_identity_defect(sh, c)) < 1e-13 * max(1.0, abs(c.K2))
