import numpy as np
import pytest
from hypothesis import given, strategies as st

from shockfit.gas import (DomainError, FlowState, GasModel, IgnitionParams, bernoulli, density,
                          enthalpy, entropy, ignition_phi, internal_energy, jump_functions, mach,
                          sound_speed, source_terms, temperature)
from shockfit.linfield import transfer_coefficients
from shockfit.verify import jacobian_fd

from conftest import IGN, make_gas


def test_gas_invariants_enforced():
    with pytest.raises(DomainError, match="gamma"):
        GasModel(1.0, 2.5, IGN)
    with pytest.raises(DomainError, match="c_v"):
        GasModel(1.4, 0.0, IGN)
    with pytest.raises(DomainError, match="q_e"):
        GasModel(1.4, 2.5, IGN, q_e=-1.0)
    with pytest.raises(DomainError, match="kappa"):
        GasModel(1.4, 2.5, IGN, kappa=-1e-3)
    with pytest.raises(DomainError, match="gas_constant"):
        GasModel(1.4, 2.5, IGN, gas_constant=2.0)
    assert GasModel(1.4, 2.5, IGN).gas_constant == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(DomainError, match="T0"):
        IgnitionParams(0.0, 1.0, 1.0, 1.0)


def test_flow_state_validation(gas):
    good = FlowState.from_density(gas, 1.0, 1.0, 1.5)
    assert good.validate(gas) is good
    for bad in (FlowState.from_density(gas, 1.0, 1.0, -1.0),
                FlowState.from_density(gas, 1.0, 1.0, 1.0, Z=1.5),
                FlowState.from_density(gas, 1.0, 1.0, 1.0, theta=2.0),
                FlowState(-1.0, 0.0, 1.0, 0.0, 1.0)):
        with pytest.raises(DomainError):
            bad.validate(gas)


def test_density_examples():
    gas = make_gas()
    S0 = np.log(1.0 / 0.4) * 2.5
    assert density(gas, 1.0, S0) == pytest.approx(1.0, rel=1e-14)
    assert density(gas, 2.0 ** 1.4, S0) == pytest.approx(2.0, rel=1e-14)
    rho = density(gas, 3.0, 1.0)
    assert 0.4 * np.exp(1.0 / 2.5) * rho ** 1.4 == pytest.approx(3.0, rel=1e-12)


def test_thermo_examples(gas):
    assert temperature(gas, 1.0, 1.0) == pytest.approx(1.0)
    assert temperature(gas, 4.5, 8.0 / 3.0) == pytest.approx(1.6875, rel=1e-15)
    assert temperature(gas, 2.0, 0.7) == pytest.approx(2.0 * temperature(gas, 1.0, 0.7))
    assert sound_speed(gas, 1.0, 1.0) == pytest.approx(1.183216, abs=1e-6)
    c = sound_speed(gas, 1.0, 1.0)
    assert mach(gas, FlowState.from_density(gas, 1.0, 1.0, c)) == pytest.approx(1.0, rel=1e-15)
    assert mach(gas, FlowState.from_density(gas, 1.0, 1.0, 2 * np.sqrt(1.4))) == pytest.approx(2.0)
    assert internal_energy(gas, 1.0, 1.0) == pytest.approx(2.5)
    assert enthalpy(gas, 1.0, 1.0) == pytest.approx(3.5)


def test_bernoulli_includes_heat_release(gas):
    U = FlowState.from_density(gas, 1.0, 1.0, 2.0, Z=0.5)
    assert bernoulli(gas, U) == pytest.approx(2.0 + 3.5 + 0.5)
    assert bernoulli(gas, U, include_reaction=False) == pytest.approx(5.5)


def test_ignition_phi_examples():
    assert ignition_phi(make_gas(), 0.25) == 0.0
    assert ignition_phi(make_gas(), 0.5) == 0.0
    gas = GasModel(1.4, 2.5, IgnitionParams(1.0, 1.0, 1.0, 1.0))
    assert ignition_phi(gas, 2.0) == pytest.approx(2.0 * np.exp(-1.0), rel=1e-14)
    # just above T0 the exponent underflows and is clamped to zero
    assert ignition_phi(gas, 1.0 + 1e-4) == 0.0
    np.testing.assert_array_equal(ignition_phi(gas, np.array([0.5, 1.0])), [0.0, 0.0])


def test_ignition_phi_continuous_and_monotone():
    gas = make_gas()
    T = np.linspace(0.5, 0.5 + 1e-3, 50)
    assert np.all(ignition_phi(gas, T) < 1e-300)
    # derivative condition E/(R0 (T-T0)^2) >= -a/T holds; phi' > 0 for all T > T0 here
    T = np.linspace(0.5001, 10.0, 5000)
    assert np.all(np.diff(ignition_phi(gas, T)) >= 0.0)


def test_source_terms(gas):
    burned = FlowState.from_density(gas, 1.0, 1.0, 2.0, Z=0.0)
    assert source_terms(gas, burned) == (0.0, 0.0, 0.0)
    cold = FlowState.from_density(gas, 0.3, 1.0, 2.0)   # T = 0.3 < T0
    assert source_terms(gas, cold) == (0.0, 0.0, 0.0)
    U = FlowState(2.0, 0.1, 1.3, entropy(gas, 2.0, 1.1), 0.8)
    f1, f4, f5 = source_terms(gas, U)
    rho = density(gas, U.p, U.S)
    assert f1 / f4 == pytest.approx(np.cos(0.1) / (1.4 * 2.5 * rho * 1.3), rel=1e-13)
    T = temperature(gas, U.p, rho)
    assert f5 == pytest.approx(float(ignition_phi(gas, T)) * 0.8 / (1.3 * np.cos(0.1)))


states = st.builds(
    lambda p, rho, q, th, Z: (p, rho, q, th, Z),
    st.floats(0.1, 10.0), st.floats(0.1, 10.0), st.floats(0.1, 5.0),
    st.floats(-1.2, 1.2), st.floats(0.0, 1.0))


@given(st.floats(0.1, 50.0), st.floats(-5.0, 5.0), st.floats(1.05, 3.0))
def test_density_entropy_roundtrip(p, S, gamma):
    gas = make_gas(gamma)
    rho = density(gas, p, S)
    assert entropy(gas, p, rho) == pytest.approx(S, rel=1e-12, abs=1e-12)
    assert density(gas, p, entropy(gas, p, rho)) == pytest.approx(rho, rel=1e-12)


@given(states, st.floats(-2.0, 2.0))
def test_no_jump_no_residual(s, slope):
    gas = make_gas()
    p, rho, q, th, Z = s
    U = FlowState.from_density(gas, p, rho, q, th, Z)
    assert np.all(np.array(jump_functions(gas, U, U, slope)) == 0.0)


def test_background_pair_has_zero_jump(shock):
    G = jump_functions(shock.gas, shock.downstream, shock.upstream, 0.0)
    assert np.max(np.abs(G)) < 1e-10


def test_pressure_perturbation_matches_transfer_coefficient(shock):
    gas = shock.gas
    Up = shock.downstream
    dp = 1e-3
    bumped = FlowState(Up.p + dp, Up.theta, Up.q, Up.S, Up.Z)
    G2 = jump_functions(gas, bumped, shock.upstream, 0.0)[1]
    beta = transfer_coefficients(shock).beta_plus[1, 0]
    assert G2 / dp == pytest.approx(beta, rel=1e-2)


def test_jacobian_matches_transfer_coefficients(shock):
    tc = transfer_coefficients(shock)
    for side, beta in ((+1, tc.beta_plus), (-1, tc.beta_minus)):
        J = jacobian_fd(shock.gas, shock.downstream, shock.upstream, side, h=1e-6)
        scale = np.max(np.abs(beta), axis=1, keepdims=True)
        np.testing.assert_array_less(np.abs(J - beta) / scale, 1e-6)


def test_no_jump_thousand_random_states():
    gas = make_gas()
    rng = np.random.default_rng(7)
    n = 1000
    U = FlowState.from_density(gas, rng.uniform(0.1, 10, n), rng.uniform(0.1, 10, n),
                               rng.uniform(0.1, 5, n), rng.uniform(-1.2, 1.2, n),
                               rng.uniform(0, 1, n))
    assert np.all(np.array(jump_functions(gas, U, U, rng.normal(size=n))) == 0.0)
