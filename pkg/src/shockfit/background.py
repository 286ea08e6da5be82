"""Plane normal shock between uniform states and the constants derived from it."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .gas import (FlowState, GasModel, DomainError, density, entropy, enthalpy,
                  ignition_phi, mach, sound_speed, source_terms, temperature)


class NoShockError(DomainError):
    """Upstream state is not supersonic, so no normal shock exists."""


class ShockSolveError(RuntimeError):
    """The Newton polish of the jump conditions failed to converge."""


@dataclass(frozen=True)
class BackgroundShock:
    gas: GasModel
    upstream: FlowState
    downstream: FlowState
    mass_flux: float

    def _side(self, sign):
        return self.downstream if sign > 0 else self.upstream

    @property
    def p_minus(self):
        return self.upstream.p

    @property
    def p_plus(self):
        return self.downstream.p

    @property
    def q_minus(self):
        return self.upstream.q

    @property
    def q_plus(self):
        return self.downstream.q

    @property
    def rho_minus(self):
        return density(self.gas, self.upstream.p, self.upstream.S)

    @property
    def rho_plus(self):
        return density(self.gas, self.downstream.p, self.downstream.S)

    @property
    def T_minus(self):
        return temperature(self.gas, self.p_minus, self.rho_minus)

    @property
    def T_plus(self):
        return temperature(self.gas, self.p_plus, self.rho_plus)

    @property
    def c_minus(self):
        return sound_speed(self.gas, self.p_minus, self.rho_minus)

    @property
    def c_plus(self):
        return sound_speed(self.gas, self.p_plus, self.rho_plus)

    @property
    def M_minus(self):
        return mach(self.gas, self.upstream)

    @property
    def M_plus(self):
        return mach(self.gas, self.downstream)

    @property
    def Z(self):
        return self.upstream.Z

    @property
    def jump_p(self):
        return self.p_plus - self.p_minus

    def momentum_flux(self, sign):
        U = self._side(sign)
        return density(self.gas, U.p, U.S) * U.q ** 2

    def elliptic_coefficient(self):
        """(1/(rho q)) (1 - M^2)/(rho q^2) on the subsonic side, positive."""
        return (1.0 - self.M_plus ** 2) / (self.mass_flux * self.momentum_flux(+1))

    def wave_coefficient(self):
        """(1/(rho q)) (M^2 - 1)/(rho q^2) on the supersonic side, positive."""
        return (self.M_minus ** 2 - 1.0) / (self.mass_flux * self.momentum_flux(-1))


@dataclass(frozen=True)
class BackgroundConstants:
    K1: float
    K2: float
    f1_plus: float
    f1_minus: float
    f4_plus: float
    f4_minus: float
    f5_plus: float
    f5_minus: float


def _rh_vector(gas, p, rho, q, targets):
    m, mom, B = targets
    return np.array([rho * q - m,
                     rho * q * q + p - mom,
                     0.5 * q * q + enthalpy(gas, p, rho) - B])


def rh_residuals(shock: BackgroundShock) -> np.ndarray:
    """Scaled residuals of mass, momentum, energy and species jumps."""
    gas = shock.gas
    out = []
    for sign in (-1, +1):
        U = shock._side(sign)
        rho = density(gas, U.p, U.S)
        out.append(np.array([rho * U.q, rho * U.q ** 2 + U.p,
                             0.5 * U.q ** 2 + enthalpy(gas, U.p, rho), U.Z]))
    minus, plus = out
    scale = np.maximum(np.abs(minus), 1.0)
    return (plus - minus) / scale


def solve_normal_shock(gas: GasModel, upstream: FlowState,
                       check_ignition: bool = True) -> BackgroundShock:
    """Downstream state of a plane normal shock, closed form plus one Newton polish.

    Physical states are left in their given units; the mass flux rho*q is
    recorded so that Lagrangian formulas can divide by it explicitly.
    """
    if abs(upstream.theta) > 0:
        raise DomainError("background upstream state must have theta = 0")
    upstream.validate(gas)
    g = gas.gamma
    M = mach(gas, upstream)
    if not M > 1:
        raise NoShockError(f"upstream Mach number {M:.6g} is not supersonic")
    rho_m = density(gas, upstream.p, upstream.S)
    if check_ignition and gas.q_e > 0 and gas.kappa > 0:
        T_m = temperature(gas, upstream.p, rho_m)
        if T_m < gas.ignition.T0:
            raise DomainError(
                f"upstream temperature {T_m:.6g} is below ignition T0 = {gas.ignition.T0:.6g}")

    p = upstream.p * (1.0 + 2.0 * g / (g + 1.0) * (M * M - 1.0))
    rho = rho_m * (g + 1.0) * M * M / ((g - 1.0) * M * M + 2.0)
    m = rho_m * upstream.q
    q = m / rho
    targets = (m, m * upstream.q + upstream.p,
               0.5 * upstream.q ** 2 + enthalpy(gas, upstream.p, rho_m))

    r = _rh_vector(gas, p, rho, q, targets)
    jac = np.array([
        [0.0, q, rho],
        [1.0, q * q, 2 * rho * q],
        [g / ((g - 1.0) * rho), -g * p / ((g - 1.0) * rho * rho), q],
    ])
    dp, drho, dq = np.linalg.solve(jac, -r)
    p, rho, q = p + dp, rho + drho, q + dq
    r = _rh_vector(gas, p, rho, q, targets)
    scale = np.array([abs(targets[0]), abs(targets[1]), abs(targets[2])])
    if not np.all(np.abs(r) <= 1e-12 * scale):
        raise ShockSolveError(f"normal-shock residual {r} did not converge")

    downstream = FlowState(p, 0.0, q, entropy(gas, p, rho), upstream.Z)
    return BackgroundShock(gas, upstream, downstream, m)


def background_constants(shock: BackgroundShock) -> BackgroundConstants:
    gas = shock.gas
    g = gas.gamma
    f1m, f4m, f5m = (float(v) for v in source_terms(gas, shock.upstream))
    f1p, f4p, f5p = (float(v) for v in source_terms(gas, shock.downstream))
    jp = shock.jump_p
    K1 = jp * ((g - 1.0) / (g * shock.p_plus) + 1.0 / shock.momentum_flux(+1))
    phi_p = ignition_phi(gas, shock.T_plus)
    phi_m = ignition_phi(gas, shock.T_minus)
    K2 = gas.q_e * shock.Z / (g * gas.c_v * shock.T_plus) * (
        phi_p / shock.momentum_flux(+1) - phi_m / shock.momentum_flux(-1))
    if gas.q_e > 0 and shock.Z > 0 and phi_p > 0 and not K2 > 0:
        warnings.warn(f"K2 = {K2:.6g} is not positive for this reactive background",
                      RuntimeWarning, stacklevel=2)
    return BackgroundConstants(float(K1), float(K2), f1p, f1m, f4p, f4m, f5p, f5m)


def k2_identity_defect(shock: BackgroundShock, constants: BackgroundConstants) -> float:
    """K2 - (f1+ - (T-/T+) f1-), which vanishes identically."""
    ratio = shock.T_minus / shock.T_plus
    return float(constants.K2 - (constants.f1_plus - ratio * constants.f1_minus))


def critical_speed_squared(shock: BackgroundShock) -> float:
    """c*^2 = 2 (gamma-1)/(gamma+1) B with B excluding the reaction term."""
    gas = shock.gas
    U = shock.upstream
    B = 0.5 * U.q ** 2 + enthalpy(gas, U.p, shock.rho_minus)
    return 2.0 * (gas.gamma - 1.0) / (gas.gamma + 1.0) * B
