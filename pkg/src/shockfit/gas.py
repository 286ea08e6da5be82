"""Polytropic gas relations, Arrhenius ignition and reacting Euler source terms.

All functions accept scalars or numpy arrays. A FlowState may hold arrays
of equal shape, which is how the field solvers evaluate them pointwise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# exponent beyond which exp(-x) is treated as zero
_UNDERFLOW_EXPONENT = 700.0


class DomainError(ValueError):
    """Raised when an argument lies outside the physical domain."""


@dataclass(frozen=True)
class IgnitionParams:
    T0: float
    a: float
    activation_energy: float
    R0: float

    def __post_init__(self):
        for name in ("T0", "a", "activation_energy", "R0"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise DomainError(f"ignition.{name} must be positive, got {value!r}")

    @property
    def activation_temperature(self) -> float:
        return self.activation_energy / self.R0


@dataclass(frozen=True)
class GasModel:
    gamma: float
    c_v: float
    ignition: IgnitionParams
    q_e: float = 0.0
    kappa: float = 0.0
    gas_constant: float | None = None

    def __post_init__(self):
        if not self.gamma > 1:
            raise DomainError(f"gamma must be > 1, got {self.gamma!r}")
        if not self.c_v > 0:
            raise DomainError(f"c_v must be positive, got {self.c_v!r}")
        if self.q_e < 0:
            raise DomainError(f"q_e must be >= 0, got {self.q_e!r}")
        if self.kappa < 0:
            raise DomainError(f"kappa must be >= 0, got {self.kappa!r}")
        R = (self.gamma - 1.0) * self.c_v
        if self.gas_constant is None:
            object.__setattr__(self, "gas_constant", R)
        elif abs(self.gas_constant - R) > 1e-12 * R:
            raise DomainError(
                f"gas_constant {self.gas_constant!r} violates R = (gamma-1)*c_v = {R!r}")

    def with_kappa(self, kappa: float) -> "GasModel":
        return GasModel(self.gamma, self.c_v, self.ignition, self.q_e, kappa,
                        self.gas_constant)


@dataclass(frozen=True)
class FlowState:
    """Primitive state U = (p, theta, q, S, Z)."""

    p: float
    theta: float
    q: float
    S: float
    Z: float

    @classmethod
    def from_density(cls, gas: GasModel, p, rho, q, theta=0.0, Z=1.0) -> "FlowState":
        return cls(p, theta, q, entropy(gas, p, rho), Z)

    @classmethod
    def from_mach(cls, gas: GasModel, p, rho, mach, theta=0.0, Z=1.0) -> "FlowState":
        return cls.from_density(gas, p, rho, mach * sound_speed(gas, p, rho), theta, Z)

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.theta, self.q, self.S, self.Z], dtype=float)

    @classmethod
    def from_array(cls, u) -> "FlowState":
        return cls(*(u[k] for k in range(5)))

    def validate(self, gas: GasModel) -> "FlowState":
        p, theta, q, Z = (np.asarray(v, dtype=float) for v in (self.p, self.theta, self.q, self.Z))
        if not np.all(p > 0):
            raise DomainError("pressure must be positive")
        if not np.all(q > 0):
            raise DomainError("speed must be positive")
        if not np.all((Z >= 0) & (Z <= 1)):
            raise DomainError("Z must lie in [0, 1]")
        if not np.all(np.abs(theta) < np.pi / 2):
            raise DomainError("|theta| must be below pi/2")
        rho = density(gas, self.p, self.S)
        if not np.all(np.isfinite(rho) & (rho > 0)):
            raise DomainError("density is not positive and finite")
        return self


def density(gas: GasModel, p, S):
    p = np.asarray(p, dtype=float)
    if not np.all(p > 0):
        raise DomainError("density requires p > 0")
    rho = (p / ((gas.gamma - 1.0) * np.exp(np.asarray(S) / gas.c_v))) ** (1.0 / gas.gamma)
    return rho[()] if rho.ndim == 0 else rho


def entropy(gas: GasModel, p, rho):
    """Inverse of density: S such that p = (gamma-1) e^{S/c_v} rho^gamma."""
    return gas.c_v * np.log(np.asarray(p) / ((gas.gamma - 1.0) * np.asarray(rho) ** gas.gamma))


def temperature(gas: GasModel, p, rho):
    return p / (rho * gas.gas_constant)


def sound_speed(gas: GasModel, p, rho):
    return np.sqrt(gas.gamma * np.asarray(p) / rho)


def mach(gas: GasModel, state: FlowState):
    rho = density(gas, state.p, state.S)
    return state.q / sound_speed(gas, state.p, rho)


def internal_energy(gas: GasModel, p, rho):
    return p / ((gas.gamma - 1.0) * rho)


def enthalpy(gas: GasModel, p, rho):
    return gas.gamma * p / ((gas.gamma - 1.0) * rho)


def bernoulli(gas: GasModel, state: FlowState, include_reaction: bool = True):
    """q^2/2 + gamma p/((gamma-1) rho) + q_e Z, conserved along streamlines."""
    rho = density(gas, state.p, state.S)
    B = 0.5 * np.asarray(state.q) ** 2 + enthalpy(gas, state.p, rho)
    if include_reaction:
        B = B + gas.q_e * np.asarray(state.Z)
    return B


def ignition_phi(gas: GasModel, T):
    """Arrhenius ignition function, zero up to and including T0."""
    ign = gas.ignition
    T = np.asarray(T, dtype=float)
    dT = T - ign.T0
    active = dT > 0
    x = np.where(active, ign.activation_temperature / np.where(active, dT, 1.0), np.inf)
    live = active & (x <= _UNDERFLOW_EXPONENT)
    out = np.zeros_like(T)
    out[live] = T[live] ** ign.a * np.exp(-x[live])
    return out[()] if out.ndim == 0 else out


def source_terms(gas: GasModel, state: FlowState):
    """Return (f1, f4, f5) of the non-divergence reacting system."""
    cos_t = np.cos(state.theta)
    if not np.all(cos_t > 0):
        raise DomainError("source terms need cos(theta) > 0")
    rho = density(gas, state.p, state.S)
    T = temperature(gas, state.p, rho)
    phi = ignition_phi(gas, T)
    heat = phi / T * gas.q_e * state.Z
    f1 = heat / (gas.gamma * gas.c_v * rho * state.q ** 2)
    f4 = heat / (state.q * cos_t)
    f5 = phi * state.Z / (state.q * cos_t)
    return f1, f4, f5


def jump_functions(gas: GasModel, U_plus: FlowState, U_minus: FlowState, psi_slope=0.0):
    """Residuals (G1..G5) of the Lagrangian Rankine-Hugoniot conditions, [w] = w+ - w-."""

    def parts(U):
        rho = density(gas, U.p, U.S)
        u1 = U.q * np.cos(U.theta)
        u2 = U.q * np.sin(U.theta)
        return rho, u1, u2

    rp, u1p, u2p = parts(U_plus)
    rm, u1m, u2m = parts(U_minus)
    jp = U_plus.p - U_minus.p
    ju2 = u2p - u2m
    G1 = (1.0 / (rp * u1p) - 1.0 / (rm * u1m)) * jp + (u2p / u1p - u2m / u1m) * ju2
    G2 = ((u1p + U_plus.p / (rp * u1p)) - (u1m + U_minus.p / (rm * u1m))) * jp \
        + (U_plus.p * u2p / u1p - U_minus.p * u2m / u1m) * ju2
    G3 = (0.5 * U_plus.q ** 2 + enthalpy(gas, U_plus.p, rp)) \
        - (0.5 * U_minus.q ** 2 + enthalpy(gas, U_minus.p, rm))
    G4 = np.asarray(U_plus.Z) - np.asarray(U_minus.Z)
    G5 = ju2 - psi_slope * jp
    return G1, G2, G3, G4, G5
