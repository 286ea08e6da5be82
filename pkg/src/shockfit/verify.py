"""Invariant battery behind ``shockfit verify``.

Each check returns a :class:`Check`; values are rounded for printing so the
report is byte-stable across runs on the same build.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .background import k2_identity_defect, rh_residuals, solve_normal_shock
from .gas import FlowState, GasModel, bernoulli, jump_functions
from .linfield import (FieldGrid, bs_det_closed_form, compatibility_residual, solve_cr_system,
                       solve_upstream_linear, transfer_coefficients, upstream_identity_residual)
from .locator import Solvability, locate_shock
from .nonlinear import solve_transonic, solve_upstream_nonlinear


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    limit: float
    passed: bool

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name:<28s} value={self.value:.6e} limit={self.limit:.3e}"


def observed_orders(errors):
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])


def _check(name, value, limit, above=False):
    value = float(value)
    ok = bool(np.isfinite(value) and (value >= limit if above else value <= limit))
    return Check(name, value, float(limit), ok)


# ---------------------------------------------------------------- background and jumps

def check_rh(gas: GasModel, machs=(1.2, 1.5, 2.0, 3.0, 5.0), gammas=(1.2, 1.4, 5.0 / 3.0)):
    worst = 0.0
    for g in gammas:
        gg = GasModel(g, gas.c_v, gas.ignition, gas.q_e, gas.kappa)
        for M in machs:
            sh = solve_normal_shock(gg, FlowState.from_mach(gg, 1.0, 1.0, M), check_ignition=False)
            worst = max(worst, float(np.max(np.abs(rh_residuals(sh)))))
    return _check("rh_exactness", worst, 1e-11)


def jacobian_fd(gas, U_plus: FlowState, U_minus: FlowState, side: int, h=1e-4):
    """Richardson-extrapolated central differences of (G1..G5) in the (p, theta, q, S, Z) of one side."""
    base = [U_plus.as_array(), U_minus.as_array()]
    idx = 0 if side > 0 else 1
    J = np.empty((5, 5))

    def G(u):
        states = list(base)
        states[idx] = u
        return np.array(jump_functions(gas, FlowState.from_array(states[0]),
                                       FlowState.from_array(states[1])), dtype=float)

    for k in range(5):
        step = h * max(1.0, abs(base[idx][k]))

        def cd(s):
            e = np.zeros(5)
            e[k] = s
            return (G(base[idx] + e) - G(base[idx] - e)) / (2.0 * s)

        J[:, k] = (4.0 * cd(step / 2.0) - cd(step)) / 3.0
    return J


def check_jacobian(shock):
    tc = transfer_coefficients(shock)
    worst = 0.0
    for side, beta in ((+1, tc.beta_plus), (-1, tc.beta_minus)):
        J = jacobian_fd(shock.gas, shock.downstream, shock.upstream, side)
        scale = np.maximum(np.abs(beta), np.max(np.abs(beta), axis=1, keepdims=True))
        worst = max(worst, float(np.max(np.abs(J - beta) / scale)))
    return _check("transfer_jacobian", worst, 1e-6)


def check_bs_det(shock):
    det, ref = transfer_coefficients(shock).Bs_det, bs_det_closed_form(shock)
    return _check("bs_determinant", abs(det - ref) / abs(ref), 1e-10)


# ---------------------------------------------------------------- locator and linear fields

def check_locator(solv, hyp, sigma, kappa):
    loc = locate_shock(solv, hyp, sigma, kappa)
    r = abs(float(solv.R(loc.xi_dot, sigma, kappa)) - loc.P_star)
    return _check("locator_root", r, 1e-12), loc


def identity_residuals(shock, constants, pert, ny=32, nxs=(64, 128, 256)):
    xis = np.array([0.25, 0.5, 0.75]) * pert.L
    out = []
    for nx in nxs:
        f = solve_upstream_linear(shock, constants, pert, FieldGrid(0.0, pert.L, nx, ny))
        out.append(float(np.max(np.abs(upstream_identity_residual(shock, constants, pert, f,
                                                                  xis)))))
    return out


def mms_errors(nxs=(32, 64, 128), q=0.7, c=0.3):
    """Max-norm errors of solve_cr_system on a smooth manufactured pair (p, theta)."""
    out = []
    for n in nxs:
        g = FieldGrid(0.4, 1.0, n, n)
        x, y = g.mesh()
        p = np.sin(2.0 * x) * np.cos(np.pi * y) + x * x
        th = np.exp(x) * np.sin(np.pi * y) + 0.3 * y * y * x
        d1p = 2.0 * np.cos(2.0 * x) * np.cos(np.pi * y) + 2.0 * x
        d2p = -np.pi * np.sin(2.0 * x) * np.sin(np.pi * y)
        d1t = np.exp(x) * np.sin(np.pi * y) + 0.3 * y * y
        d2t = np.pi * np.exp(x) * np.cos(np.pi * y) + 0.6 * y * x
        src2 = d2p + q * d1t
        src1 = d2t - c * d1p
        sol = solve_cr_system(g, q, c, src1, src2, p[0], p[-1], th[:, 0], th[:, -1], tol=1e-2)
        out.append(max(float(np.max(np.abs(sol.p - p))), float(np.max(np.abs(sol.theta - th)))))
    return out


def compatibility_contrast(shock, constants, pert, xi_dot, nx_up=256, nx_down=128, ny=64,
                           offset=0.05):
    up = solve_upstream_linear(shock, constants, pert, FieldGrid(0.0, pert.L, nx_up, ny))
    at = abs(compatibility_residual(shock, constants, pert, up, xi_dot, nx_down))
    off = min(abs(compatibility_residual(shock, constants, pert, up, xi_dot + s * offset * pert.L,
                                         nx_down)) for s in (-1.0, 1.0))
    return at, off


# ---------------------------------------------------------------- nonlinear

def bernoulli_drift(gas, inflow, pert, ny):
    g = FieldGrid(0.0, pert.L, 4 * ny, ny)
    up = solve_upstream_nonlinear(gas, inflow, pert, g)
    B = bernoulli(gas, up.state())
    return float(np.max(np.abs(B - B[0])))


def conservation_checks(gas, result):
    """Z range and monotonicity on both sides, entropy jump across the fitted front."""
    up, down = result.upstream, result.downstream
    Zs = [np.asarray(up.Z), np.asarray(down.Z)]
    z_ok = all(float(Z.min()) >= 0.0 and float(Z.max()) <= 1.0 for Z in Zs)
    z_inc = max(float(np.max(np.diff(Z, axis=0))) for Z in Zs)
    Um = up.traces(result.front.psi)
    S_plus = np.asarray(down.S)[0]
    jump = float(np.min(S_plus - np.asarray(Um.S)))
    return z_ok, z_inc, jump


def run_checks(cfg, quick: bool = False) -> list[Check]:
    """Full battery for a RunConfig; ``quick`` coarsens the nonlinear solve."""
    gas, shock, constants, pert, hyp, num = cfg.build()
    sigma, kappa = pert.sigma, pert.kappa
    checks = [check_rh(gas)]
    checks.append(_check("k2_identity", abs(k2_identity_defect(shock, constants)), 1e-12))
    checks.append(check_jacobian(shock))
    checks.append(check_bs_det(shock))
    solv = Solvability(shock, constants, pert)
    c, loc = check_locator(solv, hyp, sigma, kappa)
    checks.append(c)
    checks.append(_check("admissible_margin", loc.margin - loc.beta0 * (sigma + kappa), 0.0,
                         above=True))
    res = identity_residuals(shock, constants, pert)
    checks.append(_check("identity_order", float(np.min(observed_orders(res))), 1.9, above=True))
    checks.append(_check("elliptic_mms_order", float(np.min(observed_orders(mms_errors()))), 1.9,
                         above=True))
    at, off = compatibility_contrast(shock, constants, pert, loc.xi_dot)
    checks.append(_check("compatibility_contrast", at / off, 0.1))
    drift = [bernoulli_drift(gas, shock.upstream, pert, n) for n in (16, 32, 64)]
    checks.append(_check("bernoulli_order", float(np.min(observed_orders(drift))), 1.9,
                         above=True))
    nx_up, nx_down, ny = (num["nx_up"], num["nx_down"], num["ny"])
    if quick:
        nx_up, nx_down, ny = nx_up // 2, nx_down // 2, ny // 2
    out = solve_transonic(gas, shock, constants, pert, hyp, nx_up, nx_down, ny,
                          tol=num["tol"], max_sweeps=num["max_sweeps"],
                          policy=num["root_policy"], root_tol=num["root_tol"])
    rep = out.report
    checks.append(_check("sweeps", rep["sweeps"], 20))
    checks.append(_check("jump_residual", rep["rh_residual_max"] / shock.jump_p, 1e-8))
    checks.append(_check("slope_in_ball", rep["slope_distance"], rep["ball_radius"]))
    z_ok, z_inc, jump = conservation_checks(gas, out)
    checks.append(Check("z_in_unit_interval", float(z_ok), 1.0, z_ok))
    checks.append(_check("z_nonincreasing", z_inc, 0.0))
    checks.append(Check("entropy_jump", jump, 0.0, jump > 0.0))
    return checks
