"""Nonlinear upstream march, shock-fitted downstream iteration and the transonic driver."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline

from .background import BackgroundConstants, BackgroundShock, k2_identity_defect
from .gas import (DomainError, FlowState, GasModel, bernoulli, density, jump_functions,
                  sound_speed, source_terms)
from .linfield import (CFLError, FieldGrid, LinearSolution, PerturbationFields,
                       TransferCoefficients, compatibility_defect, integrate_slope,
                       solve_cr_system, solve_linear_at, transfer_coefficients)
from .locator import Hypothesis, LocationSolution, NozzlePerturbation, Solvability, locate_shock


class SonicTransitionError(RuntimeError):
    """The upstream march left the supersonic regime."""


class RootError(RuntimeError):
    """The shock-position functional has no usable root."""


class IllConditionedError(RuntimeError):
    """The shock-position functional is too flat to be solved reliably."""


class DivergenceError(RuntimeError):
    """The fixed-point iteration stopped contracting."""

    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


FIELDS = ("p", "theta", "q", "S", "Z")


def _state_arrays(U: FlowState):
    return [np.asarray(getattr(U, k), dtype=float) for k in FIELDS]


# ---------------------------------------------------------------- upstream

@dataclass
class UpstreamSolution:
    grid: FieldGrid
    p: np.ndarray
    theta: np.ndarray
    q: np.ndarray
    S: np.ndarray
    Z: np.ndarray
    _splines: list = field(default=None, repr=False)

    def state(self) -> FlowState:
        return FlowState(self.p, self.theta, self.q, self.S, self.Z)

    def perturbation(self, background: FlowState) -> PerturbationFields:
        return PerturbationFields(self.grid, *(getattr(self, k) - getattr(background, k)
                                               for k in FIELDS))

    def traces(self, psi) -> FlowState:
        """Upstream state at (psi(y2_j), y2_j), cubic along each streamline."""
        if self._splines is None:
            self._splines = [CubicSpline(self.grid.y1, getattr(self, k), axis=0) for k in FIELDS]
        psi = np.asarray(psi, dtype=float)
        if np.any(psi < self.grid.y1_min) or np.any(psi > self.grid.y1_max):
            raise DomainError("shock front left the upstream grid")
        j = np.arange(psi.size)
        return FlowState(*(sp(psi)[j, j] for sp in self._splines))


def characteristic_speed(gas: GasModel, U: FlowState):
    """Largest |dy2/dy1| of the two acoustic characteristics."""
    rho = density(gas, U.p, U.S)
    M = np.asarray(U.q) / sound_speed(gas, U.p, rho)
    st, ct = np.sin(U.theta), np.cos(U.theta)
    root = ct * np.sqrt(np.maximum(M * M - 1.0, 0.0))
    lam = np.stack([(-st + root), (-st - root)]) / (rho * U.q)
    return float(np.max(1.0 / np.abs(lam)))


def _rates(gas, kappa, w, d2p, d2t):
    p, t, q, S, Z = w
    rho = density(gas, p, S)
    c2 = gas.gamma * p / rho
    M2 = q * q / c2
    st, ct = np.sin(t), np.cos(t)
    U = FlowState(p, t, q, S, Z)
    f1, f4, f5 = source_terms(gas, U)
    m = rho * q
    r1 = -d2p
    r2 = kappa * f1 - d2t
    D = (1.0 - ct * ct * M2) / m
    dp = (-st * r1 - m * q * ct * r2) / D
    dt = (ct * (1.0 - M2) / (m * q) * r1 - st * r2) / D
    return np.stack([dp, dt, -dp / m, kappa * f4, -kappa * f5])


def _dy(f, dy, mode):
    """Forward (mode=+1) or backward (-1) differences with 3-point one-sided walls."""
    d = np.empty_like(f)
    if mode > 0:
        d[:-1] = f[1:] - f[:-1]
    else:
        d[1:] = f[1:] - f[:-1]
    d[0] = -1.5 * f[0] + 2.0 * f[1] - 0.5 * f[2]
    d[-1] = 1.5 * f[-1] - 2.0 * f[-2] + 0.5 * f[-3]
    return d / dy


def solve_upstream_nonlinear(gas: GasModel, inflow: FlowState, pert: NozzlePerturbation,
                             grid: FieldGrid, cfl: float = 1.0) -> UpstreamSolution:
    """MacCormack march of the non-divergence system in y1 with wall angles prescribed."""
    if abs(grid.y1_min) > 0 or abs(grid.y1_max - pert.L) > 1e-12 * pert.L:
        raise DomainError("upstream grid must cover [0, L]")
    kappa, sigma = pert.kappa, pert.sigma
    ny, dx, dy = grid.ny, grid.dx, grid.dy
    x = grid.y1
    wall = sigma * pert.theta_profile(x)
    w = np.array([np.full(ny + 1, float(v)) for v in _state_arrays(inflow)])
    out = np.empty((5, grid.nx + 1, ny + 1))
    out[:, 0] = w

    def check(w, k):
        U = FlowState(*w)
        rho = density(gas, U.p, U.S)
        M = U.q / sound_speed(gas, U.p, rho)
        if not np.all(np.isfinite(M)) or np.min(M) <= 1.0:
            raise SonicTransitionError(
                f"upstream flow reached M = {np.nanmin(M):.6g} at y1 = {x[k]:.6g}")
        speed = characteristic_speed(gas, U)
        if speed * dx / dy > cfl:
            need = int(np.ceil(speed * grid.nx * dx * ny / cfl))
            raise CFLError(f"upstream CFL number {speed * dx / dy:.4f} exceeds {cfl}; "
                           f"need nx >= {need}", need)

    for k in range(grid.nx):
        check(w, k)
        r = _rates(gas, kappa, w, _dy(w[0], dy, +1), _dy(w[1], dy, +1))
        wp = w + dx * r
        wp[1, 0], wp[1, -1] = 0.0, wall[k + 1]
        rp = _rates(gas, kappa, wp, _dy(wp[0], dy, -1), _dy(wp[1], dy, -1))
        w = 0.5 * (w + wp + dx * rp)
        w[1, 0], w[1, -1] = 0.0, wall[k + 1]
        out[:, k + 1] = w
    check(w, grid.nx)
    return UpstreamSolution(grid, *out)


# ---------------------------------------------------------------- front and transform

@dataclass
class ShockFront:
    """psi(y2) = xi_dot + dxi - int_{y2}^1 slope."""

    xi_dot: float
    dxi: float
    y2: np.ndarray
    slope: np.ndarray

    @property
    def xi(self):
        return self.xi_dot + self.dxi

    @property
    def psi(self):
        return integrate_slope(self.y2, self.slope, self.xi)


class FitTransform:
    """z1 = L + (L - xi_dot)/(L - psi(y2)) (y1 - L), z2 = y2."""

    def __init__(self, front: ShockFront, L: float, margin: float = 1e-6):
        self.front, self.L = front, L
        psi = front.psi
        if np.max(psi) > L - margin * L or np.min(psi) <= 0:
            raise DomainError(f"shock front psi in [{psi.min():.6g}, {psi.max():.6g}] "
                              f"is outside (0, L - margin)")
        self._psi = CubicSpline(front.y2, psi)

    def psi(self, y2):
        return self._psi(y2)

    def forward(self, y1, y2):
        L = self.L
        return L + (L - self.front.xi_dot) / (L - self.psi(y2)) * (np.asarray(y1) - L)

    def inverse(self, z1, z2):
        L = self.L
        return L + (L - self.psi(z2)) / (L - self.front.xi_dot) * (np.asarray(z1) - L)

    def metric(self, z1, z2, slope=None):
        """(mu, nu) with d/dy1 = (1 - mu) d/dz1 and d/dy2 = d/dz2 - nu d/dz1."""
        L = self.L
        psi = self.psi(z2)
        sl = self._psi(z2, 1) if slope is None else slope
        return (self.front.xi_dot - psi) / (L - psi), (L - np.asarray(z1)) * sl / (L - psi)


# ---------------------------------------------------------------- iteration

@dataclass
class IterationState:
    dU: PerturbationFields
    front: ShockFront
    iteration: int = 0
    residuals: dict = field(default_factory=dict)

    @property
    def dxi(self):
        return self.front.dxi


@dataclass
class _Frozen:
    """Parts of the scheme data that depend on the current iterate only."""

    U: FlowState
    d1: list
    f1: np.ndarray
    f4: np.ndarray
    f5: np.ndarray
    a: np.ndarray
    b: np.ndarray
    qc: np.ndarray
    exit_p: np.ndarray
    f3: np.ndarray


class TransonicProblem:
    """Data and operators of the shock-fitted downstream iteration."""

    def __init__(self, gas: GasModel, shock: BackgroundShock, constants: BackgroundConstants,
                 pert: NozzlePerturbation, upstream: UpstreamSolution, xi_dot: float,
                 nx: int, ny: int, beta0: float):
        if upstream.grid.ny != ny:
            raise DomainError("upstream and downstream grids must share the y2 nodes")
        self.gas, self.shock, self.constants, self.pert = gas, shock, constants, pert
        self.upstream = upstream
        self.xi_dot = float(xi_dot)
        self.L = pert.L
        self.grid = FieldGrid(self.xi_dot, self.L, nx, ny)
        self.beta0 = beta0
        self.coeffs: TransferCoefficients = transfer_coefficients(shock)
        self.c_plus = shock.elliptic_coefficient()
        self.bar = shock.downstream
        self.z1, self.z2 = self.grid.mesh()
        sk = pert.sigma + pert.kappa
        if sk == 0:
            raise DomainError("zero perturbation: the shock-position functional vanishes")
        self.scale_sk = sk

    # -- pieces -----------------------------------------------------------

    def full_state(self, dU: PerturbationFields) -> FlowState:
        return FlowState(*(getattr(self.bar, k) + getattr(dU, k) for k in FIELDS))

    def freeze(self, dU: PerturbationFields) -> _Frozen:
        gas, sh = self.gas, self.shock
        U = self.full_state(dU)
        U.validate(gas)
        rho = density(gas, U.p, U.S)
        c2 = gas.gamma * U.p / rho
        M2 = U.q ** 2 / c2
        m = rho * U.q
        ct, st = np.cos(U.theta), np.sin(U.theta)
        d1 = [np.gradient(a, self.grid.dx, axis=0, edge_order=2) for a in dU.arrays()]
        f1, f4, f5 = source_terms(gas, U)
        a = ct / m * (1.0 - M2) / (m * U.q)
        b = st / m
        # exit pressure at the physical height reached by each streamline
        Y = cumulative_trapezoid(1.0 / (m[-1] * ct[-1]), self.grid.y2, initial=0.0)
        exit_p = self.pert.exit_pressure(sh.mass_flux * Y)
        f3 = (sh.q_plus * dU.q + dU.p / sh.rho_plus + sh.T_plus * dU.S + gas.q_e * dU.Z) \
            - bernoulli(gas, U)
        return _Frozen(U, d1, f1, f4, f5, a, b, U.q * ct, exit_p, f3)

    def front_for(self, state: IterationState, dxi: float) -> ShockFront:
        return ShockFront(self.xi_dot, float(dxi), self.grid.y2, state.front.slope)

    def metric(self, front: ShockFront):
        psi = front.psi
        L = self.L
        mu = (self.xi_dot - psi) / (L - psi)
        nu = (L - self.z1) * front.slope[None, :] / (L - psi)[None, :]
        return psi, np.broadcast_to(mu[None, :], self.grid.shape), nu

    def sources(self, fz: _Frozen, front: ShockFront):
        kappa = self.pert.kappa
        dp, dt = fz.d1[0], fz.d1[1]
        _, mu, nu = self.metric(front)
        src1 = kappa * fz.f1 + (fz.a - self.c_plus) * dp + fz.b * dt + nu * dt \
            - mu * (fz.a * dp + fz.b * dt)
        src2 = fz.b * dp - (fz.qc - self.shock.q_plus) * dt \
            + mu * (fz.qc * dt - fz.b * dp) + nu * dp
        src4 = kappa * fz.f4 + mu * fz.d1[3]
        src5 = -kappa * fz.f5 + mu * fz.d1[4]
        return src1, src2, src4, src5

    def wall_angle(self, dxi):
        z1 = self.grid.y1
        return self.pert.sigma * self.pert.theta_profile(
            z1 + dxi / (self.L - self.xi_dot) * (self.L - z1))

    def shock_data(self, state: IterationState, fz: _Frozen, front: ShockFront):
        """Upstream trace, jump residuals G1..G5 and the transferred data g#."""
        Um = self.upstream.traces(front.psi)
        Up = FlowState(*(np.asarray(getattr(fz.U, k))[0] for k in FIELDS))
        G = np.array(jump_functions(self.gas, Up, Um, front.slope))
        dU0 = np.array([a[0] for a in state.dU.arrays()])
        bp = self.coeffs.beta_plus
        g = np.einsum("jk,kn->jn", bp, dU0) - G
        g[4] -= self.shock.jump_p * front.slope
        gs = np.linalg.solve(self.coeffs.Bs, g[:4])
        return Um, G, g, gs

    def functional(self, state: IterationState, fz: _Frozen, dxi: float):
        """I(dxi) = minus the discrete compatibility defect, and its scale."""
        front = self.front_for(state, dxi)
        src1, src2, _, _ = self.sources(fz, front)
        _, _, _, gs = self.shock_data(state, fz, front)
        d, scale = compatibility_defect(self.grid, self.shock.q_plus, self.c_plus, src1, src2,
                                        gs[0], fz.exit_p, 0.0, self.wall_angle(dxi))
        return -d, scale

    def solvability_root(self, state: IterationState, fz: _Frozen | None = None,
                         rtol: float = 1e-13, max_iter: int = 60):
        """Safeguarded secant solve of I(dxi) = 0; returns (dxi, dI/ddxi)."""
        fz = fz or self.freeze(state.dU)
        sigma, kappa = self.pert.sigma, self.pert.kappa
        c = self.constants
        d0 = -sigma * c.K1 * float(self.pert.theta_profile(self.xi_dot)) + kappa * c.K2
        floor = 0.5 * self.beta0 * self.scale_sk
        lo = -(self.xi_dot - 1e-3 * self.L)
        hi = 0.5 * (self.L - self.xi_dot)
        x0 = float(np.clip(state.dxi, lo, hi))
        f0, scale = self.functional(state, fz, x0)
        tol = rtol * scale
        if abs(f0) <= tol:
            return x0, self._slope_at(state, fz, x0, d0)
        deriv = d0 if d0 != 0 else (floor if floor > 0 else 1.0)
        a = b = None    # bracket once a sign change is seen
        x, f = x0, f0
        for _ in range(max_iter):
            step = -f / deriv
            xn = x + step
            if a is not None and not (min(a, b) < xn < max(a, b)):
                xn = 0.5 * (a + b)
            xn = float(np.clip(xn, lo, hi))
            fn, _ = self.functional(state, fz, xn)
            if xn != x:
                deriv = (fn - f) / (xn - x)
            if np.sign(fn) != np.sign(f):
                a, b = x, xn
            elif a is not None:
                if np.sign(fn) == np.sign(self.functional(state, fz, a)[0]):
                    a = xn
                else:
                    b = xn
            x, f = xn, fn
            if abs(f) <= tol or (a is not None and abs(b - a) <= 1e-15 * self.L):
                break
        else:
            raise RootError(f"shock-position functional did not converge (|I| = {abs(f):.3g})")
        dI = self._slope_at(state, fz, x, deriv)
        if abs(dI) < floor:
            raise IllConditionedError(
                f"|dI/d(dxi)| = {abs(dI):.3g} is below beta0 (sigma+kappa)/2 = {floor:.3g}")
        return x, dI

    def _slope_at(self, state, fz, x, guess):
        h = 1e-6 * self.L
        fp, _ = self.functional(state, fz, x + h)
        fm, _ = self.functional(state, fz, x - h)
        return (fp - fm) / (2.0 * h)

    # -- one sweep --------------------------------------------------------

    def iterate_once(self, state: IterationState, root_tol: float = 1e-13) -> IterationState:
        sh, gas = self.shock, self.gas
        fz = self.freeze(state.dU)
        dxi, dI = self.solvability_root(state, fz, root_tol)
        front = self.front_for(state, dxi)
        src1, src2, src4, src5 = self.sources(fz, front)
        _, G, g, gs = self.shock_data(state, fz, front)
        ell = solve_cr_system(self.grid, sh.q_plus, self.c_plus, src1, src2, gs[0], fz.exit_p,
                              0.0, self.wall_angle(dxi), tol=None)
        dS = gs[2][None, :] + cumulative_trapezoid(src4, dx=self.grid.dx, axis=0, initial=0.0)
        dZ = gs[3][None, :] + cumulative_trapezoid(src5, dx=self.grid.dx, axis=0, initial=0.0)
        seed = sh.q_plus * gs[1] + gs[0] / sh.rho_plus + sh.T_plus * gs[2] + gas.q_e * gs[3] \
            - fz.f3[0]
        dq = (fz.f3 + seed[None, :] - ell.p / sh.rho_plus - sh.T_plus * dS - gas.q_e * dZ) \
            / sh.q_plus
        slope = (sh.q_plus * ell.theta[0] - g[4]) / sh.jump_p
        dU = PerturbationFields(self.grid, ell.p, ell.theta, dq, dS, dZ)
        new_front = ShockFront(self.xi_dot, dxi, self.grid.y2, slope)
        d_field = max(float(np.max(np.abs(a - b))) for a, b in zip(dU.arrays(), state.dU.arrays()))
        d_slope = float(np.max(np.abs(slope - state.front.slope)))
        res = {"dxi": dxi, "dI": dI, "field_delta_norm": d_field, "slope_delta_norm": d_slope,
               "dxi_delta": abs(dxi - state.dxi), "rh_residual_max": float(np.max(np.abs(G))),
               "elliptic_defect": ell.relative_defect}
        return IterationState(dU, new_front, state.iteration + 1, res)

    # -- diagnostics ------------------------------------------------------

    def jump_residuals(self, state: IterationState) -> np.ndarray:
        U = self.full_state(state.dU)
        Up = FlowState(*(np.asarray(getattr(U, k))[0] for k in FIELDS))
        Um = self.upstream.traces(state.front.psi)
        return np.array(jump_functions(self.gas, Up, Um, state.front.slope))


@dataclass
class TransonicResult:
    upstream: UpstreamSolution
    downstream: FlowState
    grid: FieldGrid
    front: ShockFront
    state: IterationState
    linear: LinearSolution
    location: LocationSolution
    report: dict


def _combined(res):
    return res["field_delta_norm"] + res["slope_delta_norm"] + res["dxi_delta"]


def default_tol(sigma, kappa):
    return max(1e-10, 1e-3 * (sigma + kappa) ** 2)


def solve_transonic(gas: GasModel, shock: BackgroundShock, constants: BackgroundConstants,
                    pert: NozzlePerturbation, hyp: Hypothesis, nx_up: int, nx_down: int,
                    ny: int, tol: float | None = None, max_sweeps: int = 100,
                    policy: str = "nearest", beta0: float | None = None,
                    root_tol: float = 1e-13, strict_ball: bool = False) -> TransonicResult:
    """Upstream march, linear seed, then fixed-point sweeps until successive changes < tol."""
    sigma, kappa = pert.sigma, pert.kappa
    if sigma + kappa == 0:
        raise DomainError("zero perturbation: nothing to solve")
    tol = default_tol(sigma, kappa) if tol is None else tol
    solv = Solvability(shock, constants, pert)
    loc = locate_shock(solv, hyp, sigma, kappa, policy, beta0)
    up_grid = FieldGrid(0.0, pert.L, nx_up, ny)
    upstream = solve_upstream_nonlinear(gas, shock.upstream, pert, up_grid)
    lin = solve_linear_at(shock, constants, pert, loc.xi_dot, nx_up, nx_down, ny, tol=None,
                          location=loc)
    prob = TransonicProblem(gas, shock, constants, pert, upstream, loc.xi_dot, nx_down, ny,
                            loc.beta0)
    state = IterationState(lin.downstream, ShockFront(loc.xi_dot, 0.0, prob.grid.y2,
                                                      lin.psi_slope.copy()))
    radius = 0.5 * (sigma + kappa) ** 1.5
    history, ratios = [], []
    bad = 0
    prev = None
    ball_exits = 0
    for _ in range(max_sweeps):
        state = prob.iterate_once(state, root_tol)
        r = dict(state.residuals)
        delta = _combined(r)
        r["sweep"] = state.iteration
        r["contraction_ratio"] = delta / prev if prev else float("nan")
        dist = _distance(state, lin)
        r["ball_distance"] = dist
        r["in_ball"] = dist <= radius
        if not r["in_ball"]:
            ball_exits += 1
            if strict_ball:
                raise DivergenceError(f"iterate left the ball of radius {radius:.3g}", history)
        history.append(r)
        if delta < tol:
            break
        if prev is not None:
            bad = bad + 1 if delta >= prev else 0
            if bad >= 3:
                raise DivergenceError(
                    f"no contraction for 3 consecutive sweeps (last change {delta:.3g}, "
                    f"tol {tol:.3g})", history)
        prev = delta
    else:
        raise DivergenceError(f"no convergence to tol {tol:.3g} within {max_sweeps} sweeps",
                              history)
    if ball_exits:
        warnings.warn(f"{ball_exits} sweeps left the iteration ball", RuntimeWarning,
                      stacklevel=2)
    G = prob.jump_residuals(state)
    report = {
        "sweeps": len(history),
        "history": history,
        "converged": True,
        "xi_dot": loc.xi_dot,
        "xi": state.front.xi,
        "dxi": state.dxi,
        "rh_residuals": np.max(np.abs(G), axis=1),
        "rh_residual_max": float(np.max(np.abs(G))),
        "slope_distance": float(np.max(np.abs(state.front.slope - lin.psi_slope))),
        "field_distance": max(float(np.max(np.abs(a - b)))
                              for a, b in zip(state.dU.arrays(), lin.downstream.arrays())),
        "ball_radius": radius,
        "k2_identity_defect": k2_identity_defect(shock, constants),
        "tol": tol,
    }
    return TransonicResult(upstream, prob.full_state(state.dU), prob.grid, state.front, state,
                           lin, loc, report)


def _distance(state, lin):
    d = max(float(np.max(np.abs(a - b))) for a, b in zip(state.dU.arrays(),
                                                          lin.downstream.arrays()))
    return d + float(np.max(np.abs(state.front.slope - lin.psi_slope)))
