"""Linearized free-boundary problem about the background normal shock.

Upstream the perturbation obeys a constant-coefficient wave equation that is
marched in y1. Downstream (p, theta) solve a first-order elliptic system whose
Neumann-type compatibility pins the shock position; q, S, Z are transported.
Fields are stored node-centred with index [i, j] = (y1_i, y2_j).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import spsolve

from .background import BackgroundConstants, BackgroundShock
from .gas import DomainError
from .locator import Hypothesis, LocationSolution, NozzlePerturbation, Solvability, locate_shock


class CFLError(RuntimeError):
    def __init__(self, msg, required_nx):
        super().__init__(msg)
        self.required_nx = required_nx


class SolvabilityError(RuntimeError):
    """The discrete compatibility defect of the elliptic problem is too large."""

    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


# ---------------------------------------------------------------- grids

@dataclass(frozen=True)
class FieldGrid:
    y1_min: float
    y1_max: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise DomainError("grids need nx, ny >= 8")
        if not self.y1_max > self.y1_min:
            raise DomainError("empty y1 interval")

    @property
    def y1(self):
        return np.linspace(self.y1_min, self.y1_max, self.nx + 1)

    @property
    def y2(self):
        return np.linspace(0.0, 1.0, self.ny + 1)

    @property
    def dx(self):
        return (self.y1_max - self.y1_min) / self.nx

    @property
    def dy(self):
        return 1.0 / self.ny

    @property
    def shape(self):
        return (self.nx + 1, self.ny + 1)

    def mesh(self):
        return np.meshgrid(self.y1, self.y2, indexing="ij")


def trapezoid_weights(n, h):
    w = np.full(n + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass
class PerturbationFields:
    grid: FieldGrid
    p: np.ndarray
    theta: np.ndarray
    q: np.ndarray
    S: np.ndarray
    Z: np.ndarray

    NAMES = ("p", "theta", "q", "S", "Z")

    def arrays(self):
        return [getattr(self, k) for k in self.NAMES]

    def max_norm(self):
        return max(float(np.max(np.abs(a))) for a in self.arrays())

    def scaled(self, factor):
        return PerturbationFields(self.grid, *(factor * a for a in self.arrays()))

    def trace(self, y1):
        """Values at a fixed y1 by cubic interpolation along each streamline."""
        g = self.grid
        out = []
        for a in self.arrays():
            if np.isclose(y1, g.y1_min):
                out.append(a[0].copy())
            elif np.isclose(y1, g.y1_max):
                out.append(a[-1].copy())
            else:
                out.append(CubicSpline(g.y1, a, axis=0)(y1))
        return out


# ---------------------------------------------------------------- shock transfer

@dataclass(frozen=True)
class TransferCoefficients:
    beta_plus: np.ndarray     # rows j = 1..5, columns (p, theta, q, S, Z)
    beta_minus: np.ndarray
    Bs: np.ndarray
    Bs_det: float


def _betas(shock: BackgroundShock, sign: int) -> np.ndarray:
    gas = shock.gas
    g, cv = gas.gamma, gas.c_v
    jp = shock.jump_p
    if sign > 0:
        p, rho, q, c = shock.p_plus, shock.rho_plus, shock.q_plus, shock.c_plus
    else:
        p, rho, q, c = shock.p_minus, shock.rho_minus, shock.q_minus, shock.c_minus
    f = jp / (rho * q)
    rc2 = rho * c * c
    b = np.array([
        f * np.array([-1.0 / rc2, 0.0, -1.0 / q, 1.0 / (g * cv), 0.0]),
        f * np.array([1.0 - p / rc2, 0.0, rho * q - p / q, p / (g * cv), 0.0]),
        np.array([1.0 / rho, 0.0, q, p / ((g - 1.0) * cv * rho), 0.0]),
        np.array([0.0, 0.0, 0.0, 0.0, 1.0]),
        np.array([0.0, q, 0.0, 0.0, 0.0]),
    ])
    return sign * b


def transfer_coefficients(shock: BackgroundShock) -> TransferCoefficients:
    bp, bm = _betas(shock, +1), _betas(shock, -1)
    Bs = bp[:4][:, [0, 2, 3, 4]]
    det = float(np.linalg.det(Bs))
    if det == 0 or not np.isfinite(det):
        raise DomainError("shock transfer matrix is singular")
    return TransferCoefficients(bp, bm, Bs, det)


def bs_det_closed_form(shock: BackgroundShock) -> float:
    gas = shock.gas
    m = shock.mass_flux
    return (shock.jump_p ** 2 * shock.p_plus / ((gas.gamma - 1.0) * gas.c_v * m ** 3)
            * (1.0 - shock.M_plus ** 2))


def g_sharp(shock: BackgroundShock, dp_minus, dS_minus, dZ_minus):
    """Downstream shock traces (p, q, S, Z) for upstream data with q- = -p-/m."""
    gas = shock.gas
    g, cv = gas.gamma, gas.c_v
    m = shock.mass_flux
    jp = shock.jump_p
    K1 = jp * ((g - 1.0) / (g * shock.p_plus) + 1.0 / shock.momentum_flux(+1))
    a_m = (shock.M_minus ** 2 - 1.0) / shock.momentum_flux(-1)
    b_p = shock.momentum_flux(+1) / (shock.M_plus ** 2 - 1.0)
    tr = shock.T_minus / shock.T_plus
    dp = np.asarray(dp_minus, dtype=float)
    dS = np.asarray(dS_minus, dtype=float)
    g1 = b_p * a_m * (1.0 - K1) * dp + b_p / (g * cv) * (tr - 1.0 + K1) * dS
    g2 = (jp * a_m * dp - jp / (g * cv) * dS - g1) / m
    g3 = -(g - 1.0) * cv * a_m * jp / shock.p_plus * dp \
        + (tr + (g - 1.0) / g * jp / shock.p_plus) * dS
    g4 = np.asarray(dZ_minus, dtype=float) + 0.0 * dp
    return g1, g2, g3, g4


# ---------------------------------------------------------------- upstream

def wave_speed(shock: BackgroundShock) -> float:
    return float(np.sqrt(1.0 / (shock.q_minus * shock.wave_coefficient())))


def upstream_cfl_nx(shock: BackgroundShock, L: float, ny: int, fraction: float = 1.0) -> int:
    """Smallest nx with c_w * dx / dy <= fraction."""
    return int(np.ceil(wave_speed(shock) * L * ny / fraction - 1e-9))


def solve_upstream_linear(shock: BackgroundShock, constants: BackgroundConstants,
                          pert: NozzlePerturbation, grid: FieldGrid) -> PerturbationFields:
    """Leapfrog march of the potential phi with d1 phi = -p, d2 phi = q theta."""
    if abs(grid.y1_min) > 0 or abs(grid.y1_max - pert.L) > 1e-12 * pert.L:
        raise DomainError("upstream grid must cover [0, L]")
    sigma, kappa = pert.sigma, pert.kappa
    a_m = shock.wave_coefficient()
    qm = shock.q_minus
    cw2 = 1.0 / (qm * a_m)
    dx, dy = grid.dx, grid.dy
    nu = np.sqrt(cw2) * dx / dy
    if nu > 1.0:
        need = upstream_cfl_nx(shock, pert.L, grid.ny)
        raise CFLError(f"upstream CFL number {nu:.4f} > 1; need nx >= {need}", need)
    src = kappa * constants.f1_minus / a_m
    nx, ny = grid.nx, grid.ny
    x = grid.y1
    flux_top = sigma * qm * pert.theta_profile(np.append(x, x[-1] + dx))

    def accel(phi, k):
        d2 = np.empty_like(phi)
        d2[1:-1] = phi[2:] - 2.0 * phi[1:-1] + phi[:-2]
        d2[0] = 2.0 * (phi[1] - phi[0])
        d2[-1] = 2.0 * (phi[-2] - phi[-1]) + 2.0 * dy * flux_top[k]
        return cw2 * d2 / dy ** 2 - src

    phi = np.zeros((nx + 2, ny + 1))
    phi[1] = 0.5 * dx * dx * accel(phi[0], 0)
    for k in range(1, nx + 1):
        phi[k + 1] = 2.0 * phi[k] - phi[k - 1] + dx * dx * accel(phi[k], k)

    p = np.empty((nx + 1, ny + 1))
    p[0] = 0.0
    p[1:] = -(phi[2:] - phi[:-2])[: nx] / (2.0 * dx)
    theta = np.gradient(phi[: nx + 1], dy, axis=1, edge_order=2) / qm
    theta[:, 0] = 0.0
    theta[:, -1] = sigma * pert.theta_profile(x)
    y1, _ = grid.mesh()
    q = -p / shock.mass_flux
    S = kappa * constants.f4_minus * y1
    Z = -kappa * constants.f5_minus * y1
    return PerturbationFields(grid, p, theta, q, S, Z)


def upstream_identity_residual(shock: BackgroundShock, constants: BackgroundConstants,
                               pert: NozzlePerturbation, fields: PerturbationFields, xi):
    """Defect of int_0^xi sigma Theta + a_- int_0^1 p-(xi, .) - kappa f1- xi."""
    g = fields.grid
    w = trapezoid_weights(g.ny, g.dy)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    idx = np.rint((xi - g.y1_min) / g.dx).astype(int)
    if not np.allclose(g.y1[idx], xi, rtol=0, atol=1e-12 * max(1.0, pert.L)):
        raise DomainError("identity is evaluated on grid nodes only")
    lhs = pert.sigma * pert.theta_profile.integral(0.0, xi) + \
        shock.wave_coefficient() * (fields.p[idx] @ w)
    return lhs - pert.kappa * constants.f1_minus * xi


# ---------------------------------------------------------------- downstream

@dataclass
class EllipticResult:
    p: np.ndarray
    theta: np.ndarray
    defect: float
    relative_defect: float


def _neumann_operator(nx, ny, dx, dy, cy, cx):
    """cy d2^2 + cx d1^2 with ghost-node Neumann closure on an (nx+1) x (ny+1) node grid."""

    def lap1d(n, h):
        main = np.full(n + 1, -2.0)
        up = np.ones(n)
        lo = np.ones(n)
        up[0] = 2.0
        lo[-1] = 2.0
        return sparse.diags([lo, main, up], [-1, 0, 1]) / (h * h)

    Ix = sparse.identity(nx + 1)
    Iy = sparse.identity(ny + 1)
    return (cx * sparse.kron(lap1d(nx, dx), Iy) + cy * sparse.kron(Ix, lap1d(ny, dy))).tocsc()


def compatibility_defect(grid: FieldGrid, q, c, src1, src2, p_left, p_right,
                         theta_bottom, theta_top):
    """Discrete compatibility defect and its scale for the elliptic data."""
    _, _, rhs, _, w2 = _elliptic_rhs(grid, q, c, src1, src2, p_left, p_right,
                                     theta_bottom, theta_top)
    return float(np.sum(w2 * rhs)), _defect_scale(grid, c, src1, src2, p_left, p_right,
                                                   theta_bottom, theta_top)


def _defect_scale(grid, c, src1, src2, p_left, p_right, theta_bottom, theta_top):
    wx = trapezoid_weights(grid.nx, grid.dx)
    wy = trapezoid_weights(grid.ny, grid.dy)
    w2 = np.outer(wx, wy)
    s = float(np.sum(w2 * (np.abs(src1) + np.abs(src2))))
    edge = lambda v, n: np.broadcast_to(np.abs(np.asarray(v, dtype=float)), (n + 1,))
    s += float(wx @ (edge(theta_bottom, grid.nx) + edge(theta_top, grid.nx)))
    s += c * float(wy @ (edge(p_left, grid.ny) + edge(p_right, grid.ny)))
    return s


def _elliptic_rhs(grid, q, c, src1, src2, p_left, p_right, theta_bottom, theta_top):
    nx, ny, dx, dy = grid.nx, grid.ny, grid.dx, grid.dy
    shape = grid.shape
    src1 = np.broadcast_to(np.asarray(src1, dtype=float), shape)
    src2 = np.broadcast_to(np.asarray(src2, dtype=float), shape)
    theta_a = cumulative_trapezoid(src2, dx=dx, axis=0, initial=0.0) / q
    d2_theta_a = np.gradient(theta_a, dy, axis=1, edge_order=2)
    gb = q * (np.asarray(theta_bottom, dtype=float) - theta_a[:, 0])
    gt = q * (np.asarray(theta_top, dtype=float) - theta_a[:, -1])
    rhs = src1 - d2_theta_a
    rhs = rhs.copy()
    # ghost-node boundary contributions moved to the right side
    rhs[0, :] -= c * 2.0 * np.asarray(p_left, dtype=float) / dx
    rhs[-1, :] += c * 2.0 * np.asarray(p_right, dtype=float) / dx
    rhs[:, 0] += 2.0 * gb / (q * dy)
    rhs[:, -1] -= 2.0 * gt / (q * dy)
    wx = trapezoid_weights(nx, dx)
    wy = trapezoid_weights(ny, dy)
    return theta_a, (gb, gt), rhs, None, np.outer(wx, wy)


def solve_cr_system(grid: FieldGrid, q: float, c: float, src1, src2, p_left, p_right,
                    theta_bottom, theta_top, tol: float | None = 1e-3) -> EllipticResult:
    """Solve d2 p + q d1 theta = src2, d2 theta - c d1 p = src1 on the grid rectangle.

    p is prescribed on the left and right edges, theta on the bottom and top.
    The problem is reduced to a pure-Neumann equation for a potential; its
    discrete compatibility defect is checked against tol (relative) and then
    absorbed by a uniform correction through a bordered system.
    """
    if not (q > 0 and c > 0):
        raise DomainError("elliptic coefficients must be positive")
    theta_a, _, rhs, _, w2 = _elliptic_rhs(grid, q, c, src1, src2, p_left, p_right,
                                           theta_bottom, theta_top)
    defect = float(np.sum(w2 * rhs))
    scale = _defect_scale(grid, c, src1, src2, p_left, p_right, theta_bottom, theta_top)
    rel = abs(defect) / scale if scale > 0 else 0.0
    if tol is not None and rel > tol:
        raise SolvabilityError(
            f"compatibility defect {defect:.6g} (relative {rel:.3g}) exceeds tolerance {tol:g}",
            defect)
    nx, ny = grid.nx, grid.ny
    A = _neumann_operator(nx, ny, grid.dx, grid.dy, 1.0 / q, c)
    n = (nx + 1) * (ny + 1)
    w = w2.ravel()
    one = np.ones((n, 1))
    K = sparse.bmat([[A, sparse.csc_matrix(one)],
                     [sparse.csr_matrix(w[None, :]), None]], format="csc")
    sol = spsolve(K, np.append(rhs.ravel(), 0.0))
    phi = sol[:n].reshape(grid.shape)

    p = np.empty(grid.shape)
    p[1:-1] = -(phi[2:] - phi[:-2]) / (2.0 * grid.dx)
    p[0] = p_left
    p[-1] = p_right
    theta = np.empty(grid.shape)
    theta[:, 1:-1] = (phi[:, 2:] - phi[:, :-2]) / (2.0 * grid.dy * q)
    theta += theta_a
    theta[:, 0] = theta_bottom
    theta[:, -1] = theta_top
    return EllipticResult(p, theta, defect, rel)


def downstream_grid(xi_dot: float, L: float, nx: int, ny: int) -> FieldGrid:
    return FieldGrid(float(xi_dot), float(L), nx, ny)


def solve_downstream_elliptic(shock: BackgroundShock, constants: BackgroundConstants,
                              pert: NozzlePerturbation, xi_dot: float, shock_p, grid: FieldGrid,
                              tol: float | None = 1e-3) -> EllipticResult:
    c = shock.elliptic_coefficient()
    z1 = grid.y1
    return solve_cr_system(grid, shock.q_plus, c, pert.kappa * constants.f1_plus, 0.0,
                           shock_p, pert.exit_pressure(grid.y2), 0.0,
                           pert.sigma * pert.theta_profile(z1), tol)


def compatibility_residual(shock: BackgroundShock, constants: BackgroundConstants,
                           pert: NozzlePerturbation, upstream: PerturbationFields,
                           xi: float, nx: int, ny: int | None = None):
    """Discrete compatibility defect of the downstream problem for a trial shock position."""
    ny = ny or upstream.grid.ny
    grid = downstream_grid(xi, pert.L, nx, ny)
    dp, _, _, dS, dZ = upstream.trace(xi)
    g1 = g_sharp(shock, dp, dS, dZ)[0]
    if ny != upstream.grid.ny:
        g1 = np.interp(grid.y2, upstream.grid.y2, g1)
    d, _ = compatibility_defect(grid, shock.q_plus, shock.elliptic_coefficient(),
                                pert.kappa * constants.f1_plus, 0.0, g1,
                                pert.exit_pressure(grid.y2), 0.0,
                                pert.sigma * pert.theta_profile(grid.y1))
    return d


def solve_downstream_transport(shock: BackgroundShock, constants: BackgroundConstants,
                               kappa: float, traces, p, grid: FieldGrid):
    """q, S, Z downstream from the shock traces (g1#, g2#, g3#, g4#) and the pressure field."""
    gas = shock.gas
    g1, g2, g3, g4 = (np.asarray(t, dtype=float) for t in traces)
    z1, _ = grid.mesh()
    dist = z1 - grid.y1_min
    S = g3[None, :] + kappa * constants.f4_plus * dist
    Z = g4[None, :] - kappa * constants.f5_plus * dist
    B0 = shock.q_plus * g2 + g1 / shock.rho_plus + shock.T_plus * g3 + gas.q_e * g4
    q = (B0[None, :] - p / shock.rho_plus - shock.T_plus * S - gas.q_e * Z) / shock.q_plus
    return q, S, Z


def linear_bernoulli(shock: BackgroundShock, fields: PerturbationFields):
    return (shock.q_plus * fields.q + fields.p / shock.rho_plus
            + shock.T_plus * fields.S + shock.gas.q_e * fields.Z)


def shock_slope(shock: BackgroundShock, theta_plus, theta_minus):
    return (shock.q_plus * np.asarray(theta_plus) - shock.q_minus * np.asarray(theta_minus)) \
        / shock.jump_p


def integrate_slope(y2, slope, anchor):
    """psi(y2) = anchor - int_{y2}^1 slope, so that psi(1) = anchor."""
    cum = cumulative_trapezoid(slope, y2, initial=0.0)
    return anchor - (cum[-1] - cum)


# ---------------------------------------------------------------- assembly

@dataclass
class LinearSolution:
    upstream: PerturbationFields
    downstream: PerturbationFields
    psi_slope: np.ndarray
    psi: np.ndarray
    xi_dot: float
    location: LocationSolution | None = None
    defect: float = 0.0
    traces: tuple = field(default=())


def solve_linear_at(shock: BackgroundShock, constants: BackgroundConstants,
                    pert: NozzlePerturbation, xi_dot: float, nx_up: int, nx_down: int, ny: int,
                    tol: float | None = 1e-3, upstream: PerturbationFields | None = None,
                    location: LocationSolution | None = None) -> LinearSolution:
    """Linear fields for a given shock position (no root solve)."""
    if upstream is None:
        upstream = solve_upstream_linear(shock, constants, pert,
                                         FieldGrid(0.0, pert.L, nx_up, ny))
    grid = downstream_grid(xi_dot, pert.L, nx_down, ny)
    dp_m, dth_m, _, dS_m, dZ_m = upstream.trace(xi_dot)
    traces = g_sharp(shock, dp_m, dS_m, dZ_m)
    ell = solve_downstream_elliptic(shock, constants, pert, xi_dot, traces[0], grid, tol)
    q, S, Z = solve_downstream_transport(shock, constants, pert.kappa, traces, ell.p, grid)
    down = PerturbationFields(grid, ell.p, ell.theta, q, S, Z)
    slope = shock_slope(shock, ell.theta[0], dth_m)
    psi = integrate_slope(grid.y2, slope, xi_dot)
    return LinearSolution(upstream, down, slope, psi, float(xi_dot), location, ell.defect, traces)


def solve_linear(shock: BackgroundShock, constants: BackgroundConstants,
                 pert: NozzlePerturbation, hyp: Hypothesis, nx_up: int, nx_down: int, ny: int,
                 policy: str = "nearest", tol: float | None = 1e-3) -> LinearSolution:
    solv = Solvability(shock, constants, pert)
    loc = locate_shock(solv, hyp, pert.sigma, pert.kappa, policy)
    return solve_linear_at(shock, constants, pert, loc.xi_dot, nx_up, nx_down, ny, tol,
                           location=loc)
