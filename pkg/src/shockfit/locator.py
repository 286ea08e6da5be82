"""Solvability functional R(xi; sigma, kappa) and the approximate shock location."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.interpolate import CubicSpline

from .background import BackgroundConstants, BackgroundShock
from .gas import DomainError

CASES = ("H1", "H2", "H3", "H4")
POLICIES = ("nearest", "smallest", "largest")


class NoSolutionError(RuntimeError):
    """P* lies outside the range of R over (0, L)."""

    def __init__(self, msg, R_inf, R_sup, P_star):
        super().__init__(msg)
        self.R_inf, self.R_sup, self.P_star = R_inf, R_sup, P_star


class AdmissibilityError(RuntimeError):
    """No root satisfies the lower bound on |kappa K2 - sigma K1 Theta|."""


# ---------------------------------------------------------------- profiles

class Profile:
    """A scalar profile given by polynomial coefficients or by samples."""

    def __init__(self, kind, data, panels=2048):
        self.kind = kind
        self.panels = panels
        if kind == "polynomial":
            self.coeffs = np.atleast_1d(np.asarray(data, dtype=float))
            self._f = lambda x: npoly.polyval(x, self.coeffs)
            self._df = lambda x, n: npoly.polyval(x, npoly.polyder(self.coeffs, n))
        elif kind == "samples":
            x, y = (np.asarray(v, dtype=float) for v in data)
            if x.ndim != 1 or x.shape != y.shape or x.size < 4:
                raise DomainError("sample profiles need at least 4 matching abscissae/values")
            if not np.all(np.diff(x) > 0):
                raise DomainError("sample abscissae must be strictly increasing")
            self.x, self.y = x, y
            self._spline = CubicSpline(x, y)
            self._f = self._spline
            self._df = lambda t, n: self._spline(t, n)
        else:
            raise DomainError(f"unknown profile kind {kind!r}")

    @classmethod
    def polynomial(cls, coeffs, panels=2048):
        """Coefficients in ascending powers: c0 + c1 x + c2 x^2 + ..."""
        return cls("polynomial", coeffs, panels)

    @classmethod
    def samples(cls, x, y, panels=2048):
        return cls("samples", (x, y), panels)

    @classmethod
    def zero(cls):
        return cls.polynomial([0.0])

    @classmethod
    def constant(cls, value):
        return cls.polynomial([float(value)])

    def __call__(self, x):
        return self._f(np.asarray(x, dtype=float))

    def derivative(self, x, n=1):
        return self._df(np.asarray(x, dtype=float), n)

    def integral(self, a, b, panels=None):
        """Composite Simpson quadrature from a to b (b may be an array)."""
        n = panels or self.panels
        if n % 2:
            n += 1
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        a, b = np.broadcast_arrays(a, b)
        t = np.linspace(0.0, 1.0, n + 1)
        w = np.ones(n + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w /= 3.0 * n
        x = a[..., None] + (b - a)[..., None] * t
        out = (b - a) * (self(x) @ w)
        return out[()] if out.ndim == 0 else out

    def scaled(self, factor):
        if self.kind == "polynomial":
            return Profile.polynomial(self.coeffs * factor, self.panels)
        return Profile.samples(self.x, self.y * factor, self.panels)

    def to_config(self):
        if self.kind == "polynomial":
            return {"polynomial": [float(c) for c in self.coeffs]}
        return {"samples": [[float(a), float(b)] for a, b in zip(self.x, self.y)]}


@dataclass
class NozzlePerturbation:
    L: float
    theta_profile: Profile
    exit_p_sigma: Profile
    exit_p_kappa: Profile
    sigma: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if not self.L > 0:
            raise DomainError("nozzle length L must be positive")
        if self.sigma < 0 or self.kappa < 0:
            raise DomainError("sigma and kappa must be non-negative")
        vals = [float(self.theta_profile(0.0))] + \
            [float(self.theta_profile.derivative(0.0, n)) for n in (1, 2)]
        if max(abs(v) for v in vals) > 1e-10:
            raise DomainError(
                f"wall profile must satisfy Theta(0)=Theta'(0)=Theta''(0)=0, got {vals}")
        x = np.linspace(0.0, self.L, 257)
        for name in ("theta_profile", "exit_p_sigma", "exit_p_kappa"):
            prof = getattr(self, name)
            grid = x if name == "theta_profile" else np.linspace(0.0, 1.0, 257)
            if not np.all(np.isfinite(prof(grid))):
                raise DomainError(f"{name} is not finite on its interval")

    def exit_pressure(self, y2, sigma=None, kappa=None):
        sigma = self.sigma if sigma is None else sigma
        kappa = self.kappa if kappa is None else kappa
        return sigma * self.exit_p_sigma(y2) + kappa * self.exit_p_kappa(y2)


@dataclass(frozen=True)
class Hypothesis:
    case: str
    A: float | None = None
    A1: float | None = None
    A2: float | None = None
    s: float | None = None
    beta0: float | None = None

    def __post_init__(self):
        if self.case not in CASES:
            raise DomainError(f"hypothesis case must be one of {CASES}, got {self.case!r}")
        need = {"H1": ("A1", "s"), "H2": ("A2", "s"), "H3": ("A",), "H4": ()}[self.case]
        for name in need:
            v = getattr(self, name)
            if v is None or not v > 0:
                raise DomainError(f"hypothesis {self.case} needs {name} > 0")
        if self.case in ("H1", "H2") and not self.s > 1:
            raise DomainError("hypothesis exponent s must exceed 1")
        if self.beta0 is not None and not self.beta0 > 0:
            raise DomainError("beta0 must be positive")

    def consistent(self, sigma, kappa, rtol=1e-9):
        if self.case == "H1":
            target, value = self.A1 * sigma ** self.s, kappa
        elif self.case == "H2":
            target, value = self.A2 * kappa ** self.s, sigma
        elif self.case == "H3":
            target, value = self.A * kappa, sigma
        else:
            return True
        return abs(value - target) <= rtol * max(abs(target), abs(value), 1e-300)

    def partner(self, t):
        """(sigma, kappa) along the hypothesis curve parametrized by its leading scale t."""
        if self.case == "H1":
            return t, self.A1 * t ** self.s
        if self.case == "H2":
            return self.A2 * t ** self.s, t
        if self.case == "H3":
            return self.A * t, t
        raise DomainError("H4 has no one-parameter family")


@dataclass
class LocationSolution:
    xi_dot: float
    all_roots: list
    xi_star: float | None
    admissible: bool
    margin: float
    beta0: float
    R_inf: float
    R_sup: float
    P_star: float
    diagnostics: list = field(default_factory=list)


# ---------------------------------------------------------------- functional

class Solvability:
    """R_sigma, R_kappa and P* built from a background shock and nozzle data."""

    def __init__(self, shock: BackgroundShock, constants: BackgroundConstants,
                 pert: NozzlePerturbation):
        self.shock = shock
        self.constants = constants
        self.pert = pert
        self.L = pert.L
        self.c_plus = shock.elliptic_coefficient()
        self._theta_total = float(pert.theta_profile.integral(0.0, self.L))
        self.P_sigma_star = self.c_plus * float(pert.exit_p_sigma.integral(0.0, 1.0))
        self.P_kappa_star = self.c_plus * float(pert.exit_p_kappa.integral(0.0, 1.0))
        self._scan_cache = {}

    def _check(self, xi):
        xi = np.asarray(xi, dtype=float)
        if np.any(xi < 0) or np.any(xi > self.L):
            raise DomainError(f"xi must lie in [0, L={self.L}]")
        return xi

    def R_sigma(self, xi):
        xi = self._check(xi)
        if xi.size < 1024:
            return self._R_sigma(xi)
        # root scans reuse the same sample grid for every (sigma, kappa)
        key = hash(xi.tobytes())
        if key not in self._scan_cache:
            self._scan_cache[key] = self._R_sigma(xi)
        return self._scan_cache[key]

    def _R_sigma(self, xi):
        return self._theta_total - self.constants.K1 * self.pert.theta_profile.integral(0.0, xi)

    def R_kappa(self, xi):
        xi = self._check(xi)
        return -self.constants.f1_plus * self.L + self.constants.K2 * xi

    def R(self, xi, sigma, kappa):
        return sigma * self.R_sigma(xi) + kappa * self.R_kappa(xi)

    def dR(self, xi, sigma, kappa):
        xi = self._check(xi)
        return -sigma * self.constants.K1 * self.pert.theta_profile(xi) + kappa * self.constants.K2

    def P_star(self, sigma, kappa):
        return sigma * self.P_sigma_star + kappa * self.P_kappa_star

    def margin(self, xi, sigma, kappa):
        return np.abs(self.dR(xi, sigma, kappa))

    def roots(self, func, n_samples=4096, iterations=60):
        """All roots of func on [0, L]: sign-change bracketing plus bisection."""
        x = np.linspace(0.0, self.L, n_samples + 1)
        f = func(x)
        found = list(x[f == 0.0])
        idx = np.nonzero(f[:-1] * f[1:] < 0)[0]
        if idx.size:
            a, b = x[idx].copy(), x[idx + 1].copy()
            fa = f[idx].copy()
            for _ in range(iterations):
                m = 0.5 * (a + b)
                fm = func(m)
                left = np.sign(fm) == np.sign(fa)
                a = np.where(left, m, a)
                fa = np.where(left, fm, fa)
                b = np.where(left, b, m)
            fb = func(b)
            pick = np.where(np.abs(fa) <= np.abs(fb), a, b)
            found.extend(pick.tolist())
        found = sorted(found)
        out = []
        for r in found:
            if not out or r - out[-1] > 1e-12 * self.L:
                out.append(float(r))
        return out, float(f.min()), float(f.max())


def _xi_star(solv: Solvability, hyp: Hypothesis):
    c = solv.constants
    if hyp.case == "H2" or (hyp.case == "H4" and c.K2 != 0):
        if c.K2 == 0:
            return None
        xi = (solv.P_kappa_star + c.f1_plus * solv.L) / c.K2
        return xi if 0 < xi < solv.L else None
    if hyp.case == "H1" or hyp.case == "H4":
        rts, _, _ = solv.roots(lambda x: solv.R_sigma(x) - solv.P_sigma_star)
    else:
        PA = hyp.A * solv.P_sigma_star + solv.P_kappa_star
        rts, _, _ = solv.roots(lambda x: hyp.A * solv.R_sigma(x) + solv.R_kappa(x) - PA)
    rts = [r for r in rts if 0 < r < solv.L]
    return rts[0] if rts else None


def locate_shock(solv: Solvability, hyp: Hypothesis, sigma: float, kappa: float,
                 policy: str = "nearest", beta0: float | None = None,
                 n_samples: int = 4096) -> LocationSolution:
    if policy not in POLICIES:
        raise DomainError(f"root policy must be one of {POLICIES}")
    if sigma < 0 or kappa < 0 or sigma + kappa == 0:
        raise DomainError("need sigma, kappa >= 0 with sigma + kappa > 0")
    if not hyp.consistent(sigma, kappa):
        raise DomainError(f"(sigma, kappa) = ({sigma}, {kappa}) is off the {hyp.case} curve")
    P = solv.P_star(sigma, kappa)
    roots, lo, hi = solv.roots(lambda x: solv.R(x, sigma, kappa) - P, n_samples)
    R_inf, R_sup = lo + P, hi + P
    roots = [r for r in roots if 0 < r < solv.L]
    if not roots:
        raise NoSolutionError(
            f"P* = {P:.17g} outside (inf R, sup R) = ({R_inf:.17g}, {R_sup:.17g})",
            R_inf, R_sup, P)
    xi_star = _xi_star(solv, hyp)
    notes = []
    margins = np.array([float(solv.margin(r, sigma, kappa)) for r in roots])
    if beta0 is None:
        beta0 = hyp.beta0
    if beta0 is None:
        beta0 = 0.5 * float(margins.min()) / (sigma + kappa)
        if beta0 == 0:
            beta0 = 0.5 * float(margins.max()) / (sigma + kappa)
    ok = margins >= beta0 * (sigma + kappa)
    if not np.any(ok):
        raise AdmissibilityError(
            f"all {len(roots)} roots violate the margin beta0*(sigma+kappa) = {beta0 * (sigma + kappa):.6g}")
    cands = [r for r, good in zip(roots, ok) if good]
    if len(cands) == 1:
        xi = cands[0]
    elif policy == "smallest":
        xi = cands[0]
    elif policy == "largest":
        xi = cands[-1]
    elif xi_star is not None:
        xi = min(cands, key=lambda r: abs(r - xi_star))
    else:
        xi = cands[0]
        notes.append("no limit root xi_star defined; smallest admissible root selected")
    if len(roots) > 1:
        notes.append(f"{len(roots)} roots found")
    m = float(solv.margin(xi, sigma, kappa))
    return LocationSolution(float(xi), roots, xi_star, bool(m >= beta0 * (sigma + kappa)), m,
                            float(beta0), R_inf, R_sup, float(P), notes)


def hypothesis_checks(solv: Solvability, hyp: Hypothesis, sigma: float, kappa: float,
                      sol: LocationSolution, tol: float = 1e-12) -> dict:
    """Report on the side conditions of the selected perturbation hypothesis."""
    c = solv.constants
    report = {"case": hyp.case, "admissible": sol.admissible,
              "admissible_margin": sol.margin, "beta0": sol.beta0,
              "curve_consistent": hyp.consistent(sigma, kappa)}
    xs = sol.xi_star
    theta_star = float(solv.pert.theta_profile(xs)) if xs is not None else None
    if hyp.case == "H1":
        rs = solv.R_sigma(np.linspace(0.0, solv.L, 4097))
        report["P_in_range"] = bool(rs.min() < solv.P_sigma_star < rs.max())
        report["theta_at_xi_star"] = theta_star
        report["theta_nonzero"] = theta_star is not None and abs(theta_star) > tol
    elif hyp.case == "H2":
        lo, hi = sorted((float(solv.R_kappa(0.0)), float(solv.R_kappa(solv.L))))
        report["P_in_range"] = bool(lo < solv.P_kappa_star < hi)
    elif hyp.case == "H3":
        PA = hyp.A * solv.P_sigma_star + solv.P_kappa_star
        ra = hyp.A * solv.R_sigma(np.linspace(0.0, solv.L, 4097)) + \
            solv.R_kappa(np.linspace(0.0, solv.L, 4097))
        report["P_in_range"] = bool(ra.min() < PA < ra.max())
        report["theta_at_xi_star"] = theta_star
        if theta_star is None or c.K1 == 0:
            report["h3_nondegenerate"] = False
        else:
            gap = theta_star - c.K2 / (hyp.A * c.K1)
            report["h3_gap"] = gap
            report["h3_nondegenerate"] = abs(gap) > tol * max(1.0, abs(theta_star))
    else:
        ok = xs is not None
        report["on_curve"] = bool(ok and abs(float(solv.R_sigma(xs)) - solv.P_sigma_star)
                                  <= 1e-10 * max(1.0, abs(solv.P_sigma_star)))
    report["satisfied"] = all(v for k, v in report.items()
                              if k in ("admissible", "curve_consistent", "P_in_range",
                                       "theta_nonzero", "h3_nondegenerate", "on_curve"))
    return report
