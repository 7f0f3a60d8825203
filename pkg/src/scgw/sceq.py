"""Fixed-point solver for the backreaction of a conformally coupled massive
scalar in its order-zero adiabatic state on flat FLRW cosmologies.

In units 8 pi G = c = 1 the traced field equation collapses to a first-order
integral equation for the Hubble rate in conformal time,

    H(tau) = H0 + int_{tau0}^tau a/(Hc^2 - H^2)
             (H^4 - 2 Hc^2 H^2 - 15/2 m^4
              + 240 pi^2 (m^2 <phi^2>(H) + 4 Lambda)) d eta,

with the critical rate Hc^2 = 1440 pi^2 and the scale factor recovered from

    a(tau) = a0 (1 - a0 int_{tau0}^tau H d eta)^{-1}.

The renormalization constants are fixed so that no m^4, m^2 R or box-R terms
survive in the trace (4 c1 = -1/(32 pi^2), c2 = 1/(288 pi^2), 6 c3 + 2 c4 =
-1/(2880 pi^2)); they are baked into the renormalized <phi^2> of
:mod:`scgw.modes`.  Iterating the map is a contraction on short windows; the
solver monitors the measured ratio, guards the two regularity conditions
(|H| < Hc and a0 int H < 1) and extends window by window while keeping the
quantum state anchored at the original initial time.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .modes import CosmoBackground, default_scale, wick_square_profile
from .numerics import QuadratureError

HC_DEFAULT = math.sqrt(1440.0) * math.pi

# renormalization choices, recorded for reporting; their effect is already
# folded into the closed local terms of the Wick square and the trace
RENORM_CONSTANTS = {
    "4c1": -1.0 / (32.0 * math.pi ** 2),
    "c2": 1.0 / (288.0 * math.pi ** 2),
    "6c3+2c4": -1.0 / (2880.0 * math.pi ** 2),
}


class RegularityError(RuntimeError):
    """A trajectory left the regular domain (pole in the trace equation or
    diverging scale factor)."""

    def __init__(self, condition, message):
        super().__init__(message)
        self.condition = condition


@dataclass
class SolverParams:
    mass: float = 0.0
    lam: float = 0.0                  # cosmological constant
    hc: float = HC_DEFAULT            # override only for unit experiments
    lam_scale: float = None           # renormalization length; default kills the log
    grid_n: int = 256
    tol: float = 1e-8                 # sup-norm delta, scaled by max(1, |H0|)
    resid_tol: float = 1e-6
    max_iter: int = 200
    retry_cap: int = 8
    wick_tol: float = 1e-9
    k_cap: float = 120.0
    radiation_offset: float = 0.0     # classical radiation in the constraint

    def __post_init__(self):
        if self.mass < 0:
            raise ValueError("mass must be nonnegative")
        if self.grid_n < 8:
            raise ValueError("grid_n too small")
        if self.lam_scale is None and self.mass > 0:
            self.lam_scale = default_scale(self.mass)

    def stationary_hubble(self):
        """m = 0 fixed point: root of H^4 - 2 Hc^2 H^2 + 960 pi^2 Lambda."""
        disc = 1.0 - 960.0 * math.pi ** 2 * self.lam / self.hc ** 4
        if disc < 0:
            raise ValueError("no stationary solution: Lambda too large")
        return self.hc * math.sqrt(1.0 - math.sqrt(disc))


@dataclass
class HubbleTrajectory:
    """Uniform conformal-time grid with Hubble samples and the initial scale
    factor; cubic interpolation between knots."""

    taus: np.ndarray
    H: np.ndarray
    a0: float

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.H = np.asarray(self.H, dtype=float)
        if self.taus.size != self.H.size:
            raise ValueError("grid/sample mismatch")
        if self.a0 <= 0:
            raise ValueError("a0 must be positive")

    @property
    def tau0(self):
        return float(self.taus[0])

    @property
    def H0(self):
        return float(self.H[0])

    def cumulative_H(self):
        return cumulative_simpson(self.H, self.taus)

    def check_regularity(self, hc, margin=1.0):
        """Conditions: (a) |H| < Hc on the grid, (b) a0 int H < 1."""
        if np.max(np.abs(self.H)) >= hc * margin:
            raise RegularityError("hit_hc", "|H| reached the critical rate")
        if np.max(self.a0 * self.cumulative_H()) >= margin:
            raise RegularityError("a_diverging", "scale factor diverging")


def cumulative_simpson(y, taus):
    """Cumulative integral on a uniform grid, locally quadratic (composite
    Simpson order); matches the cubic interpolation contract of the
    trajectory."""
    y = np.asarray(y, dtype=float)
    taus = np.asarray(taus, dtype=float)
    n = y.size
    out = np.zeros(n)
    if n < 2:
        return out
    h = taus[1] - taus[0]
    if n == 2:
        out[1] = 0.5 * h * (y[0] + y[1])
        return out
    # odd steps: integrate the quadratic through the three nearest knots
    for j in range(1, n):
        if j == 1:
            out[1] = h * (5.0 * y[0] + 8.0 * y[1] - y[2]) / 12.0
        elif j % 2 == 0:
            out[j] = out[j - 2] + h * (y[j - 2] + 4.0 * y[j - 1] + y[j]) / 3.0
        else:
            out[j] = out[j - 1] + h * (-y[j - 2] + 8.0 * y[j - 1] + 5.0 * y[j]) / 12.0
    return out


def scale_factor(traj: HubbleTrajectory, hc=HC_DEFAULT) -> np.ndarray:
    """a = a0 (1 - a0 int H)^{-1} on the grid; regularity condition (b)
    guards the denominator."""
    denom = 1.0 - traj.a0 * traj.cumulative_H()
    if np.min(denom) <= 0.0:
        raise RegularityError("a_diverging", "denominator of a(H) vanished")
    return traj.a0 / denom


class _CubicInterp:
    """Piecewise 4-point Lagrange interpolation on a uniform grid."""

    def __init__(self, taus, values):
        self.taus = np.asarray(taus, dtype=float)
        self.values = np.asarray(values, dtype=float)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        x, v = self.taus, self.values
        idx = np.clip(np.searchsorted(x, t) - 1, 1, x.size - 3)
        out = np.zeros_like(t)
        for off in range(-1, 3):
            term = v[idx + off].copy()
            for other in range(-1, 3):
                if other == off:
                    continue
                term *= (t - x[idx + other]) / (x[idx + off] - x[idx + other])
            out += term
        return out[0] if scalar else out


def background_from_trajectory(traj: HubbleTrajectory, mass: float) -> CosmoBackground:
    """Order-zero adiabatic-state background for the current iterate: a from
    the closed-form functional, a' = a^2 H exactly."""
    cum = _CubicInterp(traj.taus, traj.cumulative_H())
    h_int = _CubicInterp(traj.taus, traj.H)
    a0 = traj.a0

    def a(t):
        return a0 / (1.0 - a0 * cum(t))

    def ap(t):
        av = a(t)
        return av * av * h_int(t)

    return CosmoBackground(a, ap, traj.tau0, mass, label="solver-iterate")


def trace_integrand(traj: HubbleTrajectory, params: SolverParams,
                    wick_values: np.ndarray, a_values: np.ndarray) -> np.ndarray:
    """f(H) = a/(Hc^2 - H^2) (H^4 - 2 Hc^2 H^2 - 15/2 m^4
    + 240 pi^2 (m^2 <phi^2> + 4 Lambda))."""
    hc2 = params.hc ** 2
    h2 = traj.H ** 2
    pole = hc2 - h2
    if np.min(pole) <= 0.0:
        raise RegularityError("hit_hc", "pole of the trace equation reached")
    source = (h2 * h2 - 2.0 * hc2 * h2 - 7.5 * params.mass ** 4
              + 240.0 * math.pi ** 2 * (params.mass ** 2 * wick_values
                                        + 4.0 * params.lam))
    return a_values * source / pole


@dataclass
class PicardResult:
    H_new: np.ndarray
    wick: np.ndarray
    wick_error: float
    f: np.ndarray


class _ModeCache:
    """Wick profiles keyed by the digest of (grid, scale-factor samples);
    map applications on an identical background are free."""

    def __init__(self):
        self.store = {}
        self.hits = 0
        self.misses = 0

    def key(self, taus, a_values, mass):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(taus).tobytes())
        h.update(np.ascontiguousarray(a_values).tobytes())
        h.update(repr(mass).encode())
        return h.digest()

    def get(self, key):
        value = self.store.get(key)
        if value is not None:
            self.hits += 1
        return value

    def put(self, key, value):
        self.misses += 1
        self.store[key] = value


def picard_map(traj: HubbleTrajectory, params: SolverParams,
               cache: _ModeCache | None = None) -> PicardResult:
    """One application H -> H0 + int f(H): rebuilds the state on the
    iterate's background and integrates the trace source."""
    traj.check_regularity(params.hc)
    a_values = scale_factor(traj, params.hc)
    if params.mass == 0.0:
        wick = np.zeros_like(traj.H)
        werr = 0.0
    else:
        key = cache.key(traj.taus, a_values, params.mass) if cache else None
        cached = cache.get(key) if cache else None
        if cached is None:
            bg = background_from_trajectory(traj, params.mass)
            res = wick_square_profile(bg, traj.taus, lam=params.lam_scale,
                                      tol=params.wick_tol, k_cap=params.k_cap)
            wick, werr = res.values, res.error
            if cache:
                cache.put(key, (wick, werr))
        else:
            wick, werr = cached
    f = trace_integrand(traj, params, wick, a_values)
    h_new = traj.H0 + cumulative_simpson(f, traj.taus)
    return PicardResult(h_new, wick, werr, f)


@dataclass
class SolveReport:
    taus: np.ndarray
    H: np.ndarray
    a: np.ndarray
    wick: np.ndarray
    residual: float
    deltas: list
    ratios: list
    termination: str
    iterations: int
    wick_error: float = 0.0
    windows: list = field(default_factory=list)
    regularity_ok: bool = True
    a0: float = 1.0

    def trajectory(self):
        return HubbleTrajectory(self.taus, self.H, self.a0)


def solve_local(tau0, a0, H0, tau1, params: SolverParams,
                cache: _ModeCache | None = None) -> SolveReport:
    """Iterate the map on [tau0, tau1] until the sup-norm delta and the
    fixed-point residual meet their tolerances; shrinks the window and
    retries when regularity fails or the iteration stops contracting."""
    if a0 <= 0:
        raise ValueError("a0 must be positive")
    if abs(H0) >= params.hc:
        raise ValueError("|H0| must lie below the critical rate")
    if cache is None:
        cache = _ModeCache()
    window = tau1 - tau0
    if window <= 0:
        raise ValueError("tau1 must exceed tau0")
    for attempt in range(params.retry_cap + 1):
        try:
            report = _iterate_window(tau0, a0, H0, tau0 + window, params, cache)
        except RegularityError:
            window *= 0.5
            continue
        if report.termination == "converged":
            return report
        window *= 0.5
    report.termination = "window_shrunk_failed"
    return report


def _iterate_window(tau0, a0, H0, tau1, params, cache):
    taus = np.linspace(tau0, tau1, params.grid_n)
    traj = HubbleTrajectory(taus, np.full(params.grid_n, float(H0)), a0)
    deltas, ratios = [], []
    scale = max(1.0, abs(H0))
    wick = np.zeros(params.grid_n)
    werr = 0.0
    for iteration in range(1, params.max_iter + 1):
        result = picard_map(traj, params, cache)
        delta = float(np.max(np.abs(result.H_new - traj.H)))
        deltas.append(delta)
        if len(deltas) >= 2 and deltas[-2] > 0:
            ratios.append(delta / deltas[-2])
        traj = HubbleTrajectory(taus, result.H_new, a0)
        wick, werr = result.wick, result.wick_error
        if delta < params.tol * scale:
            # measure the fixed-point residual with one more application
            final = picard_map(traj, params, cache)
            residual = float(np.max(np.abs(final.H_new - traj.H)))
            if residual < params.resid_tol:
                traj.check_regularity(params.hc)
                return SolveReport(taus, traj.H, scale_factor(traj, params.hc),
                                   final.wick, residual, deltas, ratios,
                                   "converged", iteration,
                                   wick_error=final.wick_error,
                                   windows=[(tau0, tau1)], a0=a0)
        if len(ratios) >= 3 and min(ratios[-3:]) > 1.0:
            break  # not contracting on this window
    return SolveReport(taus, traj.H, scale_factor(traj, params.hc), wick,
                       float("inf"), deltas, ratios, "iteration_cap",
                       len(deltas), wick_error=werr,
                       windows=[(tau0, tau1)], a0=a0)


def extend_maximal(report: SolveReport, tau_max, params: SolverParams) -> SolveReport:
    """March the accepted solution toward tau_max window by window.

    Each window re-anchors the integral equation at the last accepted knot
    while the state keeps its original anchor: the modes entering the Wick
    square are always built on the full history starting at the first tau0.
    Window lengths adapt to keep the measured contraction ratio below 1/2.
    Stops at tau_max, at the critical rate, or when the scale factor
    diverges; the termination field records which.
    """
    taus = report.taus.copy()
    H = report.H.copy()
    a0 = report.a0
    h = taus[1] - taus[0]
    windows = list(report.windows)
    deltas_all = list(report.deltas)
    ratios_all = list(report.ratios)
    cache = _ModeCache()
    window_pts = max(taus.size // 2, 8)
    termination = "reached_tau_max"
    residual = report.residual
    wick = report.wick
    werr = report.wick_error

    while taus[-1] < tau_max - 0.5 * h:
        n_new = min(window_pts, max(8, int(round((tau_max - taus[-1]) / h))))
        ext_taus = taus[-1] + h * np.arange(1, n_new + 1)
        full_taus = np.concatenate([taus, ext_taus])
        full_H = np.concatenate([H, np.full(n_new, H[-1])])
        frozen = taus.size
        converged = False
        deltas = []
        for iteration in range(1, params.max_iter + 1):
            traj = HubbleTrajectory(full_taus, full_H, a0)
            try:
                result = picard_map(traj, params, cache)
            except RegularityError as exc:
                termination = exc.condition
                return SolveReport(taus, H, scale_factor(
                    HubbleTrajectory(taus, H, a0), params.hc), wick, residual,
                    deltas_all, ratios_all, termination, len(deltas_all),
                    wick_error=werr, windows=windows, a0=a0)
            new_seg = result.H_new[frozen:]
            delta = float(np.max(np.abs(new_seg - full_H[frozen:])))
            deltas.append(delta)
            if len(deltas) >= 2 and deltas[-2] > 0:
                ratios_all.append(delta / deltas[-2])
            full_H[frozen:] = new_seg
            if delta < params.tol * max(1.0, abs(H[-1])):
                converged = True
                wick = result.wick
                werr = result.wick_error
                residual = delta
                break
        deltas_all.extend(deltas)
        if not converged:
            if window_pts <= 8:
                termination = "window_shrunk_failed"
                break
            window_pts = max(8, window_pts // 2)
            continue
        # regularity on the extended trajectory
        try:
            HubbleTrajectory(full_taus, full_H, a0).check_regularity(params.hc)
        except RegularityError as exc:
            termination = exc.condition
            break
        taus, H = full_taus, full_H
        windows.append((float(ext_taus[0]), float(ext_taus[-1])))
        recent = ratios_all[-3:]
        if recent and max(recent) > 0.5 and window_pts > 8:
            window_pts = max(8, window_pts // 2)
        elif recent and max(recent) < 0.1:
            window_pts = int(window_pts * 1.5)

    traj = HubbleTrajectory(taus, H, a0)
    return SolveReport(taus, H, scale_factor(traj, params.hc), wick, residual,
                       deltas_all, ratios_all, termination, len(deltas_all),
                       wick_error=werr, windows=windows, a0=a0)


def constraint_check(tau0, a0, H0, params: SolverParams) -> float:
    """Signed residual of 3 H0^2 = rho0 + Lambda with rho0 the regularized
    initial energy density of the state (plus the configured classical
    radiation); the state's a'(tau0) is tied to H0 by a' = a^2 H."""
    from .modes import energy_density_initial

    if params.mass == 0.0 or H0 == 0.0:
        rho0 = 0.0
    else:
        def a(t):
            return a0 / (1.0 - a0 * H0 * (np.asarray(t, dtype=float) - tau0))

        def ap(t):
            av = a(t)
            return av * av * H0

        bg = CosmoBackground(a, ap, tau0, params.mass, label="constraint")
        rho0 = energy_density_initial(bg)
    rho0 += params.radiation_offset
    return 3.0 * H0 ** 2 - rho0 - params.lam
