"""Induced metric-fluctuation observables on an exponentially expanding
background: the auxiliary oscillatory integral A, the power spectrum of the
Newtonian potential sourced by squared-field fluctuations, and its
bispectrum.

Everything is built from the closed form

    A(tau, kappa, p) = (i/2) kappa tau [ E2(i (p+kappa) tau) e^{i kappa tau}
                       - E2(i (p-kappa) tau) e^{-i kappa tau} ],

the exact value of int_{-inf}^tau (kappa tau^2/tau1^2)
sin(kappa (tau-tau1)) e^{-i p tau1} d tau1 for every real p (the integrand
is absolutely integrable; the point |p| = kappa is removable because E2 is
continuous at 0).  The damping prescription e^{-eps p} is therefore never
needed numerically.

The leading spectrum is

    P0(tau, k) = m^4/(16 pi^2 k^4) int_k^inf |A(tau, k/sqrt3, p)|^2 dp,

which scales as k^{-3} times a function of k tau alone, is bounded by 16 C
k^{-3} with C = (3 - 2 sqrt3 arccoth sqrt3) m^4 / (192 pi^2), and tends to
C k^{-3} at early times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import QuadConfig, adaptive_quad, exp_integral_e2

SQRT3 = math.sqrt(3.0)


@dataclass
class FluctParams:
    mass: float
    hubble: float = 1.0
    tol: float = 1e-6            # relative target for the p-integral
    b0_radial: int = 48          # bispectrum grid controls
    b0_angular: int = 32
    b0_azimuthal: int = 32

    def __post_init__(self):
        if self.mass <= 0 or self.hubble <= 0:
            raise ValueError("mass and hubble must be positive")

    def hz_constant(self) -> float:
        """C = (3 - 2 sqrt3 arccoth sqrt3)/(192 pi^2) m^4: the early-time
        plateau of k^3 P0."""
        arccoth = 0.5 * math.log((SQRT3 + 1.0) / (SQRT3 - 1.0))
        return (3.0 - 2.0 * SQRT3 * arccoth) / (192.0 * math.pi ** 2) * self.mass ** 4


def auxA(tau, kappa, p):
    """Closed-form auxiliary function; ``p`` may be an array.

    Requires tau < 0 and kappa > 0; finite for every real p including the
    removable points p = +-kappa (E2(0) = 1 is the one-sided limit there).
    """
    if tau >= 0:
        raise ValueError("tau must be negative")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    p = np.asarray(p, dtype=float)
    zp = 1j * (p + kappa) * tau
    zm = 1j * (p - kappa) * tau
    phase = np.exp(1j * kappa * tau)
    val = 0.5j * kappa * tau * (exp_integral_e2(zp) * phase
                                - exp_integral_e2(zm) / phase)
    return val if val.ndim else complex(val)


def auxA_bound(kappa, p):
    """tau-uniform bound 4 kappa^2 / |kappa^2 - p^2| (|p| != kappa)."""
    return 4.0 * kappa ** 2 / np.abs(kappa ** 2 - np.asarray(p, dtype=float) ** 2)


def auxA_limit(kappa, p):
    """Early-time modulus kappa^2 / |kappa^2 - p^2|."""
    return kappa ** 2 / np.abs(kappa ** 2 - np.asarray(p, dtype=float) ** 2)


def auxA_small_tau_bound(tau, kappa, p):
    """|A| <= 2 kappa^2 |tau| / |p| for p != 0, tau < 0."""
    return 2.0 * kappa ** 2 * abs(tau) / np.abs(np.asarray(p, dtype=float))


def _tail_bound_integral(kappa, p_from):
    """int_{p_from}^inf 16 kappa^4 (p^2 - kappa^2)^{-2} dp in closed form."""
    q = p_from
    return 16.0 * kappa ** 4 * ((1.0 / (4.0 * kappa ** 2))
                                * (1.0 / (q - kappa) + 1.0 / (q + kappa))
                                + (1.0 / (4.0 * kappa ** 3))
                                * math.log((q + kappa) / (q - kappa)))


def power_spectrum_P0(tau, k, params: FluctParams, with_error=False):
    """Leading power spectrum at conformal time tau < 0 and momentum k > 0.

    Adaptive panels on [k, 2 kappa] and [2 kappa, 10 kappa], then octave
    extension until the closed-form tail bound drops below the relative
    tolerance; the dropped tail enters the error estimate.
    """
    if tau >= 0 or k <= 0:
        raise ValueError("need tau < 0 and k > 0")
    kappa = k / SQRT3

    def f(p):
        return np.abs(auxA(tau, kappa, p)) ** 2

    cfg = QuadConfig(atol=1e-300, rtol=params.tol * 0.2, max_subdivisions=400)
    total = 0.0
    err = 0.0
    splits = [k, 2.0 * kappa, 10.0 * kappa]
    for a, b in zip(splits[:-1], splits[1:]):
        v, e = adaptive_quad(f, a, b, cfg)
        total += v
        err += e
    p_hi = splits[-1]
    while _tail_bound_integral(kappa, p_hi) > 0.25 * params.tol * total:
        seg_cfg = QuadConfig(atol=max(0.05 * params.tol * total, 1e-300),
                             rtol=1e-3, max_subdivisions=400)
        v, e = adaptive_quad(f, p_hi, 2.0 * p_hi, seg_cfg)
        total += v
        err += e
        p_hi *= 2.0
        if p_hi > 1e9 * kappa:
            break
    err += _tail_bound_integral(kappa, p_hi)
    pref = params.mass ** 4 / (16.0 * math.pi ** 2 * k ** 4)
    if with_error:
        return pref * total, pref * err
    return pref * total


def rescaled_profile(ktau_values, params: FluctParams):
    """k^3 P0 as a function of k tau alone: evaluated at unit momentum.

    Returns an array over the (negative) k tau samples; dividing by
    ``params.hz_constant()`` gives the plotted profile.
    """
    out = []
    for x in np.asarray(ktau_values, dtype=float):
        if x >= 0:
            raise ValueError("k tau samples must be negative")
        out.append(power_spectrum_P0(x, 1.0, params))
    return np.asarray(out)


def retarded_hat(tau, tau1, k, hubble):
    """Mode-space retarded inverse of the perturbed trace operator:
    -(1/(6 H^2)) (tau^2/tau1^4) (sqrt3/k) sin(k (tau - tau1)/sqrt3)."""
    return (-(1.0 / (6.0 * hubble ** 2)) * (tau ** 2 / tau1 ** 4)
            * (SQRT3 / k) * np.sin(k * (tau - tau1) / SQRT3))


def minkowski_sq_kernel(tau, tau2, k):
    """Spatial Fourier kernel of the squared massless vacuum:
    (1/(128 pi^5)) int_k^inf e^{-i p (tau - tau2)} dp evaluated in the
    damped limit: e^{-i k dt} / (128 pi^5 i dt).  Distributional at equal
    times."""
    dt = tau - tau2
    if dt == 0:
        raise ValueError("equal-time value is distributional")
    return np.exp(-1j * k * dt) / (128.0 * math.pi ** 5 * 1j * dt)


# ---------------------------------------------------------------------------
# Bispectrum
# ---------------------------------------------------------------------------

def _closure_vectors(k1, k2, k3):
    """Planar momenta with k1 + k2 + k3 = 0 from the three magnitudes."""
    for a, b, c in ((k1, k2, k3), (k2, k3, k1), (k3, k1, k2)):
        if a > b + c + 1e-12 * (a + b + c):
            raise ValueError("magnitudes violate the closure triangle")
    v1 = np.array([k1, 0.0, 0.0])
    cos12 = (k3 ** 2 - k1 ** 2 - k2 ** 2) / (2.0 * k1 * k2)
    cos12 = min(1.0, max(-1.0, cos12))
    v2 = k2 * np.array([cos12, math.sqrt(max(0.0, 1.0 - cos12 ** 2)), 0.0])
    v3 = -(v1 + v2)
    return v1, v2, v3


def _gauss_nodes(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def bispectrum_B0(tau, kvecs, params: FluctParams, resolution=None,
                  with_error=False):
    """Leading bispectrum of the potential for closed momenta k1+k2+k3=0.

    ``kvecs`` is a triple of 3-vectors (or magnitudes, from which a planar
    closed triangle is built).  The 3d momentum integral is performed in
    two-sphere-distance coordinates around one leg plus an azimuthal
    Gauss/trapezoid tensor grid; the integrable 1/|p| rays cancel against
    the volume element.  All six relabelings of the non-symmetric integrand
    are summed, with no compensating factor; the result is verified to be
    permutation symmetric at quadrature accuracy.  The error estimate comes
    from a half-resolution re-evaluation.
    """
    if tau >= 0:
        raise ValueError("tau must be negative")
    kv = [np.asarray(v, dtype=float) for v in kvecs]
    if all(v.ndim == 0 for v in kv):
        kv = list(_closure_vectors(*(float(v) for v in kv)))
    if any(v.shape != (3,) for v in kv):
        raise ValueError("momenta must be 3-vectors or three magnitudes")
    total = np.linalg.norm(kv[0] + kv[1] + kv[2])
    scale = max(np.linalg.norm(v) for v in kv)
    if total > 1e-9 * scale:
        raise ValueError("momenta must sum to zero")
    if resolution is None:
        resolution = (params.b0_radial, params.b0_angular, params.b0_azimuthal)
    value = _b0_quadrature(tau, kv, params, resolution)
    if not with_error:
        return value
    half = tuple(max(6, r // 2) for r in resolution)
    coarse = _b0_quadrature(tau, kv, params, half)
    return value, abs(value - coarse)


def _b0_quadrature(tau, kv, params, resolution):
    n_u, n_v, n_phi = resolution
    k1, k2, k3 = (float(np.linalg.norm(v)) for v in kv)
    mags = (k1, k2, k3)
    kappas = tuple(m / SQRT3 for m in mags)
    scale = max(mags)

    phi = np.arange(n_phi) * (2.0 * math.pi / n_phi)
    cosphi = np.cos(phi)

    # radial map u = scale * t/(1-t)
    t_nodes, t_w = _gauss_nodes(n_u, 0.0, 1.0)

    acc = 0.0 + 0.0j
    import itertools as _it

    for perm in _it.permutations((0, 1, 2)):
        i1, i2, i3 = perm
        ka = mags[i1]
        axis = kv[i1] / ka
        kc = kv[i3]
        cz = float(kc @ axis)
        perp = kc - cz * axis
        cx = float(np.linalg.norm(perp))
        k3n = math.sqrt(cz * cz + cx * cx)

        for t, tw in zip(t_nodes, t_w):
            u = scale * t / (1.0 - t)
            du = scale / (1.0 - t) ** 2
            if u == 0.0:
                continue
            v_nodes, v_w = _gauss_nodes(n_v, abs(u - ka), u + ka)
            pz = (u * u - v_nodes ** 2 + ka * ka) / (2.0 * ka)
            prho = np.sqrt(np.maximum(u * u - pz ** 2, 0.0))
            # w = |p + k_{pi_3}| on the (v, phi) grid
            w2 = (u * u + k3n * k3n
                  + 2.0 * (np.outer(pz * cz, np.ones(n_phi))
                           + np.outer(prho * cx, cosphi)))
            w = np.sqrt(np.maximum(w2, 1e-300))
            a_first = auxA(tau, kappas[i1], v_nodes + u)      # (n_v,)
            a_third = auxA(tau, kappas[i3], -(w + u))          # (n_v, n_phi)
            a_mid = auxA(tau, kappas[i2], w - v_nodes[:, None])
            integrand = (a_first[:, None] * a_third * a_mid) / (ka * w)
            acc += tw * du * np.sum(v_w[:, None] * integrand) * (2.0 * math.pi / n_phi)

    pref = params.mass ** 6 / (32.0 * SQRT3 * (k1 * k2 * k3) ** 2)
    return pref * float(np.real(acc))
