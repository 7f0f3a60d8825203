"""Shared numerics: exponential integrals on the closed right half-plane and
adaptive Gauss-Kronrod quadrature with analytic oscillatory tails.

The exponential integrals are evaluated with complex arithmetic because every
integral in the physics modules sits on the imaginary axis (the damping
prescription e^{-eps k} is taken analytically, never by extrapolation).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

EULER_GAMMA = 0.5772156649015328606065120900824024

_E1_SERIES_RADIUS = 2.0
_E1_SERIES_TERMS = 48
_E1_CF_MAX_ITER = 2000
# convergence is declared at the rounding-noise floor of the Lentz ratio;
# demanding 1e-16 can cycle forever on the imaginary axis
_E1_CF_TOL = 4e-16


class QuadratureError(RuntimeError):
    """Raised when an adaptive quadrature cannot reach its tolerance.

    Attributes carry the partial value and the achieved error estimate so
    callers can degrade gracefully.
    """

    def __init__(self, message, value=None, error=None):
        super().__init__(message)
        self.value = value
        self.error = error


# ---------------------------------------------------------------------------
# Exponential integrals
# ---------------------------------------------------------------------------

def _e1_series(z):
    # E1(z) = -gamma - log z + sum_{n>=1} (-1)^{n+1} z^n / (n n!), |z| small.
    total = np.zeros_like(z)
    term = np.ones_like(z)
    for n in range(1, _E1_SERIES_TERMS + 1):
        term = term * (-z) / n
        total = total - term / n
    return -EULER_GAMMA - np.log(z) + total


def _e1_continued_fraction(z):
    # Modified Lentz evaluation of E1(z) = e^{-z} / (z + 1 - 1/(z + 3 - 4/(...))).
    tiny = 1e-300
    b = z + 1.0
    c = np.full_like(z, 1.0 / tiny)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, _E1_CF_MAX_ITER + 1):
        a = -float(i) * float(i)
        b = b + 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        delta = c * d
        h = h * delta
        if np.all(np.abs(delta - 1.0) < _E1_CF_TOL):
            break
    return np.exp(-z) * h


def exp_integral_e1(z):
    """E1(z) = Gamma(0, z) for Re z >= 0, z != 0.

    Power series for |z| <= 2, continued fraction beyond; both branches keep
    absolute error below ~1e-12 across |z| in [1e-6, 1e6].  Accepts scalars or
    numpy arrays.
    """
    z_arr = np.asarray(z, dtype=complex)
    scalar = z_arr.ndim == 0
    z_arr = np.atleast_1d(z_arr)
    if np.any(z_arr.real < -1e-14):
        raise ValueError("exp_integral_e1 requires Re z >= 0")
    if np.any(z_arr == 0):
        raise ValueError("exp_integral_e1 is singular at z = 0")
    out = np.empty_like(z_arr)
    small = np.abs(z_arr) <= _E1_SERIES_RADIUS
    if np.any(small):
        out[small] = _e1_series(z_arr[small])
    if np.any(~small):
        out[~small] = _e1_continued_fraction(z_arr[~small])
    return out[0] if scalar else out.reshape(np.shape(z))


def exp_integral_e2(z):
    """E2(z) = e^{-z} - z E1(z) for Re z >= 0; E2(0) = 1 (the defining
    integral of t^{-2} e^{-zt} over [1, inf) is continuous at the origin)."""
    z_arr = np.asarray(z, dtype=complex)
    scalar = z_arr.ndim == 0
    z_arr = np.atleast_1d(z_arr)
    if np.any(z_arr.real < -1e-14):
        raise ValueError("exp_integral_e2 requires Re z >= 0")
    out = np.ones_like(z_arr)
    nz = z_arr != 0
    if np.any(nz):
        zn = z_arr[nz]
        out[nz] = np.exp(-zn) - zn * exp_integral_e1(zn)
    return out[0] if scalar else out.reshape(np.shape(z))


# ---------------------------------------------------------------------------
# Adaptive Gauss-Kronrod quadrature (G7/K15)
# ---------------------------------------------------------------------------

# Kronrod 15 nodes on [-1, 1]; odd-indexed nodes form the embedded Gauss 7 rule.
_KRONROD_NODES = np.array([
    -0.991455371120813, -0.949107912342759, -0.864864423359769,
    -0.741531185599394, -0.586087235467691, -0.405845151377397,
    -0.207784955007898, 0.0, 0.207784955007898, 0.405845151377397,
    0.586087235467691, 0.741531185599394, 0.864864423359769,
    0.949107912342759, 0.991455371120813,
])
_KRONROD_WEIGHTS = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728, 0.204432940075298,
    0.190350578064785, 0.169004726639267, 0.140653259715525,
    0.104790010322250, 0.063092092629979, 0.022935322010529,
])
_GAUSS_WEIGHTS = np.array([
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469, 0.381830050505119, 0.279705391489277,
    0.129484966168870,
])
_GAUSS_SLICE = slice(1, 15, 2)


@dataclass
class QuadConfig:
    """Knobs for the adaptive panels.

    ``tail_split`` multiplies the natural scale of an integrand when the
    caller splits off an analytic tail (used by the physics modules).
    """

    atol: float = 1e-12
    rtol: float = 1e-10
    max_subdivisions: int = 2000
    tail_split: float = 10.0
    singular_endpoints: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.atol <= 0 or self.rtol <= 0:
            raise ValueError("tolerances must be positive")


def _gk_panel(f, a, b):
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = mid + half * _KRONROD_NODES
    fx = np.asarray(f(x), dtype=complex)
    kron = half * np.sum(_KRONROD_WEIGHTS * fx)
    gauss = half * np.sum(_GAUSS_WEIGHTS * fx[_GAUSS_SLICE])
    return kron, abs(kron - gauss)


def adaptive_quad(f, a, b, cfg: QuadConfig | None = None):
    """Integrate f over [a, b] by adaptive G7/K15 bisection.

    ``f`` must accept a numpy array of abscissae and return values (real or
    complex); endpoints are never evaluated, so integrable endpoint
    singularities need no special casing.  Returns ``(value, error_estimate)``
    with a conservative estimate (the raw |K15 - G7| panel sum).
    Raises QuadratureError when the subdivision cap is hit.
    """
    if cfg is None:
        cfg = QuadConfig()
    if a == b:
        return 0.0, 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    val, err = _gk_panel(f, a, b)
    heap = [(-err, a, b, val, err)]
    total_val = val
    total_err = err
    count = 1
    while total_err > max(cfg.atol, cfg.rtol * abs(total_val)):
        if count >= cfg.max_subdivisions:
            raise QuadratureError(
                f"adaptive_quad: {count} panels, error {total_err:.3e} above "
                f"tolerance", value=sign * _finalize(total_val),
                error=total_err)
        neg_err, pa, pb, pval, perr = heapq.heappop(heap)
        pm = 0.5 * (pa + pb)
        lv, le = _gk_panel(f, pa, pm)
        rv, re = _gk_panel(f, pm, pb)
        total_val += lv + rv - pval
        total_err += le + re - perr
        heapq.heappush(heap, (-le, pa, pm, lv, le))
        heapq.heappush(heap, (-re, pm, pb, rv, re))
        count += 1
    return sign * _finalize(total_val), total_err


def _finalize(value):
    if abs(value.imag) <= 1e-14 * (1.0 + abs(value.real)):
        return value.real
    return value


def adaptive_quad_vector(f, a, b, cfg: QuadConfig | None = None):
    """Adaptive G7/K15 for vector-valued integrands.

    ``f(x)`` maps an array of m abscissae to shape (m, n); the max-norm over
    components drives subdivision.  Used for k-integrals that are needed at
    every point of a time grid at once.
    """
    if cfg is None:
        cfg = QuadConfig()

    def panel(pa, pb):
        mid = 0.5 * (pa + pb)
        half = 0.5 * (pb - pa)
        x = mid + half * _KRONROD_NODES
        fx = np.asarray(f(x))
        kron = half * np.tensordot(_KRONROD_WEIGHTS, fx, axes=(0, 0))
        gauss = half * np.tensordot(_GAUSS_WEIGHTS, fx[_GAUSS_SLICE], axes=(0, 0))
        return kron, float(np.max(np.abs(kron - gauss)))

    val, err = panel(a, b)
    heap = [(-err, a, b, val, err)]
    total_val = val.copy()
    total_err = err
    count = 1
    while total_err > max(cfg.atol, cfg.rtol * float(np.max(np.abs(total_val)))):
        if count >= cfg.max_subdivisions:
            raise QuadratureError(
                f"adaptive_quad_vector: {count} panels, error {total_err:.3e}",
                value=total_val, error=total_err)
        neg_err, pa, pb, pval, perr = heapq.heappop(heap)
        pm = 0.5 * (pa + pb)
        lv, le = panel(pa, pm)
        rv, re = panel(pm, pb)
        total_val += lv + rv - pval
        total_err += le + re - perr
        heapq.heappush(heap, (-le, pa, pm, lv, le))
        heapq.heappush(heap, (-re, pm, pb, rv, re))
        count += 1
    return total_val, total_err


# ---------------------------------------------------------------------------
# Oscillatory tails
# ---------------------------------------------------------------------------

def oscillatory_tail(g, dg, omega, p_min, decay_order):
    """Tail integral of g(p) e^{i omega p} over [p_min, inf).

    ``g`` must be smooth and decay like p^{-decay_order} with decay_order > 0
    (> 1 if omega == 0).  Two integrations by parts give

        -e^{i w p0} [ g(p0)/(i w) + g'(p0)/(i w)^2 ] + (i w)^{-2} I[g''],

    and the uncomputed I[g''] is returned as a bound estimated from the
    power-law order.  For the exact envelope 1/p use
    :func:`oscillatory_tail_inverse_p` instead.  Returns (value, bound).
    """
    if omega == 0.0:
        if decay_order <= 1:
            raise ValueError("tail diverges: decay_order <= 1 with omega = 0")
        # map p = p_min / t onto (0, 1]
        def h(t):
            p = p_min / t
            return g(p) * p / t
        val, err = adaptive_quad(h, 0.0, 1.0)
        return val, err
    g0 = g(p_min)
    dg0 = dg(p_min)
    if abs(g0) > 0 and decay_order <= 0:
        raise ValueError("non-decaying envelope")
    iw = 1j * omega
    value = -np.exp(iw * p_min) * (g0 / iw + dg0 / iw ** 2)
    # |g''| ~ a(a+1) |g|/p^2 for g ~ p^{-a}; integrate the envelope bound.
    a = decay_order
    second_moment = a * (a + 1.0) * abs(g0) / (p_min * (a + 1.0))
    bound = second_moment / omega ** 2
    return value, bound


def oscillatory_tail_inverse_p(omega, p_min):
    """Exact tail of e^{i omega p} / p over [p_min, inf): E1(-i omega p_min)."""
    if omega == 0.0:
        raise ValueError("logarithmically divergent at omega = 0")
    if p_min <= 0:
        raise ValueError("p_min must be positive")
    return exp_integral_e1(-1j * omega * p_min)
