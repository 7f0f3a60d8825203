"""Coordinate-series expansion of the squared-geodesic-distance biscalar
(half the squared geodesic distance between nearby points) for a metric
supplied as a truncated Taylor jet at a base point.

The expansion

    sigma(x, x + dx) = sum_m (1/m!) s_{mu_1...mu_m} dx^{mu_1} ... dx^{mu_m}

has s = s_mu = 0 and s_{mu nu} = g_{mu nu}; higher coefficients follow from
the quadratic first-order relation g^{ab} d_a sigma d_b sigma = 2 sigma,
which fixes, for m > 2,

    2(1-m) s_{m} = sum_{k=2}^{m-2} binom(m,k) g^{nr}
                   (s_{k,n} - s_{k+1 n}) (s_{m-k,r} - s_{m-k+1 r})
                   - 2m d_(mu_m) s_{m-1)},

fully symmetrised over the m free indices.  Because the coefficient of order
m needs coordinate partials of lower coefficients, every quantity is carried
as a truncated jet: all products, contractions and derivatives below act on
Taylor tables, so the recursion stays purely numeric.

Everything here is dimension-generic; d = 4 backgrounds get convenience
builders (Minkowski, FLRW in either time coordinate, the de Sitter
conformal chart) plus the exact de Sitter chord-length closed forms.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


# ---------------------------------------------------------------------------
# Truncated multivariate Taylor jets
# ---------------------------------------------------------------------------
# A jet of order J in d variables is a vector of derivative values f_alpha =
# d^alpha f(x0), |alpha| <= J, enumerated in graded lexicographic order so
# that the space of order J' < J is a prefix of the space of order J.

@lru_cache(maxsize=None)
def _multi_indices(dim: int, order: int):
    idx = []
    for total in range(order + 1):
        for alpha in itertools.product(range(total + 1), repeat=dim):
            if sum(alpha) == total:
                idx.append(alpha)
    return tuple(idx)


@lru_cache(maxsize=None)
def _space(dim: int, order: int):
    return _JetSpace(dim, order)


class _JetSpace:
    def __init__(self, dim, order):
        self.dim = dim
        self.order = order
        self.indices = _multi_indices(dim, order)
        self.n = len(self.indices)
        self.lookup = {a: i for i, a in enumerate(self.indices)}
        # Leibniz table: (fg)_gamma = sum binom(gamma, alpha) f_alpha g_beta
        table = np.zeros((self.n, self.n, self.n))
        for i, a in enumerate(self.indices):
            for j, b in enumerate(self.indices):
                c = tuple(x + y for x, y in zip(a, b))
                if sum(c) <= order:
                    w = 1.0
                    for ct, at in zip(c, a):
                        w *= math.comb(ct, at)
                    table[i, j, self.lookup[c]] = w
        self.mul_table = table
        # derivative maps: index in space(order-1) -> source index here
        self.deriv_source = []
        if order >= 1:
            lower = _multi_indices(dim, order - 1)
            for nu in range(dim):
                src = np.empty(len(lower), dtype=np.intp)
                for i, a in enumerate(lower):
                    shifted = tuple(x + (1 if t == nu else 0) for t, x in enumerate(a))
                    src[i] = self.lookup[shifted]
                self.deriv_source.append(src)

    def monomials(self, dx):
        """Vector of dx^alpha / alpha! for Taylor evaluation."""
        out = np.empty(self.n)
        for i, a in enumerate(self.indices):
            v = 1.0
            for t, power in enumerate(a):
                if power:
                    v *= dx[t] ** power / math.factorial(power)
            out[i] = v
        return out


def _truncate(arr, dim, to_order):
    return arr[..., : _space(dim, to_order).n]


def _jet_mul(x, y, dim, order):
    """Pointwise product of jet-valued tensors (last axis = jet coeffs)."""
    sp = _space(dim, order)
    return np.einsum("...i,...j,ijk->...k",
                     _truncate(x, dim, order), _truncate(y, dim, order),
                     sp.mul_table)


def _jet_deriv_tensor(arr, dim, order):
    """All coordinate partials: appends one tensor axis for the direction.

    Input lives in space(order); output lives in space(order-1) with shape
    (..., dim, n_lower)."""
    sp = _space(dim, order)
    stacked = [arr[..., sp.deriv_source[nu]] for nu in range(dim)]
    return np.stack(stacked, axis=-2)


def _symmetrize(arr, rank):
    if rank < 2:
        return arr
    acc = np.zeros_like(arr)
    axes_rest = tuple(range(rank, arr.ndim))
    for perm in itertools.permutations(range(rank)):
        acc += np.transpose(arr, perm + axes_rest)
    return acc / math.factorial(rank)


def _inverse_metric_jet(g, dim, order):
    """Jet of g^{mu nu} from the jet of g_{mu nu}, order by order."""
    sp = _space(dim, order)
    g = _truncate(g, dim, order)
    inv = np.zeros((dim, dim, sp.n))
    g0inv = np.linalg.inv(g[:, :, 0])
    inv[:, :, 0] = g0inv
    for i_gamma in range(1, sp.n):
        gamma = sp.indices[i_gamma]
        rhs = np.zeros((dim, dim))
        # sum over alpha + beta = gamma with alpha != 0
        for i_alpha, alpha in enumerate(sp.indices):
            if i_alpha == 0:
                continue
            beta = tuple(c - a for c, a in zip(gamma, alpha))
            if any(b < 0 for b in beta):
                continue
            w = 1.0
            for ct, at in zip(gamma, alpha):
                w *= math.comb(ct, at)
            rhs += w * g[:, :, i_alpha] @ inv[:, :, sp.lookup[beta]]
        inv[:, :, i_gamma] = -g0inv @ rhs
    return inv


# ---------------------------------------------------------------------------
# Metric jets
# ---------------------------------------------------------------------------

@dataclass
class MetricJet:
    """Metric components and their coordinate partials at a base point.

    ``jet`` has shape (dim, dim, n_coeffs) in the shared graded enumeration;
    entry [mu, nu, alpha] is d^alpha g_{mu nu}(x0).  ``order`` is the highest
    derivative order carried.  The matrix jet[:, :, 0] must be symmetric and
    nondegenerate.
    """

    dim: int
    order: int
    jet: np.ndarray
    signature: str = "lorentzian"

    def __post_init__(self):
        sp = _space(self.dim, self.order)
        self.jet = np.asarray(self.jet, dtype=float)
        if self.jet.shape != (self.dim, self.dim, sp.n):
            raise ValueError(f"jet shape {self.jet.shape} does not match "
                             f"dim {self.dim}, order {self.order}")
        g0 = self.jet[:, :, 0]
        if not np.allclose(g0, g0.T, rtol=0, atol=1e-12 * (1 + np.abs(g0).max())):
            raise ValueError("metric must be symmetric at the base point")
        if abs(np.linalg.det(g0)) < 1e-14:
            raise ValueError("metric is singular at the base point")

    @classmethod
    def from_callable(cls, g_fn, x0, order, step=None, signature="lorentzian"):
        """Tabulate partials of ``g_fn`` by nested central differences.

        Default step is max(1, |x0|) * 1e-5.  Central differences lose
        accuracy quickly with derivative order (roundoff ~ eps / h^r); supply
        analytic jets for high-order work.
        """
        x0 = np.asarray(x0, dtype=float)
        dim = x0.size
        if step is None:
            step = max(1.0, float(np.linalg.norm(x0))) * 1e-5
        sp = _space(dim, order)

        def _fd_partial(fn, x, alpha, h, d):
            axis = next((t for t, a in enumerate(alpha) if a > 0), None)
            if axis is None:
                return np.asarray(fn(x), dtype=float)
            lower = tuple(a - (1 if t == axis else 0) for t, a in enumerate(alpha))
            ep = np.zeros(d)
            ep[axis] = h
            return (_fd_partial(lambda y: fn(y + ep), x, lower, h, d)
                    - _fd_partial(lambda y: fn(y - ep), x, lower, h, d)) / (2 * h)

        jet = np.empty((dim, dim, sp.n))
        for i, alpha in enumerate(sp.indices):
            jet[:, :, i] = _fd_partial(g_fn, x0, alpha, step, dim)
        return cls(dim, order, jet, signature)

    def value_at(self, dx):
        """Taylor evaluation g(x0 + dx)."""
        sp = _space(self.dim, self.order)
        return self.jet @ sp.monomials(np.asarray(dx, dtype=float))


def _diag_conformal_jet(scale2_derivs, dim, order, lorentzian_sign=True):
    """Metric a2(x0) * diag(-1, 1, ..., 1) depending on coordinate 0 only;
    scale2_derivs[r] = (a^2)^{(r)}(x0)."""
    sp = _space(dim, order)
    jet = np.zeros((dim, dim, sp.n))
    eta = np.eye(dim)
    if lorentzian_sign:
        eta[0, 0] = -1.0
    for i, alpha in enumerate(sp.indices):
        if any(alpha[1:]):
            continue
        r = alpha[0]
        if r < len(scale2_derivs):
            jet[:, :, i] = scale2_derivs[r] * eta
    return MetricJet(dim, order, jet)


def _exp_jet(log_derivs, value0, order):
    """Derivatives of value0 * exp(u) given derivatives of u (u(0) = 0)."""
    out = [float(value0)]
    for r in range(order):
        acc = 0.0
        for s in range(r + 1):
            du = log_derivs[s] if s < len(log_derivs) else 0.0
            acc += math.comb(r, s) * du * out[r - s]
        out.append(acc)
    return out


def minkowski_jet(dim=4, order=4):
    sp = _space(dim, order)
    jet = np.zeros((dim, dim, sp.n))
    jet[:, :, 0] = np.diag([-1.0] + [1.0] * (dim - 1))
    return MetricJet(dim, order, jet)


def flrw_conformal_jet(a, hubble_derivs, order=4, dim=4):
    """g = a(tau)^2 (-dtau^2 + dx^2) from (cH, cH', cH'', cH''', ...) at the
    base point, where cH = a'/a."""
    # (ln a^2)^{(r+1)} = 2 cH^{(r)}
    log2 = [2.0 * h for h in hubble_derivs]
    scale2 = _exp_jet(log2, a * a, order)
    return _diag_conformal_jet(scale2, dim, order)


def flrw_cosmological_jet(a, hubble_derivs, order=4, dim=4):
    """g = -dt^2 + a(t)^2 dx^2 from (H, Hdot, Hddot, ...) at the base point."""
    log2 = [2.0 * h for h in hubble_derivs]
    scale2 = _exp_jet(log2, a * a, order)
    sp = _space(dim, order)
    jet = np.zeros((dim, dim, sp.n))
    for i, alpha in enumerate(sp.indices):
        if any(alpha[1:]):
            continue
        r = alpha[0]
        if r == 0:
            jet[0, 0, i] = -1.0
        if r < len(scale2):
            for s in range(1, dim):
                jet[s, s, i] = scale2[r]
    return MetricJet(dim, order, jet)


def desitter_conformal_jet(hubble, tau0, order=4, dim=4):
    """Expanding patch in conformal time, a = -1/(H tau), tau0 < 0."""
    if tau0 >= 0:
        raise ValueError("conformal time must be negative")
    ch = -1.0 / tau0
    derivs = [math.factorial(r) * ch ** (r + 1) for r in range(order)]
    return flrw_conformal_jet(-1.0 / (hubble * tau0), derivs, order, dim)


# ---------------------------------------------------------------------------
# The coefficient recursion
# ---------------------------------------------------------------------------

@dataclass
class SigmaCoefficients:
    """Fully symmetric expansion coefficients s_m for m = 0..order, each a
    jet of order (order - m) so that higher coefficients could be built on
    top of it; coeffs[m] has shape (dim,)*m + (n_jet,)."""

    dim: int
    order: int
    coeffs: list

    def value(self, m):
        return self.coeffs[m][..., 0]


def sigma_coeffs(metric: MetricJet, order: int) -> SigmaCoefficients:
    """Run the recursion up to the requested expansion order (>= 2).

    The metric jet must carry partials to order (order - 2); each s_m comes
    out with its own partials to (order - m), produced by running every
    algebraic step in jet arithmetic.
    """
    if order < 2:
        raise ValueError("expansion order must be at least 2")
    if metric.order < order - 2:
        raise ValueError(
            f"metric jet of order {metric.order} cannot support expansion "
            f"order {order} (needs {order - 2})")
    d = metric.dim
    n_top = _space(d, order).n

    coeffs = [None] * (order + 1)
    coeffs[0] = np.zeros(_space(d, order).n)
    coeffs[1] = np.zeros((d, _space(d, max(order - 1, 0)).n))
    coeffs[2] = _pad_or_truncate(metric.jet, d, order - 2)

    ginv_full = _inverse_metric_jet(metric.jet, d, metric.order)

    for m in range(3, order + 1):
        j_m = order - m
        sp_m = _space(d, j_m)
        acc = np.zeros((d,) * m + (sp_m.n,))
        # -2m * d_(mu_m) s_{m-1}
        prev = coeffs[m - 1]
        j_prev = order - (m - 1)
        acc -= 2.0 * m * _truncate(_jet_deriv_tensor(prev, d, j_prev), d, j_m)
        # quadratic terms
        for k in range(2, m - 1):
            f1 = _first_order_factor(coeffs, k, d, order, j_m)
            f2 = _first_order_factor(coeffs, m - k, d, order, j_m)
            ginv = _truncate(ginv_full, d, j_m)
            mul = _space(d, j_m).mul_table
            # contract the derivative slots through g^{nr}, jet products on
            # the trailing axis
            half = np.einsum("...ni,nrj,ijk->...rk", f1, ginv, mul)
            shape1 = half.shape[:-2]
            shape2 = f2.shape[:-2]
            term = np.einsum("ari,brj,ijk->abk",
                             half.reshape(-1, d, sp_m.n),
                             f2.reshape(-1, d, sp_m.n),
                             mul)
            term = term.reshape(shape1 + shape2 + (sp_m.n,))
            acc += math.comb(m, k) * term
        sym = _symmetrize(acc, m)
        coeffs[m] = sym / (2.0 * (1 - m))
    return SigmaCoefficients(d, order, coeffs)


def _first_order_factor(coeffs, k, d, order, out_order):
    """(d_n s_k - s_{k+1, n}) truncated to the requested jet order; the
    derivative direction sits on the last tensor axis."""
    j_k = order - k
    dk = _jet_deriv_tensor(coeffs[k], d, j_k)
    crop = _truncate(dk, d, out_order)
    higher = _truncate(coeffs[k + 1], d, out_order)
    return crop - higher


def _pad_or_truncate(arr, dim, to_order):
    n_to = _space(dim, to_order).n
    if arr.shape[-1] >= n_to:
        return arr[..., :n_to].copy()
    out = np.zeros(arr.shape[:-1] + (n_to,))
    out[..., : arr.shape[-1]] = arr
    return out


def sigma_eval(coeffs: SigmaCoefficients, dx) -> float:
    """Truncated series sum_m (1/m!) s_m dx^m."""
    dx = np.asarray(dx, dtype=float)
    if dx.shape != (coeffs.dim,):
        raise ValueError(f"dx must have dimension {coeffs.dim}")
    total = 0.0
    for m in range(2, coeffs.order + 1):
        v = coeffs.value(m)
        for _ in range(m):
            v = v @ dx
        total += v / math.factorial(m)
    return float(total)


def sigma_gradient(coeffs: SigmaCoefficients, dx) -> np.ndarray:
    """d sigma / d dx^mu of the truncated series (derivative at the
    displaced point)."""
    dx = np.asarray(dx, dtype=float)
    grad = np.zeros(coeffs.dim)
    for m in range(2, coeffs.order + 1):
        v = coeffs.value(m)
        for _ in range(m - 1):
            v = v @ dx
        grad += v / math.factorial(m - 1)
    return grad


def transport_residual(metric: MetricJet, coeffs: SigmaCoefficients, dx) -> float:
    """g^{mu nu}(x0+dx) d_mu sigma d_nu sigma - 2 sigma for the truncated
    series; decays like |dx|^(order+1) when the coefficients are right."""
    grad = sigma_gradient(coeffs, dx)
    g_at = metric.value_at(dx)
    ginv = np.linalg.inv(g_at)
    return float(grad @ ginv @ grad - 2.0 * sigma_eval(coeffs, dx))


# ---------------------------------------------------------------------------
# Printed FLRW reference expansions (golden oracle)
# ---------------------------------------------------------------------------

def flrw_sigma_reference(chart, background, a, dx, order=6) -> float:
    """Sixth-order reference value of sigma on a flat FLRW background.

    chart="cosmological": background = (H, Hdot, Hddot, Hdddot), dx[0] = dt.
    chart="conformal": background = (cH, cH', cH'', cH'''), dx[0] = dtau.
    Terms of total order > ``order`` in the separation are dropped.
    """
    if order > 6:
        raise ValueError("reference expansion is printed through order 6")
    dx = np.asarray(dx, dtype=float)
    r2 = float(np.dot(dx[1:], dx[1:]))
    if chart == "cosmological":
        H, H1, H2, H3 = background
        dt = dx[0]
        by_order = {
            2: -dt ** 2 + a ** 2 * r2,
            3: a ** 2 * r2 * H * dt,
            4: (a ** 2 * r2 * (H ** 2 + H1) * dt ** 2 / 3.0
                + a ** 4 * r2 ** 2 * H ** 2 / 12.0),
            5: (a ** 2 * r2 * (2 * H * H1 + H2) * dt ** 3 / 12.0
                + a ** 4 * r2 ** 2 * H * (2 * H ** 2 + H1) * dt / 12.0),
            6: (a ** 2 * r2 * (-4 * H ** 4 - 8 * H ** 2 * H1 + 2 * H1 ** 2
                               + 6 * H * H2 + 3 * H3) * dt ** 4 / 180.0
                + a ** 4 * r2 ** 2 * (48 * H ** 4 + 74 * H ** 2 * H1
                                      + 8 * H1 ** 2 + 9 * H * H2) * dt ** 2 / 360.0
                + a ** 6 * r2 ** 3 * H ** 2 * (4 * H ** 2 + 3 * H1) / 360.0),
        }
        return 0.5 * sum(v for o, v in by_order.items() if o <= order)
    if chart == "conformal":
        h, h1, h2, h3 = background
        dt = dx[0]
        by_order = {
            2: -dt ** 2 + r2,
            3: -h * dt ** 3 + h * dt * r2,
            4: (-(7 * h ** 2 + 4 * h1) * dt ** 4 / 12.0
                + (3 * h ** 2 + 2 * h1) * dt ** 2 * r2 / 6.0
                + h ** 2 * r2 ** 2 / 12.0),
            5: (-(3 * h ** 3 + 5 * h * h1 + h2) * dt ** 5 / 12.0
                + (2 * h ** 3 + 4 * h * h1 + h2) * dt ** 3 * r2 / 12.0
                + h * (h ** 2 + h1) * dt * r2 ** 2 / 12.0),
            6: (-(31 * h ** 4 + 101 * h ** 2 * h1 + 28 * h1 ** 2
                  + 39 * h * h2 + 6 * h3) * dt ** 6 / 360.0
                + (15 * h ** 4 + 61 * h ** 2 * h1 + 20 * h1 ** 2
                   + 30 * h * h2 + 6 * h3) * dt ** 4 * r2 / 360.0
                + (15 * h ** 4 + 37 * h ** 2 * h1 + 8 * h1 ** 2
                   + 9 * h * h2) * dt ** 2 * r2 ** 2 / 360.0
                + (h ** 4 + 3 * h ** 2 * h1) * r2 ** 3 / 360.0),
        }
        return 0.5 * a ** 2 * sum(v for o, v in by_order.items() if o <= order)
    raise ValueError("chart must be 'cosmological' or 'conformal'")


# ---------------------------------------------------------------------------
# de Sitter closed forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeSitterPair:
    """Two conformal-chart points (tau, x) with tau < 0 and the expansion
    rate of the background."""

    tau1: float
    x1: tuple
    tau2: float
    x2: tuple
    hubble: float

    def __post_init__(self):
        if self.tau1 >= 0 or self.tau2 >= 0:
            raise ValueError("conformal times must be negative")
        if self.hubble <= 0:
            raise ValueError("hubble must be positive")


def desitter_Z(pair: DeSitterPair) -> float:
    """Chord-length function in the conformal chart:
    Z = (tau^2 + tau'^2 - |x - x'|^2) / (2 tau tau')."""
    dx = np.asarray(pair.x1, dtype=float) - np.asarray(pair.x2, dtype=float)
    return float((pair.tau1 ** 2 + pair.tau2 ** 2 - dx @ dx)
                 / (2.0 * pair.tau1 * pair.tau2))


def desitter_sigma(Z: float, hubble: float) -> float:
    """Half squared geodesic distance from the chord length:
    arccos(Z)^2 / (2 H^2) for |Z| <= 1, continued to -arccosh(Z)^2 / (2 H^2)
    for timelike separation Z > 1.  Z < -1 (beyond the antipodal cut) has no
    real geodesic and is rejected."""
    if hubble <= 0:
        raise ValueError("hubble must be positive")
    if Z > 1.0:
        return -math.acosh(Z) ** 2 / (2.0 * hubble ** 2)
    if Z >= -1.0:
        return math.acos(Z) ** 2 / (2.0 * hubble ** 2)
    raise ValueError("no real geodesic for Z < -1")
