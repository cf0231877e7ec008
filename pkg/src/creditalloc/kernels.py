"""Special functions and quadrature against the standard normal measure.

Everything here is a pure function of its inputs. Integrals of the form
``∫ f(x) n(x) dx`` are evaluated on piecewise Gauss-Legendre panels between
``-tail`` and ``+tail`` plus Gauss-Laguerre tail rules beyond, so that
polynomially growing integrands (Hermite products) keep their tail mass.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import NumericalError, UnsupportedOrderError

__all__ = [
    "MAX_HERMITE_ORDER",
    "QuadKind",
    "QuadratureRule",
    "bivariate_norm_cdf",
    "gauss_hermite_rule",
    "gauss_legendre_rule",
    "hermite_he",
    "hermite_table",
    "norm_cdf",
    "norm_inv_cdf",
    "norm_pdf",
    "panel_grid",
    "quad_normal",
    "tail_grid",
]

MAX_HERMITE_ORDER = 64
SQRT_2PI = math.sqrt(2.0 * math.pi)
DEFAULT_TAIL = 8.0
DEFAULT_PANEL_WIDTH = 1.0
DEFAULT_TAIL_NODES = 40


# ---------------------------------------------------------------------------
# Hermite polynomials


def hermite_he(n, x):
    """Probabilists' Hermite polynomial He_n evaluated at ``x``.

    Uses the unnormalised three-term recurrence; any 1/sqrt(n!) scaling is
    the caller's business.
    """
    n = int(n)
    if n < 0:
        raise ValueError("Hermite order must be non-negative")
    if n > MAX_HERMITE_ORDER:
        raise UnsupportedOrderError(
            f"Hermite order {n} exceeds supported maximum {MAX_HERMITE_ORDER}"
        )
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev if prev.ndim else float(prev)
    cur = x.copy()
    for k in range(1, n):
        prev, cur = cur, x * cur - k * prev
    return cur if cur.ndim else float(cur)


def hermite_table(n_max, x):
    """Stack of He_0..He_n_max at ``x``; shape ``(n_max + 1,) + x.shape``."""
    if n_max > MAX_HERMITE_ORDER:
        raise UnsupportedOrderError(
            f"Hermite order {n_max} exceeds supported maximum {MAX_HERMITE_ORDER}"
        )
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = x
    for k in range(1, n_max):
        out[k + 1] = x * out[k] - k * out[k - 1]
    return out


# ---------------------------------------------------------------------------
# Univariate normal


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / SQRT_2PI
    return out if out.ndim else float(out)


def norm_cdf(x):
    out = special.ndtr(np.asarray(x, dtype=float))
    return out if out.ndim else float(out)


def norm_inv_cdf(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ValueError("norm_inv_cdf requires 0 < p < 1")
    out = special.ndtri(p)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Bivariate normal CDF (Drezner-Wesolowsky integration over the correlation,
# in the form refined by Genz)


@lru_cache(maxsize=None)
def _half_legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    keep = x > 0
    return x[keep], w[keep]


def _bvn_upper(h, k, r):
    """P(X > h, Y > k) for standard normals with correlation r."""
    if math.isinf(h) and h > 0 or math.isinf(k) and k > 0:
        return 0.0
    if math.isinf(h):
        return special.ndtr(-k) if not math.isinf(k) else 1.0
    if math.isinf(k):
        return special.ndtr(-h)
    if r == 0.0:
        return special.ndtr(-h) * special.ndtr(-k)

    absr = abs(r)
    if absr < 0.3:
        xs, ws = _half_legendre(6)
    elif absr < 0.75:
        xs, ws = _half_legendre(12)
    else:
        xs, ws = _half_legendre(20)
    x = np.concatenate([1.0 - xs, 1.0 + xs])
    w = np.concatenate([ws, ws])

    hk = h * k
    if absr < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = 0.5 * math.asin(r)
        sn = np.sin(asr * x)
        bvn = float(np.dot(np.exp((sn * hk - hs) / (1.0 - sn * sn)), w))
        return bvn * asr / (2.0 * math.pi) + special.ndtr(-h) * special.ndtr(-k)

    if r < 0:
        k = -k
        hk = -hk
    bvn = 0.0
    if absr < 1.0:
        a_s = (1.0 - r) * (1.0 + r)
        a = math.sqrt(a_s)
        bs = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 80.0
        asr = -0.5 * (bs / a_s + hk)
        if asr > -100.0:
            bvn = a * math.exp(asr) * (
                1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0 + c * d * a_s * a_s
            )
        if hk > -100.0:
            b = math.sqrt(bs)
            sp = SQRT_2PI * special.ndtr(-b / a)
            bvn -= math.exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
        a *= 0.5
        xs2 = (a * x) ** 2
        asr_v = -0.5 * (bs / xs2 + hk)
        ok = asr_v > -100.0
        xs2 = xs2[ok]
        sp_v = 1.0 + c * xs2 * (1.0 + 5.0 * d * xs2)
        rs = np.sqrt(1.0 - xs2)
        ep = np.exp(-0.5 * hk * xs2 / (1.0 + rs) ** 2) / rs
        bvn = (a * float(np.dot(np.exp(asr_v[ok]) * (sp_v - ep), w[ok])) - bvn) / (
            2.0 * math.pi
        )
    if r > 0:
        return bvn + special.ndtr(-max(h, k))
    if h >= k:
        return -bvn
    if h < 0:
        lower = special.ndtr(k) - special.ndtr(h)
    else:
        lower = special.ndtr(-h) - special.ndtr(-k)
    return lower - bvn


def _bvn_scalar(x, y, rho):
    if not -1.0 <= rho <= 1.0:
        raise ValueError("correlation must lie in [-1, 1]")
    if rho == 1.0:
        return float(special.ndtr(min(x, y)))
    if rho == -1.0:
        return max(float(special.ndtr(x) + special.ndtr(y)) - 1.0, 0.0)
    p = _bvn_upper(-x, -y, rho)
    return min(1.0, max(0.0, float(p)))


_bvn_vec = np.vectorize(_bvn_scalar, otypes=[float])


def bivariate_norm_cdf(x, y, rho):
    """P(X <= x, Y <= y) for standard normals with correlation ``rho``.

    Accepts scalars or broadcastable arrays.
    """
    if np.ndim(x) == 0 and np.ndim(y) == 0 and np.ndim(rho) == 0:
        return _bvn_scalar(float(x), float(y), float(rho))
    return _bvn_vec(x, y, rho)


# ---------------------------------------------------------------------------
# Quadrature rules


class QuadKind(str, enum.Enum):
    GAUSS_HERMITE_PROBABILISTS = "gauss_hermite_probabilists"
    GAUSS_LEGENDRE_MAPPED = "gauss_legendre_mapped"


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of a one-dimensional rule.

    For ``GAUSS_HERMITE_PROBABILISTS`` the weights already contain the normal
    density and sum to one. For ``GAUSS_LEGENDRE_MAPPED`` the rule lives on
    ``interval`` and is re-mapped onto each panel by :func:`quad_normal`.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: QuadKind
    interval: tuple = field(default=(-1.0, 1.0))

    def __post_init__(self):
        nodes = _frozen(self.nodes)
        weights = _frozen(self.weights)
        if nodes.ndim != 1 or nodes.shape != weights.shape or nodes.size < 1:
            raise ValueError("nodes and weights must be equal-length 1-D sequences")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "kind", QuadKind(self.kind))

    def __len__(self):
        return self.nodes.size


@lru_cache(maxsize=64)
def gauss_legendre_rule(m=32):
    x, w = np.polynomial.legendre.leggauss(int(m))
    return QuadratureRule(x, w, QuadKind.GAUSS_LEGENDRE_MAPPED)


@lru_cache(maxsize=64)
def gauss_hermite_rule(m=64):
    x, w = np.polynomial.hermite_e.hermegauss(int(m))
    return QuadratureRule(x, w / w.sum(), QuadKind.GAUSS_HERMITE_PROBABILISTS)


@lru_cache(maxsize=16)
def _laguerre(m):
    return np.polynomial.laguerre.laggauss(int(m))


def tail_grid(bound, m=DEFAULT_TAIL_NODES):
    """Nodes/weights for ``∫_bound^∞ f(x) n(x) dx`` with ``bound > 0``.

    Substituting ``x = bound + u / bound`` leaves an ``e^{-u}`` kernel, so a
    Gauss-Laguerre rule is exact for polynomial growth up to degree 2m-1 up to
    the slowly varying ``exp(-u^2 / (2 bound^2))`` factor. Mirror the nodes
    for the left tail.
    """
    bound = np.asarray(bound, dtype=float)
    u, wl = _laguerre(m)
    b = bound[..., None]
    x = b + u / b
    w = norm_pdf(b) / b * wl * np.exp(-(u * u) / (2.0 * b * b))
    return x, w


def panel_grid(breaks, rule):
    """Map ``rule`` onto consecutive panels of sorted ``breaks``.

    ``breaks`` has shape ``(..., K)``; the result has shape
    ``(..., (K - 1) * len(rule))`` and the weights include ``n(x)``.
    Zero-width panels are allowed and contribute nothing.
    """
    breaks = np.asarray(breaks, dtype=float)
    lo = breaks[..., :-1, None]
    hi = breaks[..., 1:, None]
    a, b = rule.interval
    scale = (hi - lo) / (b - a)
    x = lo + (rule.nodes - a) * scale
    w = rule.weights * scale * norm_pdf(x)
    shape = breaks.shape[:-1] + (-1,)
    return x.reshape(shape), w.reshape(shape)


def normal_breaks(split_points, tail=DEFAULT_TAIL, panel_width=DEFAULT_PANEL_WIDTH):
    """Sorted panel edges covering [-tail, tail] including every split."""
    splits = np.sort(np.asarray(split_points, dtype=float).ravel())
    if splits.size and not np.all(np.isfinite(splits)):
        raise ValueError("split points must be finite")
    if splits.size:
        tail = max(tail, float(np.max(np.abs(splits))) + 1.0)
    n_base = int(math.ceil(2.0 * tail / panel_width))
    base = np.linspace(-tail, tail, n_base + 1)
    return np.unique(np.concatenate([base, splits])), tail


def quad_normal(f, rule=None, split_points=(), *, tail=DEFAULT_TAIL,
                panel_width=DEFAULT_PANEL_WIDTH, tail_nodes=DEFAULT_TAIL_NODES):
    """Integrate ``∫ f(x) n(x) dx`` over the whole real line.

    ``f`` must accept a numpy array. With a Gauss-Legendre rule the line is
    cut at every split point (jump discontinuities of ``f``) and on a regular
    grid of ``panel_width`` inside ``[-tail, tail]``; the two tails are
    handled by :func:`tail_grid`. A Gauss-Hermite rule is applied directly
    and cannot honour split points.
    """
    if rule is None:
        rule = gauss_legendre_rule(32)
    if rule.kind is QuadKind.GAUSS_HERMITE_PROBABILISTS:
        if len(split_points):
            raise ValueError("Gauss-Hermite rule cannot split the integration range")
        vals = np.asarray(f(rule.nodes), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise NumericalError("integrand is not finite at a quadrature node")
        return float(np.dot(vals, rule.weights))

    breaks, tail = normal_breaks(split_points, tail, panel_width)
    x_mid, w_mid = panel_grid(breaks, rule)
    x_r, w_r = tail_grid(tail, tail_nodes)
    x = np.concatenate([-x_r[::-1], x_mid, x_r])
    w = np.concatenate([w_r[::-1], w_mid, w_r])
    vals = np.asarray(f(x), dtype=float)
    if vals.shape != x.shape:
        vals = np.broadcast_to(vals, x.shape)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("integrand is not finite at a quadrature node")
    return math.fsum(vals * w)
