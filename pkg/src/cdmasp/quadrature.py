"""Tilted Gaussian expectations behind the detector's soft outputs.

For a field ``h(z) = d + sqrt(delta) * z`` with ``z ~ N(0, 1)`` and
``u = h / sigma**2`` we need

    m = E[(2 cosh u)^x tanh u]   / E[(2 cosh u)^x]
    M = E[(2 cosh u)^x tanh^2 u] / E[(2 cosh u)^x]

``tanh`` has poles at ``u = i*pi/2``, a distance ``pi*sigma**2 / (2*sqrt(delta))``
from the real ``z`` axis.  Plain Gauss-Hermite is used while that distance is
large.  For wide fields the integral is split at the kink ``u = 0``: on each
half-line the tilt is an exact shifted Gaussian (closed form through the
normal tail) and the correction, which decays like ``exp(-2|u|)``, is
integrated with Gauss-Laguerre.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import log_ndtr

from .exceptions import DataError, ParameterError
from .model import open_unit

DEFAULT_ORDER = 40
# sqrt(delta)/sigma^2 above which the kink-split branch takes over
SPLIT_SLOPE = 0.7
_LOG_SQRT_2PI = 0.5 * float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Hermite rule for the standard Gaussian measure.

    ``weights`` sum to one.  ``tail_nodes``/``tail_weights`` are a companion
    Gauss-Laguerre rule (weight ``exp(-t)`` on ``[0, inf)``) used by the
    kink-split branch of :func:`tilted_moments`.
    """

    nodes: np.ndarray
    weights: np.ndarray
    order: int
    tail_nodes: np.ndarray
    tail_weights: np.ndarray

    def expect(self, f) -> float:
        """``E[f(z)]`` for ``z ~ N(0, 1)``."""
        return float(np.dot(self.weights, f(self.nodes)))


@lru_cache(maxsize=32)
def build_rule(order: int = DEFAULT_ORDER) -> QuadratureRule:
    if int(order) != order or order < 2:
        raise ParameterError(f"quadrature order must be an integer >= 2, got {order}")
    order = int(order)
    z, w = np.polynomial.hermite_e.hermegauss(order)
    # hermegauss nodes are symmetric up to rounding; enforce exact pairing
    z = 0.5 * (z - z[::-1])
    w = 0.5 * (w + w[::-1])
    w = w / w.sum()
    t, wt = np.polynomial.laguerre.laggauss(order + order // 2)
    for a in (z, w, t, wt):
        a.setflags(write=False)
    return QuadratureRule(nodes=z, weights=w, order=order, tail_nodes=t, tail_weights=wt)


@dataclass(frozen=True)
class TiltedMomentRequest:
    """Arguments of one tilted-moment evaluation (``d`` may be an array)."""

    d: float
    delta: float
    sigma: float
    x: float

    def __post_init__(self):
        check_moment_args(self.d, self.delta, self.sigma, self.x)


def check_moment_args(d, delta, sigma, x) -> None:
    if not (np.all(np.isfinite(d)) and np.isfinite(delta) and np.isfinite(sigma) and np.isfinite(x)):
        raise DataError("tilted-moment arguments must be finite")
    if delta < 0:
        raise ParameterError(f"delta must be >= 0, got {delta}")
    if sigma <= 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    if not 0 <= x <= 1:
        raise ParameterError(f"x must lie in [0, 1], got {x}")


def log2cosh(u):
    a = np.abs(u)
    return a + np.log1p(np.exp(-2.0 * a))


def tanh_moments(u):
    """Delta-free case: ``(tanh u, tanh^2 u)`` with ``tanh`` kept inside (-1, 1)."""
    t = open_unit(np.tanh(u))
    return t, t * t


def _mirror_sum(v):
    """Row sums taken over mirror-image node pairs first.

    Reflecting ``d -> -d`` reverses the node order; pairing makes the
    resulting sum an exact negation (or exact copy) rather than a re-rounding.
    """
    n = v.shape[1]
    half = n // 2
    pairs = v[:, :half] + v[:, ::-1][:, :half]
    total = pairs.sum(axis=1)
    if n % 2:
        total = total + v[:, half]
    return total


def _gauss_hermite(b, a, x, rule):
    u = b[:, None] + a * rule.nodes[None, :]
    t = np.tanh(u)
    lw = np.log(rule.weights)[None, :] + x * log2cosh(u)
    lw -= lw.max(axis=1, keepdims=True)
    p = np.exp(lw)
    norm = _mirror_sum(p)
    return _mirror_sum(p * t) / norm, _mirror_sum(p * t * t) / norm


def _half_line(b, a, x, tail):
    """Log-mass of the tilted Gaussian on ``u > 0`` and the three corrections.

    ``tail`` carries the Laguerre weights folded with ``(F_p - 1) e^t`` where
    ``F_p = (1 + e^{-2u})^x tanh^p u``.
    """
    c = -b / a - x * a
    log_mass = log_ndtr(-c)
    lam = x * b + 0.5 * (x * a) ** 2 + log_mass
    t = tail[0]
    arg = c[:, None] + t[None, :] / (2.0 * a)
    psi = np.exp(-0.5 * arg * arg - _LOG_SQRT_2PI - log_mass[:, None]) / (2.0 * a)
    return lam, psi @ tail[1], psi @ tail[2], psi @ tail[3]


def _tail_table(x, rule):
    t, wt = rule.tail_nodes, rule.tail_weights
    e = np.exp(-t)
    log_f0 = x * np.log1p(e)
    log_th = np.log1p(-2.0 * e / (1.0 + e))
    g = [np.expm1(log_f0 + p * log_th) / e * wt for p in (0, 1, 2)]
    return t, g[0], g[1], g[2]


def _kink_split(b, a, x, rule):
    tail = _tail_table(x, rule)
    lp, r0p, r1p, r2p = _half_line(b, a, x, tail)
    lm, r0m, r1m, r2m = _half_line(-b, a, x, tail)
    top = np.maximum(lp, lm)
    ep = np.exp(lp - top)
    em = np.exp(lm - top)
    i0 = ep * (1.0 + r0p) + em * (1.0 + r0m)
    i1 = ep * (1.0 + r1p) - em * (1.0 + r1m)
    i2 = ep * (1.0 + r2p) + em * (1.0 + r2m)
    return i1 / i0, i2 / i0


def tilted_moments_array(d, delta: float, sigma: float, x: float, rule: QuadratureRule | None = None):
    """Vectorised :func:`tilted_moments` over an array of ``d`` sharing the rest."""
    rule = build_rule() if rule is None else rule
    d = np.asarray(d, dtype=np.float64)
    check_moment_args(d, delta, sigma, x)
    s2 = sigma * sigma
    b = np.atleast_1d(d / s2)
    a = np.sqrt(delta) / s2
    if a == 0.0:
        m, M = tanh_moments(b)
    elif a <= SPLIT_SLOPE:
        m, M = _gauss_hermite(b, a, x, rule)
    else:
        m, M = _kink_split(b, a, x, rule)
    m = open_unit(m)
    M = np.clip(M, 0.0, 1.0)
    if d.ndim == 0:
        return float(m[0]), float(M[0])
    return m, M


def tilted_moments(req: TiltedMomentRequest, rule: QuadratureRule | None = None):
    """Return ``(m, M)``, the tilted means of ``tanh`` and ``tanh^2``."""
    return tilted_moments_array(req.d, req.delta, req.sigma, req.x, rule)
