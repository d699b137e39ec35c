"""Closed-form second-order structure of the generalized fractional Brownian motion.

The process is ``Z_t = a * B_t + b * B_{-t}`` for ``t >= 0``, where ``B`` is a
two-sided fractional Brownian motion with Hurst index ``H``.  Everything here
is a pure function of its arguments and works elementwise on numpy arrays
(scalars in, floats out).

Several textbook forms subtract nearly equal powers ``|x|^{2H}``.  They are
rewritten around the symmetric second difference

    D(alpha, delta) = (1 + delta)^alpha + (1 - delta)^alpha - 2,

evaluated with ``expm1``/``log1p`` (or its even power series for small
``delta``), which keeps full relative precision when ``s << t`` or ``s ~ t``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDistributionError, DomainError, ParameterError

__all__ = [
    "GfbmParams",
    "IncrementBounds",
    "Regime",
    "fbm_covariance",
    "sfbm_covariance",
    "covariance",
    "variance",
    "increment_second_moment",
    "increment_bounds",
    "markov_residual",
    "r_b",
    "r_z",
    "rz_asymptote",
    "increment_char_function",
    "increment_density",
]

# Variance coefficients at or below this are rejected at construction.
VARIANCE_COEFFICIENT_FLOOR = 1e-12

# Below this the even power series of D(alpha, delta) is used.
_SERIES_CUTOFF = 1e-2
_SERIES_TERMS = 5  # powers delta^2 .. delta^10


def _as_output(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _check_hurst(hurst) -> float:
    try:
        h = float(hurst)
    except (TypeError, ValueError):
        raise ParameterError(f"Hurst parameter must be a real number, got {hurst!r}") from None
    if not (0.0 < h < 1.0) or not math.isfinite(h):
        raise ParameterError(f"Hurst parameter must lie in (0, 1), got {h}")
    return h


def _nonnegative(name: str, x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    if np.any(arr < 0):
        raise DomainError(f"{name} must be >= 0 (the process is indexed by t >= 0)")
    return arr


def _power(x, alpha: float) -> np.ndarray:
    """``|x|^alpha`` as ``exp(alpha*log|x|)``, with ``0^alpha = 0``."""
    ax = np.abs(np.asarray(x, dtype=float))
    zero = ax == 0
    with np.errstate(divide="ignore"):
        out = np.exp(alpha * np.log(np.where(zero, 1.0, ax)))
    return np.where(zero, 0.0, out)


def _binomial_series_coefficients(alpha: float) -> np.ndarray:
    # 2 * binom(alpha, k) for k = 2, 4, ..., 2 * _SERIES_TERMS
    coeffs = []
    c = 1.0
    for k in range(1, 2 * _SERIES_TERMS + 1):
        c *= (alpha - k + 1) / k
        if k % 2 == 0:
            coeffs.append(2.0 * c)
    return np.array(coeffs)


def _sym_second_difference(alpha: float, delta) -> np.ndarray:
    """``(1+delta)^alpha + (1-delta)^alpha - 2`` for ``0 <= delta <= 1``."""
    d = np.asarray(delta, dtype=float)
    small = d < _SERIES_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore"):
        # log1p(-1) = -inf gives expm1(-inf) = -1, i.e. 0^alpha - 1 as wanted.
        direct = np.expm1(alpha * np.log1p(d)) + np.expm1(alpha * np.log1p(-d))
    d2 = d * d
    series = np.zeros_like(d)
    for c in _binomial_series_coefficients(alpha)[::-1]:
        series = series * d2 + c
    series = series * d2
    return np.where(small, series, direct)


def _centered_second_difference(alpha: float, center) -> np.ndarray:
    """``(c+1)^alpha - 2 c^alpha + (c-1)^alpha`` for centers ``c >= 1``."""
    c = np.asarray(center, dtype=float)
    return _power(c, alpha) * _sym_second_difference(alpha, 1.0 / c)


@dataclass(frozen=True)
class GfbmParams:
    """Parameters ``(a, b, H)`` of ``Z_t = a B_t + b B_{-t}``.

    Construction validates ``(a, b) != (0, 0)``, ``0 < H < 1`` and strict
    positivity of the variance coefficient ``a^2 + b^2 - (2^{2H} - 2) ab``.
    """

    a: float
    b: float
    hurst: float

    def __post_init__(self) -> None:
        try:
            a, b = float(self.a), float(self.b)
        except (TypeError, ValueError):
            raise ParameterError("coefficients a and b must be real numbers") from None
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ParameterError("coefficients a and b must be finite")
        if a == 0.0 and b == 0.0:
            raise ParameterError("(a, b) = (0, 0) does not define a process")
        h = _check_hurst(self.hurst)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "hurst", h)
        c = self.variance_coefficient
        if not c > VARIANCE_COEFFICIENT_FLOOR:
            raise ParameterError(
                f"variance coefficient a^2+b^2-(2^(2H)-2)ab = {c:.3e} is not positive "
                f"for a={a}, b={b}, H={h}"
            )

    @property
    def alpha(self) -> float:
        """The covariance exponent ``2H``."""
        return 2.0 * self.hurst

    @property
    def variance_coefficient(self) -> float:
        a, b = self.a, self.b
        return a * a + b * b - (2.0 ** self.alpha - 2.0) * a * b

    def with_hurst(self, hurst: float) -> "GfbmParams":
        return GfbmParams(self.a, self.b, hurst)

    def as_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "H": self.hurst}


class Regime(str, enum.Enum):
    C = "C"
    D = "D"


@dataclass(frozen=True)
class IncrementBounds:
    """Sharp constants with ``gamma (t-s)^{2H} <= E(Z_t-Z_s)^2 <= nu (t-s)^{2H}``."""

    gamma: float
    nu: float
    regime: Regime


# ---------------------------------------------------------------------------
# Covariances
# ---------------------------------------------------------------------------

def fbm_covariance(H: float, t, s):
    """Covariance ``(|s|^{2H} + |t|^{2H} - |t-s|^{2H}) / 2`` of two-sided fBm.

    Both times may be negative.  Evaluated as ``A^{2H}(r^{2H} + 1 - |1 -+ r|^{2H})/2``
    with ``A = max(|t|, |s|)`` and ``r = min/max``, so no large terms cancel.
    """
    alpha = 2.0 * _check_hurst(H)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    at, as_ = np.abs(t), np.abs(s)
    big = np.maximum(at, as_)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(big > 0, np.minimum(at, as_) / np.where(big > 0, big, 1.0), 0.0)
        same_side = np.expm1(alpha * np.log1p(-r))  # (1-r)^alpha - 1, in [-1, 0]
        opposite = np.expm1(alpha * np.log1p(r))  # (1+r)^alpha - 1, >= 0
    bracket = _power(r, alpha) - np.where(t * s >= 0, same_side, opposite)
    return _as_output(0.5 * _power(big, alpha) * bracket)


def sfbm_covariance(H: float, t, s):
    """Sub-fractional covariance ``t^{2H} + s^{2H} - ((t+s)^{2H} + |t-s|^{2H})/2``.

    Rewritten as ``m^{2H} - M^{2H} D(2H, m/M) / 2`` with ``m <= M`` the two times.
    """
    alpha = 2.0 * _check_hurst(H)
    t = _nonnegative("t", t)
    s = _nonnegative("s", s)
    big = np.maximum(t, s)
    small = np.minimum(t, s)
    r = np.where(big > 0, small / np.where(big > 0, big, 1.0), 0.0)
    out = _power(small, alpha) - 0.5 * _power(big, alpha) * _sym_second_difference(alpha, r)
    return _as_output(out)


def covariance(params: GfbmParams, t, s):
    """``Cov(Z_t, Z_s)`` for ``t, s >= 0``.

    Algebraically ``(a+b)^2 (s^{2H}+t^{2H})/2 - ab (t+s)^{2H} - (a^2+b^2)|t-s|^{2H}/2``;
    computed as ``M^{2H} [ (a+b)^2 r^{2H}/2 + (a-b)^2 (1-(1-r)^{2H})/2 - ab D(2H, r) ]``
    with ``M = max(t, s)``, ``r = min(t, s)/M``.
    """
    alpha = params.alpha
    a, b = params.a, params.b
    t = _nonnegative("t", t)
    s = _nonnegative("s", s)
    big = np.maximum(t, s)
    small = np.minimum(t, s)
    r = np.where(big > 0, small / np.where(big > 0, big, 1.0), 0.0)
    with np.errstate(divide="ignore"):
        one_minus = -np.expm1(alpha * np.log1p(-r))  # 1 - (1-r)^alpha
    bracket = (
        0.5 * (a + b) ** 2 * _power(r, alpha)
        + 0.5 * (a - b) ** 2 * one_minus
        - a * b * _sym_second_difference(alpha, r)
    )
    return _as_output(_power(big, alpha) * bracket)


def variance(params: GfbmParams, t):
    """``E Z_t^2 = (a^2 + b^2 - (2^{2H}-2) ab) t^{2H}``."""
    t = _nonnegative("t", t)
    return _as_output(params.variance_coefficient * _power(t, params.alpha))


def increment_second_moment(params: GfbmParams, s, t):
    """``E(Z_t - Z_s)^2 = (a^2+b^2)|t-s|^{2H} - 2^{2H} ab (t^{2H}+s^{2H}) + 2ab (t+s)^{2H}``.

    The arguments may come in either order.  The ``ab`` part is evaluated as
    ``-ab 2^{2H} m^{2H} D(2H, d/m)`` (``m`` midpoint, ``d`` half-gap), which
    stays accurate as ``s -> t``.
    """
    alpha = params.alpha
    a, b = params.a, params.b
    s = _nonnegative("s", s)
    t = _nonnegative("t", t)
    gap = np.abs(t - s)
    mid = 0.5 * (t + s)
    delta = np.where(mid > 0, 0.5 * gap / np.where(mid > 0, mid, 1.0), 0.0)
    cross = (2.0 ** alpha) * _power(mid, alpha) * _sym_second_difference(alpha, delta)
    out = (a * a + b * b) * _power(gap, alpha) - a * b * cross
    return _as_output(np.maximum(out, 0.0))


def increment_bounds(params: GfbmParams) -> IncrementBounds:
    """Regime and sharp constants of the two-sided increment bound.

    Ties (``ab = 0`` or ``H = 1/2``), where both candidate constants coincide,
    are classified as regime C.
    """
    a, b, H = params.a, params.b, params.hurst
    ab = a * b
    k0 = a * a + b * b
    k1 = a * a + b * b - 2.0 * ab * (2.0 ** (2.0 * H - 1.0) - 1.0)
    in_d = (H > 0.5 and ab < 0) or (H < 0.5 and ab > 0)
    if in_d:
        return IncrementBounds(gamma=k0, nu=k1, regime=Regime.D)
    return IncrementBounds(gamma=k1, nu=k0, regime=Regime.C)


def markov_residual(params: GfbmParams, s, t, u):
    """``Cov(Z_s,Z_u) Var(Z_t) - Cov(Z_s,Z_t) Cov(Z_t,Z_u)`` for ``0 < s < t < u``.

    A centered Gaussian Markov process with positive variance makes this vanish
    for every ordered triple.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(~((0 < s) & (s < t) & (t < u))):
        raise DomainError("markov_residual needs 0 < s < t < u")
    out = covariance(params, s, u) * variance(params, t) - covariance(params, s, t) * covariance(
        params, t, u
    )
    return _as_output(out)


# ---------------------------------------------------------------------------
# Increment autocovariances
# ---------------------------------------------------------------------------

def _check_integer(name: str, value, minimum: int) -> np.ndarray:
    arr = np.asarray(value)
    if arr.dtype.kind not in "iu":
        as_float = np.asarray(value, dtype=float)
        if np.any(as_float != np.round(as_float)):
            raise DomainError(f"{name} must be an integer")
        arr = as_float.astype(np.int64)
    if np.any(arr < minimum):
        raise DomainError(f"{name} must be >= {minimum}")
    return arr


def r_b(H: float, n):
    """Lag-``n`` autocovariance of unit-step fBm increments, ``n >= 1``."""
    alpha = 2.0 * _check_hurst(H)
    n = _check_integer("n", n, 1)
    return _as_output(0.5 * _centered_second_difference(alpha, n))


def _f_p(alpha: float, p, n) -> np.ndarray:
    # (2p+n+2)^alpha - 2(2p+n+1)^alpha + (2p+n)^alpha
    return _centered_second_difference(alpha, 2 * np.asarray(p) + np.asarray(n) + 1)


def r_z(params: GfbmParams, p, n):
    """``E[(Z_{p+1}-Z_p)(Z_{p+n+1}-Z_{p+n})]`` for ``p >= 0``, ``n >= 1``.

    Equals ``(a^2+b^2) r_b(H, n) - ab f_p(n)``.  ``p = 0`` is accepted; the
    expression is well defined there.
    """
    p = _check_integer("p", p, 0)
    n = _check_integer("n", n, 1)
    a, b, alpha = params.a, params.b, params.alpha
    out = (a * a + b * b) * 0.5 * _centered_second_difference(alpha, n) - a * b * _f_p(alpha, p, n)
    return _as_output(out)


def rz_asymptote(params: GfbmParams, p, n):
    """Two-term large-``p`` approximation of :func:`r_z`."""
    p = _check_integer("p", p, 1)
    n = _check_integer("n", n, 1)
    a, b, H = params.a, params.b, params.hurst
    correction = 2.0 ** (2 * H - 1) * H * (2 * H - 1) * _power(p, 2 * (H - 1))
    return _as_output((a * a + b * b) * r_b(H, n) - a * b * correction)


# ---------------------------------------------------------------------------
# Increment law
# ---------------------------------------------------------------------------

def increment_char_function(params: GfbmParams, s, t, u):
    """Characteristic function of ``Z_t - Z_s`` at frequency ``u``."""
    m2 = np.asarray(increment_second_moment(params, s, t))
    u = np.asarray(u, dtype=float)
    return _as_output(np.exp(-0.5 * u * u * m2))


def increment_density(params: GfbmParams, s, t, x):
    """Gaussian density of ``Z_t - Z_s`` at ``x``; ``s != t`` is required."""
    m2 = np.asarray(increment_second_moment(params, s, t))
    if np.any(m2 <= 0):
        raise DegenerateDistributionError("Z_t - Z_s is a point mass at 0 when s == t")
    x = np.asarray(x, dtype=float)
    return _as_output(np.exp(-0.5 * x * x / m2) / np.sqrt(2.0 * np.pi * m2))
