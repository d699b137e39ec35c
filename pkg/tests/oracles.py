"""High-precision reference formulas, written directly from the textbook
expressions with mpmath.  They share no code with the package."""

import mpmath as mp

mp.mp.dps = 50


def _pw(x, alpha):
    x = abs(mp.mpf(x))
    return mp.mpf(0) if x == 0 else x ** alpha


def fbm_cov(H, t, s):
    al = 2 * mp.mpf(H)
    return (_pw(s, al) + _pw(t, al) - _pw(mp.mpf(t) - mp.mpf(s), al)) / 2


def sfbm_cov(H, t, s):
    al = 2 * mp.mpf(H)
    t, s = mp.mpf(t), mp.mpf(s)
    return _pw(t, al) + _pw(s, al) - (_pw(t + s, al) + _pw(t - s, al)) / 2


def gfbm_cov(a, b, H, t, s):
    # straight from the definition Z_t = a B_t + b B_{-t}
    a, b, t, s = mp.mpf(a), mp.mpf(b), mp.mpf(t), mp.mpf(s)
    return (
        a * a * fbm_cov(H, t, s)
        + a * b * fbm_cov(H, t, -s)
        + b * a * fbm_cov(H, -t, s)
        + b * b * fbm_cov(H, -t, -s)
    )


def gfbm_incr(a, b, H, s, t):
    return gfbm_cov(a, b, H, t, t) + gfbm_cov(a, b, H, s, s) - 2 * gfbm_cov(a, b, H, s, t)


def gfbm_rz(a, b, H, p, n):
    c = lambda x, y: gfbm_cov(a, b, H, x, y)  # noqa: E731
    return c(p + 1, p + n + 1) - c(p + 1, p + n) - c(p, p + n + 1) + c(p, p + n)


def markov(a, b, H, s, t, u):
    c = lambda x, y: gfbm_cov(a, b, H, x, y)  # noqa: E731
    return c(s, u) * c(t, t) - c(s, t) * c(t, u)
