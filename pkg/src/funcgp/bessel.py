"""Modified Bessel function of the second kind for real positive order.

``K_nu`` is evaluated by order reduction to ``mu = nu - round(nu)`` with
``|mu| <= 1/2``, a Temme power series for small arguments, a Steed-type
continued fraction for large arguments, and stable upward recurrence in the
order.  Intermediate overflow during the recurrence is absorbed into a
separate log-scale factor, which also makes the Matern correlation
``2^(1-nu)/Gamma(nu) * u^nu * K_nu(u)`` computable for large orders and tiny
arguments where ``K_nu`` itself overflows.
"""

import math

import numpy as np

from .errors import NumericalError

_EPS = 1e-16
_MAX_ITER = 10000
_RESCALE = 1e250
_LOG_RESCALE = math.log(_RESCALE)

# Taylor coefficients of 1/Gamma(1+x) used near mu = 0.
_A1 = 0.5772156649015329
_A3 = -0.0419927205139404


def _gamma_pair(mu):
    """gam1 = (1/G(1-mu) - 1/G(1+mu)) / (2 mu) and gam2 = their mean."""
    if abs(mu) < 1e-5:
        gam1 = -_A1 - _A3 * mu * mu
        gam2 = 1.0 + (-0.6558780715202539) * mu * mu
    else:
        gp = 1.0 / math.gamma(1.0 + mu)
        gm = 1.0 / math.gamma(1.0 - mu)
        gam1 = (gm - gp) / (2.0 * mu)
        gam2 = 0.5 * (gm + gp)
    gampl = gam2 - mu * gam1
    gammi = gam2 + mu * gam1
    return gam1, gam2, gampl, gammi


def _temme_pair(mu, x):
    """(K_mu(x), K_{mu+1}(x)) for 0 < x <= 2 and |mu| <= 1/2."""
    x2 = 0.5 * x
    pimu = math.pi * mu
    fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
    d = -math.log(x2)
    e = mu * d
    fact2 = 1.0 if abs(e) < _EPS else math.sinh(e) / e
    gam1, gam2, gampl, gammi = _gamma_pair(mu)
    ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
    total = ff
    e = math.exp(e)
    p = 0.5 * e / gampl
    q = 0.5 / (e * gammi)
    c = 1.0
    d = x2 * x2
    total1 = p
    for i in range(1, _MAX_ITER + 1):
        ff = (i * ff + p + q) / (i * i - mu * mu)
        c *= d / i
        p /= i - mu
        q /= i + mu
        delta = c * ff
        total += delta
        total1 += c * (p - i * ff)
        if abs(delta) < abs(total) * _EPS:
            return total, total1 * (2.0 / x)
    raise NumericalError("Temme series for K_nu did not converge")


def _cf2_pair(mu, x):
    """Scaled (e^x K_mu(x), e^x K_{mu+1}(x)) for x > 2 and |mu| <= 1/2."""
    mu2 = mu * mu
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1 = 0.0
    q2 = 1.0
    a1 = 0.25 - mu2
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, _MAX_ITER + 1):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (a * d + b)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < _EPS:
            break
    else:
        raise NumericalError("continued fraction for K_nu did not converge")
    h = a1 * h
    k0 = math.sqrt(math.pi / (2.0 * x)) / s
    k1 = k0 * (mu + x + 0.5 - h) / x
    return k0, k1


def kv_scaled(nu, x):
    """``(m, c)`` with ``K_nu(x) = m * exp(c)`` and ``m`` of moderate size.

    Parameters
    ----------
    nu : float
        Order, ``nu >= 0``.
    x : float
        Argument, ``x > 0``.
    """
    if x <= 0.0 or not math.isfinite(x):
        raise ValueError(f"K_nu requires x > 0, got {x!r}")
    if nu < 0.0:
        nu = -nu  # K_{-nu} = K_nu
    nl = int(nu + 0.5)
    mu = nu - nl
    if x <= 2.0:
        kmu, kmu1 = _temme_pair(mu, x)
        log_factor = 0.0
    else:
        kmu, kmu1 = _cf2_pair(mu, x)
        log_factor = -x
    for i in range(1, nl + 1):
        kmu, kmu1 = kmu1, kmu + (2.0 * (mu + i) / x) * kmu1
        if abs(kmu1) > _RESCALE:
            kmu /= _RESCALE
            kmu1 /= _RESCALE
            log_factor += _LOG_RESCALE
    return kmu, log_factor


def kv(nu, x):
    """Modified Bessel function of the second kind ``K_nu(x)``.

    Overflows honestly to ``inf`` for tiny ``x`` with large ``nu``; use
    :func:`kv_scaled` or :func:`matern_correlation` in that regime.
    """
    m, c = kv_scaled(nu, x)
    if c == 0.0:
        return m
    return m * math.exp(min(c, 709.0)) if c > 0 else m * math.exp(c)


def log_kv(nu, x):
    """``log K_nu(x)``, valid wherever ``K_nu > 0`` (always for x > 0)."""
    m, c = kv_scaled(nu, x)
    return math.log(m) + c


def _matern_general(u, nu):
    if not math.isfinite(u):
        return 0.0
    if u < 1e-10:
        return 1.0
    log_g = (1.0 - nu) * math.log(2.0) - math.lgamma(nu) + nu * math.log(u) + log_kv(nu, u)
    return min(math.exp(log_g), 1.0)


def matern_correlation(d2, nu):
    """Matern correlation as a function of the weighted squared distance.

    Evaluates ``g(u) = 2^(1-nu)/Gamma(nu) * u^nu * K_nu(u)`` at
    ``u = sqrt(2 * nu * d2)``, with ``g(0) = 1``.  Half-integer orders
    1/2, 3/2 and 5/2 take the closed-form fast paths.

    Parameters
    ----------
    d2 : array_like
        Nonnegative weighted squared distances.
    nu : float
        Smoothness, ``nu > 0``.
    """
    if nu <= 0.0:
        raise ValueError(f"matern smoothness must be positive, got {nu!r}")
    d2 = np.asarray(d2, dtype=float)
    s = np.sqrt(np.maximum(d2, 0.0))
    if nu == 0.5:
        return np.exp(-s)
    if nu == 1.5:
        u = math.sqrt(3.0) * s
        return (1.0 + u) * np.exp(-u)
    if nu == 2.5:
        u = math.sqrt(5.0) * s
        return (1.0 + u + u * u / 3.0) * np.exp(-u)
    u = math.sqrt(2.0 * nu) * s
    out = np.empty(u.shape, dtype=float)
    flat_u = u.ravel()
    flat_out = out.ravel()
    for idx in range(flat_u.size):
        flat_out[idx] = _matern_general(flat_u[idx], nu)
    return out if out.ndim else float(flat_out[0])
