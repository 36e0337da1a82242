"""Shared quadrature helpers.

Everything here wraps scipy's adaptive Gauss-Kronrod routines or fixed
Gauss-Legendre rules; the tolerances are the ones the oracles are expected
to beat by a wide margin.
"""
import warnings

import numpy as np
from scipy import integrate

ABS_TOL = 1e-12
REL_TOL = 1e-10


def integrate_vec(fun, a, b, epsabs=ABS_TOL, epsrel=REL_TOL, points=None, limit=400):
    """Adaptive integral of a (possibly complex, possibly vector valued) function.

    Real and imaginary parts are integrated together by stacking them, which
    keeps the error control honest for complex integrands.
    """
    def stacked(t):
        v = np.atleast_1d(np.asarray(fun(t), dtype=complex))
        return np.concatenate([v.real, v.imag])

    if points is not None and np.isfinite(a) and np.isfinite(b):
        pts = sorted(p for p in points if a < p < b)
        edges = [a] + pts + [b]
        total = 0.0
        err = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, e = integrate.quad_vec(stacked, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=limit)
            total = total + val
            err += e
        val = total
    else:
        val, err = integrate.quad_vec(stacked, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit)
    n = val.size // 2
    out = val[:n] + 1j * val[n:]
    return (out[0] if out.size == 1 else out), err


def integrate_scalar(fun, a, b, epsabs=ABS_TOL, epsrel=REL_TOL, points=None, limit=400):
    """Complex scalar integral via scipy.integrate.quad (QUADPACK)."""
    kw = dict(epsabs=epsabs, epsrel=epsrel, limit=limit, complex_func=True)
    if points is not None and np.isfinite(a) and np.isfinite(b):
        kw["points"] = [p for p in points if a < p < b] or None
        if kw["points"] is None:
            del kw["points"]
    with warnings.catch_warnings():
        # roundoff warnings at tight tolerances are expected; the error estimate is returned
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(fun, a, b, **kw)
    return complex(val), abs(err.real) + abs(err.imag)


def gauss_legendre(n, a=-1.0, b=1.0):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


# Dunavant degree-5 rule on the reference triangle (7 points), barycentric
_S = np.sqrt(15.0)
_A1 = (6 - _S) / 21
_A2 = (6 + _S) / 21
_W1 = (155 - _S) / 1200
_W2 = (155 + _S) / 1200
TRI7_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _A1, 1 - 2 * _A1], [_A1, 1 - 2 * _A1, _A1], [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2], [_A2, 1 - 2 * _A2, _A2], [1 - 2 * _A2, _A2, _A2],
])
TRI7_W = np.array([9 / 40, _W1, _W1, _W1, _W2, _W2, _W2])  # sums to 1

# edge-midpoint rule, exact for quadratics; weights sum to 1
TRI3_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
TRI3_W = np.full(3, 1 / 3)
