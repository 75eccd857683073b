"""Small quadrature helpers: complex-valued QUADPACK wrappers and
Gauss-Legendre panel rules used by the diagonal-kernel integrals."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.integrate import IntegrationWarning, quad

__all__ = ["cquad", "gauss_legendre_nodes"]


def cquad(f, a, b, epsabs=1e-12, epsrel=1e-11, limit=200) -> complex:
    """Adaptive quadrature of a complex-valued integrand on [a, b].

    ``b`` may be ``numpy.inf``.  Real-valued integrands short-circuit the
    imaginary pass.  Roundoff-limited tolerance warnings are suppressed:
    call sites confirm accuracy by window doubling or cross-routes instead.
    """
    probe = f(a if np.isfinite(a) else b / 2.0 if np.isfinite(b) else a + 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        re, _ = quad(lambda x: f(x).real, a, b, epsabs=epsabs, epsrel=epsrel,
                     limit=limit)
        if isinstance(probe, complex):
            im, _ = quad(lambda x: f(x).imag, a, b, epsabs=epsabs, epsrel=epsrel,
                         limit=limit)
            return complex(re, im)
    return complex(re, 0.0)


def gauss_legendre_nodes(panels: np.ndarray, order: int = 16):
    """Nodes and weights of composite Gauss-Legendre over given panel edges."""
    base_x, base_w = np.polynomial.legendre.leggauss(order)
    xs = []
    ws = []
    for a, b in zip(panels[:-1], panels[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        xs.append(mid + half * base_x)
        ws.append(half * base_w)
    return np.concatenate(xs), np.concatenate(ws)
