r"""Closed-form flux algebra for the generalized Buckley-Leverett equation.

The conservative flux is

.. math::

    f(u, \phi) = \frac{u^2}{u^2 + M(\phi - u)^2}, \qquad 0 \le u \le \phi,

and the non-conservative flux is :math:`g(\tilde u) = f(\tilde u, 1)`.
Every function here is vectorized over numpy arrays and pure.
"""

from __future__ import annotations

import enum
from functools import lru_cache

import numpy as np

from .exceptions import DegenerateState, NoRoot

DEFAULT_M = 2.0

_M_BRACKET = (1.0, 50.0)
_M_TOL = 1e-12


class Region(enum.Enum):
    """Sign region of f_uu in the (u, phi) plane."""

    OMEGA_MINUS = "OmegaMinus"
    OMEGA_PLUS = "OmegaPlus"
    BOUNDARY = "Boundary"


def denom(u, phi, M=DEFAULT_M):
    """Return D(u, phi) = u**2 + M*(phi - u)**2."""
    u = np.asarray(u, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return u * u + M * (phi - u) ** 2


def _checked_denom(u, phi, M):
    d = denom(u, phi, M)
    if np.any(d == 0.0):
        raise DegenerateState("flux is undefined at u = phi = 0")
    return d


def _out(value):
    # scalars in, python floats out
    return float(value) if np.ndim(value) == 0 else value


# Raw formulas: plain arithmetic, so they also run on torch tensors.

def f_raw(u, phi, M):
    return u * u / (u * u + M * (phi - u) ** 2)


def f_u_raw(u, phi, M):
    d = u * u + M * (phi - u) ** 2
    return 2.0 * M * phi * u * (phi - u) / (d * d)


def f_phi_raw(u, phi, M):
    d = u * u + M * (phi - u) ** 2
    return -2.0 * M * u * u * (phi - u) / (d * d)


def flux_f(u, phi, M=DEFAULT_M):
    u = np.asarray(u, dtype=float)
    _checked_denom(u, phi, M)
    return _out(f_raw(u, np.asarray(phi, dtype=float), M))


def flux_f_u(u, phi, M=DEFAULT_M):
    """Characteristic speed lambda_1 = df/du = 2 M phi u (phi - u) / D**2."""
    u = np.asarray(u, dtype=float)
    _checked_denom(u, phi, M)
    return _out(f_u_raw(u, np.asarray(phi, dtype=float), M))


def flux_f_uu(u, phi, M=DEFAULT_M):
    """Second u-derivative of the flux.

    Uses the bracket ``-u**3 + (phi-u)*(-3u**2 + 3Mu(phi-u) + M(phi-u)**2)``
    scaled by ``2 M phi / D**3``.
    """
    u = np.asarray(u, dtype=float)
    phi = np.asarray(phi, dtype=float)
    d = _checked_denom(u, phi, M)
    w = phi - u
    bracket = -u**3 + w * (-3.0 * u**2 + 3.0 * M * u * w + M * w**2)
    return _out(2.0 * M * phi * bracket / d**3)


def flux_f_phi(u, phi, M=DEFAULT_M):
    """df/dphi, the first component of the standing-wave eigenvector r_0."""
    u = np.asarray(u, dtype=float)
    _checked_denom(u, phi, M)
    return _out(f_phi_raw(u, np.asarray(phi, dtype=float), M))


def flux_g(u_tilde, M=DEFAULT_M):
    """Non-conservative flux g(u~) = f(u~, 1)."""
    return flux_f(u_tilde, 1.0, M)


def eigenvalues(u, phi, M=DEFAULT_M):
    """Return (lambda_0, lambda_1) of the augmented 2x2 system."""
    return 0.0, flux_f_u(u, phi, M)


def eigenvectors(u, phi, M=DEFAULT_M):
    """Return right eigenvectors r_0 = (f_phi, -f_u) and r_1 = (1, 0)."""
    r0 = np.array([flux_f_phi(u, phi, M), -flux_f_u(u, phi, M)])
    r1 = np.array([1.0, 0.0])
    return r0, r1


@lru_cache(maxsize=64)
def m_star(M=DEFAULT_M):
    """Ray slope m* with f_uu(u, m* u) = 0 for every u > 0.

    f_uu is homogeneous along rays phi = m u, so a single bisection on
    ``m in (1, 50]`` at u = 1 suffices. Cached per M.
    """
    if M <= 0:
        raise NoRoot(f"M must be positive, got {M}")
    lo, hi = _M_BRACKET
    # at m -> 1+ the state sits at u = phi where f_uu < 0
    lo = lo + 1e-9
    f_lo = flux_f_uu(1.0, lo, M)
    f_hi = flux_f_uu(1.0, hi, M)
    if np.sign(f_lo) == np.sign(f_hi):
        raise NoRoot(f"f_uu does not change sign on m in ({lo}, {hi}] for M={M}")
    while hi - lo > _M_TOL:
        mid = 0.5 * (lo + hi)
        f_mid = flux_f_uu(1.0, mid, M)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def inflection(phi, M=DEFAULT_M):
    """The unique zero of u -> f_uu(u, phi) on (0, phi)."""
    return phi / m_star(M)


def classify_region(u, phi, M=DEFAULT_M, rtol=1e-12):
    """Classify a state as OmegaMinus (f concave), OmegaPlus (convex) or Boundary."""
    u = float(u)
    phi = float(phi)
    if not (0.0 < u < phi):
        return Region.BOUNDARY
    ray = m_star(M) * u
    if abs(phi - ray) <= rtol * phi:
        return Region.BOUNDARY
    return Region.OMEGA_MINUS if phi < ray else Region.OMEGA_PLUS
