"""Quadrature rules on the reference triangle and on the unit sphere.

Triangle rules are returned in barycentric form: ``bary`` has shape (n, 3)
and ``weights`` sum to one, so an integral over a physical triangle is
``area * sum(w * f(bary @ vertices))``.
"""

from functools import lru_cache
import math

import numpy as np


def _perm3(a, b, c):
    """Distinct permutations of a barycentric triple, in a fixed order."""
    seen = []
    for p in ((a, b, c), (b, c, a), (c, a, b), (a, c, b), (c, b, a), (b, a, c)):
        if p not in seen:
            seen.append(p)
    return seen


def _symmetric_rule(groups):
    bary, weights = [], []
    for w, triple in groups:
        for p in _perm3(*triple):
            bary.append(p)
            weights.append(w)
    return np.array(bary, dtype=float), np.array(weights, dtype=float)


def _strang_fix_7():
    # degree 5
    s15 = math.sqrt(15.0)
    a1, b1 = (6.0 - s15) / 21.0, (9.0 + 2.0 * s15) / 21.0
    a2, b2 = (6.0 + s15) / 21.0, (9.0 - 2.0 * s15) / 21.0
    return _symmetric_rule([
        (9.0 / 40.0, (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)),
        ((155.0 - s15) / 1200.0, (a1, a1, b1)),
        ((155.0 + s15) / 1200.0, (a2, a2, b2)),
    ])


def _dunavant_13():
    # degree 7; the centroid weight is negative
    return _symmetric_rule([
        (-0.149570044467682, (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)),
        (0.175615257433208, (0.260345966079040, 0.260345966079040, 0.479308067841920)),
        (0.053347235608838, (0.065130102902216, 0.065130102902216, 0.869739794195568)),
        (0.077113760890257, (0.048690315425316, 0.312865496004874, 0.638444188569810)),
    ])


def _collapsed_gauss(degree):
    n = max(1, math.ceil((degree + 2) / 2))
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    # Duffy map of the unit square onto {s, t >= 0, s + t <= 1}
    s = u.ravel()
    t = (v * (1.0 - u)).ravel()
    weights = 2.0 * (wu * wv * (1.0 - u)).ravel()
    bary = np.column_stack([1.0 - s - t, s, t])
    return bary, weights


@lru_cache(maxsize=None)
def _rule(degree):
    if degree <= 1:
        bary, w = np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
    elif degree == 2:
        bary, w = _symmetric_rule([(1.0 / 3.0, (2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0))])
    elif degree <= 5:
        bary, w = _strang_fix_7()
    elif degree <= 7:
        bary, w = _dunavant_13()
    else:
        bary, w = _collapsed_gauss(degree)
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w


def triangle_rule(degree):
    """Return ``(bary, weights)`` integrating polynomials of ``degree`` exactly.

    Degree 5 gives the 7-point Strang-Fix rule and degree 7 the 13-point
    Dunavant rule; higher degrees fall back to a collapsed Gauss product rule.
    """
    return _rule(int(degree))


def sphere_rule(max_degree):
    """Product rule on the unit sphere exact for spherical harmonics up to ``max_degree``.

    Returns
    -------
    directions : (n, 3) array of unit vectors
    theta_hat, phi_hat : (n, 3) arrays of the local spherical unit vectors
    weights : (n,) array summing to 4*pi
    """
    n_theta = max_degree // 2 + 1
    n_phi = max_degree + 1
    ct, wt = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    ct, phi = np.meshgrid(ct, phi, indexing="ij")
    wt = np.broadcast_to(wt[:, None], ct.shape) * (2.0 * np.pi / n_phi)
    st = np.sqrt(1.0 - ct**2)
    cp, sp = np.cos(phi), np.sin(phi)
    directions = np.stack([st * cp, st * sp, ct], axis=-1).reshape(-1, 3)
    theta_hat = np.stack([ct * cp, ct * sp, -st], axis=-1).reshape(-1, 3)
    phi_hat = np.stack([-sp, cp, np.zeros_like(cp)], axis=-1).reshape(-1, 3)
    return directions, theta_hat, phi_hat, wt.ravel()
