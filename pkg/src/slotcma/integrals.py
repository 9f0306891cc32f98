"""Closed-form static potential integrals over flat triangles.

For an observation point r and a triangle T these evaluate

    phi(r) = integral over T of 1 / |r - r'| dS'
    psi(r) = integral over T of (r' - r) / |r - r'| dS'

following the edge-by-edge reduction of the surface integral to line
integrals (Wilton et al., IEEE TAP 1984).  They supply the singular part
of the Green's function for touching and nearby triangle pairs.
"""

import numpy as np

_TINY = 1e-14


def static_potentials(obs, corners):
    """Evaluate ``phi`` and ``psi`` for paired observation points and triangles.

    Parameters
    ----------
    obs : (..., 3) array
        Observation points.
    corners : (..., 3, 3) array
        Triangle vertices, broadcast against ``obs``.

    Returns
    -------
    phi : (...) array
    psi : (..., 3) array
    """
    obs = np.asarray(obs, dtype=float)
    corners = np.asarray(corners, dtype=float)
    shape = np.broadcast_shapes(obs.shape[:-1], corners.shape[:-2])
    obs = np.broadcast_to(obs, shape + (3,))
    corners = np.broadcast_to(corners, shape + (3, 3))

    v0, v1, v2 = corners[..., 0, :], corners[..., 1, :], corners[..., 2, :]
    n = np.cross(v1 - v0, v2 - v0)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    h = np.einsum("...k,...k->...", obs - v0, n)
    rho = obs - h[..., None] * n
    abs_h = np.abs(h)
    scale = np.max(np.linalg.norm(corners - corners.mean(axis=-2, keepdims=True), axis=-1), axis=-1)
    eps = _TINY * scale

    phi = np.zeros(shape)
    psi_plane = np.zeros(shape + (3,))
    for a, b in ((v0, v1), (v1, v2), (v2, v0)):
        edge = b - a
        l_hat = edge / np.linalg.norm(edge, axis=-1, keepdims=True)
        u_hat = np.cross(l_hat, n)
        l_plus = np.einsum("...k,...k->...", b - rho, l_hat)
        l_minus = np.einsum("...k,...k->...", a - rho, l_hat)
        t = np.einsum("...k,...k->...", a - rho, u_hat)
        r0_sq = t * t + h * h
        r_plus = np.sqrt(r0_sq + l_plus * l_plus)
        r_minus = np.sqrt(r0_sq + l_minus * l_minus)

        # ln((R+ + l+)/(R- + l-)), switching to the conjugate form when both
        # endpoints lie behind the foot point to avoid cancellation
        on_line = r0_sq <= eps * eps
        forward = (l_plus + l_minus) >= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            f_fwd = np.log((r_plus + l_plus) / (r_minus + l_minus))
            f_bwd = np.log((r_minus - l_minus) / (r_plus - l_plus))
        f2 = np.where(forward, f_fwd, f_bwd)
        f2 = np.where(on_line, 0.0, f2)

        with np.errstate(divide="ignore", invalid="ignore"):
            beta = (np.arctan(t * l_plus / (r0_sq + abs_h * r_plus))
                    - np.arctan(t * l_minus / (r0_sq + abs_h * r_minus)))
        beta = np.where(np.abs(t) <= eps, 0.0, beta)

        phi += t * f2 - abs_h * beta
        psi_plane += 0.5 * (r0_sq * f2 + l_plus * r_plus - l_minus * r_minus)[..., None] * u_hat

    psi = psi_plane - h[..., None] * n * phi[..., None]
    return phi, psi
