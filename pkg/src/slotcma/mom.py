"""Galerkin EFIE impedance matrix on RWG functions, excitations and direct solve.

Time convention exp(+j omega t).  With RWG functions f_m the matrix is

    Z_mn = j omega mu <f_m, G f_n> + 1/(j omega eps) <div f_m, G div f_n>

with G(r, r') = exp(-jkR) / (4 pi R).  The integrals are reduced to a small
set of triangle-pair moments which are computed once per triangle pair and
shared by every RWG function living on that pair.

The imaginary part of Z goes through product quadrature plus singularity
extraction.  The real part only involves sin(kR)/R and is evaluated from its
equivalent radiated-power form, an integral of transverse far-field products
over the unit sphere; this keeps Re(Z) symmetric positive semidefinite to
rounding, which the characteristic-mode decomposition relies on.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math
from pathlib import Path

import numpy as np
import scipy.linalg

from .constants import EPS0, MU0, wavenumber
from .errors import ConsistencyError, GeometryError, SolverError
from .integrals import static_potentials
from .mesh import RwgSet, TriMesh, check_basis
from .quadrature import sphere_rule, triangle_rule

log = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi


def basis_ref(basis: RwgSet) -> str:
    return f"{basis.mesh_ref}:{len(basis)}"


@dataclass(frozen=True, eq=False)
class MomSystem:
    """Impedance matrix (ohms) tied to the RWG set it was built on."""

    z_matrix: np.ndarray
    frequency: float
    k: float
    basis_ref: str

    @property
    def r_matrix(self):
        return self.z_matrix.real

    @property
    def x_matrix(self):
        return self.z_matrix.imag

    @property
    def size(self):
        return self.z_matrix.shape[0]

    def asymmetry(self):
        """max |Z - Z^T| / max |Z|."""
        z = self.z_matrix
        return float(np.max(np.abs(z - z.T)) / np.max(np.abs(z)))


@dataclass(frozen=True, eq=False)
class Excitation:
    v_vector: np.ndarray
    kind: str
    basis_ref: str
    feed_edge: int | None = None
    params: dict = field(default_factory=dict)


def green(r, r_src, k):
    """Free-space scalar Green's function exp(-jkR) / (4 pi R)."""
    d = np.asarray(r, dtype=float) - np.asarray(r_src, dtype=float)
    dist = np.linalg.norm(d, axis=-1)
    if np.any(dist == 0.0):
        raise GeometryError("green() evaluated at coincident points; use the self-term path")
    return np.exp(-1j * k * dist) / (FOUR_PI * dist)


# --------------------------------------------------------------------------
# triangle-pair moments
# --------------------------------------------------------------------------

def _triangle_points(mesh, degree, thin_degree=None, thin_aspect=np.inf):
    """Quadrature points/weights per triangle, padded to a common length.

    Padding points sit at the centroid with zero weight.
    """
    corners = mesh.corners
    areas = mesh.areas
    bary_lo, w_lo = triangle_rule(degree)
    thin = np.zeros(len(areas), dtype=bool)
    if thin_degree is not None:
        thin = mesh.aspect_ratios > thin_aspect
    bary_hi, w_hi = triangle_rule(thin_degree) if thin.any() else (bary_lo, w_lo)
    nq = max(len(w_lo), len(w_hi))
    pts = np.repeat(corners.mean(axis=1)[:, None, :], nq, axis=1)
    wts = np.zeros((len(areas), nq))
    for mask, bary, w in ((~thin, bary_lo, w_lo), (thin, bary_hi, w_hi)):
        if mask.any():
            n = len(w)
            pts[mask, :n] = np.einsum("qi,fik->fqk", bary, corners[mask])
            wts[mask, :n] = areas[mask, None] * w[None, :]
    return pts, wts, thin


@dataclass
class _PairMoments:
    """Moments over test triangle P and source triangle Q of a kernel K.

    S  = int_P int_Q K
    Pv = int_P int_Q (r - c_P) K
    Qv = int_P int_Q (r' - c_Q) K
    T  = int_P int_Q (r - c_P).(r' - c_Q) K
    """

    S: np.ndarray
    Pv: np.ndarray
    Qv: np.ndarray
    T: np.ndarray

    def symmetrize(self):
        self.S = 0.5 * (self.S + self.S.T)
        self.T = 0.5 * (self.T + self.T.T)
        pv = 0.5 * (self.Pv + self.Qv.transpose(1, 0, 2))
        self.Qv = 0.5 * (self.Qv + self.Pv.transpose(1, 0, 2))
        self.Pv = pv


def _regular_block(rows, pts, wts, rho, k):
    p = pts[rows]
    diff2 = np.zeros((len(rows), pts.shape[1], pts.shape[0], pts.shape[1]))
    for c in range(3):
        diff2 += (p[:, :, None, None, c] - pts[None, None, :, :, c]) ** 2
    dist = np.sqrt(diff2)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.exp(-1j * k * dist) / (FOUR_PI * dist)
    g[dist == 0.0] = 0.0  # only on coincident points; such pairs are redone as near pairs
    gw = g * wts[rows][:, :, None, None] * wts[None, None, :, :]
    S = gw.sum(axis=(1, 3))
    Pv = np.einsum("pinj,pik->pnk", gw, rho[rows])
    Qv = np.einsum("pinj,njk->pnk", gw, rho)
    T = np.einsum("pinj,pik,njk->pn", gw, rho[rows], rho, optimize=True)
    return S, Pv, Qv, T


def _near_block(p, q, pts, wts, rho, centroids, corners, k):
    """Singularity-extracted moments for the listed (P, Q) pairs."""
    obs = pts[p]
    w_p = wts[p]
    phi, psi = static_potentials(obs, corners[q][:, None, :, :])
    psi_q = psi + (obs - centroids[q][:, None, :]) * phi[..., None]
    rho_p = rho[p]
    S = np.einsum("ki,ki->k", w_p, phi) / FOUR_PI
    Pv = np.einsum("ki,kic,ki->kc", w_p, rho_p, phi) / FOUR_PI
    Qv = np.einsum("ki,kic->kc", w_p, psi_q) / FOUR_PI
    T = np.einsum("ki,kic,kic->k", w_p, rho_p, psi_q) / FOUR_PI

    # smooth remainder (exp(-jkR) - 1) / (4 pi R), bounded at R = 0
    diff = obs[:, :, None, :] - pts[q][:, None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    kr = k * dist
    with np.errstate(divide="ignore", invalid="ignore"):
        re = -2.0 * np.sin(0.5 * kr) ** 2 / dist
        im = -np.sin(kr) / dist
    re = np.where(dist > 0, re, 0.0)
    im = np.where(dist > 0, im, -k)
    g = (re + 1j * im) / FOUR_PI
    gw = g * w_p[:, :, None] * wts[q][:, None, :]
    S = S + gw.sum(axis=(1, 2))
    Pv = Pv + np.einsum("kij,kic->kc", gw, rho_p)
    Qv = Qv + np.einsum("kij,kjc->kc", gw, rho[q])
    T = T + np.einsum("kij,kic,kjc->k", gw, rho_p, rho[q], optimize=True)
    return S, Pv, Qv, T


def near_pairs(mesh, near_factor):
    """Triangle pairs whose centroids are closer than ``near_factor`` diameters."""
    c = mesh.centroids
    diam = mesh.diameters
    dist = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=-1)
    limit = near_factor * np.maximum(diam[:, None], diam[None, :])
    return np.nonzero(dist < limit)


def pair_moments(mesh, k, *, quad_degree=5, thin_degree=7, thin_aspect=4.0,
                 near_factor=2.0, workers=1, block_budget=4_000_000):
    """Green's-function moments for all triangle pairs, symmetrized over (P, Q)."""
    pts, wts, thin = _triangle_points(mesh, quad_degree, thin_degree, thin_aspect)
    centroids = mesh.centroids
    rho = pts - centroids[:, None, :]
    nt, nq = wts.shape
    if thin.any():
        log.debug("elevated quadrature on %d thin triangles", int(thin.sum()))

    S = np.empty((nt, nt), dtype=complex)
    Pv = np.empty((nt, nt, 3), dtype=complex)
    Qv = np.empty((nt, nt, 3), dtype=complex)
    T = np.empty((nt, nt), dtype=complex)

    rows_per_block = max(1, block_budget // (nq * nq * nt))
    blocks = [np.arange(i, min(i + rows_per_block, nt)) for i in range(0, nt, rows_per_block)]

    def run(rows):
        return rows, _regular_block(rows, pts, wts, rho, k)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, blocks))
    else:
        results = [run(rows) for rows in blocks]
    for rows, (s, pv, qv, t) in results:
        S[rows], Pv[rows], Qv[rows], T[rows] = s, pv, qv, t

    p, q = near_pairs(mesh, near_factor)
    corners = mesh.corners
    chunk = max(1, block_budget // (nq * nq * 4))
    for start in range(0, len(p), chunk):
        pp, qq = p[start:start + chunk], q[start:start + chunk]
        s, pv, qv, t = _near_block(pp, qq, pts, wts, rho, centroids, corners, k)
        S[pp, qq], Pv[pp, qq], Qv[pp, qq], T[pp, qq] = s, pv, qv, t

    moments = _PairMoments(S, Pv, Qv, T)
    moments.symmetrize()
    return moments


def _rwg_sides(mesh, basis):
    """(triangle, free-vertex offset c_T - v_free, signed l/(2A)) for both sides."""
    areas = mesh.areas
    centroids = mesh.centroids
    sides = []
    for tri, free, sign in ((basis.plus_triangle, basis.plus_free_vertex, 1.0),
                            (basis.minus_triangle, basis.minus_free_vertex, -1.0)):
        offset = centroids[tri] - mesh.vertices[free]
        coef = sign * basis.edge_length / (2.0 * areas[tri])
        sides.append((tri, offset, coef))
    return sides


def _assemble_from_moments(mesh, basis, moments, omega):
    sides = _rwg_sides(mesh, basis)
    M = len(basis)
    vec = np.zeros((M, M), dtype=complex)
    sca = np.zeros((M, M), dtype=complex)
    for tp, u, cp in sides:
        for tq, w, cq in sides:
            ix = np.ix_(tp, tq)
            s = moments.S[ix]
            v = (moments.T[ix]
                 + np.einsum("mk,mnk->mn", u, moments.Qv[ix])
                 + np.einsum("mnk,nk->mn", moments.Pv[ix], w)
                 + (u @ w.T) * s)
            vec += (cp[:, None] * cq[None, :]) * v
            # div f = 2 * (signed l / 2A)
            sca += (4.0 * cp[:, None] * cq[None, :]) * s
    return 1j * omega * MU0 * vec + sca / (1j * omega * EPS0)


def far_field_vectors(mesh, basis, k, directions, degree=12):
    """F_m(k_hat) = int f_m(r) exp(jk k_hat . r) dS for every basis and direction.

    Phases are referred to the mesh bounding-box centre.  Shape (S, M, 3).
    """
    pts, wts, _ = _triangle_points(mesh, degree)
    origin = 0.5 * (mesh.vertices.min(axis=0) + mesh.vertices.max(axis=0))
    pts = pts - origin
    phase = np.exp(1j * k * np.einsum("sk,fqk->sfq", directions, pts))
    e0 = np.einsum("sfq,fq->sf", phase, wts)
    e1 = np.einsum("sfq,fq,fqk->sfk", phase, wts, pts)
    F = np.zeros((len(directions), len(basis), 3), dtype=complex)
    for tri, free, sign in ((basis.plus_triangle, basis.plus_free_vertex, 1.0),
                            (basis.minus_triangle, basis.minus_free_vertex, -1.0)):
        coef = sign * basis.edge_length / (2.0 * mesh.areas[tri])
        vfree = mesh.vertices[free] - origin
        F += coef[None, :, None] * (e1[:, tri, :] - vfree[None, :, :] * e0[:, tri, None])
    return F


def radiation_resistance_matrix(mesh, basis, frequency, degree=12):
    """Re(Z) from the radiated power of every current pair.

    R_mn = (k omega mu / 16 pi^2) * integral over the sphere of
    F_m_perp . conj(F_n_perp).
    """
    k = wavenumber(frequency)
    omega = 2.0 * math.pi * frequency
    v = mesh.vertices
    half = 0.5 * np.linalg.norm(v.max(axis=0) - v.min(axis=0))
    order = int(math.ceil(2.0 * k * half)) + 16
    dirs, th, ph, w = sphere_rule(order)
    F = far_field_vectors(mesh, basis, k, dirs, degree)
    sw = np.sqrt(w)[:, None]
    B = np.concatenate([sw * np.einsum("smk,sk->sm", F, th),
                        sw * np.einsum("smk,sk->sm", F, ph)])
    R = B.real.T @ B.real + B.imag.T @ B.imag
    R *= k * omega * MU0 / (16.0 * math.pi**2)
    return 0.5 * (R + R.T)


def assemble_z(mesh: TriMesh, basis: RwgSet, frequency, *, quad_degree=5,
               thin_degree=7, thin_aspect=4.0, near_factor=2.0,
               resistance="radiated", workers=1) -> MomSystem:
    """Assemble the EFIE impedance matrix.

    Parameters
    ----------
    quad_degree : int
        Polynomial degree of the triangle rule for regular pairs (5 gives the
        7-point rule).
    thin_degree : int
        Rule used on triangles whose aspect ratio exceeds ``thin_aspect``.
    near_factor : float
        Pairs closer than this many triangle diameters use singularity
        extraction.
    resistance : {"radiated", "quadrature"}
        How Re(Z) is evaluated; ``"quadrature"`` keeps the real part of the
        direct Galerkin integrals.
    workers : int
        Threads used for the regular-pair pass.  The result does not depend
        on this value.
    """
    if not check_basis(mesh, basis):
        raise ConsistencyError("RWG set was not enumerated on this mesh")
    if not frequency > 0:
        raise ValueError(f"frequency must be positive, got {frequency}")
    if len(basis) == 0:
        raise ConsistencyError("mesh has no interior edges")
    k = wavenumber(frequency)
    omega = 2.0 * math.pi * frequency
    thin_degree = max(thin_degree, quad_degree)
    moments = pair_moments(mesh, k, quad_degree=quad_degree, thin_degree=thin_degree,
                           thin_aspect=thin_aspect, near_factor=near_factor, workers=workers)
    z = _assemble_from_moments(mesh, basis, moments, omega)
    if resistance == "radiated":
        r = radiation_resistance_matrix(mesh, basis, frequency)
        z = r + 1j * z.imag
    elif resistance != "quadrature":
        raise ValueError(f"unknown resistance mode {resistance!r}")
    z.setflags(write=False)
    return MomSystem(z, float(frequency), k, basis_ref(basis))


# --------------------------------------------------------------------------
# excitations
# --------------------------------------------------------------------------

def excite_delta_gap(basis: RwgSet, feed_edge, volts=1.0) -> Excitation:
    """Voltage gap across one basis edge: V[feed] = volts * edge length."""
    feed_edge = int(feed_edge)
    if not 0 <= feed_edge < len(basis):
        raise KeyError(f"feed edge {feed_edge} not in basis of size {len(basis)}")
    v = np.zeros(len(basis), dtype=complex)
    v[feed_edge] = volts * basis.edge_length[feed_edge]
    return Excitation(v, "delta-gap", basis_ref(basis), feed_edge, {"volts": float(volts)})


def excite_plane_wave(mesh, basis, frequency, direction, polarization, amplitude=1.0,
                      degree=7) -> Excitation:
    """V_m = <f_m, E_inc> for E_inc = amplitude * pol * exp(-jk d.r)."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    pol = np.asarray(polarization, dtype=complex)
    if abs(np.dot(d, pol)) > 1e-9 * np.linalg.norm(pol):
        raise ValueError("plane-wave polarization must be transverse to the direction")
    k = wavenumber(frequency)
    pts, wts, _ = _triangle_points(mesh, degree)
    einc = amplitude * pol[None, None, :] * np.exp(-1j * k * pts @ d)[..., None]
    v = np.zeros(len(basis), dtype=complex)
    for tri, free, sign in ((basis.plus_triangle, basis.plus_free_vertex, 1.0),
                            (basis.minus_triangle, basis.minus_free_vertex, -1.0)):
        coef = sign * basis.edge_length / (2.0 * mesh.areas[tri])
        r = pts[tri] - mesh.vertices[free][:, None, :]
        v += coef * np.einsum("mq,mqk,mqk->m", wts[tri], r, einc[tri])
    return Excitation(v, "plane-wave", basis_ref(basis), None,
                      {"direction": d.tolist(), "polarization": [complex(p) for p in pol],
                       "amplitude": float(amplitude)})


def locate_feed_edge(mesh, basis, point, current_direction, max_cos=0.5):
    """Basis edge nearest ``point`` that a current along ``current_direction`` crosses.

    Only edges within 60 degrees of perpendicular to the current qualify.
    Ties resolve to the lowest edge id.
    """
    cdir = np.asarray(current_direction, dtype=float)
    cdir = cdir / np.linalg.norm(cdir)
    cos = np.abs(basis.directions(mesh) @ cdir)
    ok = np.flatnonzero(cos <= max_cos)
    if ok.size == 0:
        raise GeometryError("no basis edge crosses the requested current direction")
    d = np.linalg.norm(basis.midpoints(mesh)[ok] - np.asarray(point, dtype=float), axis=1)
    # round so that mirror-image candidates tie exactly
    d = np.round(d, 12)
    return int(ok[np.lexsort((ok, d))[0]])


# --------------------------------------------------------------------------
# direct solve
# --------------------------------------------------------------------------

def solve_direct(sys: MomSystem, exc: Excitation, cond_limit=1e13, tol=1e-10):
    """Solve Z I = V by LU factorization with one step of iterative refinement."""
    if exc.basis_ref != sys.basis_ref:
        raise ConsistencyError("excitation and system are built on different bases")
    z = sys.z_matrix
    cond = float(np.linalg.cond(z))
    if not np.isfinite(cond) or cond > cond_limit:
        raise SolverError(f"impedance matrix is numerically singular (cond ~ {cond:.3e})", cond)
    v = exc.v_vector
    vnorm = np.linalg.norm(v)
    if vnorm == 0:
        return np.zeros_like(v)
    lu = scipy.linalg.lu_factor(z)
    i = scipy.linalg.lu_solve(lu, v)
    resid = v - z @ i
    i = i + scipy.linalg.lu_solve(lu, resid)
    rel = np.linalg.norm(v - z @ i) / vnorm
    if rel > tol:
        raise SolverError(f"solve residual {rel:.3e} exceeds {tol:g} (cond ~ {cond:.3e})", cond)
    return i


def write_matrix(sys: MomSystem, path):
    """Text dump: frequency header then ``row col re im`` lines in ohms."""
    z = sys.z_matrix
    lines = [f"# frequency_hz {sys.frequency:.17g}", f"# size {z.shape[0]}"]
    for r in range(z.shape[0]):
        for c in range(z.shape[1]):
            lines.append(f"{r} {c} {z[r, c].real:.17g} {z[r, c].imag:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path):
    """Inverse of :func:`write_matrix`; returns ``(frequency, z_matrix)``."""
    freq, size, entries = None, None, []
    for raw in Path(path).read_text().splitlines():
        if raw.startswith("# frequency_hz"):
            freq = float(raw.split()[-1])
        elif raw.startswith("# size"):
            size = int(raw.split()[-1])
        elif raw.strip():
            r, c, re, im = raw.split()
            entries.append((int(r), int(c), float(re), float(im)))
    z = np.zeros((size, size), dtype=complex)
    for r, c, re, im in entries:
        z[r, c] = re + 1j * im
    return freq, z
