"""Characteristic modes of the impedance matrix Z = R + jX.

The modes solve X I = lambda R I.  R (the radiation operator) is positive
semidefinite, and on a plate meshed finer than about a tenth of a wavelength
most of its spectrum sits at the rounding floor: the currents it cannot see
barely radiate.  A plain Cholesky reduction of R spreads that rounding noise
into every eigenpair, so the pencil is solved in its reversed form

    R I = mu X I,    mu = 1 / lambda,

restricted to the numerical range of R.  Modes with |mu| below a relative
cutoff are treated as nonradiating (lambda = +-inf, MS = 0).  They are
stored X-normalized because they cannot be R-normalized, and they are needed
only to make the modal expansion of Z^-1 V complete.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import logging
import math
import warnings

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from .errors import ConsistencyError, DecompositionError, TrackingError
from .mesh import RwgSet, TriMesh
from .mom import Excitation, MomSystem

log = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10


def modal_significance(lam):
    """MS = 1 / sqrt(1 + lambda^2); zero for infinite lambda."""
    lam = np.asarray(lam, dtype=float)
    with np.errstate(over="ignore"):
        ms = 1.0 / np.hypot(1.0, lam)
    return float(ms) if ms.ndim == 0 else ms


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Characteristic modes at one frequency, sorted by descending MS.

    ``eigenvectors[:, m]`` is mode m.  Radiating modes satisfy
    I^T R I = 1 and I^T X I = lambda.  Nonradiating modes (``radiating``
    False) have lambda = +-inf, I^T R I = 0 and I^T X I = +-1.
    ``order`` maps sorted position to the raw eigensolver index.
    """

    frequency: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    modal_significance: np.ndarray
    order: np.ndarray
    basis_ref: str
    radiating: np.ndarray
    r_norms: np.ndarray
    x_norms: np.ndarray
    r_matrix: np.ndarray = field(repr=False)
    total_modes: int = 0

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def num_radiating(self):
        return int(np.count_nonzero(self.radiating))

    def vector(self, index):
        if not 0 <= index < len(self):
            raise IndexError(f"mode {index} out of range (0..{len(self) - 1})")
        return self.eigenvectors[:, index]

    def take(self, count):
        """The first ``count`` modes as a new ModeSet."""
        count = int(count)
        if not 1 <= count <= len(self):
            raise ValueError(f"count must be in 1..{len(self)}")
        return ModeSet(self.frequency, self.eigenvalues[:count], self.eigenvectors[:, :count],
                       self.modal_significance[:count], self.order[:count], self.basis_ref,
                       self.radiating[:count], self.r_norms[:count], self.x_norms[:count],
                       self.r_matrix, self.total_modes)


@dataclass(frozen=True, eq=False)
class ModalWeights:
    alpha: np.ndarray
    excitation_ref: str
    modal_power: np.ndarray


@dataclass(frozen=True, eq=False)
class SurfaceCurrent:
    """Current density (A/m) at triangle centroids, shape (F, 3), complex."""

    vectors: np.ndarray
    mesh_ref: str
    label: str = ""

    @property
    def magnitude(self):
        return np.linalg.norm(self.vectors, axis=1)

    def __add__(self, other):
        if other.mesh_ref != self.mesh_ref:
            raise ConsistencyError("currents live on different meshes")
        return SurfaceCurrent(self.vectors + other.vectors, self.mesh_ref, self.label)

    def scaled(self, factor):
        return SurfaceCurrent(self.vectors * factor, self.mesh_ref, self.label)


def _symmetric_part(a, name):
    scale = np.max(np.abs(a))
    if scale == 0:
        return a.copy(), 0.0
    scrub = float(np.max(np.abs(a - a.T)) / scale)
    log.debug("%s symmetrization scrub %.3e", name, scrub)
    if scrub > SYMMETRY_TOL:
        raise ConsistencyError(f"{name} is not symmetric: relative scrub {scrub:.3e} > {SYMMETRY_TOL:g}")
    return 0.5 * (a + a.T), scrub


def _fix_signs(vectors):
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _factor_shifted(x_mat, r_mat, min_rcond=1e-12):
    """LU of X + sigma R for the first shift that leaves it well conditioned.

    The shift only moves every eigenvalue by -sigma; it is needed when a
    mode sits exactly at resonance and X itself is singular.
    """
    for sigma in (0.0, 1.0, -0.618, 2.414):
        a = x_mat + sigma * r_mat if sigma else x_mat
        try:
            with np.errstate(all="ignore"), warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
        except (ValueError, scipy.linalg.LinAlgError) as exc:
            raise DecompositionError(f"X factorization failed: {exc}") from exc
        anorm = np.linalg.norm(a, 1)
        rcond = scipy.linalg.lapack.dgecon(lu, anorm, norm="1")[0] if anorm > 0 else 0.0
        if rcond > min_rcond:
            if sigma:
                log.info("X is singular to working precision; factoring X %+g R", sigma)
            return lu, piv
    raise DecompositionError("X + sigma R is singular for every trial shift")


def default_mode_count(ms, minimum=5, threshold=0.01):
    return int(min(len(ms), max(minimum, np.count_nonzero(ms >= threshold))))


def eig_modes(sys: MomSystem, num_modes=None, *, radiating_tol=1e-8, rank_tol=1e-13,
              pd_tol=1e-10, min_modes=5, ms_threshold=0.01) -> ModeSet:
    """Characteristic modes of ``sys``.

    ``num_modes`` None keeps every mode with MS >= ``ms_threshold`` and at
    least ``min_modes``.  Asking for all M modes also returns the
    nonradiating complement.

    Raises DecompositionError if R has an eigenvalue below
    ``-pd_tol * max eig(R)``.
    """
    m_size = sys.size
    if num_modes is not None and not 1 <= int(num_modes) <= m_size:
        raise ValueError(f"num_modes must be in 1..{m_size}, got {num_modes}")
    r_mat, _ = _symmetric_part(sys.r_matrix, "R")
    x_mat, _ = _symmetric_part(sys.x_matrix, "X")

    r_eig, r_vec = np.linalg.eigh(r_mat)
    r_max = r_eig[-1]
    if not r_max > 0:
        raise DecompositionError(f"R is not positive definite: largest eigenvalue {r_max:.6e}",
                                 float(r_max))
    if r_eig[0] < -pd_tol * r_max:
        raise DecompositionError(
            f"R is not positive definite: eigenvalue {r_eig[0]:.6e} "
            f"(relative {r_eig[0] / r_max:.3e})", float(r_eig[0]))

    keep = r_eig > rank_tol * r_max
    g = r_vec[:, keep] * np.sqrt(r_eig[keep])
    lu = _factor_shifted(x_mat, r_mat)
    xg = scipy.linalg.lu_solve(lu, g)
    e = g.T @ xg
    mu, p = np.linalg.eigh(0.5 * (e + e.T))
    big = np.abs(mu) > radiating_tol * np.max(np.abs(mu))

    # radiating modes: I = X^-1 G p / mu gives I^T R I = 1, I^T X I = 1/mu
    rad_vec = xg @ p[:, big] / mu[big]
    rad_lam = 1.0 / mu[big]
    # one Rayleigh-quotient pass against the full matrices
    rr = np.einsum("ij,ij->j", rad_vec, r_mat @ rad_vec)
    rad_vec = rad_vec / np.sqrt(rr)
    rad_lam = np.einsum("ij,ij->j", rad_vec, x_mat @ rad_vec)

    # nonradiating complement: X-diagonalize the orthogonal complement of the
    # retained part of range(R)
    g_kept = g @ p[:, big]
    q, _ = np.linalg.qr(g_kept, mode="complete")
    qn = q[:, g_kept.shape[1]:]
    if qn.shape[1]:
        xn, un = np.linalg.eigh(qn.T @ x_mat @ qn)
        non_vec = (qn @ un) / np.sqrt(np.abs(xn))
        non_sign = np.sign(xn)
    else:
        non_vec = np.zeros((m_size, 0))
        non_sign = np.zeros(0)

    n_rad = rad_vec.shape[1]
    vectors = _fix_signs(np.hstack([rad_vec, non_vec]))
    lam = np.concatenate([rad_lam, non_sign * np.inf])
    radiating = np.arange(m_size) < n_rad
    r_norms = np.where(radiating, 1.0, 0.0)
    x_norms = np.concatenate([rad_lam, non_sign])
    ms = modal_significance(lam)

    raw = np.arange(m_size)
    order = np.lexsort((raw, lam, -ms))
    count = default_mode_count(ms[order], min_modes, ms_threshold) if num_modes is None else int(num_modes)
    sel = order[:count]
    return ModeSet(float(sys.frequency), lam[sel], vectors[:, sel], ms[sel], sel, sys.basis_ref,
                   radiating[sel], r_norms[sel], x_norms[sel], r_mat, m_size)


def modal_weights(modes: ModeSet, exc: Excitation) -> ModalWeights:
    """alpha_m = I_m^H V / ((1 + j lambda_m) I_m^H R I_m).

    The denominator is evaluated as I^H R I + j I^H X I, which is the same
    number for R-normalized modes and stays finite for nonradiating ones.
    Modal power is |alpha_m|^2 I_m^H R I_m, i.e. |alpha_m|^2 for every
    radiating mode.
    """
    v = np.asarray(exc.v_vector)
    if v.shape != (modes.eigenvectors.shape[0],) or exc.basis_ref != modes.basis_ref:
        raise ConsistencyError(
            f"excitation ({exc.basis_ref}, {v.shape[0]}) does not match modes "
            f"({modes.basis_ref}, {modes.eigenvectors.shape[0]})")
    proj = modes.eigenvectors.conj().T @ v
    alpha = proj / (modes.r_norms + 1j * modes.x_norms)
    power = np.abs(alpha) ** 2 * modes.r_norms
    ref = f"{exc.kind}:{exc.basis_ref}" + (f":edge{exc.feed_edge}" if exc.feed_edge is not None else "")
    return ModalWeights(alpha, ref, power)


def total_power(w: ModalWeights):
    return float(np.sum(w.modal_power))


def superpose(modes: ModeSet, w: ModalWeights):
    """Sum of alpha_m I_m over the modes in ``modes``."""
    return modes.eigenvectors @ w.alpha


# --------------------------------------------------------------------------
# currents
# --------------------------------------------------------------------------

def rwg_current(coeffs, mesh: TriMesh, basis: RwgSet, label="") -> SurfaceCurrent:
    """Evaluate sum_n c_n f_n at every triangle centroid."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape != (len(basis),):
        raise ConsistencyError(f"expected {len(basis)} coefficients, got {coeffs.shape}")
    if basis.mesh_ref != mesh.fingerprint:
        raise ConsistencyError("basis was not built on this mesh")
    cen = mesh.centroids
    areas = mesh.areas
    out = np.zeros((mesh.num_triangles, 3), dtype=complex)
    for tri, free, sign in ((basis.plus_triangle, basis.plus_free_vertex, 1.0),
                            (basis.minus_triangle, basis.minus_free_vertex, -1.0)):
        f = (sign * basis.edge_length / (2.0 * areas[tri]))[:, None] * (cen[tri] - mesh.vertices[free])
        np.add.at(out, tri, coeffs[:, None] * f)
    return SurfaceCurrent(out, mesh.fingerprint, label)


def rwg_current_at(coeffs, mesh: TriMesh, basis: RwgSet, points):
    """Evaluate the RWG expansion at in-plane points (NaN outside the mesh)."""
    coeffs = np.asarray(coeffs)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tri, _ = mesh.locate_points(pts)
    out = np.full((len(pts), 3), np.nan, dtype=complex)
    ok = tri >= 0
    out[ok] = 0.0
    areas = mesh.areas
    for side_tri, free, sign in ((basis.plus_triangle, basis.plus_free_vertex, 1.0),
                                 (basis.minus_triangle, basis.minus_free_vertex, -1.0)):
        # map triangle -> list of (basis, free vertex, sign) is built densely
        coef = sign * basis.edge_length / (2.0 * areas[side_tri]) * coeffs
        for n in range(len(basis)):
            hit = np.flatnonzero(tri == side_tri[n])
            if hit.size:
                out[hit] += coef[n] * (pts[hit] - mesh.vertices[free[n]])
    return out


def mode_current(modes: ModeSet, index, mesh: TriMesh, basis: RwgSet, normalize=False) -> SurfaceCurrent:
    """Centroid current of mode ``index``; ``normalize`` scales the peak |J| to 1."""
    vec = modes.vector(index)
    cur = rwg_current(vec, mesh, basis, label=f"mode{index}")
    if normalize:
        peak = np.max(cur.magnitude)
        if peak > 0:
            cur = cur.scaled(1.0 / peak)
    return cur


def polarization_means(current: SurfaceCurrent):
    """(mean |Jx|, mean |Jy|) over centroids."""
    a = np.abs(current.vectors)
    return float(a[:, 0].mean()), float(a[:, 1].mean())


def _seg_point_distance(p, a, b):
    ab = b - a
    den = np.einsum("...k,...k->...", ab, ab)
    t = np.clip(np.einsum("...k,...k->...", p - a, ab) / den, 0.0, 1.0)
    return np.linalg.norm(p - a - t[..., None] * ab, axis=-1)


def triangle_segment_distance(mesh: TriMesh, a, b):
    """In-plane distance from each triangle to the segment [a, b] (0 if they meet)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = mesh.corners
    d = np.min(np.stack([_seg_point_distance(c[:, i], a, b) for i in range(3)]), axis=0)
    for p in (a, b):
        for i in range(3):
            d = np.minimum(d, _seg_point_distance(p[None, :], c[:, i], c[:, (i + 1) % 3]))
    tri, _ = mesh.locate_points(np.stack([a, b]))
    d[tri[tri >= 0]] = 0.0
    # proper crossings of the segment with a triangle side
    for i in range(3):
        p, q = c[:, i, :2], c[:, (i + 1) % 3, :2]

        def orient(u, v, w):
            return (v[..., 0] - u[..., 0]) * (w[..., 1] - u[..., 1]) - (v[..., 1] - u[..., 1]) * (w[..., 0] - u[..., 0])
        o1 = orient(a[:2], b[:2], p)
        o2 = orient(a[:2], b[:2], q)
        o3 = orient(p, q, a[:2])
        o4 = orient(p, q, b[:2])
        d[(o1 * o2 < 0) & (o3 * o4 < 0)] = 0.0
    return d


def concentration_near(current: SurfaceCurrent, mesh: TriMesh, segments, radius):
    """Share of sum |J| * area carried by triangles within ``radius`` of any segment."""
    w = current.magnitude * mesh.areas
    near = np.zeros(mesh.num_triangles, dtype=bool)
    for a, b in segments:
        near |= triangle_segment_distance(mesh, a, b) <= radius
    total = w.sum()
    return float(w[near].sum() / total) if total > 0 else 0.0


# --------------------------------------------------------------------------
# tracking
# --------------------------------------------------------------------------

@dataclass
class Trajectory:
    start: int
    mode_ids: list
    frequencies: list
    eigenvalues: list
    broken: bool = False

    def resonances(self):
        """Frequencies where lambda changes sign, by linear interpolation."""
        out = []
        f, lam = self.frequencies, self.eigenvalues
        for i in range(len(f) - 1):
            a, b = lam[i], lam[i + 1]
            if not (math.isfinite(a) and math.isfinite(b)):
                continue
            if a == 0.0:
                out.append(f[i])
            elif a * b < 0:
                out.append(f[i] + (f[i + 1] - f[i]) * a / (a - b))
        if lam and lam[-1] == 0.0:
            out.append(f[-1])
        return out


def correlation_matrix(a: ModeSet, b: ModeSet, metric=None):
    """|I_a^T R I_b| normalized to unit self-correlations (radiating modes only)."""
    r = a.r_matrix if metric is None else metric
    ia = a.eigenvectors[:, a.radiating]
    ib = b.eigenvectors[:, b.radiating]
    ra = np.sqrt(np.einsum("ij,ij->j", ia, r @ ia))
    rb = np.sqrt(np.einsum("ij,ij->j", ib, r @ ib))
    return np.abs(ia.T @ r @ ib) / np.outer(ra, rb)


def track_modes(sweep, threshold=0.7):
    """Link modes across adjacent frequencies by maximal correlation.

    Pairs are found by an optimal assignment on the correlation matrix.  A
    mode whose assigned partner correlates below ``threshold`` ends its
    trajectory (flagged ``broken``) and the partner starts a new one.
    """
    sweep = list(sweep)
    if len(sweep) < 2:
        raise TrackingError("tracking needs at least two frequencies")
    ref = sweep[0].basis_ref
    if any(s.basis_ref != ref for s in sweep):
        raise TrackingError("all mode sets in a sweep must share one basis")
    freqs = [s.frequency for s in sweep]
    if any(b <= a for a, b in zip(freqs, freqs[1:])):
        raise TrackingError("sweep frequencies must be strictly increasing")

    active = {}
    trajectories = []
    for m in range(sweep[0].num_radiating):
        t = Trajectory(0, [m], [freqs[0]], [float(sweep[0].eigenvalues[m])])
        trajectories.append(t)
        active[m] = t
    for step in range(1, len(sweep)):
        prev, cur = sweep[step - 1], sweep[step]
        corr = correlation_matrix(prev, cur)
        rows, cols = linear_sum_assignment(-corr)
        nxt = {}
        for i, j in zip(rows.tolist(), cols.tolist()):
            if i not in active:
                continue
            if corr[i, j] < threshold:
                active[i].broken = True
                log.info("trajectory of mode %d at %.6g Hz breaks (best correlation %.3f)",
                         i, prev.frequency, corr[i, j])
                continue
            t = active[i]
            t.mode_ids.append(j)
            t.frequencies.append(freqs[step])
            t.eigenvalues.append(float(cur.eigenvalues[j]))
            nxt[j] = t
        for i, t in active.items():
            if t not in nxt.values() and len(t.frequencies) == step:
                t.broken = True
        for j in range(cur.num_radiating):
            if j not in nxt:
                t = Trajectory(step, [j], [freqs[step]], [float(cur.eigenvalues[j])])
                trajectories.append(t)
                nxt[j] = t
        active = nxt
    return trajectories


def match_modes(ref_modes: ModeSet, ref_mesh: TriMesh, ref_basis: RwgSet,
                other_modes: ModeSet, other_mesh: TriMesh, other_basis: RwgSet,
                points=None):
    """Current-shape correlation between modes of two different meshes.

    Both expansions are sampled at ``points`` (default: reference centroids
    that also lie on the other mesh).  Returns the |cosine| matrix of shape
    (len(ref), len(other)).
    """
    if points is None:
        points = ref_mesh.centroids
        tri, _ = other_mesh.locate_points(points)
        points = points[tri >= 0]
    ja = np.stack([rwg_current_at(ref_modes.vector(m), ref_mesh, ref_basis, points).ravel()
                   for m in range(len(ref_modes))], axis=1)
    jb = np.stack([rwg_current_at(other_modes.vector(m), other_mesh, other_basis, points).ravel()
                   for m in range(len(other_modes))], axis=1)
    good = np.all(np.isfinite(ja), axis=1) & np.all(np.isfinite(jb), axis=1)
    ja, jb = ja[good], jb[good]
    na = np.linalg.norm(ja, axis=0)
    nb = np.linalg.norm(jb, axis=0)
    return np.abs(ja.conj().T @ jb) / np.outer(na, nb)


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------

def _num(x):
    return f"{x:.12e}" if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def write_modes_csv(sweep, path):
    """Rows (f_Hz, mode_id, lambda, MS) for one or more ModeSets."""
    if isinstance(sweep, ModeSet):
        sweep = [sweep]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["f_Hz", "mode_id", "lambda", "MS"])
        for s in sweep:
            for m in range(len(s)):
                w.writerow([_num(s.frequency), m, _num(float(s.eigenvalues[m])),
                            _num(float(s.modal_significance[m]))])


def write_current_csv(current: SurfaceCurrent, mesh: TriMesh, path):
    """Rows (tri_id, cx, cy, cz, |Jx|, |Jy|, |Jz|)."""
    if current.mesh_ref != mesh.fingerprint:
        raise ConsistencyError("current does not belong to this mesh")
    cen = mesh.centroids
    mag = np.abs(current.vectors)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tri_id", "cx", "cy", "cz", "Jx", "Jy", "Jz"])
        for t in range(mesh.num_triangles):
            w.writerow([t] + [_num(float(v)) for v in cen[t]] + [_num(float(v)) for v in mag[t]])
