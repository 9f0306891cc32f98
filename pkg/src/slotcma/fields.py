"""Electric near field of a surface current by dipole superposition.

Every triangle carries one Hertzian dipole of moment J * area at its
centroid.  The complete dipole field (1/R, 1/R^2 and 1/R^3 terms) is

    E = -j omega mu G(R) [a m - b Rhat (Rhat . m)]
    a = 1 + 1/(jkR) - 1/(kR)^2,   b = 1 + 3/(jkR) - 3/(kR)^2

with G = exp(-jkR) / (4 pi R) and exp(+j omega t).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
import math

import numpy as np

from .cma import SurfaceCurrent
from .constants import MU0, wavenumber
from .errors import ConsistencyError, GeometryError
from .mesh import PlateSpec, TriMesh

MIN_STANDOFF = 1e-4


@dataclass(frozen=True, eq=False)
class ObservationSet:
    points: np.ndarray
    kind: str
    shape: tuple = ()

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class FieldResult:
    e: np.ndarray
    points: np.ndarray
    frequency: float
    label: str = ""

    @property
    def magnitude(self):
        return np.linalg.norm(self.e, axis=1)

    @property
    def db(self):
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(self.magnitude)

    def scaled(self, factor):
        return FieldResult(self.e * factor, self.points, self.frequency, self.label)


def dipole_field(moments, sources, points, frequency):
    """Field at ``points`` (P, 3) of dipoles ``moments`` (N, 3) at ``sources`` (N, 3).

    The sum over sources runs in a fixed order, so results are reproducible
    regardless of how points are chunked.
    """
    k = wavenumber(frequency)
    omega = 2.0 * math.pi * frequency
    moments = np.asarray(moments, dtype=complex)
    sources = np.asarray(sources, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros((len(points), 3), dtype=complex)
    chunk = max(1, int(2e6 // max(1, len(sources))))
    for lo in range(0, len(points), chunk):
        d = points[lo:lo + chunk, None, :] - sources[None, :, :]
        r = np.linalg.norm(d, axis=2)
        if np.any(r == 0):
            raise GeometryError("observation point coincides with a dipole")
        rhat = d / r[..., None]
        kr = k * r
        a = 1.0 + 1.0 / (1j * kr) - 1.0 / kr**2
        b = 1.0 + 3.0 / (1j * kr) - 3.0 / kr**2
        g = np.exp(-1j * kr) / (4.0 * math.pi * r)
        rm = np.einsum("psk,sk->ps", rhat, moments)
        term = a[..., None] * moments[None, :, :] - (b * rm)[..., None] * rhat
        out[lo:lo + chunk] = -1j * omega * MU0 * np.einsum("ps,psk->pk", g, term)
    return out


def _segment_distance(p, a, b):
    ab = b - a
    t = np.clip(np.einsum("...k,...k->...", p - a, ab) / np.einsum("...k,...k->...", ab, ab), 0.0, 1.0)
    return np.linalg.norm(p - a - t[..., None] * ab, axis=-1)


def distance_to_mesh(mesh: TriMesh, points):
    """Euclidean distance from each point to the nearest triangle."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    c = mesh.corners
    n = mesh.normals
    best = np.full(len(pts), np.inf)
    chunk = max(1, int(1e6 // max(1, mesh.num_triangles)))
    for lo in range(0, len(pts), chunk):
        p = pts[lo:lo + chunk, None, :]
        h = np.einsum("ptk,tk->pt", p - c[None, :, 0], n)
        proj = p - h[..., None] * n[None]
        inside = np.ones(h.shape, dtype=bool)
        for i in range(3):
            a, b = c[None, :, i], c[None, :, (i + 1) % 3]
            side = np.einsum("ptk,tk->pt", np.cross(b - a, proj - a), n)
            inside &= side >= 0
        d_in = np.where(inside, np.abs(h), np.inf)
        d_edge = np.min(np.stack([_segment_distance(p, c[None, :, i], c[None, :, (i + 1) % 3])
                                  for i in range(3)]), axis=0)
        best[lo:lo + chunk] = np.min(np.minimum(d_in, d_edge), axis=1)
    return best


def check_standoff(mesh: TriMesh, obs: ObservationSet, standoff=MIN_STANDOFF):
    d = distance_to_mesh(mesh, obs.points)
    bad = np.flatnonzero(d < standoff)
    if bad.size:
        listed = ", ".join(f"#{i} {tuple(np.round(obs.points[i], 6).tolist())}" for i in bad[:5])
        more = f" (+{bad.size - 5} more)" if bad.size > 5 else ""
        raise GeometryError(f"observation points closer than {standoff:g} m to the plate: {listed}{more}")


def near_field(current: SurfaceCurrent, mesh: TriMesh, obs: ObservationSet, frequency,
               standoff=MIN_STANDOFF) -> FieldResult:
    """E at ``obs`` from one centroid dipole (J * area) per triangle."""
    if current.mesh_ref != mesh.fingerprint:
        raise ConsistencyError("current does not belong to this mesh")
    check_standoff(mesh, obs, standoff)
    moments = current.vectors * mesh.areas[:, None]
    e = dipole_field(moments, mesh.centroids, obs.points, frequency)
    return FieldResult(e, np.array(obs.points), float(frequency), current.label)


def observation_line(axis, offset, height, extent, samples, plate: PlateSpec) -> ObservationSet:
    """Line parallel to ``axis`` at ``offset`` beyond the plate edge and height ``height``.

    ``axis`` is one of x, -x, y, -y; the sign sets the traversal direction.
    An x line runs at y = W/2 + offset, a y line at x = L/2 + offset.
    """
    axis = axis.strip().lower()
    if axis not in ("x", "-x", "y", "-y"):
        raise ValueError(f"axis must be x, -x, y or -y, got {axis!r}")
    if samples < 2:
        raise ValueError("a line needs at least two samples")
    s = np.linspace(-0.5 * extent, 0.5 * extent, int(samples))
    if axis.startswith("-"):
        s = s[::-1]
    pts = np.zeros((len(s), 3))
    if axis.endswith("x"):
        pts[:, 0] = s
        pts[:, 1] = 0.5 * plate.width_y + offset
    else:
        pts[:, 0] = 0.5 * plate.length_x + offset
        pts[:, 1] = s
    pts[:, 2] = height
    return ObservationSet(pts, "line-" + axis.lstrip("-"), (len(s),))


def observation_plane(z_height, nx, ny, plate: PlateSpec) -> ObservationSet:
    """nx x ny grid over the plate footprint at height ``z_height`` (x fastest)."""
    if nx < 2 or ny < 2:
        raise ValueError("a plane needs at least two samples per axis")
    x = np.linspace(-0.5 * plate.length_x, 0.5 * plate.length_x, int(nx))
    y = np.linspace(-0.5 * plate.width_y, 0.5 * plate.width_y, int(ny))
    yy, xx = np.meshgrid(y, x, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel(), np.full(xx.size, float(z_height))])
    return ObservationSet(pts, "plane-z", (int(ny), int(nx)))


def write_field_csv(result: FieldResult, path):
    e = result.e
    mag = result.magnitude
    db = result.db
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "z", "Re_Ex", "Im_Ex", "Re_Ey", "Im_Ey", "Re_Ez", "Im_Ez", "absE", "absE_dB"])
        for i in range(len(e)):
            row = list(result.points[i]) + [e[i, 0].real, e[i, 0].imag, e[i, 1].real, e[i, 1].imag,
                                             e[i, 2].real, e[i, 2].imag, mag[i], db[i]]
            w.writerow([f"{float(v):.12e}" for v in row])
