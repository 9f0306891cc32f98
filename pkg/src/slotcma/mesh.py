"""Structured triangulation of rectangular PEC plates and RWG enumeration.

The plate is centred at the origin in the z = 0 plane with x along the
length and y along the width.  An optional axis-aligned slot is cut out by
snapping grid lines onto the slot rim and dropping the enclosed cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import hashlib
import math
from pathlib import Path

import numpy as np

from .constants import C0
from .errors import GeometryError, ResolutionError, TopologyError


@dataclass(frozen=True)
class SlotSpec:
    """Axis-aligned rectangular slot; lengths in metres."""

    center: tuple[float, float]
    len_x: float
    len_y: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not (self.len_x > 0 and self.len_y > 0):
            raise GeometryError(f"slot sides must be positive, got {self.len_x} x {self.len_y}")

    @property
    def bounds(self):
        cx, cy = self.center
        return (cx - self.len_x / 2, cx + self.len_x / 2,
                cy - self.len_y / 2, cy + self.len_y / 2)

    @property
    def area(self):
        return self.len_x * self.len_y

    @property
    def orientation(self):
        """``"x"`` when the long side runs along x, ``"y"`` otherwise."""
        return "x" if self.len_x >= self.len_y else "y"


@dataclass(frozen=True)
class PlateSpec:
    """Rectangular plate, optionally slotted.

    ``target_edge`` may be left as ``None`` and resolved later from the
    analysis frequency with :func:`default_target_edge`.
    """

    length_x: float
    width_y: float
    slot: SlotSpec | None = None
    target_edge: float | None = None

    def __post_init__(self):
        if not (self.length_x > 0 and self.width_y > 0):
            raise GeometryError(f"plate sides must be positive, got {self.length_x} x {self.width_y}")
        if self.target_edge is not None and not self.target_edge > 0:
            raise ResolutionError(f"target_edge must be positive, got {self.target_edge}")
        if self.slot is not None:
            x0, x1, y0, y1 = self.slot.bounds
            hx, hy = self.length_x / 2, self.width_y / 2
            if not (-hx < x0 and x1 < hx and -hy < y0 and y1 < hy):
                raise GeometryError(
                    f"slot {self.slot} does not lie strictly inside the "
                    f"{self.length_x} x {self.width_y} plate")

    @property
    def area(self):
        full = self.length_x * self.width_y
        return full - (self.slot.area if self.slot else 0.0)

    def with_target_edge(self, target_edge):
        return PlateSpec(self.length_x, self.width_y, self.slot, target_edge)

    def with_slot(self, slot):
        return PlateSpec(self.length_x, self.width_y, slot, self.target_edge)


def default_target_edge(frequency):
    """Free-space wavelength / 10 at ``frequency`` (Hz)."""
    return C0 / frequency / 10.0


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangulated surface.

    ``edge_table`` maps a sorted vertex-index pair to the list of adjacent
    triangle indices (in ascending order).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edge_table: dict = field(repr=False)

    @classmethod
    def from_arrays(cls, vertices, triangles):
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise GeometryError("vertices must have shape (n, 3)")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise GeometryError("triangles must have shape (n, 3)")
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise GeometryError("triangle references a missing vertex")
        table = {}
        for t, tri in enumerate(triangles.tolist()):
            for i in range(3):
                a, b = tri[i], tri[(i + 1) % 3]
                key = (a, b) if a < b else (b, a)
                table.setdefault(key, []).append(t)
        mesh = cls(_frozen(vertices), _frozen(triangles), table)
        areas = mesh.areas
        bad = np.flatnonzero(~(areas > 0))
        if bad.size:
            raise GeometryError(f"triangles with non-positive area: {bad[:10].tolist()}")
        return mesh

    @property
    def num_triangles(self):
        return len(self.triangles)

    @property
    def corners(self):
        """Triangle corner coordinates, shape (F, 3, 3)."""
        return self.vertices[self.triangles]

    @property
    def areas(self):
        c = self.corners
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    @property
    def normals(self):
        c = self.corners
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @property
    def centroids(self):
        return self.corners.mean(axis=1)

    @property
    def edge_lengths(self):
        """Side lengths per triangle, shape (F, 3); side i joins corners i and i+1."""
        c = self.corners
        return np.linalg.norm(np.roll(c, -1, axis=1) - c, axis=2)

    @property
    def diameters(self):
        return self.edge_lengths.max(axis=1)

    @property
    def aspect_ratios(self):
        """Longest side over the matching altitude."""
        longest = self.diameters
        return longest**2 / (2.0 * self.areas)

    def edges(self):
        """Sorted list of undirected edges."""
        return sorted(self.edge_table)

    def boundary_edges(self):
        return [e for e in self.edges() if len(self.edge_table[e]) == 1]

    def interior_edges(self):
        return [e for e in self.edges() if len(self.edge_table[e]) == 2]

    @property
    def fingerprint(self):
        """Content hash identifying this mesh."""
        fp = self.__dict__.get("_fingerprint")
        if fp is None:
            h = hashlib.sha1(self.vertices.tobytes())
            h.update(self.triangles.tobytes())
            fp = h.hexdigest()[:16]
            object.__setattr__(self, "_fingerprint", fp)
        return fp

    def euler_characteristic(self):
        return len(self.vertices) - len(self.edge_table) + len(self.triangles)

    def total_area(self):
        return float(np.sum(self.areas))

    def locate_points(self, points, tol=1e-9):
        """Index of a triangle containing each in-plane point, -1 if none.

        Returns ``(tri, bary)``.  Points on shared edges go to the lowest
        triangle index.  ``tol`` is a barycentric slack.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        c = self.corners
        e1 = c[:, 1] - c[:, 0]
        e2 = c[:, 2] - c[:, 0]
        # solve p - c0 = s e1 + t e2 in the least-squares sense per triangle
        g11 = np.einsum("fk,fk->f", e1, e1)
        g12 = np.einsum("fk,fk->f", e1, e2)
        g22 = np.einsum("fk,fk->f", e2, e2)
        det = g11 * g22 - g12 * g12
        d = pts[:, None, :] - c[None, :, 0]
        b1 = np.einsum("pfk,fk->pf", d, e1)
        b2 = np.einsum("pfk,fk->pf", d, e2)
        s = (g22 * b1 - g12 * b2) / det
        t = (g11 * b2 - g12 * b1) / det
        u = 1.0 - s - t
        inside = (s >= -tol) & (t >= -tol) & (u >= -tol)
        tri = np.where(inside.any(axis=1), inside.argmax(axis=1), -1)
        rows = np.arange(len(pts))
        pick = np.maximum(tri, 0)
        bary = np.stack([u[rows, pick], s[rows, pick], t[rows, pick]], axis=1)
        bary[tri < 0] = np.nan
        return tri, bary


def _axis_lines(lo, hi, cuts, target):
    """Grid coordinates on [lo, hi] that contain every cut exactly."""
    breaks = sorted({lo, hi, *cuts})
    coords = [breaks[0]]
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, math.ceil((b - a) / target - 1e-9))
        coords.extend(a + (b - a) * i / n for i in range(1, n))
        coords.append(b)
    return np.array(coords)


def build_plate(plate: PlateSpec, frequency=None, conform_to=()) -> TriMesh:
    """Triangulate a (slotted) plate on a slot-conforming structured grid.

    Each grid cell is split along one diagonal, alternating by quadrant;
    cells cut by the x or y axis get a centre vertex instead.  The mesh is
    then mirror symmetric about both axes whenever the grid itself is.
    ``conform_to`` lists further SlotSpecs whose outlines become grid lines
    without being cut out; meshing a reference plate this way gives it the
    same grid as its slotted variants.
    """
    target = plate.target_edge
    if target is None:
        if frequency is None:
            raise ResolutionError("target_edge unset and no frequency given")
        target = default_target_edge(frequency)
    if target > min(plate.length_x, plate.width_y) / 2:
        raise ResolutionError(
            f"target_edge {target:g} m exceeds half the shorter plate side "
            f"({min(plate.length_x, plate.width_y) / 2:g} m)")

    hx, hy = plate.length_x / 2, plate.width_y / 2
    cut_x, cut_y = [], []
    for outline in ([plate.slot] if plate.slot is not None else []) + list(conform_to):
        x0, x1, y0, y1 = outline.bounds
        if not (-hx < x0 < x1 < hx and -hy < y0 < y1 < hy):
            raise GeometryError("conforming outline must lie strictly inside the plate")
        cut_x += [x0, x1]
        cut_y += [y0, y1]
    xs = _axis_lines(-hx, hx, cut_x, target)
    ys = _axis_lines(-hy, hy, cut_y, target)
    hole = plate.slot.bounds if plate.slot is not None else None

    nx, ny = len(xs) - 1, len(ys) - 1
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])

    def vid(i, j):
        return j * (nx + 1) + i

    snap = 1e-9 * max(hx, hy)
    triangles = []
    centres = []
    for j in range(ny):
        for i in range(nx):
            cx = 0.5 * (xs[i] + xs[i + 1])
            cy = 0.5 * (ys[j] + ys[j + 1])
            if hole is not None and hole[0] < cx < hole[1] and hole[2] < cy < hole[3]:
                continue
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            if abs(cx) < snap or abs(cy) < snap:
                # a cell cut by a symmetry axis gets a centre vertex and four triangles
                c = len(vertices) + len(centres)
                centres.append((0.0 if abs(cx) < snap else cx, 0.0 if abs(cy) < snap else cy, 0.0))
                triangles += [(v00, v10, c), (v10, v11, c), (v11, v01, c), (v01, v00, c)]
            elif cx * cy > 0:
                triangles.append((v00, v10, v11))
                triangles.append((v00, v11, v01))
            else:
                triangles.append((v00, v10, v01))
                triangles.append((v10, v11, v01))
    if centres:
        vertices = np.vstack([vertices, np.array(centres)])
    triangles = np.array(triangles, dtype=np.int64)

    used = np.zeros(len(vertices), dtype=bool)
    used[triangles.ravel()] = True
    remap = np.cumsum(used) - 1
    return TriMesh.from_arrays(vertices[used], remap[triangles])


@dataclass(frozen=True, eq=False)
class RwgSet:
    """One RWG basis function per interior edge.

    Arrays are indexed by basis number.  The plus triangle is the lower
    indexed of the two adjacent triangles; the basis current flows from the
    plus triangle across the shared edge into the minus triangle.
    """

    edges: np.ndarray
    plus_triangle: np.ndarray
    minus_triangle: np.ndarray
    edge_length: np.ndarray
    plus_free_vertex: np.ndarray
    minus_free_vertex: np.ndarray
    mesh_ref: str

    def __len__(self):
        return len(self.edges)

    @property
    def count(self):
        return len(self.edges)

    def entries(self):
        """Per-basis records, mainly for inspection and export."""
        return [
            {"edge_id": m, "edge": tuple(self.edges[m].tolist()),
             "plus_triangle": int(self.plus_triangle[m]),
             "minus_triangle": int(self.minus_triangle[m]),
             "edge_length": float(self.edge_length[m]),
             "plus_free_vertex": int(self.plus_free_vertex[m]),
             "minus_free_vertex": int(self.minus_free_vertex[m])}
            for m in range(len(self))
        ]

    def midpoints(self, mesh):
        return mesh.vertices[self.edges].mean(axis=1)

    def directions(self, mesh):
        """Unit vectors along each basis edge."""
        d = mesh.vertices[self.edges[:, 1]] - mesh.vertices[self.edges[:, 0]]
        return d / np.linalg.norm(d, axis=1, keepdims=True)


def enumerate_rwg(mesh: TriMesh) -> RwgSet:
    """Build the RWG set over all interior edges, ordered by vertex pair."""
    edges, plus, minus, plus_free, minus_free = [], [], [], [], []
    tris = mesh.triangles
    for key in sorted(mesh.edge_table):
        adj = mesh.edge_table[key]
        if len(adj) > 2:
            raise TopologyError(f"edge {key} is shared by {len(adj)} triangles")
        if len(adj) < 2:
            continue
        tp, tm = sorted(adj)
        edges.append(key)
        plus.append(tp)
        minus.append(tm)
        plus_free.append(next(v for v in tris[tp] if v not in key))
        minus_free.append(next(v for v in tris[tm] if v not in key))
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
    length = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)
    return RwgSet(
        _frozen(edges), _frozen(np.array(plus, dtype=np.int64)),
        _frozen(np.array(minus, dtype=np.int64)), _frozen(length),
        _frozen(np.array(plus_free, dtype=np.int64)),
        _frozen(np.array(minus_free, dtype=np.int64)), mesh.fingerprint)


def check_basis(mesh, basis):
    """True when ``basis`` was enumerated on ``mesh``."""
    return basis.mesh_ref == mesh.fingerprint


def write_mesh(mesh: TriMesh, path):
    """Plain-text export: ``v x y z`` lines then ``t i j k`` lines (0-based)."""
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"t {i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> TriMesh:
    vertices, triangles = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v" and len(parts) == 4:
                vertices.append([float(p) for p in parts[1:]])
            elif parts[0] == "t" and len(parts) == 4:
                triangles.append([int(p) for p in parts[1:]])
            else:
                raise ValueError(raw)
        except ValueError:
            raise GeometryError(f"{path}:{lineno}: cannot parse {raw!r}") from None
    return TriMesh.from_arrays(np.array(vertices).reshape(-1, 3),
                               np.array(triangles, dtype=np.int64).reshape(-1, 3))
