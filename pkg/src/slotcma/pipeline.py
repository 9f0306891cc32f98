"""Geometry -> mesh -> Z -> modes chain shared by the planner, scenarios and CLI."""

from __future__ import annotations

from dataclasses import dataclass, field
import time

import numpy as np

from .cma import ModeSet, SurfaceCurrent, eig_modes, rwg_current
from .errors import GeometryError
from .mesh import PlateSpec, RwgSet, TriMesh, build_plate, default_target_edge, enumerate_rwg
from .mom import Excitation, MomSystem, assemble_z, excite_delta_gap, locate_feed_edge, solve_direct


@dataclass(frozen=True)
class FeedSpec:
    """Delta-gap feed placed on the basis edge nearest ``point`` that a
    current along ``direction`` crosses."""

    point: tuple = (0.0, 0.0)
    direction: tuple = (0.0, 1.0)
    volts: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(v) for v in self.point))
        object.__setattr__(self, "direction", tuple(float(v) for v in self.direction))


@dataclass(eq=False)
class Analysis:
    plate: PlateSpec
    frequency: float
    mesh: TriMesh
    basis: RwgSet
    system: MomSystem
    modes: ModeSet
    timings: dict = field(default_factory=dict)

    @property
    def bbox(self):
        v = self.mesh.vertices
        return v.min(axis=0), v.max(axis=0)


def resolve_plate(plate: PlateSpec, mesh_frequency):
    if plate.target_edge is None:
        return plate.with_target_edge(default_target_edge(mesh_frequency))
    return plate


def mesh_plate(plate: PlateSpec, mesh_frequency, conform_to=()):
    plate = resolve_plate(plate, mesh_frequency)
    mesh = build_plate(plate, conform_to=conform_to)
    return plate, mesh, enumerate_rwg(mesh)


def analyze(plate: PlateSpec, frequency, *, mesh_frequency=None, num_modes=None, workers=1,
            mesh=None, basis=None) -> Analysis:
    """Mesh ``plate`` (edge target from ``mesh_frequency``, default ``frequency``),
    assemble Z at ``frequency`` and extract modes."""
    timings = {}
    t0 = time.perf_counter()
    if mesh is None:
        plate, mesh, basis = mesh_plate(plate, mesh_frequency or frequency)
    timings["mesh_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    system = assemble_z(mesh, basis, frequency, workers=workers)
    timings["assemble_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    modes = eig_modes(system, num_modes)
    timings["eig_s"] = time.perf_counter() - t0
    return Analysis(plate, float(frequency), mesh, basis, system, modes, timings)


def feed_edge(analysis: Analysis, feed: FeedSpec):
    tri, _ = analysis.mesh.locate_points(np.array([[*feed.point, 0.0]]))
    if tri[0] < 0:
        raise GeometryError(f"feed point {feed.point} m is not on the plate surface")
    return locate_feed_edge(analysis.mesh, analysis.basis, (*feed.point, 0.0), (*feed.direction, 0.0))


def feed_from_edge(mesh: TriMesh, basis: RwgSet, edge, volts=1.0) -> FeedSpec:
    """FeedSpec reproducing basis edge ``edge`` on other meshes."""
    mid = basis.midpoints(mesh)[edge]
    d = basis.directions(mesh)[edge]
    across = np.array([-d[1], d[0]])
    return FeedSpec((mid[0], mid[1]), (across[0], across[1]), volts)


@dataclass(eq=False)
class DrivenResult:
    excitation: Excitation
    coefficients: np.ndarray
    current: SurfaceCurrent
    input_power: float


def drive(analysis: Analysis, feed: FeedSpec, normalization="voltage", power=1.0) -> DrivenResult:
    """Direct solve for a delta-gap feed.

    ``normalization`` "voltage" keeps the feed voltage; "power" rescales the
    solution to ``power`` watts of input power.
    """
    edge = feed_edge(analysis, feed)
    exc = excite_delta_gap(analysis.basis, edge, feed.volts)
    coeffs = solve_direct(analysis.system, exc)
    p_in = 0.5 * float(np.real(np.vdot(coeffs, exc.v_vector)))
    if normalization == "power":
        scale = np.sqrt(power / p_in)
        coeffs = coeffs * scale
        exc = Excitation(exc.v_vector * scale, exc.kind, exc.basis_ref, exc.feed_edge,
                         dict(exc.params, power_w=power))
        p_in = power
    elif normalization != "voltage":
        raise ValueError(f"normalization must be 'voltage' or 'power', got {normalization!r}")
    cur = rwg_current(coeffs, analysis.mesh, analysis.basis, label=f"driven:{normalization}")
    return DrivenResult(exc, coeffs, cur, p_in)
