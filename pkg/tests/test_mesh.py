import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slotcma.errors import GeometryError, ResolutionError
from slotcma.mesh import (PlateSpec, SlotSpec, TriMesh, build_plate, check_basis, default_target_edge,
                          enumerate_rwg, read_mesh, write_mesh)


def test_default_edge_is_tenth_wavelength():
    assert default_target_edge(2.4e9) == pytest.approx(299792458.0 / 2.4e9 / 10, rel=1e-9)


def test_reference_plate_counts():
    mesh = build_plate(PlateSpec(50e-3, 40e-3), 2.4e9)
    basis = enumerate_rwg(mesh)
    # 5 x 4 cells of 10 mm; the middle column straddles x = 0 and is split in four
    assert mesh.num_triangles == 16 * 2 + 4 * 4
    assert len(basis) == len(mesh.interior_edges())
    assert mesh.total_area() == pytest.approx(50e-3 * 40e-3, rel=1e-12)
    assert mesh.euler_characteristic() == 1
    assert check_basis(mesh, basis)


def test_slot_is_cut_and_opens_a_hole():
    plate = PlateSpec(50e-3, 40e-3, SlotSpec((0, 0), 30e-3, 0.2e-3))
    mesh = build_plate(plate, 2.4e9)
    assert mesh.total_area() == pytest.approx(plate.area, rel=1e-12)
    # one hole: V - E + F = 0
    assert mesh.euler_characteristic() == 0
    tri, _ = mesh.locate_points([[0.0, 0.0, 0.0], [10e-3, 0.0, 0.0], [0.0, 5e-3, 0.0]])
    assert tri[0] == -1 and tri[1] == -1 and tri[2] >= 0


def test_slot_rim_lies_on_grid_lines():
    slot = SlotSpec((0, 0), 0.2e-3, 30e-3)
    mesh = build_plate(PlateSpec(50e-3, 40e-3, slot), 2.4e9)
    x0, x1, y0, y1 = slot.bounds
    xs = np.unique(np.round(mesh.vertices[:, 0], 12))
    ys = np.unique(np.round(mesh.vertices[:, 1], 12))
    for v in (x0, x1):
        assert np.min(np.abs(xs - v)) < 1e-12
    for v in (y0, y1):
        assert np.min(np.abs(ys - v)) < 1e-12


def test_mesh_is_mirror_symmetric():
    mesh = build_plate(PlateSpec(50e-3, 40e-3, SlotSpec((0, 0), 30e-3, 0.2e-3)), 2.4e9)
    cen = mesh.centroids[:, :2]
    for flip in ((-1, 1), (1, -1), (-1, -1)):
        mirrored = cen * np.array(flip)
        d = np.linalg.norm(mirrored[:, None, :] - cen[None, :, :], axis=2)
        assert d.min(axis=1).max() < 1e-12


def test_conforming_reference_shares_grid():
    slot = SlotSpec((0, 0), 30e-3, 0.2e-3)
    ref = build_plate(PlateSpec(50e-3, 40e-3), 2.4e9, conform_to=[slot])
    cut = build_plate(PlateSpec(50e-3, 40e-3, slot), 2.4e9)
    assert ref.total_area() == pytest.approx(50e-3 * 40e-3)
    assert ref.num_triangles > cut.num_triangles
    assert set(map(tuple, np.round(cut.vertices, 12))) <= set(map(tuple, np.round(ref.vertices, 12)))


@pytest.mark.parametrize("kwargs", [
    dict(length_x=-1.0, width_y=1.0),
    dict(length_x=50e-3, width_y=40e-3, slot=SlotSpec((20e-3, 0), 30e-3, 0.2e-3)),
])
def test_invalid_geometry(kwargs):
    with pytest.raises(GeometryError):
        PlateSpec(**kwargs)


def test_slot_sides_positive():
    with pytest.raises(GeometryError):
        SlotSpec((0, 0), 0.0, 1e-3)


def test_target_edge_too_coarse():
    with pytest.raises(ResolutionError):
        build_plate(PlateSpec(50e-3, 40e-3, target_edge=30e-3))
    with pytest.raises(ResolutionError):
        build_plate(PlateSpec(50e-3, 40e-3))


def test_degenerate_triangle_rejected():
    with pytest.raises(GeometryError):
        TriMesh.from_arrays([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])


def test_rwg_orientation_and_free_vertices():
    mesh = build_plate(PlateSpec(30e-3, 20e-3, target_edge=5e-3))
    basis = enumerate_rwg(mesh)
    for m in range(len(basis)):
        tp, tm = basis.plus_triangle[m], basis.minus_triangle[m]
        assert tp < tm
        edge = set(basis.edges[m].tolist())
        assert edge | {basis.plus_free_vertex[m]} == set(mesh.triangles[tp].tolist())
        assert edge | {basis.minus_free_vertex[m]} == set(mesh.triangles[tm].tolist())


def test_write_read_roundtrip(tmp_path):
    mesh = build_plate(PlateSpec(50e-3, 40e-3, SlotSpec((0, 0), 30e-3, 0.2e-3)), 2.4e9)
    path = tmp_path / "mesh.txt"
    write_mesh(mesh, path)
    back = read_mesh(path)
    assert back.fingerprint == mesh.fingerprint


def test_read_mesh_reports_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("v 0 0 0\nv 1 0 0\nq 1 2 3\n")
    with pytest.raises(GeometryError, match="bad.txt:3"):
        read_mesh(path)


def test_locate_points_barycentric():
    mesh = build_plate(PlateSpec(30e-3, 20e-3, target_edge=5e-3))
    tri, bary = mesh.locate_points(mesh.centroids)
    assert np.all(tri >= 0)
    np.testing.assert_allclose(bary, 1.0 / 3.0, atol=1e-9)
    tri, bary = mesh.locate_points([[1.0, 1.0, 0.0]])
    assert tri[0] == -1 and np.all(np.isnan(bary))


@settings(max_examples=25, deadline=None)
@given(lx=st.floats(10e-3, 80e-3), ly=st.floats(10e-3, 80e-3), edge_frac=st.floats(0.1, 0.45),
       slot_frac=st.tuples(st.floats(0.05, 0.8), st.floats(0.05, 0.8)),
       with_slot=st.booleans())
def test_plate_mesh_invariants(lx, ly, edge_frac, slot_frac, with_slot):
    slot = SlotSpec((0, 0), slot_frac[0] * lx, slot_frac[1] * ly) if with_slot else None
    plate = PlateSpec(lx, ly, slot, edge_frac * min(lx, ly))
    mesh = build_plate(plate)
    basis = enumerate_rwg(mesh)
    assert mesh.total_area() == pytest.approx(plate.area, rel=1e-9)
    assert np.all(mesh.areas > 0)
    # every edge touches one or two triangles, and RWG count equals interior edges
    assert all(len(t) in (1, 2) for t in mesh.edge_table.values())
    assert len(basis) == len(mesh.interior_edges())
    assert mesh.euler_characteristic() == (0 if with_slot else 1)
    # structured grid: no side exceeds the target by more than the diagonal factor
    assert mesh.edge_lengths.max() <= math.sqrt(2) * plate.target_edge * (1 + 1e-9)
