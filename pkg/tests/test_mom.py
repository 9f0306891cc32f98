import numpy as np
import pytest

from slotcma.constants import C0, ETA0, MU0, wavenumber
from slotcma.errors import ConsistencyError, SolverError
from slotcma.mesh import PlateSpec, build_plate, enumerate_rwg
from slotcma.mom import (Excitation, MomSystem, assemble_z, excite_delta_gap, excite_plane_wave, green,
                         locate_feed_edge, radiation_resistance_matrix, read_matrix, solve_direct,
                         write_matrix)


def test_green_function():
    k = 2.0
    g = green(np.array([[1.0, 0.0, 0.0]]), np.zeros(3), k)
    assert g[0] == pytest.approx(np.exp(-2j) / (4 * np.pi))


def test_impedance_symmetric_and_resistance_psd(small_system):
    _, _, sys = small_system
    assert sys.asymmetry() < 1e-12
    r_eig = np.linalg.eigvalsh(sys.r_matrix)
    assert r_eig.min() > -1e-12 * r_eig.max()


def test_radiated_resistance_matches_direct_quadrature(small_system):
    mesh, basis, sys = small_system
    direct = assemble_z(mesh, basis, sys.frequency, resistance="quadrature")
    # the imaginary parts are the same computation
    np.testing.assert_array_equal(direct.x_matrix, sys.x_matrix)
    scale = np.abs(sys.r_matrix).max()
    assert np.abs(direct.r_matrix - sys.r_matrix).max() < 2e-3 * scale


def test_workers_do_not_change_result(small_system):
    mesh, basis, sys = small_system
    par = assemble_z(mesh, basis, sys.frequency, workers=3)
    np.testing.assert_array_equal(par.z_matrix, sys.z_matrix)


def test_input_power_equals_radiated_power(small_system):
    mesh, basis, sys = small_system
    exc = excite_delta_gap(basis, 7)
    i = solve_direct(sys, exc)
    p_in = 0.5 * np.real(np.vdot(i, exc.v_vector))
    p_rad = 0.5 * np.real(i.conj() @ radiation_resistance_matrix(mesh, basis, sys.frequency) @ i)
    assert p_in == pytest.approx(p_rad, rel=1e-10)


def _strip_dipole_impedance(length_fraction, frequency=1e9):
    lam = C0 / frequency
    width = lam / 100
    mesh = build_plate(PlateSpec(length_fraction * lam, width, target_edge=width / 2))
    basis = enumerate_rwg(mesh)
    sys = assemble_z(mesh, basis, frequency)
    mid = basis.midpoints(mesh)
    gap = np.flatnonzero((np.abs(mid[:, 0]) < 1e-12) & (np.abs(basis.directions(mesh)[:, 0]) < 0.5))
    v = np.zeros(len(basis), dtype=complex)
    v[gap] = basis.edge_length[gap]
    i = solve_direct(sys, Excitation(v, "gap", sys.basis_ref))
    return 1.0 / np.sum(i[gap] * basis.edge_length[gap])


def test_strip_dipole_resonance():
    # a thin strip dipole resonates a little below half a wavelength with ~70 ohm
    z_short = _strip_dipole_impedance(0.44)
    z_res = _strip_dipole_impedance(0.47)
    z_half = _strip_dipole_impedance(0.50)
    assert z_short.imag < 0 < z_half.imag
    assert 60.0 < z_res.real < 85.0
    assert abs(z_res.imag) < 15.0
    assert z_short.real < z_res.real < z_half.real


def test_plane_wave_power_balance(small_system):
    # extinction = scattering for a lossless scatterer under plane-wave incidence
    mesh, basis, sys = small_system
    exc = excite_plane_wave(mesh, basis, sys.frequency, (0, 0, -1), (1, 0, 0))
    i = solve_direct(sys, exc)
    p_scat = 0.5 * np.real(i.conj() @ sys.r_matrix @ i)
    p_ext = 0.5 * np.real(np.vdot(i, exc.v_vector))
    assert p_ext == pytest.approx(p_scat, rel=1e-10)
    assert p_scat > 0


def test_plane_wave_requires_transverse_polarization(small_system):
    mesh, basis, sys = small_system
    with pytest.raises(ValueError):
        excite_plane_wave(mesh, basis, sys.frequency, (0, 0, -1), (0, 0, 1))


def test_delta_gap_vector(small_system):
    _, basis, sys = small_system
    exc = excite_delta_gap(basis, 3, 2.0)
    assert np.count_nonzero(exc.v_vector) == 1
    assert exc.v_vector[3] == pytest.approx(2.0 * basis.edge_length[3])
    with pytest.raises(KeyError):
        excite_delta_gap(basis, len(basis))


def test_locate_feed_edge_prefers_crossing_edges(small_system):
    mesh, basis, _ = small_system
    e = locate_feed_edge(mesh, basis, (0.0, 0.0, 0.0), (0.0, 1.0, 0.0))
    d = basis.directions(mesh)[e]
    assert abs(d[1]) <= 0.5
    assert np.linalg.norm(basis.midpoints(mesh)[e][:2]) <= 5e-3


def test_solve_rejects_foreign_excitation(small_system):
    _, basis, sys = small_system
    bad = Excitation(np.ones(len(basis), dtype=complex), "x", "other:0")
    with pytest.raises(ConsistencyError):
        solve_direct(sys, bad)


def test_singular_matrix_raises():
    z = np.ones((3, 3), dtype=complex)
    sys = MomSystem(z, 1e9, wavenumber(1e9), "m:3")
    with pytest.raises(SolverError):
        solve_direct(sys, Excitation(np.ones(3, dtype=complex), "x", "m:3"))


def test_matrix_roundtrip(tmp_path, small_system):
    _, _, sys = small_system
    path = tmp_path / "z.txt"
    write_matrix(sys, path)
    f, z = read_matrix(path)
    assert f == sys.frequency
    np.testing.assert_array_equal(z, sys.z_matrix)


def test_constants_consistent():
    assert ETA0 == pytest.approx(MU0 * C0, rel=1e-12)
    assert wavenumber(C0) == pytest.approx(2 * np.pi, rel=1e-12)
