from math import factorial, pi

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st
from scipy import integrate

from slotcma.integrals import static_potentials
from slotcma.quadrature import sphere_rule, triangle_rule


def _exact_monomial_mean(a, b):
    # mean of s^a t^b over the unit right triangle (area 1/2)
    return 2.0 * factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("degree", [1, 2, 5, 7, 9, 12])
def test_triangle_rule_exact_to_degree(degree):
    bary, w = triangle_rule(degree)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(bary.sum(axis=1), 1.0, atol=1e-14)
    s, t = bary[:, 1], bary[:, 2]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            assert np.dot(w, s**a * t**b) == pytest.approx(_exact_monomial_mean(a, b), rel=1e-12, abs=1e-15)


def test_sphere_rule_moments():
    d, th, ph, w = sphere_rule(12)
    assert w.sum() == pytest.approx(4 * pi, rel=1e-14)
    x, y, z = d.T
    assert np.dot(w, x**2) == pytest.approx(4 * pi / 3, rel=1e-13)
    assert np.dot(w, z**4) == pytest.approx(4 * pi / 5, rel=1e-13)
    assert np.dot(w, x**2 * y**2) == pytest.approx(4 * pi / 15, rel=1e-13)
    assert abs(np.dot(w, x * y * z)) < 1e-13
    # local frames are orthonormal
    np.testing.assert_allclose(np.einsum("sk,sk->s", th, d), 0.0, atol=1e-14)
    np.testing.assert_allclose(np.einsum("sk,sk->s", ph, d), 0.0, atol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(np.cross(th, ph), axis=1), 1.0, atol=1e-14)


def _duffy_reference(obs, corners, degree=40):
    """phi, psi by splitting the triangle at the foot of ``obs`` and collapsing
    a product Gauss rule onto it, so the 1/R singularity is cancelled."""
    bary, w = triangle_rule(degree)
    n = np.cross(corners[1] - corners[0], corners[2] - corners[0])
    n /= np.linalg.norm(n)
    foot = obs - np.dot(obs - corners[0], n) * n
    phi, psi = 0.0, np.zeros(3)
    for i in range(3):
        a, b = corners[i], corners[(i + 1) % 3]
        sub = np.array([b, foot, a])
        area = 0.5 * np.dot(np.cross(sub[1] - sub[0], sub[2] - sub[0]), n)
        if abs(area) < 1e-15:
            continue
        # the collapsed rule puts its singular corner at barycentric vertex 1
        pts = bary @ sub
        r = np.linalg.norm(obs - pts, axis=1)
        phi += area * np.dot(w, 1.0 / r)
        psi += area * np.einsum("q,qk->k", w / r, pts - obs)
    return phi, psi


def _adaptive_reference(obs, corners):
    """phi, psi by adaptive 2D quadrature over the (u, v) parameter triangle."""
    e1, e2 = corners[1] - corners[0], corners[2] - corners[0]
    jac = np.linalg.norm(np.cross(e1, e2))

    def integral(component):
        def f(v, u):
            d = corners[0] + u * e1 + v * e2 - obs
            return jac * (1.0 if component is None else d[component]) / np.linalg.norm(d)
        return integrate.dblquad(f, 0.0, 1.0, 0.0, lambda u: 1.0 - u, epsabs=1e-13, epsrel=1e-12)[0]

    return integral(None), np.array([integral(k) for k in range(3)])


TRI = np.array([[0.0, 0.0, 0.0], [1.0, 0.2, 0.0], [0.3, 0.9, 0.0]])


@pytest.mark.parametrize("obs", [
    (0.4, 0.35, 0.0),      # inside, in plane
    (0.4, 0.35, 0.05),     # just above
    (0.0, 0.0, 0.0),       # on a vertex
    (0.5, 0.1, 0.0),       # on an edge
    (1.5, 1.2, 0.3),       # well outside
    (-0.3, 0.4, 0.0),      # outside, in plane
])
def test_static_potentials_match_duffy_quadrature(obs):
    obs = np.array(obs)
    phi, psi = static_potentials(obs, TRI)
    ref_phi, ref_psi = _duffy_reference(obs, TRI)
    assert phi == pytest.approx(ref_phi, rel=1e-9)
    np.testing.assert_allclose(psi, ref_psi, rtol=1e-8, atol=1e-10)


def test_far_point_limit():
    # far away the triangle acts as a point of weight area
    area = 0.5 * np.linalg.norm(np.cross(TRI[1] - TRI[0], TRI[2] - TRI[0]))
    obs = np.array([300.0, -200.0, 500.0])
    phi, _ = static_potentials(obs, TRI)
    assert phi == pytest.approx(area / np.linalg.norm(obs - TRI.mean(axis=0)), rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=9, max_size=9),
       st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.02, 1.0)))
@example([0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.125, 0.0, 0.0], (0.0, 0.0, 0.0625))
def test_static_potentials_random_triangles(coords, obs_off):
    corners = np.array(coords).reshape(3, 3)
    n = np.cross(corners[1] - corners[0], corners[2] - corners[0])
    if np.linalg.norm(n) < 0.05:
        return
    n_hat = n / np.linalg.norm(n)
    centre = corners.mean(axis=0)
    # a point off the plane, within a few triangle sizes
    obs = centre + 0.5 * obs_off[0] * (corners[0] - centre) + 0.5 * obs_off[1] * (corners[1] - centre) \
        + obs_off[2] * n_hat
    phi, psi = static_potentials(obs, corners)
    ref_phi, ref_psi = _adaptive_reference(obs, corners)
    assert phi > 0
    assert phi == pytest.approx(ref_phi, rel=1e-9)
    np.testing.assert_allclose(psi, ref_psi, rtol=1e-8, atol=1e-10 * np.abs(ref_psi).max())


def test_static_potentials_broadcast():
    obs = np.array([[0.4, 0.35, 0.0], [0.1, 0.1, 0.2]])
    phi, psi = static_potentials(obs, TRI[None])
    assert phi.shape == (2,) and psi.shape == (2, 3)
    one, _ = static_potentials(obs[1], TRI)
    assert phi[1] == pytest.approx(one, rel=1e-15)
