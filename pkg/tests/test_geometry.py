import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from slipball.geometry import (
    GeometryDescriptor,
    GeometryError,
    NonTangentError,
    OffSurfaceError,
    Profile,
    RigidField,
    curvature_bound_lambda,
    gauss_map_differential,
    ker_s_classification,
    rigid_field_tangency,
    shape_operator_sample,
)

E = np.eye(3)


def spheroid_lambda_oracle(a, c, n=400):
    """max |k| from the fundamental forms of the parametrization, on an n x n grid."""
    u, v = sp.symbols("u v", real=True)
    X = sp.Matrix([a * sp.sin(u) * sp.cos(v), a * sp.sin(u) * sp.sin(v), c * sp.cos(u)])
    Xu, Xv = X.diff(u), X.diff(v)
    N = Xu.cross(Xv)
    first = [Xu.dot(Xu), Xu.dot(Xv), Xv.dot(Xv)]
    second = [X.diff(u, 2).dot(N), X.diff(u, v).dot(N), X.diff(v, 2).dot(N)]
    f = sp.lambdify((u, v), first + second + [N.norm()], "numpy")
    uu, vv = np.meshgrid(np.linspace(1e-3, np.pi - 1e-3, n), np.linspace(0, 2 * np.pi, n))
    E_, F_, G_, L_, M_, N_, nn = (np.broadcast_to(x, uu.shape) for x in f(uu, vv))
    L_, M_, N_ = L_ / nn, M_ / nn, N_ / nn
    det = E_ * G_ - F_**2
    H = (E_ * N_ - 2 * F_ * M_ + G_ * L_) / (2 * det)
    K = (L_ * N_ - M_**2) / det
    disc = np.sqrt(np.clip(H**2 - K, 0, None))
    return float(np.max(np.maximum(np.abs(H + disc), np.abs(H - disc))))


def test_ball_gauss_map():
    g = GeometryDescriptor.ball(2.0)
    np.testing.assert_allclose(gauss_map_differential(g, [0, 0, 2], [1, 0, 0]), [0.5, 0, 0], atol=1e-14)
    np.testing.assert_allclose(gauss_map_differential(g, [0, 0, 2], [0, 0, 0]), 0.0)


def test_ball_curvature_bound():
    assert curvature_bound_lambda(GeometryDescriptor.ball(2.0)) == pytest.approx(0.5, abs=1e-12)
    assert curvature_bound_lambda(GeometryDescriptor.ball(1.0)) == pytest.approx(1.0, abs=1e-12)


def test_sphere_dn_is_identity_over_R_everywhere(rng):
    R = 1.7
    g = GeometryDescriptor.ball(R, center=(0.3, -0.2, 0.1))
    pts = g.surface_samples((20, 20))
    n = g.normals(pts)
    v = np.cross(n, rng.standard_normal(pts.shape))
    np.testing.assert_allclose(g.shape_operator(pts, v), v / R, atol=1e-12)


def test_spheroid_meridian_matches_finite_difference_of_normal():
    a, c = 1.0, 2.0
    g = GeometryDescriptor.spheroid(a, c)

    def normal(t):  # outward normal along the meridian x = a cos t, z = c sin t
        nv = np.array([np.cos(t) / a, 0.0, np.sin(t) / c])
        return nv / np.linalg.norm(nv)

    h = 1e-5  # arclength step; speed at t = 0 is c
    fd = (normal(h / c) - normal(-h / c)) / (2 * h)
    got = gauss_map_differential(g, [a, 0, 0], [0, 0, 1])
    np.testing.assert_allclose(got, fd, atol=1e-9)
    assert got[2] == pytest.approx(a / c**2, rel=1e-12)


def test_spheroid_curvature_bound_matches_fundamental_form_oracle():
    lam = curvature_bound_lambda(GeometryDescriptor.spheroid(1.0, 2.0))
    oracle = spheroid_lambda_oracle(1.0, 2.0)
    assert lam == pytest.approx(2.0, rel=1e-10)
    assert lam >= oracle - 1e-9 and lam == pytest.approx(oracle, rel=1e-4)


def test_curvature_bound_monotone_under_refinement():
    g = GeometryDescriptor.ellipsoid(1.0, 1.3, 1.7)
    vals = [curvature_bound_lambda(g, (n, n)) for n in (25, 50, 100)]
    assert vals[0] <= vals[1] + 1e-14 <= vals[2] + 2e-14


@pytest.mark.parametrize(
    "geom",
    [
        GeometryDescriptor.ball(1.3),
        GeometryDescriptor.spheroid(1.0, 2.0, axis=(1, 1, 0)),
        GeometryDescriptor.ellipsoid(1.0, 1.3, 1.7, center=(0.1, 0.2, 0.3)),
        GeometryDescriptor.revolution(Profile.from_expression("sqrt(1 - z**2) * (1 + 0.3*z)", -1, 1)),
    ],
)
def test_shape_operator_properties(geom, rng):
    pts = geom.surface_samples((30, 30))
    pts = pts[np.linalg.norm(geom.normals(pts), axis=1) > 0][::7]
    n = geom.normals(pts)
    np.testing.assert_allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-12)
    v = np.cross(n, rng.standard_normal(pts.shape))
    w = np.cross(n, rng.standard_normal(pts.shape))
    dv, dw = geom.shape_operator(pts, v), geom.shape_operator(pts, w)
    scale = 1 + np.abs(dv).max()
    assert np.abs(np.einsum("na,na->n", dv, w) - np.einsum("na,na->n", v, dw)).max() < 1e-10 * scale
    assert np.abs(np.einsum("na,na->n", dv, n)).max() < 1e-10 * scale
    for p in pts[:5]:
        s = shape_operator_sample(geom, p)
        assert np.abs(s.matrix - s.matrix.T).max() < 1e-10
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(s.matrix)), np.sort([-s.k1, -s.k2]), atol=1e-10)


def test_point_and_vector_preconditions():
    g = GeometryDescriptor.ball(1.0)
    with pytest.raises(OffSurfaceError):
        gauss_map_differential(g, [0, 0, 1.1], [1, 0, 0])
    with pytest.raises(NonTangentError):
        gauss_map_differential(g, [0, 0, 1], [0, 0, 1])


def test_invalid_geometries():
    with pytest.raises(GeometryError):
        GeometryDescriptor.ball(-1.0)
    with pytest.raises(GeometryError):
        GeometryDescriptor.revolution(Profile.from_expression("1 + 0*z", -1, 1))  # does not close
    with pytest.raises(GeometryError):
        GeometryDescriptor.revolution(Profile.from_expression("(1 - z**2)", -1, 1))  # cusp-free cap fails
    with pytest.raises(GeometryError):
        GeometryDescriptor.spheroid(1.0, 2.0, axis=(0, 0, 0))


def test_callable_profile_matches_symbolic():
    sym = Profile.from_expression("sqrt(1 - z**2) * (1 + 0.3*z)", -1, 1)
    num = Profile.from_callable(lambda z: np.sqrt(1 - z**2) * (1 + 0.3 * z), -1, 1)
    z = np.linspace(-0.9, 0.9, 11)
    np.testing.assert_allclose(num.dh(z), sym.dh(z), atol=1e-9)
    np.testing.assert_allclose(num.d2h(z), sym.d2h(z), atol=1e-6)


def test_rigid_field_tangency_examples():
    ball = GeometryDescriptor.ball(1.0)
    assert rigid_field_tangency(ball, RigidField(np.zeros(3), E[2]))[0]
    ok, worst = rigid_field_tangency(ball, RigidField(E[0], np.zeros(3)))
    assert not ok and worst > 0.1
    sph = GeometryDescriptor.spheroid(1.0, 2.0)
    assert rigid_field_tangency(sph, RigidField(np.zeros(3), E[2]))[0]
    assert not rigid_field_tangency(sph, RigidField(np.zeros(3), E[0]))[0]


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6), st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_rigid_field_has_zero_strain(ab, x):
    w = RigidField(np.array(ab[:3]), np.array(ab[3:]))
    assert np.abs(w.symmetric_gradient()).max() < 1e-13
    h = 1e-6
    J = np.column_stack([(w(np.array(x) + h * E[k]) - w(np.array(x) - h * E[k]))[0] / (2 * h) for k in range(3)])
    np.testing.assert_allclose(J, w.jacobian(), atol=1e-8)


def test_classification_dimensions():
    ball = ker_s_classification(GeometryDescriptor.ball(1.0))
    assert ball.dimension == 3
    for i, w in enumerate(ball.generators):
        np.testing.assert_allclose(w.b, E[i], atol=1e-10)
        np.testing.assert_allclose(w.a, 0.0, atol=1e-10)
    sph = ker_s_classification(GeometryDescriptor.spheroid(1.0, 2.0))
    assert sph.dimension == 1
    np.testing.assert_allclose(sph.axis, E[2], atol=1e-10)
    assert ker_s_classification(GeometryDescriptor.ellipsoid(1.0, 1.3, 1.7)).dimension == 0


def test_classification_off_center_and_tilted_axis():
    axis = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
    g = GeometryDescriptor.spheroid(1.0, 1.5, axis=axis, center=(0.5, -1.0, 2.0))
    cls = ker_s_classification(g)
    assert cls.dimension == 1
    np.testing.assert_allclose(np.abs(cls.axis @ axis), 1.0, atol=1e-10)
    assert np.linalg.norm(np.cross(cls.axis_point - g.center, axis)) < 1e-9
    assert rigid_field_tangency(g, cls.generators[0])[0]


def test_classification_generators_are_tangent():
    for g in (GeometryDescriptor.ball(1.0, center=(1, 2, 3)),
              GeometryDescriptor.revolution(Profile.from_expression("sqrt(1 - z**2) * (1 + 0.3*z)", -1, 1))):
        cls = ker_s_classification(g)
        assert all(rigid_field_tangency(g, w)[0] for w in cls.generators)


def test_triaxial_rejects_every_random_rigid_field(rng):
    g = GeometryDescriptor.ellipsoid(1.0, 1.3, 1.7)
    for _ in range(100):
        ab = rng.standard_normal(6)
        assert not rigid_field_tangency(g, RigidField(ab[:3], ab[3:]), resolution=(40, 40))[0]
