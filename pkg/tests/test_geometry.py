import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aggsort import geometry
from aggsort.geometry import RigidTransform, RigidityError

angles = st.floats(-math.pi, math.pi, allow_nan=False)
seeds = st.integers(0, 2**32 - 1)


def _rand(seed):
    return geometry.random_transform(np.random.default_rng(seed))


def test_identity_is_neutral():
    T = _rand(0)
    assert (RigidTransform.identity() @ T).allclose(T)
    assert (T @ RigidTransform.identity()).allclose(T)


@given(seeds)
def test_inverse_composes_to_identity(seed):
    T = _rand(seed)
    assert (T @ T.inverse()).allclose(RigidTransform.identity(), atol=1e-12)
    assert (T.inverse() @ T).allclose(RigidTransform.identity(), atol=1e-12)


@given(seeds, seeds, seeds)
def test_composition_is_associative(a, b, c):
    A, B, C = _rand(a), _rand(b), _rand(c)
    assert ((A @ B) @ C).allclose(A @ (B @ C), atol=1e-12)


@given(seeds, seeds)
def test_compose_applies_second_first(a, b):
    A, B = _rand(a), _rand(b)
    p = np.array([0.3, -0.2, 0.7])
    np.testing.assert_allclose((A @ B).apply(p), A.apply(B.apply(p)), atol=1e-12)
    np.testing.assert_allclose(geometry.compose(A, B).matrix, A.matrix @ B.matrix, atol=1e-15)


@given(seeds)
def test_composed_transforms_stay_rigid(seed):
    rng = np.random.default_rng(seed)
    T = RigidTransform.identity()
    for _ in range(50):
        T = T @ geometry.random_transform(rng)
    assert geometry.validate_rigid(T.matrix, geometry.COMPUTED_TOL).passed


def test_transform_point_matches_homogeneous_product():
    T = _rand(5)
    p = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(T.apply(p), (T.matrix @ np.append(p, 1.0))[:3], atol=1e-15)
    pts = np.arange(12.0).reshape(4, 3)
    np.testing.assert_allclose(T.apply(pts), [T.apply(q) for q in pts], atol=1e-15)


def test_translate_and_rotate_primitives():
    T = geometry.translate(1, 2, 3)
    np.testing.assert_array_equal(T.apply([0, 0, 0]), [1, 2, 3])
    R = geometry.rotate(geometry.rot_z(math.pi / 2))
    np.testing.assert_allclose(R.apply([1, 0, 0]), [0, 1, 0], atol=1e-15)


def test_rot_z_quarter_turn_entries():
    np.testing.assert_allclose(geometry.rot_z(math.pi / 2), [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-16)
    np.testing.assert_allclose(geometry.rot_x(math.pi / 2), [[1, 0, 0], [0, 0, -1], [0, 1, 0]], atol=1e-16)
    np.testing.assert_allclose(geometry.rot_y(math.pi / 2), [[0, 0, 1], [0, 1, 0], [-1, 0, 0]], atol=1e-16)


@given(st.tuples(angles, angles, angles))
def test_so3_log_inverts_exp(v):
    w = np.array(v)
    n = np.linalg.norm(w)
    if n > math.pi - 1e-6:
        w = w * (math.pi - 1e-3) / n
    np.testing.assert_allclose(geometry.so3_log(geometry.so3_exp(w)), w, atol=1e-9)


def test_so3_log_near_pi():
    R = geometry.rot_x(math.pi)
    w = geometry.so3_log(R)
    assert math.isclose(np.linalg.norm(w), math.pi, abs_tol=1e-9)
    np.testing.assert_allclose(geometry.so3_exp(w), R, atol=1e-9)


def test_geodesic_distance():
    assert math.isclose(geometry.geodesic_distance(np.eye(3), geometry.rot_z(0.3)), 0.3, abs_tol=1e-12)


def test_validate_rigid_accepts_identity_and_rejects_scale():
    assert geometry.validate_rigid(np.eye(4)).passed
    M = np.eye(4)
    M[0, 0] = 2.0
    rep = geometry.validate_rigid(M)
    assert not rep.passed
    assert rep.orthonormality_residual == pytest.approx(1.0)


def test_validate_rigid_rejects_reflection_and_bad_bottom_row():
    M = np.diag([1.0, 1.0, -1.0, 1.0])
    rep = geometry.validate_rigid(M)
    assert not rep.passed and rep.det_residual == pytest.approx(2.0)
    N = np.eye(4)
    N[3, 0] = 1e-15
    assert not geometry.validate_rigid(N).bottom_row_exact
    assert not geometry.validate_rigid(np.full((4, 4), np.nan)).passed
    assert not geometry.validate_rigid(np.eye(3)).passed


def test_ingested_tolerance_is_looser():
    M = np.eye(4)
    M[:3, :3] = geometry.rot_z(0.4) * (1 + 1e-4)
    assert not geometry.validate_rigid(M, geometry.COMPUTED_TOL).passed
    assert geometry.validate_rigid(M, geometry.INGESTED_TOL).passed


def test_from_matrix_raises_with_residuals():
    M = np.eye(4)
    M[1, 1] = 1.1
    with pytest.raises(RigidityError, match="orthonormality"):
        RigidTransform.from_matrix(M)
    with pytest.raises(RigidityError):
        RigidTransform(np.zeros((4, 4)))


def test_transforms_are_immutable():
    T = _rand(1)
    with pytest.raises(ValueError):
        T.matrix[0, 0] = 5.0


def test_project_to_so3_returns_rotation():
    M = geometry.rot_z(0.2) + 1e-3 * np.random.default_rng(0).normal(size=(3, 3))
    R = geometry.project_to_so3(M)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert math.isclose(np.linalg.det(R), 1.0, abs_tol=1e-12)


@given(seeds)
def test_text_round_trip_is_exact(seed):
    Ts = [_rand(seed), _rand(seed + 1)]
    back = geometry.load_transforms(geometry.dump_transforms(Ts))
    for a, b in zip(Ts, back):
        np.testing.assert_array_equal(a.matrix, b.matrix)


def test_file_round_trip(tmp_path):
    Ts = [_rand(3)]
    geometry.write_transforms(tmp_path / "t.txt", Ts)
    np.testing.assert_array_equal(geometry.read_transforms(tmp_path / "t.txt")[0].matrix, Ts[0].matrix)


def test_parse_rejects_wrong_field_count():
    with pytest.raises(ValueError, match="16"):
        geometry.parse_transform_line("1 2 3")


def test_listed_vectors():
    I = RigidTransform.identity()
    T = _rand(11)
    assert geometry.compose(I, T).allclose(T, atol=0)
    assert geometry.compose(geometry.translate(1, 0, 0), geometry.translate(0, 2, 0)).allclose(
        geometry.translate(1, 2, 0), atol=0)
    assert geometry.invert(I).allclose(I, atol=0)
    assert geometry.invert(geometry.translate(1, 2, 3)).allclose(geometry.translate(-1, -2, -3), atol=0)
    np.testing.assert_array_equal(geometry.transform_point(I, (1, 2, 3)), [1, 2, 3])
    np.testing.assert_allclose(geometry.transform_point(geometry.rotate(geometry.rot_z(math.pi / 2)), (1, 0, 0)),
                               [0, 1, 0], atol=1e-15)
    assert geometry.validate_rigid(np.eye(4), 1e-12).passed
    M = np.eye(4)
    M[0] *= 2
    M[0, 3] = 0
    assert geometry.validate_rigid(M).orthonormality_residual == 1.0


@given(seeds)
def test_double_inverse_and_rigidity_of_outputs(seed):
    T = _rand(seed)
    assert geometry.invert(geometry.invert(T)).allclose(T, atol=1e-12)
    assert geometry.validate_rigid(geometry.invert(T).matrix, 1e-9).passed
    assert geometry.validate_rigid(geometry.compose(T, _rand(seed + 1)).matrix, 1e-9).passed
