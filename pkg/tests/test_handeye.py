import numpy as np
import pytest
from hypothesis import given, strategies as st

from aggsort import geometry, handeye
from aggsort.geometry import RigidTransform, rot_x, rot_z, so3_exp
from aggsort.handeye import Frame, TaggedPoint


def _pairs(X, n, seed, **noise):
    rng = np.random.default_rng(seed)
    robot, cam = handeye.synthesize_pairs(X, n + 1, rng, **noise)
    return handeye.collect_motion_pairs(robot, cam)


@given(st.integers(0, 2**31), st.sampled_from(["tsai", "kabsch"]))
def test_recovers_random_mount(seed, method):
    rng = np.random.default_rng(seed)
    X = geometry.random_transform(rng, 0.1)
    sol = handeye.solve_hand_eye(_pairs(X, 8, seed + 1), method=method)
    assert geometry.geodesic_distance(sol.T_CE.rotation, X.rotation) < 1e-8
    assert np.linalg.norm(sol.T_CE.translation - X.translation) < 1e-8
    assert sol.rotation_residual < 1e-9 and sol.translation_residual < 1e-9
    assert sol.method == method and sol.n_pairs == 8


def test_pairs_satisfy_ax_xb():
    X = RigidTransform.from_rt(so3_exp([0.1, 0.2, 0.3]), [0.01, 0.02, 0.03])
    for p in _pairs(X, 4, 0):
        assert (p.A @ X).allclose(X @ p.B, atol=1e-12)
    assert handeye.pair_residuals(X, _pairs(X, 4, 0))[0] < 1e-12


def test_noise_degrades_gracefully():
    X = RigidTransform.from_rt(so3_exp([0.1, -0.3, 0.2]), [0.0, 0.03, 0.05])
    sol = handeye.solve_hand_eye(_pairs(X, 20, 3, noise_rot=1e-3, noise_trans=1e-4))
    assert geometry.geodesic_distance(sol.T_CE.rotation, X.rotation) < 5e-3
    assert np.linalg.norm(sol.T_CE.translation - X.translation) < 5e-3


def test_parallel_axes_are_degenerate():
    X = RigidTransform.from_rt(rot_x(0.3), [0.01, 0.0, 0.02])
    E = [RigidTransform.from_rt(rot_z(0.3 * k), [0.05 * k, 0.02 * k * k, 0.0]) for k in range(5)]
    C = [(e @ X).inverse() for e in E]
    with pytest.raises(handeye.DegenerateMotionError) as err:
        handeye.solve_hand_eye(handeye.collect_motion_pairs(E, C))
    assert err.value.rank < 3


def test_identity_motions_are_rejected():
    I = RigidTransform.identity()
    pairs = [handeye.MotionPair(I, I)] * 3
    assert not pairs[0].informative
    with pytest.raises(handeye.HandEyeError):
        handeye.solve_hand_eye(pairs)


def test_pose_count_checks():
    I = RigidTransform.identity()
    with pytest.raises(handeye.HandEyeError):
        handeye.collect_motion_pairs([I, I], [I, I])
    with pytest.raises(handeye.HandEyeError):
        handeye.collect_motion_pairs([I, I, I], [I, I])
    with pytest.raises(ValueError):
        handeye.solve_hand_eye(_pairs(RigidTransform.identity(), 3, 0), method="magic")


def test_frame_chain_and_tags():
    T_CE = RigidTransform.from_rt(np.eye(3), [0, 0.03, 0])
    T_EB = RigidTransform.from_rt(rot_z(np.pi / 2), [0.1, 0, 0])
    pc = TaggedPoint(Frame.CAMERA, [0.01, 0.0, 0.2])
    pe = handeye.camera_to_effector(T_CE, pc)
    assert pe.frame is Frame.EFFECTOR
    np.testing.assert_allclose(pe.array, [0.01, 0.03, 0.2])
    pb = handeye.effector_to_base(T_EB, pe)
    assert pb.frame is Frame.BASE
    np.testing.assert_allclose(pb.array, [0.1 - 0.03, 0.01, 0.2], atol=1e-15)
    np.testing.assert_allclose(handeye.camera_to_base(T_CE, T_EB, pc).array, pb.array)
    np.testing.assert_allclose(handeye.apply_chain(T_CE, T_EB, pc.array), pb.array)
    assert handeye.camera_pose_in_base(T_CE, T_EB).allclose(T_EB @ T_CE)
    with pytest.raises(handeye.FrameMismatchError):
        handeye.effector_to_base(T_EB, pc)
    with pytest.raises(handeye.FrameMismatchError):
        handeye.camera_to_effector(T_CE, pb)


def test_pair_and_solution_files(tmp_path):
    X = RigidTransform.from_rt(so3_exp([0.2, 0.1, -0.1]), [0.01, 0.02, 0.0])
    pairs = _pairs(X, 5, 7)
    back = handeye.load_pairs(handeye.dump_pairs(pairs))
    assert all(a.A.allclose(b.A, 0) and a.B.allclose(b.B, 0) for a, b in zip(pairs, back))
    sol = handeye.solve_hand_eye(back)
    handeye.write_solution(tmp_path / "x.txt", sol)
    again = handeye.read_solution(tmp_path / "x.txt")
    np.testing.assert_array_equal(again.T_CE.matrix, sol.T_CE.matrix)
    assert again.n_pairs == 5


def test_bundled_mount_matrix_is_rigid():
    from aggsort.cli import data_path

    (T,) = geometry.read_transforms(data_path("handeye_matrix.txt"))
    assert geometry.validate_rigid(T.matrix, geometry.INGESTED_TOL).passed


def test_chain_listed_vectors():
    I = RigidTransform.identity()
    p = TaggedPoint(Frame.CAMERA, [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(handeye.camera_to_base(I, I, p).array, [1, 2, 3])
    t1, t2 = geometry.translate(0.1, 0, 0), geometry.translate(0, 0.2, 0.3)
    np.testing.assert_allclose(handeye.camera_to_base(t1, t2, TaggedPoint(Frame.CAMERA, [0, 0, 0])).array, [0.1, 0.2, 0.3])


def test_three_poses_two_pairs_and_flags():
    E = [geometry.random_transform(np.random.default_rng(k)) for k in range(3)]
    assert len(handeye.collect_motion_pairs(E, E)) == 2
    pairs = handeye.collect_motion_pairs([E[0], E[0], E[1]], [E[0], E[0], E[1]])
    assert not pairs[0].informative and pairs[1].informative


def test_recovery_error_grows_with_noise():
    X = RigidTransform.from_rt(so3_exp([0.2, 0.1, -0.3]), [0.02, 0.01, 0.04])
    errs = []
    for level in (1e-4, 1e-3, 1e-2):
        e = np.mean([geometry.geodesic_distance(
            handeye.solve_hand_eye(_pairs(X, 10, s, noise_rot=level, noise_trans=level / 10)).T_CE.rotation,
            X.rotation) for s in range(8)])
        errs.append(e)
    assert errs[0] < errs[1] < errs[2]


def test_fixture_round_trips_through_text():
    from aggsort.cli import data_path

    (T,) = geometry.read_transforms(data_path("handeye_matrix.txt"))
    (again,) = geometry.load_transforms(geometry.dump_transforms([T]))
    np.testing.assert_array_equal(again.matrix, T.matrix)
    assert T.matrix[2, 2] == pytest.approx(-0.97357)
