import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from emgshift.geometry import (DegenerateFrameError, Frame3, RigidTransform, alignment_transform,
                               apply, arrow_points, gram_schmidt, pitch, roll, rot,
                               sequential_rotation, yaw)

angles = st.floats(-np.pi, np.pi)


def _frame(Q, origin=(0.0, 0.0, 0.0), scale=(1.0, 1.0, 1.0)):
    return Frame3(Q[:, 0] * scale[0], Q[:, 1] * scale[1], Q[:, 2] * scale[2], np.asarray(origin))


def random_rotations(n, seed=0):
    return Rotation.random(n, random_state=seed).as_matrix()


# -- elementary rotations -----------------------------------------------------------

def test_rot_identity_and_half_turn():
    assert np.array_equal(rot(0, 0, 0), np.eye(3))
    assert np.allclose(rot(np.pi, 0, 0), np.diag([1.0, -1.0, -1.0]), atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(angles, angles, angles)
def test_rot_is_proper(a, b, c):
    R = rot(a, b, c)
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-12
    assert abs(np.linalg.det(R) - 1) < 1e-12


@settings(max_examples=50, deadline=None)
@given(angles, angles, angles)
def test_rot_matches_extrinsic_xyz(a, b, c):
    # roll about x first, then pitch about y, then yaw about z, all fixed axes
    ref = Rotation.from_euler("xyz", [a, b, c]).as_matrix()
    assert np.allclose(rot(a, b, c), ref, atol=1e-12)


def test_elementary_axes_fixed():
    assert np.allclose(roll(0.3) @ [1, 0, 0], [1, 0, 0])
    assert np.allclose(pitch(0.3) @ [0, 1, 0], [0, 1, 0])
    assert np.allclose(yaw(0.3) @ [0, 0, 1], [0, 0, 1])


# -- Gram-Schmidt -------------------------------------------------------------------

def test_gram_schmidt_hand_case():
    g = gram_schmidt(Frame3([2, 0, 0], [1, 1, 0], [0, 0, 3], [0, 0, 0]))
    assert np.allclose(g.axes(), np.eye(3), atol=1e-15)


def test_gram_schmidt_fixpoint():
    Q = random_rotations(1, 3)[0]
    assert np.abs(gram_schmidt(_frame(Q)).axes() - Q).max() < 1e-12


def test_gram_schmidt_orthonormal_output():
    rng = np.random.default_rng(0)
    for _ in range(200):
        A = rng.normal(size=(3, 3))
        g = gram_schmidt(Frame3(A[:, 0], A[:, 1], A[:, 2], np.zeros(3)))
        Q = g.axes()
        assert np.abs(Q.T @ Q - np.eye(3)).max() < 1e-12
        assert np.allclose(Q[:, 0], A[:, 0] / np.linalg.norm(A[:, 0]))


@pytest.mark.parametrize("arrows", [
    ([1, 0, 0], [2, 0, 0], [0, 0, 1]),
    ([1, 0, 0], [0, 1, 0], [1, 1, 0]),
    ([0, 0, 0], [0, 1, 0], [0, 0, 1]),
])
def test_gram_schmidt_degenerate(arrows):
    with pytest.raises(DegenerateFrameError):
        gram_schmidt(Frame3(*arrows, [0, 0, 0]))


# -- alignment ------------------------------------------------------------------------

def test_identity_frame_offset_origin():
    tf = alignment_transform(Frame3([1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 2, 3]))
    assert np.allclose(tf.rotation, np.eye(3))
    assert np.allclose(tf.translation, [-1, -2, -3])


def test_alignment_maps_arrows_to_basis():
    Qs = random_rotations(1000, 1)
    rng = np.random.default_rng(1)
    worst = 0.0
    for Q in Qs:
        o = rng.uniform(-2, 2, 3)
        f = _frame(Q, o, rng.uniform(0.05, 2.0, 3))
        tf = alignment_transform(f, cross_check_tol=None)
        assert np.abs(tf.rotation - Q.T).max() < 1e-9
        worst = max(worst, np.abs(apply(tf, f.unit_tips()) - np.eye(3)).max(),
                    np.abs(apply(tf, o)).max())
        assert tf.is_proper()
    assert worst < 1e-9


def test_sequential_agrees_with_transpose():
    Qs = random_rotations(1000, 2)
    checked = 0
    for Q in Qs:
        # stay away from the gimbal branches where an arrow lines up with an
        # elementary rotation axis
        if np.abs(Q).max() > 0.99:
            continue
        Rs = sequential_rotation(Q)
        assert np.abs(Rs - Q.T).max() < 1e-6
        checked += 1
    assert checked > 900


def test_sequential_method_and_cross_check():
    Q = random_rotations(1, 4)[0]
    tf = alignment_transform(_frame(Q, (0.1, 0.2, 0.3)), method="sequential")
    assert np.abs(tf.rotation - Q.T).max() < 1e-6
    with pytest.raises(ValueError):
        alignment_transform(_frame(Q), method="quaternion")


def test_left_handed_frame_rejected():
    with pytest.raises(DegenerateFrameError):
        alignment_transform(Frame3([1, 0, 0], [0, 1, 0], [0, 0, -1], [0, 0, 0]))


def test_frame_validation():
    with pytest.raises(ValueError):
        Frame3([1, 0], [0, 1, 0], [0, 0, 1], [0, 0, 0])
    with pytest.raises(ValueError):
        Frame3([np.nan, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, 0])


# -- transforms -----------------------------------------------------------------------

def test_apply_identity_and_translation():
    p = np.random.default_rng(5).normal(size=(7, 3))
    assert np.array_equal(apply(RigidTransform(np.eye(3), np.zeros(3)), p), p)
    t = np.array([0.5, -1.0, 2.0])
    assert np.allclose(apply(RigidTransform(np.eye(3), t), p), p + t)


@settings(max_examples=100, deadline=None)
@given(angles, angles, angles, st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_inverse_round_trip(a, b, c, t):
    tf = RigidTransform(rot(a, b, c), np.array(t))
    p = np.random.default_rng(0).normal(size=(5, 3))
    inv = tf.inverse()
    assert np.abs(apply(inv, apply(tf, p)) - p).max() < 1e-12
    assert np.allclose(inv.translation, -tf.rotation.T @ tf.translation)


def test_arrow_points_from_camera_pose():
    R = rot(0.2, -0.4, 1.1)
    pts = arrow_points(R, [1.0, 2.0, 3.0])
    assert pts.shape == (4, 3)
    assert np.allclose(np.linalg.norm(pts[1:] - pts[0], axis=1), 0.2)
    f = Frame3.from_points(*pts)
    tf = alignment_transform(f)
    assert np.allclose(tf.rotation, R.T, atol=1e-9)
    assert np.allclose(apply(tf, pts[1:]), 0.2 * np.eye(3), atol=1e-9)
