import math

import numpy as np
import pytest

from cnnmap.errors import InvalidPoseError, InvalidRotationError
from cnnmap.models import LossConfig, Pose
from cnnmap.services.gradcheck import numerical_gradient, relative_error
from cnnmap.services.pose_geometry import (
    angular_error,
    batch_loss_and_grad,
    canonical_quat,
    loss,
    loss_grad,
    make_pose,
    matrix_from_pose,
    matrix_from_quat,
    pose_from_matrix,
    position_error,
    quat_from_matrix,
)

CFG = LossConfig(beta=250.0)


def _random_quat(rng):
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)


class TestLoss:
    def test_zero_at_target(self):
        target = make_pose((1.0, 2.0, 3.0), (1.0, 0.0, 0.0, 0.0))
        assert loss(target.vector(), target, CFG) == 0.0

    def test_position_term(self):
        target = make_pose((0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0))
        pred = np.array([1.0, 2.0, 2.0, 1.0, 0.0, 0.0, 0.0])
        assert loss(pred, target, CFG) == pytest.approx(3.0, abs=1e-9)

    def test_target_quaternion_is_normalized(self):
        target = Pose(x=(0.0, 0.0, 0.0), q=(2.0, 0.0, 0.0, 0.0))
        pred = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
        assert loss(pred, target, CFG) == pytest.approx(250.0 * math.sqrt(2.0), abs=1e-9)

    def test_zero_target_quaternion(self):
        target = Pose(x=(0.0, 0.0, 0.0), q=(0.0, 0.0, 0.0, 0.0))
        with pytest.raises(InvalidPoseError):
            loss(np.zeros(7), target, CFG)

    def test_batch_agrees_with_single(self, rng):
        targets = [make_pose(rng.standard_normal(3), _random_quat(rng)) for _ in range(4)]
        preds = rng.standard_normal((4, 7))
        losses, grads = batch_loss_and_grad(preds, np.stack([t.vector() for t in targets]), CFG.beta)
        for i, t in enumerate(targets):
            assert losses[i] == pytest.approx(loss(preds[i], t, CFG), rel=1e-12)
            np.testing.assert_allclose(grads[i], loss_grad(preds[i], t, CFG), rtol=1e-12)


class TestLossGrad:
    def test_position_direction(self):
        target = make_pose((0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0))
        grad = loss_grad(np.array([3.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]), target, CFG)
        np.testing.assert_allclose(grad, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])

    def test_zero_at_minimum(self):
        target = make_pose((1.0, -1.0, 0.5), (1.0, 0.0, 0.0, 0.0))
        np.testing.assert_array_equal(loss_grad(target.vector(), target, CFG), np.zeros(7))

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        target = make_pose(rng.standard_normal(3), _random_quat(rng))
        pred = rng.standard_normal(7)
        cfg = LossConfig(beta=float(rng.uniform(1.0, 300.0)))
        numeric = numerical_gradient(lambda v: loss(v, target, cfg), pred)
        assert relative_error(loss_grad(pred, target, cfg), numeric) < 1e-4


class TestRotations:
    def test_identity(self):
        np.testing.assert_array_equal(quat_from_matrix(np.eye(3)), [1.0, 0.0, 0.0, 0.0])

    def test_half_turn_about_z(self):
        q = quat_from_matrix(np.diag([-1.0, -1.0, 1.0]))
        np.testing.assert_allclose(q, [0.0, 0.0, 0.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(matrix_from_quat(q), np.diag([-1.0, -1.0, 1.0]), atol=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        R = matrix_from_quat(_random_quat(rng))
        np.testing.assert_allclose(matrix_from_quat(quat_from_matrix(R)), R, atol=1e-9)

    def test_result_is_canonical(self, rng):
        for _ in range(20):
            q = quat_from_matrix(matrix_from_quat(_random_quat(rng)))
            assert q[0] >= 0.0
            assert np.linalg.norm(q) == pytest.approx(1.0, abs=1e-12)

    def test_rejects_non_rotation(self):
        with pytest.raises(InvalidRotationError) as err:
            quat_from_matrix(np.diag([1.0, 1.0, 2.0]))
        assert err.value.residual > 1e-4

    def test_rejects_reflection(self):
        with pytest.raises(InvalidRotationError):
            quat_from_matrix(np.diag([1.0, 1.0, -1.0]))

    def test_quarter_turn_about_x(self):
        R = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
        h = math.sqrt(0.5)
        np.testing.assert_allclose(quat_from_matrix(R), [h, h, 0.0, 0.0], atol=1e-12)

    def test_half_turn_sign_is_canonical(self):
        q = quat_from_matrix(np.diag([-1.0, 1.0, -1.0]))
        np.testing.assert_allclose(q, [0.0, 0.0, 1.0, 0.0], atol=1e-12)
        assert q[2] > 0

    def test_nearly_orthonormal_input_accepted(self, rng):
        R = matrix_from_quat(_random_quat(rng)) + 1e-6 * rng.standard_normal((3, 3))
        q = quat_from_matrix(R)
        assert angular_error(q, quat_from_matrix(matrix_from_quat(q))) < 1e-6

    def test_pose_matrix_round_trip(self, rng):
        pose = make_pose(rng.standard_normal(3), _random_quat(rng))
        back = pose_from_matrix(matrix_from_pose(pose))
        np.testing.assert_allclose(back.vector(), pose.vector(), atol=1e-12)


class TestCanonicalQuat:
    def test_negative_w_flipped(self):
        np.testing.assert_allclose(canonical_quat([-1.0, 0.0, 0.0, 0.0]), [1.0, 0.0, 0.0, 0.0])

    def test_zero_w_first_nonzero_positive(self):
        np.testing.assert_allclose(canonical_quat([0.0, 0.0, -1.0, 0.0]), [0.0, 0.0, 1.0, 0.0])

    def test_zero_rejected(self):
        with pytest.raises(InvalidPoseError):
            canonical_quat([0.0, 0.0, 0.0, 0.0])


class TestMetrics:
    def test_angular_error_identity_and_double_cover(self, rng):
        q = _random_quat(rng)
        assert angular_error(q, q) == pytest.approx(0.0, abs=1e-5)
        assert angular_error(q, -q) == pytest.approx(0.0, abs=1e-5)

    def test_angular_error_quarter_turn(self):
        half = math.radians(45.0)
        assert angular_error([1.0, 0.0, 0.0, 0.0], [math.cos(half), math.sin(half), 0.0, 0.0]) == pytest.approx(90.0)

    def test_angular_error_unnormalized_prediction(self):
        assert angular_error([3.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]) == 0.0

    def test_position_error(self, rng):
        assert position_error((0, 0, 0), (1, 2, 2)) == 3.0
        a, b = rng.standard_normal(3), rng.standard_normal(3)
        assert position_error(a, b) == position_error(b, a)
        assert position_error(a, a) == 0.0
