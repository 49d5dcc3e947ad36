"""Pose algebra and the relocalisation loss.

Quaternions are scalar-first (w, x, y, z) everywhere. Ground truth is kept
canonical (unit norm, w >= 0); predictions are only normalized for metrics.
"""

import numpy as np
from transforms3d.quaternions import mat2quat, quat2mat

from cnnmap.errors import InvalidPoseError, InvalidRotationError
from cnnmap.models import LossConfig, Pose

GRAD_EPS = 1e-12
ORTHONORMAL_TOL = 1e-4


def _unit_quat(q, what: str = "quaternion") -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q)
    if norm == 0.0 or not np.isfinite(norm):
        raise InvalidPoseError(f"Zero or non-finite {what}: {q.tolist()}")
    return q / norm


def canonical_quat(q) -> np.ndarray:
    """Unit quaternion with w >= 0; when w == 0 the first nonzero component is made positive."""
    q = _unit_quat(q)
    if q[0] < 0:
        return -q
    if q[0] == 0.0:
        first = q[np.flatnonzero(q)[0]]
        if first < 0:
            return -q
    return q


def make_pose(x, q) -> Pose:
    """Ground-truth pose with a canonical quaternion."""
    qc = canonical_quat(q)
    return Pose(x=tuple(float(v) for v in x), q=tuple(float(v) for v in qc))


def pose_from_vector(v) -> Pose:
    v = np.asarray(v, dtype=np.float64)
    return Pose(x=tuple(float(a) for a in v[:3]), q=tuple(float(a) for a in v[3:7]))


def loss(pred, target: Pose, cfg: LossConfig) -> float:
    """||x_hat - x|| + beta * ||q_hat - q/||q||||; the predicted quaternion is used as is."""
    pred = np.asarray(pred, dtype=np.float64)
    q = _unit_quat(target.q, "target quaternion")
    dx = pred[:3] - np.asarray(target.x)
    dq = pred[3:7] - q
    return float(np.linalg.norm(dx) + cfg.beta * np.linalg.norm(dq))


def loss_grad(pred, target: Pose, cfg: LossConfig) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    q = _unit_quat(target.q, "target quaternion")
    dx = pred[:3] - np.asarray(target.x)
    dq = pred[3:7] - q
    grad = np.empty(7, dtype=np.float64)
    grad[:3] = dx / max(np.linalg.norm(dx), GRAD_EPS)
    grad[3:] = cfg.beta * dq / max(np.linalg.norm(dq), GRAD_EPS)
    return grad


def batch_loss_and_grad(preds: np.ndarray, targets: np.ndarray, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized per-sample loss and gradient for (N, 7) predictions against (N, 7) unit targets."""
    preds64 = preds.astype(np.float64)
    dx = preds64[:, :3] - targets[:, :3]
    dq = preds64[:, 3:7] - targets[:, 3:7]
    nx = np.linalg.norm(dx, axis=1)
    nq = np.linalg.norm(dq, axis=1)
    losses = nx + beta * nq
    grads = np.empty_like(preds64)
    grads[:, :3] = dx / np.maximum(nx, GRAD_EPS)[:, None]
    grads[:, 3:] = beta * dq / np.maximum(nq, GRAD_EPS)[:, None]
    return losses, grads


def matrix_from_quat(q) -> np.ndarray:
    return quat2mat(_unit_quat(q))


def quat_from_matrix(R) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise InvalidRotationError(f"Expected a finite 3x3 matrix, got shape {R.shape}", residual=float("inf"))
    residual = float(np.linalg.norm(R.T @ R - np.eye(3)))
    if residual > ORTHONORMAL_TOL or np.linalg.det(R) <= 0:
        raise InvalidRotationError(
            f"Not a rotation matrix (orthonormality residual {residual:.3e}, det {np.linalg.det(R):.6f})",
            residual=residual,
        )
    return canonical_quat(mat2quat(R))


def pose_from_matrix(T) -> Pose:
    """4x4 camera-to-world transform to a canonical pose."""
    T = np.asarray(T, dtype=np.float64)
    if T.shape != (4, 4):
        raise InvalidRotationError(f"Expected a 4x4 transform, got shape {T.shape}", residual=float("inf"))
    return make_pose(T[:3, 3], quat_from_matrix(T[:3, :3]))


def matrix_from_pose(pose: Pose) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = matrix_from_quat(pose.q)
    T[:3, 3] = pose.x
    return T


def angular_error(q1, q2) -> float:
    """Rotation angle between two orientations in degrees, in [0, 180]."""
    a = _unit_quat(q1)
    b = _unit_quat(q2)
    d = min(1.0, abs(float(np.dot(a, b))))
    return float(np.degrees(2.0 * np.arccos(d)))


def position_error(p1, p2) -> float:
    return float(np.linalg.norm(np.asarray(p1, dtype=np.float64) - np.asarray(p2, dtype=np.float64)))
