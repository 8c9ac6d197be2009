"""Trajectory types, the joint channel layout, masking, and reconstruction metrics.

A trajectory stores generalized coordinates per frame: 3 pelvis position
elements (m), a 4-element unit quaternion for pelvis orientation (w, x, y, z),
and 34 joint angles (rad). Velocities are stored alongside as a 40-element
vector per frame (3 linear m/s, 3 rotational rad/s, 34 joint rad/s).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .errors import ContractViolation, EmptyInputError

if TYPE_CHECKING:  # pragma: no cover
    from .synth import TrialGroundTruth

Q_SIZE = 41
QDOT_SIZE = 40
N_JOINTS = 34
QUAT_TOL = 1e-6

# Fixed index table for the 34 joint-angle channels: left leg, right leg,
# lumbar, neck, left arm, right arm. Any consistent ordering works; this one
# is the repository constant and every module indexes through it.
JOINT_NAMES = (
    "hip_flexion_l", "hip_adduction_l", "hip_rotation_l",
    "knee_flexion_l", "ankle_flexion_l", "subtalar_l", "metatarsal_l",
    "hip_flexion_r", "hip_adduction_r", "hip_rotation_r",
    "knee_flexion_r", "ankle_flexion_r", "subtalar_r", "metatarsal_r",
    "lumbar_bending", "lumbar_extension", "lumbar_rotation",
    "neck_bending", "neck_extension", "neck_rotation",
    "shoulder_flexion_l", "shoulder_adduction_l", "shoulder_rotation_l",
    "elbow_flexion_l", "forearm_supination_l",
    "wrist_flexion_l", "wrist_deviation_l",
    "shoulder_flexion_r", "shoulder_adduction_r", "shoulder_rotation_r",
    "elbow_flexion_r", "forearm_supination_r",
    "wrist_flexion_r", "wrist_deviation_r",
)
assert len(JOINT_NAMES) == N_JOINTS

JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}

# Wrist flexion/deviation, forearm supination and the metatarsal joints are
# zeroed before tokenization, both sides.
DEFAULT_ZEROED_JOINTS = (
    "wrist_flexion_l", "wrist_deviation_l", "forearm_supination_l", "metatarsal_l",
    "wrist_flexion_r", "wrist_deviation_r", "forearm_supination_r", "metatarsal_r",
)

FRAME_RATE_HZ = 30.0


@dataclass(frozen=True)
class Frame:
    """A single snapshot: q (41,) generalized coordinates, qdot (40,) velocities."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        qdot = np.asarray(self.qdot, dtype=np.float64)
        if q.shape != (Q_SIZE,):
            raise ContractViolation(f"q must have {Q_SIZE} elements, got shape {q.shape}")
        if qdot.shape != (QDOT_SIZE,):
            raise ContractViolation(f"qdot must have {QDOT_SIZE} elements, got shape {qdot.shape}")
        norm = float(np.linalg.norm(q[3:7]))
        if abs(norm - 1.0) > QUAT_TOL:
            raise ContractViolation(f"pelvis quaternion norm {norm} deviates from 1 by more than {QUAT_TOL}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)

    @property
    def pelvis_position(self) -> np.ndarray:
        return self.q[0:3]

    @property
    def pelvis_quaternion(self) -> np.ndarray:
        return self.q[3:7]

    @property
    def joint_angles(self) -> np.ndarray:
        return self.q[7:]


@dataclass(frozen=True)
class Trajectory:
    """One recorded trial.

    Frames are stored as two dense arrays (q: L x 41, qdot: L x 40) for cheap
    slicing; the `frames` property materializes Frame views on demand.
    """

    participant_id: str
    trial_id: str
    frame_rate_hz: float
    q: np.ndarray
    qdot: np.ndarray
    ground_truth: "TrialGroundTruth | None" = None

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        qdot = np.asarray(self.qdot, dtype=np.float64)
        if self.frame_rate_hz <= 0:
            raise ContractViolation("frame_rate_hz must be positive")
        if q.ndim != 2 or q.shape[0] == 0 or q.shape[1] != Q_SIZE:
            raise ContractViolation(f"q must be a non-empty L x {Q_SIZE} array, got shape {q.shape}")
        if qdot.shape != (q.shape[0], QDOT_SIZE):
            raise ContractViolation(f"qdot must be L x {QDOT_SIZE} matching q, got shape {qdot.shape}")
        norms = np.linalg.norm(q[:, 3:7], axis=1)
        if np.max(np.abs(norms - 1.0)) > QUAT_TOL:
            raise ContractViolation("pelvis quaternions must have unit norm within tolerance")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)

    def __len__(self) -> int:
        return self.q.shape[0]

    @property
    def n_frames(self) -> int:
        return self.q.shape[0]

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.frame_rate_hz

    @property
    def frames(self) -> list[Frame]:
        return [Frame(self.q[t], self.qdot[t]) for t in range(self.n_frames)]

    @property
    def joint_angles(self) -> np.ndarray:
        """View of the L x 34 joint-angle block of q."""
        return self.q[:, 7:]


@dataclass(frozen=True)
class ChannelMask:
    """Set of joint-angle channel indices (0..33) that are zeroed before encoding."""

    zeroed_channels: frozenset[int] = field(
        default_factory=lambda: frozenset(JOINT_INDEX[n] for n in DEFAULT_ZEROED_JOINTS)
    )

    def __post_init__(self):
        channels = frozenset(int(c) for c in self.zeroed_channels)
        for c in channels:
            if not 0 <= c < N_JOINTS:
                raise ContractViolation(f"channel index {c} outside [0, {N_JOINTS - 1}]")
        object.__setattr__(self, "zeroed_channels", channels)

    @classmethod
    def empty(cls) -> "ChannelMask":
        return cls(frozenset())


def apply_channel_mask(traj: Trajectory, mask: ChannelMask) -> Trajectory:
    """Return a copy of `traj` with the masked joint channels set to exactly 0.

    The input trajectory is not mutated; pelvis fields and velocities pass
    through unchanged.
    """
    q = traj.q.copy()
    idx = sorted(mask.zeroed_channels)
    if idx:
        q[:, 7 + np.asarray(idx, dtype=np.intp)] = 0.0
    return Trajectory(
        participant_id=traj.participant_id,
        trial_id=traj.trial_id,
        frame_rate_hz=traj.frame_rate_hz,
        q=q,
        qdot=traj.qdot.copy(),
        ground_truth=traj.ground_truth,
    )


def strip_to_joint_matrix(traj: Trajectory) -> np.ndarray:
    """Extract the L x 34 joint-angle matrix, discarding pelvis pose and all velocities."""
    if traj.n_frames == 0:
        raise EmptyInputError("trajectory has no frames")
    return traj.q[:, 7:].copy()


def rmse_per_joint_degrees(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """Per-joint RMSE between two L x 34 joint matrices, reported in degrees.

    Returns (overall, per_joint) where per_joint[j] is the RMSE of channel j
    over time and overall is the mean of the per-joint values. Inputs are in
    radians; only this reporting step converts to degrees.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != N_JOINTS:
        raise ContractViolation(f"expected matching L x {N_JOINTS} matrices, got {a.shape} and {b.shape}")
    per_joint = np.degrees(np.sqrt(np.mean((a - b) ** 2, axis=0)))
    return float(np.mean(per_joint)), per_joint


def trial_to_dict(traj: Trajectory) -> dict:
    from .synth import ground_truth_to_dict

    return {
        "participant_id": traj.participant_id,
        "trial_id": traj.trial_id,
        "frame_rate_hz": traj.frame_rate_hz,
        "ground_truth": ground_truth_to_dict(traj.ground_truth) if traj.ground_truth else None,
        "q": traj.q.tolist(),
        "qdot": traj.qdot.tolist(),
    }


def trial_from_dict(payload: dict) -> Trajectory:
    from .synth import ground_truth_from_dict

    gt = payload.get("ground_truth")
    return Trajectory(
        participant_id=payload["participant_id"],
        trial_id=payload["trial_id"],
        frame_rate_hz=float(payload["frame_rate_hz"]),
        q=np.asarray(payload["q"], dtype=np.float64),
        qdot=np.asarray(payload["qdot"], dtype=np.float64),
        ground_truth=ground_truth_from_dict(gt) if gt else None,
    )


def write_trial(traj: Trajectory, path: Path) -> None:
    """Write one trial as JSON. Floats keep full repr precision (> 9 significant digits)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(trial_to_dict(traj), fh, sort_keys=True)


def read_trial(path: Path) -> Trajectory:
    with open(path) as fh:
        return trial_from_dict(json.load(fh))
