"""Synthetic labeled gait cohort generator.

Stands in for a clinical motion-capture dataset: every participant gets a
gait signature (cadence, stride, per-joint amplitudes/phases, asymmetry,
noise scale) shaped by their impairment and assistive device, and every trial
is a closed-form kinematic program for one activity plus smooth noise. All
ground-truth labels are decided before the kinematics are generated, so label
quality never depends on downstream processing.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractViolation
from .motion import FRAME_RATE_HZ, JOINT_INDEX, JOINT_NAMES, N_JOINTS, Trajectory


class Activity(str, Enum):
    OVERGROUND_WALK = "OvergroundWalk"
    TIMED_UP_AND_GO = "TimedUpAndGo"
    FOUR_SQUARE_STEP_TEST = "FourSquareStepTest"
    L_TEST = "LTest"
    FUNCTIONAL_GAIT_ASSESSMENT = "FunctionalGaitAssessment"
    SIT_TO_STAND = "SitToStand"
    QUIET_STANDING = "QuietStanding"
    TURNING_IN_PLACE = "TurningInPlace"


class Diagnosis(str, Enum):
    NONE = "None"
    PROSTHESIS_USER = "ProsthesisUser"
    STROKE = "Stroke"
    SCI = "SCI"
    TBI = "TBI"


class AssistiveDevice(str, Enum):
    NONE = "None"
    CANE = "Cane"
    WALKER = "Walker"
    ROLLATOR = "Rollator"
    CRUTCHES = "Crutches"


@dataclass(frozen=True)
class GaitParams:
    """Participant-level kinematic signature (angles in radians)."""

    cadence_steps_per_min: float
    stride_length_m: float
    amplitude: np.ndarray  # (34,)
    phase: np.ndarray  # (34,)
    asymmetry: float  # right-side range-of-motion reduction, in [0, 1]
    variability: float  # per-frame noise scale
    trunk_lean_rad: float

    def __post_init__(self):
        if not 40 <= self.cadence_steps_per_min <= 160:
            raise ContractViolation(f"cadence {self.cadence_steps_per_min} outside [40, 160]")
        if not 0.3 <= self.stride_length_m <= 1.8:
            raise ContractViolation(f"stride length {self.stride_length_m} outside [0.3, 1.8]")
        if not 0.0 <= self.asymmetry <= 1.0:
            raise ContractViolation(f"asymmetry {self.asymmetry} outside [0, 1]")
        if self.variability < 0:
            raise ContractViolation("variability must be non-negative")
        amp = np.asarray(self.amplitude, dtype=np.float64)
        ph = np.asarray(self.phase, dtype=np.float64)
        if amp.shape != (N_JOINTS,) or ph.shape != (N_JOINTS,):
            raise ContractViolation("amplitude and phase must be 34-vectors")
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "phase", ph)


@dataclass(frozen=True)
class ParticipantProfile:
    participant_id: str
    impaired: bool
    diagnosis: Diagnosis
    assistive_device: AssistiveDevice
    fall_history: bool | None
    gait_signature: GaitParams

    def __post_init__(self):
        if (self.diagnosis != Diagnosis.NONE) != self.impaired:
            raise ContractViolation("diagnosis != None must hold exactly when impaired")
        if self.fall_history is not None and self.diagnosis != Diagnosis.PROSTHESIS_USER:
            raise ContractViolation("fall_history is only collected for prosthesis users")


@dataclass(frozen=True)
class TrialGroundTruth:
    activity: Activity
    impaired: bool
    diagnosis: Diagnosis
    assistive_device: AssistiveDevice
    fall_history: bool | None = None
    on_walkway: bool = False
    cadence_steps_per_min: float | None = None
    speed_m_s: float | None = None
    completion_time_s: float | None = None

    def __post_init__(self):
        if self.on_walkway != (self.cadence_steps_per_min is not None):
            raise ContractViolation("cadence is recorded exactly for walkway trials")
        if self.on_walkway != (self.speed_m_s is not None):
            raise ContractViolation("speed is recorded exactly for walkway trials")
        timed = self.activity in (Activity.TIMED_UP_AND_GO, Activity.FOUR_SQUARE_STEP_TEST)
        if timed != (self.completion_time_s is not None):
            raise ContractViolation("completion time is recorded exactly for TUG/FSST trials")


@dataclass(frozen=True)
class CohortConfig:
    """Prevalence configuration for cohort sampling."""

    impaired_prevalence: float = 0.55
    diagnosis_weights: tuple[tuple[Diagnosis, float], ...] = (
        (Diagnosis.PROSTHESIS_USER, 0.4),
        (Diagnosis.STROKE, 0.3),
        (Diagnosis.SCI, 0.15),
        (Diagnosis.TBI, 0.15),
    )
    device_weights: tuple[tuple[AssistiveDevice, float], ...] = (
        (AssistiveDevice.NONE, 0.6),
        (AssistiveDevice.CANE, 0.15),
        (AssistiveDevice.WALKER, 0.1),
        (AssistiveDevice.ROLLATOR, 0.1),
        (AssistiveDevice.CRUTCHES, 0.05),
    )
    fall_prevalence: float = 0.5

    def validate(self) -> None:
        if not 0.0 <= self.impaired_prevalence <= 1.0:
            raise ConfigError("impaired_prevalence must be in [0, 1]")
        if not 0.0 <= self.fall_prevalence <= 1.0:
            raise ConfigError("fall_prevalence must be in [0, 1]")
        for name, weights in (("diagnosis", self.diagnosis_weights), ("device", self.device_weights)):
            total = sum(w for _, w in weights)
            if any(w < 0 or w > 1 for _, w in weights):
                raise ConfigError(f"{name} weights must lie in [0, 1]")
            if abs(total - 1.0) > 1e-9:
                raise ConfigError(f"{name} weights must sum to 1, got {total}")


# ---------------------------------------------------------------------------
# Base gait tables (radians). Values are per joint name; _l/_r pairs share
# the same base so that asymmetry is the only systematic side difference.

_BASE_AMPLITUDE = {
    "hip_flexion": 0.42, "hip_adduction": 0.08, "hip_rotation": 0.06,
    "knee_flexion": 0.55, "ankle_flexion": 0.22, "subtalar": 0.06, "metatarsal": 0.12,
    "lumbar_bending": 0.05, "lumbar_extension": 0.035, "lumbar_rotation": 0.09,
    "neck_bending": 0.02, "neck_extension": 0.02, "neck_rotation": 0.035,
    "shoulder_flexion": 0.24, "shoulder_adduction": 0.05, "shoulder_rotation": 0.05,
    "elbow_flexion": 0.14, "forearm_supination": 0.05,
    "wrist_flexion": 0.07, "wrist_deviation": 0.035,
}

_BASE_PHASE = {
    "hip_flexion": 0.0, "hip_adduction": 1.45, "hip_rotation": 0.8,
    "knee_flexion": 1.9, "ankle_flexion": 4.0, "subtalar": 4.1, "metatarsal": 4.5,
    "lumbar_bending": 1.2, "lumbar_extension": 2.5, "lumbar_rotation": 0.6,
    "neck_bending": 1.2, "neck_extension": 2.5, "neck_rotation": 0.6,
    # Arms swing against the ipsilateral leg.
    "shoulder_flexion": math.pi, "shoulder_adduction": math.pi + 1.4,
    "shoulder_rotation": math.pi + 0.5, "elbow_flexion": math.pi + 0.4,
    "forearm_supination": math.pi + 0.9,
    "wrist_flexion": math.pi + 1.1, "wrist_deviation": math.pi + 1.6,
}

_NEUTRAL_POSE = {
    "hip_flexion": 0.06, "knee_flexion": 0.12, "ankle_flexion": 0.02,
    "shoulder_flexion": 0.04, "elbow_flexion": 0.35,
    "lumbar_extension": -0.04,
}


def _base_name(channel: str) -> str:
    return channel[:-2] if channel.endswith(("_l", "_r")) else channel


def _table_vector(table: dict[str, float], default: float = 0.0) -> np.ndarray:
    return np.array([table.get(_base_name(name), default) for name in JOINT_NAMES], dtype=np.float64)

BASE_AMPLITUDE_VEC = _table_vector(_BASE_AMPLITUDE)
BASE_PHASE_VEC = _table_vector(_BASE_PHASE)
NEUTRAL_POSE_VEC = _table_vector(_NEUTRAL_POSE)
RIGHT_SIDE = np.array([name.endswith("_r") for name in JOINT_NAMES])
LEG_CHANNELS = np.array([_base_name(n) in
                         ("hip_flexion", "hip_adduction", "hip_rotation", "knee_flexion",
                          "ankle_flexion", "subtalar", "metatarsal") for n in JOINT_NAMES])

# Joint offsets added to every frame while a device is carried (gripping a
# frame or cane changes the neutral arm posture, not the oscillation).
_DEVICE_POSE_OFFSETS: dict[AssistiveDevice, dict[str, float]] = {
    AssistiveDevice.NONE: {},
    AssistiveDevice.CANE: {"elbow_flexion_r": 0.28, "shoulder_adduction_r": 0.10},
    AssistiveDevice.WALKER: {"elbow_flexion_l": 0.85, "elbow_flexion_r": 0.85,
                             "shoulder_flexion_l": 0.25, "shoulder_flexion_r": 0.25},
    AssistiveDevice.ROLLATOR: {"elbow_flexion_l": 0.75, "elbow_flexion_r": 0.75,
                               "shoulder_flexion_l": 0.30, "shoulder_flexion_r": 0.30},
    AssistiveDevice.CRUTCHES: {"elbow_flexion_l": 0.45, "elbow_flexion_r": 0.45,
                               "shoulder_adduction_l": 0.18, "shoulder_adduction_r": 0.18},
}


def device_pose_offset(device: AssistiveDevice) -> np.ndarray:
    offs = np.zeros(N_JOINTS)
    for name, value in _DEVICE_POSE_OFFSETS[device].items():
        offs[JOINT_INDEX[name]] = value
    return offs


def gait_kinematics(params: GaitParams, phase: float | np.ndarray) -> np.ndarray:
    """Closed-form walking pose at a given gait phase (radians).

    pose = neutral + amplitude * sin(phase + per-joint phase), with right-side
    channels offset by pi (contralateral) and their amplitudes scaled by
    (1 - asymmetry). Accepts a scalar phase (returns (34,)) or a length-T
    vector (returns (T, 34)).
    """
    phase_arr = np.atleast_1d(np.asarray(phase, dtype=np.float64))
    amp = params.amplitude.copy()
    amp[RIGHT_SIDE] *= 1.0 - params.asymmetry
    total_phase = phase_arr[:, None] + params.phase[None, :] + np.where(RIGHT_SIDE, math.pi, 0.0)[None, :]
    pose = NEUTRAL_POSE_VEC[None, :] + amp[None, :] * np.sin(total_phase)
    if np.isscalar(phase) or np.ndim(phase) == 0:
        return pose[0]
    return pose


# ---------------------------------------------------------------------------
# Cohort sampling


def _participant_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def trial_seed(cohort_seed: int, participant_id: str, trial_index: int) -> int:
    """Stable per-trial seed so trials can be (re)generated independently."""
    mix = np.random.SeedSequence([cohort_seed, _stable_hash(participant_id), trial_index])
    return int(mix.generate_state(1, dtype=np.uint64)[0])


def _weighted_choice(rng: np.random.Generator, weights: tuple) -> object:
    values = [v for v, _ in weights]
    probs = np.array([w for _, w in weights], dtype=np.float64)
    return values[int(rng.choice(len(values), p=probs / probs.sum()))]


def _sample_gait_signature(rng: np.random.Generator, diagnosis: Diagnosis,
                           device: AssistiveDevice) -> GaitParams:
    # Per-pair amplitude jitter, identical on both sides of a pair.
    pair_jitter = {}
    for name in JOINT_NAMES:
        base = _base_name(name)
        if base not in pair_jitter:
            pair_jitter[base] = math.exp(rng.normal(0.0, 0.10))
    amp = BASE_AMPLITUDE_VEC * np.array([pair_jitter[_base_name(n)] for n in JOINT_NAMES])

    phase_jitter = {}
    for name in JOINT_NAMES:
        base = _base_name(name)
        if base not in phase_jitter:
            phase_jitter[base] = rng.normal(0.0, 0.12)
    phase = BASE_PHASE_VEC + np.array([phase_jitter[_base_name(n)] for n in JOINT_NAMES])

    cadence = float(np.clip(rng.normal(112.0, 13.0), 88.0, 144.0))
    stride = float(np.clip(rng.normal(1.35, 0.12), 1.0, 1.7))
    asymmetry = float(rng.uniform(0.0, 0.05))
    variability = float(rng.uniform(0.004, 0.025))
    trunk_lean = float(rng.normal(0.0, 0.02))

    def jx(name: str, factor: float) -> None:
        amp[JOINT_INDEX[name]] *= factor

    if diagnosis == Diagnosis.STROKE:
        asymmetry = float(rng.uniform(0.30, 0.50))
        cadence *= rng.uniform(0.75, 0.90)
        stride *= rng.uniform(0.70, 0.85)
        variability = float(rng.uniform(0.020, 0.050))
        trunk_lean += rng.uniform(0.02, 0.06)
        jx("hip_adduction_r", 1.8)  # circumduction of the paretic side
    elif diagnosis == Diagnosis.PROSTHESIS_USER:
        asymmetry = float(rng.uniform(0.10, 0.25))
        cadence *= rng.uniform(0.85, 0.95)
        stride *= rng.uniform(0.80, 0.95)
        variability = float(rng.uniform(0.015, 0.090))
        jx("ankle_flexion_r", 0.12)  # rigid prosthetic ankle
        jx("subtalar_r", 0.10)
        jx("hip_adduction_r", 1.7)  # hip hiking
    elif diagnosis == Diagnosis.SCI:
        cadence *= rng.uniform(0.60, 0.80)
        stride *= rng.uniform(0.55, 0.75)
        variability = float(rng.uniform(0.030, 0.060))
        trunk_lean += rng.uniform(0.01, 0.05)
        amp[LEG_CHANNELS] *= rng.uniform(0.50, 0.70)
        jx("hip_adduction_l", 1.3)
        jx("hip_adduction_r", 1.3)
    elif diagnosis == Diagnosis.TBI:
        cadence *= rng.uniform(0.80, 0.95)
        stride *= rng.uniform(0.80, 0.95)
        variability = float(rng.uniform(0.050, 0.090))
        jx("lumbar_bending", 2.2)  # ataxic trunk sway

    if device == AssistiveDevice.CANE:
        cadence *= 0.93
        trunk_lean += 0.03
        jx("shoulder_flexion_r", 0.25)
    elif device == AssistiveDevice.WALKER:
        cadence *= 0.80
        stride *= 0.85
        trunk_lean += 0.12
        jx("shoulder_flexion_l", 0.15)
        jx("shoulder_flexion_r", 0.15)
    elif device == AssistiveDevice.ROLLATOR:
        cadence *= 0.88
        stride *= 0.90
        trunk_lean += 0.08
        jx("shoulder_flexion_l", 0.20)
        jx("shoulder_flexion_r", 0.20)
    elif device == AssistiveDevice.CRUTCHES:
        cadence *= 0.85
        trunk_lean += 0.04
        jx("shoulder_flexion_l", 1.6)
        jx("shoulder_flexion_r", 1.6)

    # Stride length feeds back into leg range of motion so that walking speed
    # stays recoverable after pelvis translation is discarded.
    amp[LEG_CHANNELS] *= 0.35 + 0.65 * (stride / 1.3)

    return GaitParams(
        cadence_steps_per_min=float(np.clip(cadence, 45.0, 155.0)),
        stride_length_m=float(np.clip(stride, 0.35, 1.75)),
        amplitude=amp,
        phase=phase,
        asymmetry=asymmetry,
        variability=variability,
        trunk_lean_rad=trunk_lean,
    )


def sample_cohort(seed: int, n_participants: int,
                  config: CohortConfig | None = None) -> list[ParticipantProfile]:
    """Sample participant profiles. Deterministic for a fixed (seed, config)."""
    if n_participants < 0:
        raise ContractViolation("n_participants must be >= 0")
    config = config or CohortConfig()
    config.validate()

    profiles = []
    for i in range(n_participants):
        rng = _participant_rng(seed, i)
        impaired = bool(rng.random() < config.impaired_prevalence)
        diagnosis = _weighted_choice(rng, config.diagnosis_weights) if impaired else Diagnosis.NONE
        device = _weighted_choice(rng, config.device_weights)
        signature = _sample_gait_signature(rng, diagnosis, device)

        fall_history = None
        if diagnosis == Diagnosis.PROSTHESIS_USER:
            # Fall risk tracks gait variability so the label is learnable from
            # kinematics. The threshold sits at the (1 - prevalence) quantile
            # of the variability range used for prosthesis users.
            lo, hi = 0.015, 0.090
            v_mid = lo + (1.0 - config.fall_prevalence) * (hi - lo)
            p_fall = 1.0 / (1.0 + math.exp(-(signature.variability - v_mid) / 0.006))
            fall_history = bool(rng.random() < p_fall)

        profiles.append(ParticipantProfile(
            participant_id=f"P{i:03d}",
            impaired=impaired,
            diagnosis=diagnosis,
            assistive_device=device,
            fall_history=fall_history,
            gait_signature=signature,
        ))
    return profiles


# ---------------------------------------------------------------------------
# Trial synthesis


def _smooth_noise(rng: np.random.Generator, n_frames: int, knots_per_s: float, scale: float) -> np.ndarray:
    """Band-limited noise: piecewise-linear interpolation between random knots."""
    n_knots = max(2, int(n_frames / FRAME_RATE_HZ * knots_per_s) + 2)
    knots = rng.normal(0.0, scale, n_knots)
    x = np.linspace(0.0, n_knots - 1.0, n_frames)
    return np.interp(x, np.arange(n_knots), knots)


def _euler_to_quaternion(roll: np.ndarray, pitch: np.ndarray, yaw: np.ndarray) -> np.ndarray:
    cr, sr = np.cos(roll / 2), np.sin(roll / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    quat = np.stack([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ], axis=1)
    return quat / np.linalg.norm(quat, axis=1, keepdims=True)


def _walking_joints(params: GaitParams, phase: np.ndarray) -> np.ndarray:
    return gait_kinematics(params, phase)


def _ramp(x: np.ndarray) -> np.ndarray:
    """Smoothstep from 0 to 1 on x in [0, 1]."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _sit_pose(params: GaitParams) -> np.ndarray:
    pose = NEUTRAL_POSE_VEC.copy()
    for name, val in (("hip_flexion_l", 1.45), ("hip_flexion_r", 1.45),
                      ("knee_flexion_l", 1.55), ("knee_flexion_r", 1.55),
                      ("ankle_flexion_l", 0.15), ("ankle_flexion_r", 0.15)):
        pose[JOINT_INDEX[name]] = val
    return pose


def synthesize_trial(profile: ParticipantProfile, activity: Activity,
                     duration_s: float, seed: int) -> tuple[Trajectory, TrialGroundTruth]:
    """Generate one trial at 30 Hz with ground truth consistent with the generator.

    The trajectory has floor(duration_s * 30) frames. Walkway walking trials
    record speed = stride_length * cadence / 120 and the realized cadence.
    """
    if duration_s < 2.0:
        raise ContractViolation(f"duration_s must be >= 2, got {duration_s}")
    activity = Activity(activity)
    params = profile.gait_signature
    rng = np.random.default_rng(seed)
    n = int(math.floor(duration_s * FRAME_RATE_HZ))
    t = np.arange(n) / FRAME_RATE_HZ

    stride_freq = params.cadence_steps_per_min / 120.0  # strides per second
    base_phase = 2.0 * math.pi * stride_freq * t
    phase_drift = _smooth_noise(rng, n, 0.8, params.variability * 4.0)
    speed = params.stride_length_m * params.cadence_steps_per_min / 120.0

    pelvis_pos = np.zeros((n, 3))
    pelvis_pos[:, 2] = 0.95
    roll = 0.02 * np.sin(base_phase)
    pitch = np.full(n, params.trunk_lean_rad) + 0.012 * np.sin(2 * base_phase)
    yaw = np.zeros(n)

    on_walkway = False
    cadence_gt = speed_gt = completion_gt = None

    if activity in (Activity.OVERGROUND_WALK, Activity.FUNCTIONAL_GAIT_ASSESSMENT,
                    Activity.L_TEST, Activity.TIMED_UP_AND_GO):
        phase = base_phase + phase_drift
        # Faster cadence drives bigger arm swing and a stronger step-frequency
        # trunk/neck bounce, so walking rate stays decodable from pose
        # statistics alone (stride length already modulates leg amplitudes).
        cad_factor = params.cadence_steps_per_min / 112.0
        arm_scale = np.ones(N_JOINTS)
        for name in ("shoulder_flexion_l", "shoulder_flexion_r",
                     "elbow_flexion_l", "elbow_flexion_r"):
            arm_scale[JOINT_INDEX[name]] = cad_factor ** 1.5
        walk_params = replace(params, amplitude=params.amplitude * arm_scale)
        joints = _walking_joints(walk_params, phase)
        bounce = np.sin(2.0 * phase)
        joints[:, JOINT_INDEX["lumbar_extension"]] += 0.09 * cad_factor ** 2 * bounce
        joints[:, JOINT_INDEX["neck_extension"]] += 0.04 * cad_factor ** 2 * bounce
        pelvis_pos[:, 0] = speed * t
        pelvis_pos[:, 1] = 0.02 * np.sin(base_phase)
        pelvis_pos[:, 2] += 0.012 * np.sin(2 * base_phase)

        if activity == Activity.OVERGROUND_WALK:
            on_walkway = True
            cadence_gt = params.cadence_steps_per_min
            speed_gt = speed
        elif activity == Activity.FUNCTIONAL_GAIT_ASSESSMENT:
            # Alternating gait-variation segments: amplitude envelope plus
            # pronounced head turns.
            envelope = 0.75 + 0.25 * np.sin(2.0 * math.pi * t / max(duration_s, 1.0) * 2.0)
            joints = NEUTRAL_POSE_VEC[None, :] + (joints - NEUTRAL_POSE_VEC[None, :]) * envelope[:, None]
            joints[:, JOINT_INDEX["neck_rotation"]] += 0.45 * np.sin(2.0 * math.pi * 0.33 * t)
        elif activity == Activity.L_TEST:
            # Walking with four turn bursts: trunk rotation ramps and a
            # shortened stride while turning.
            turn = np.zeros(n)
            for k in range(1, 5):
                center = duration_s * k / 5.0
                turn += np.exp(-0.5 * ((t - center) / 0.4) ** 2)
            joints[:, JOINT_INDEX["lumbar_rotation"]] += 0.5 * turn
            joints[:, JOINT_INDEX["neck_rotation"]] += 0.3 * turn
            shrink = 1.0 - 0.45 * np.clip(turn, 0.0, 1.0)
            joints[:, LEG_CHANNELS] = (NEUTRAL_POSE_VEC[LEG_CHANNELS][None, :]
                                       + (joints[:, LEG_CHANNELS] - NEUTRAL_POSE_VEC[LEG_CHANNELS][None, :])
                                       * shrink[:, None])
            yaw = 0.35 * turn
        else:  # TIMED_UP_AND_GO
            completion_gt = float(duration_s)
            rise = _ramp(t / 1.4)  # sit-to-stand over the first 1.4 s
            lower = _ramp((duration_s - t) / 1.4)  # stand-to-sit at the end
            seated = 1.0 - np.minimum(rise, lower)
            sit = _sit_pose(params)
            joints = joints * (1.0 - seated[:, None]) + sit[None, :] * seated[:, None]
            mid = np.exp(-0.5 * ((t - duration_s / 2.0) / 0.5) ** 2)
            joints[:, JOINT_INDEX["lumbar_rotation"]] += 0.5 * mid
            yaw = 0.4 * mid
            walk_frac = np.clip(1.0 - seated, 0.0, 1.0)
            pelvis_pos[:, 0] = np.cumsum(speed * walk_frac) / FRAME_RATE_HZ
            pelvis_pos[:, 2] = 0.95 - 0.42 * seated

    elif activity == Activity.FOUR_SQUARE_STEP_TEST:
        completion_gt = float(duration_s)
        # Multidirectional stepping: forward-step bursts alternate with
        # sideways bursts, which show up as large hip ab/adduction swings.
        step_phase = base_phase * 1.1 + phase_drift
        joints = _walking_joints(params, step_phase)
        lateral = 0.5 * (1.0 + np.sign(np.sin(2.0 * math.pi * t / 4.0)))
        for side in ("l", "r"):
            adduction = JOINT_INDEX[f"hip_adduction_{side}"]
            flexion = JOINT_INDEX[f"hip_flexion_{side}"]
            joints[:, adduction] += lateral * 0.30 * np.sin(step_phase + (0.0 if side == "l" else math.pi))
            joints[:, flexion] = (NEUTRAL_POSE_VEC[flexion]
                                  + (joints[:, flexion] - NEUTRAL_POSE_VEC[flexion]) * (1.0 - 0.45 * lateral))
        pelvis_pos[:, 0] = 0.25 * np.sin(2.0 * math.pi * t / 4.0)
        pelvis_pos[:, 1] = 0.25 * np.cos(2.0 * math.pi * t / 4.0 + math.pi / 3.0)

    elif activity == Activity.SIT_TO_STAND:
        # Repeated chair rises at ~0.25 Hz.
        cycle = 0.5 * (1.0 - np.cos(2.0 * math.pi * 0.25 * t + phase_drift))
        sit = _sit_pose(params)
        stand = NEUTRAL_POSE_VEC.copy()
        joints = sit[None, :] + (stand - sit)[None, :] * cycle[:, None]
        joints[:, JOINT_INDEX["lumbar_extension"]] += -0.25 * (1.0 - cycle)
        pelvis_pos[:, 2] = 0.53 + 0.42 * cycle
        pitch = pitch + 0.3 * (1.0 - cycle)

    elif activity == Activity.QUIET_STANDING:
        joints = np.tile(NEUTRAL_POSE_VEC, (n, 1))
        sway = _smooth_noise(rng, n, 0.5, 0.012)
        joints[:, JOINT_INDEX["ankle_flexion_l"]] += sway
        joints[:, JOINT_INDEX["ankle_flexion_r"]] += sway
        joints[:, JOINT_INDEX["lumbar_extension"]] += 0.5 * sway
        pelvis_pos[:, 0] = 0.01 * sway / 0.012

    else:  # TURNING_IN_PLACE
        spin = 2.0 * math.pi * 0.4 * t
        joints = _walking_joints(params, base_phase * 0.8 + phase_drift)
        damp = 0.45
        joints = NEUTRAL_POSE_VEC[None, :] + (joints - NEUTRAL_POSE_VEC[None, :]) * damp
        joints[:, JOINT_INDEX["lumbar_rotation"]] += 0.5 * np.sin(spin)
        joints[:, JOINT_INDEX["neck_rotation"]] += 0.35 * np.sin(spin + 0.4)
        joints[:, JOINT_INDEX["hip_rotation_l"]] += 0.25 * np.sin(spin)
        joints[:, JOINT_INDEX["hip_rotation_r"]] += 0.25 * np.sin(spin)
        yaw = 1.5 * np.sin(spin / 2.0)

    joints = joints + device_pose_offset(profile.assistive_device)[None, :]
    joints = joints + rng.normal(0.0, params.variability, joints.shape)

    quat = _euler_to_quaternion(roll, pitch, yaw)
    q = np.concatenate([pelvis_pos, quat, joints], axis=1)

    qdot = np.zeros((n, 40))
    if n >= 2:
        qdot[:, 0:3] = np.gradient(pelvis_pos, axis=0) * FRAME_RATE_HZ
        euler = np.stack([roll, pitch, yaw], axis=1)
        qdot[:, 3:6] = np.gradient(euler, axis=0) * FRAME_RATE_HZ
        qdot[:, 6:] = np.gradient(joints, axis=0) * FRAME_RATE_HZ

    gt = TrialGroundTruth(
        activity=activity,
        impaired=profile.impaired,
        diagnosis=profile.diagnosis,
        assistive_device=profile.assistive_device,
        fall_history=profile.fall_history,
        on_walkway=on_walkway,
        cadence_steps_per_min=cadence_gt,
        speed_m_s=speed_gt,
        completion_time_s=completion_gt,
    )
    traj = Trajectory(
        participant_id=profile.participant_id,
        trial_id="",
        frame_rate_hz=FRAME_RATE_HZ,
        q=q,
        qdot=qdot,
        ground_truth=gt,
    )
    return traj, gt


# Default per-participant trial mix (12 trials).
DEFAULT_TRIAL_MIX = (
    [Activity.OVERGROUND_WALK] * 4
    + [Activity.TIMED_UP_AND_GO] * 2
    + [Activity.FOUR_SQUARE_STEP_TEST, Activity.L_TEST, Activity.FUNCTIONAL_GAIT_ASSESSMENT,
       Activity.SIT_TO_STAND, Activity.QUIET_STANDING, Activity.TURNING_IN_PLACE]
)


def _trial_duration(rng: np.random.Generator, activity: Activity, params: GaitParams) -> float:
    speed = params.stride_length_m * params.cadence_steps_per_min / 120.0
    if activity == Activity.OVERGROUND_WALK:
        return float(rng.uniform(8.0, 14.0))
    if activity == Activity.TIMED_UP_AND_GO:
        base = 9.0 + 10.0 * max(0.0, 1.25 / speed - 1.0)
        return float(np.clip(base + rng.normal(0.0, 0.8), 6.0, 40.0))
    if activity == Activity.FOUR_SQUARE_STEP_TEST:
        base = 6.0 + 240.0 / params.cadence_steps_per_min + 40.0 * params.variability
        return float(np.clip(base + rng.normal(0.0, 0.5), 5.0, 30.0))
    if activity == Activity.L_TEST:
        return float(rng.uniform(12.0, 20.0))
    return float(rng.uniform(8.0, 13.0))


def plan_trials(profile: ParticipantProfile, cohort_seed: int,
                trials_per_participant: int = 12) -> list[tuple[str, Activity, float, int]]:
    """Plan (trial_id, activity, duration, seed) tuples for one participant.

    Per-trial gait jitter is applied by `generate_trial`, not here, so the
    plan itself stays cheap to recompute.
    """
    mix = [DEFAULT_TRIAL_MIX[i % len(DEFAULT_TRIAL_MIX)] for i in range(trials_per_participant)]
    plan = []
    for idx, activity in enumerate(mix):
        seed = trial_seed(cohort_seed, profile.participant_id, idx)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD0]))
        duration = _trial_duration(rng, activity, profile.gait_signature)
        plan.append((f"{profile.participant_id}-t{idx:02d}", activity, duration, seed))
    return plan


def generate_trial(profile: ParticipantProfile, trial_id: str, activity: Activity,
                   duration_s: float, seed: int) -> Trajectory:
    """Synthesize one planned trial, applying small per-trial gait jitter."""
    jitter_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1A]))
    params = profile.gait_signature
    cadence = float(np.clip(params.cadence_steps_per_min * jitter_rng.normal(1.0, 0.015), 42.0, 158.0))
    stride = float(np.clip(params.stride_length_m * jitter_rng.normal(1.0, 0.015), 0.32, 1.78))
    jittered = replace(params, cadence_steps_per_min=cadence, stride_length_m=stride)
    trial_profile = replace(profile, gait_signature=jittered)
    traj, _ = synthesize_trial(trial_profile, activity, duration_s, seed)
    return replace(traj, trial_id=trial_id)


# ---------------------------------------------------------------------------
# Serialization


def _params_to_dict(p: GaitParams) -> dict:
    return {
        "cadence_steps_per_min": p.cadence_steps_per_min,
        "stride_length_m": p.stride_length_m,
        "amplitude": p.amplitude.tolist(),
        "phase": p.phase.tolist(),
        "asymmetry": p.asymmetry,
        "variability": p.variability,
        "trunk_lean_rad": p.trunk_lean_rad,
    }


def _params_from_dict(d: dict) -> GaitParams:
    return GaitParams(
        cadence_steps_per_min=d["cadence_steps_per_min"],
        stride_length_m=d["stride_length_m"],
        amplitude=np.asarray(d["amplitude"], dtype=np.float64),
        phase=np.asarray(d["phase"], dtype=np.float64),
        asymmetry=d["asymmetry"],
        variability=d["variability"],
        trunk_lean_rad=d["trunk_lean_rad"],
    )


def profile_to_dict(p: ParticipantProfile) -> dict:
    return {
        "participant_id": p.participant_id,
        "impaired": p.impaired,
        "diagnosis": p.diagnosis.value,
        "assistive_device": p.assistive_device.value,
        "fall_history": p.fall_history,
        "gait_signature": _params_to_dict(p.gait_signature),
    }


def profile_from_dict(d: dict) -> ParticipantProfile:
    return ParticipantProfile(
        participant_id=d["participant_id"],
        impaired=d["impaired"],
        diagnosis=Diagnosis(d["diagnosis"]),
        assistive_device=AssistiveDevice(d["assistive_device"]),
        fall_history=d["fall_history"],
        gait_signature=_params_from_dict(d["gait_signature"]),
    )


def ground_truth_to_dict(gt: TrialGroundTruth) -> dict:
    return {
        "activity": gt.activity.value,
        "impaired": gt.impaired,
        "diagnosis": gt.diagnosis.value,
        "assistive_device": gt.assistive_device.value,
        "fall_history": gt.fall_history,
        "on_walkway": gt.on_walkway,
        "cadence_steps_per_min": gt.cadence_steps_per_min,
        "speed_m_s": gt.speed_m_s,
        "completion_time_s": gt.completion_time_s,
    }


def ground_truth_from_dict(d: dict) -> TrialGroundTruth:
    return TrialGroundTruth(
        activity=Activity(d["activity"]),
        impaired=d["impaired"],
        diagnosis=Diagnosis(d["diagnosis"]),
        assistive_device=AssistiveDevice(d["assistive_device"]),
        fall_history=d.get("fall_history"),
        on_walkway=d["on_walkway"],
        cadence_steps_per_min=d.get("cadence_steps_per_min"),
        speed_m_s=d.get("speed_m_s"),
        completion_time_s=d.get("completion_time_s"),
    )


def write_cohort(profiles: list[ParticipantProfile], path: Path) -> None:
    """Write one profile per line (newline-delimited JSON)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for p in profiles:
            fh.write(json.dumps(profile_to_dict(p), sort_keys=True) + "\n")


def read_cohort(path: Path) -> list[ParticipantProfile]:
    with open(path) as fh:
        return [profile_from_dict(json.loads(line)) for line in fh if line.strip()]
