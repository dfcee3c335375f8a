"""Deterministic synthetic skeleton data.

A 25-joint armature (rest pose below, meters, body frame: +x subject's
left, +y up, +z forward) is animated by one-sided sinusoidal joint
rotations. Class k moves a fixed subset of the five body parts at a
class-specific frequency; subjects differ by overall size and limb
proportions; each camera sees the same performance through a different
rigid transform placed from the setup's height and distance.

Random streams are keyed so that the motion of a (class, subject) pair
does not depend on the camera, while coordinate noise does.
"""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import child_rng
from .skeleton import (
    NUM_JOINTS,
    SEQUENCE_SUFFIX,
    BodyFrame,
    Catalog,
    CatalogEntry,
    SampleMeta,
    SkeletonSequence,
    camera_setup,
    save_catalog,
    save_sequence,
)

# rest pose, 1-based joint -> (x, y, z); spine base to spine is 0.45 m
REST_POSE = {
    1: (0.0, 0.0, 0.0),
    2: (0.0, 0.22, 0.0),
    3: (0.0, 0.55, 0.0),
    4: (0.0, 0.72, 0.02),
    5: (0.18, 0.43, 0.0),
    6: (0.20, 0.15, 0.0),
    7: (0.21, -0.10, 0.0),
    8: (0.21, -0.18, 0.0),
    9: (-0.18, 0.43, 0.0),
    10: (-0.20, 0.15, 0.0),
    11: (-0.21, -0.10, 0.0),
    12: (-0.21, -0.18, 0.0),
    13: (0.09, -0.02, 0.0),
    14: (0.10, -0.45, 0.0),
    15: (0.10, -0.86, 0.0),
    16: (0.10, -0.92, 0.12),
    17: (-0.09, -0.02, 0.0),
    18: (-0.10, -0.45, 0.0),
    19: (-0.10, -0.86, 0.0),
    20: (-0.10, -0.92, 0.12),
    21: (0.0, 0.45, 0.0),
    22: (0.21, -0.26, 0.0),
    23: (0.21, -0.20, 0.04),
    24: (-0.21, -0.26, 0.0),
    25: (-0.21, -0.20, 0.04),
}
PARENT = {
    2: 1, 21: 2, 3: 21, 4: 3,
    5: 21, 6: 5, 7: 6, 8: 7, 22: 8, 23: 8,
    9: 21, 10: 9, 11: 10, 12: 11, 24: 12, 25: 12,
    13: 1, 14: 13, 15: 14, 16: 15,
    17: 1, 18: 17, 19: 18, 20: 19,
}
HIP_HEIGHT = 0.95
BODY_ID_BASE = 72057594037927936
BLOB_BODY_ID = BODY_ID_BASE - 1

# part index -> [(pivot joint, moved joints or None for the whole subtree,
# axis, peak angle rad)], applied root to tip. The torso never moves the
# joints that define the body frame (1, 2, 5, 9, 21).
PART_MOTIONS = {
    0: [(21, (3, 4), "x", 0.6), (3, (4,), "y", 0.8)],  # neck bend, head turn
    1: [(5, None, "x", -1.6), (6, None, "x", -1.0)],  # left shoulder, elbow
    2: [(9, None, "x", -1.6), (10, None, "x", -1.0)],
    3: [(13, None, "x", -1.5), (14, None, "x", 1.0)],  # left hip, knee
    4: [(17, None, "x", -1.5), (18, None, "x", 1.0)],
}
# arms first: they carry the largest trajectories
_PART_ORDER = (1, 2, 3, 4, 0)
CAMERA_AZIMUTH_DEG = {1: 0.0, 2: 45.0, 3: -45.0}
SUBJECT_FACING_DEG = 45.0


@dataclass(frozen=True)
class SynthSpec:
    classes: int = 4
    subjects: int = 8
    cameras: int = 3
    setups: int = 17
    frames: int = 100
    noise: float = 0.01
    seed: int = 0
    distractor_rate: float = 0.0

    def __post_init__(self):
        if self.classes < 2 or self.classes > 60:
            raise ValueError("classes must lie in 2..60")
        if not 1 <= self.subjects <= 40:
            raise ValueError("subjects must lie in 1..40")
        if not 1 <= self.cameras <= 3:
            raise ValueError("cameras must lie in 1..3")
        if not 1 <= self.setups <= 17:
            raise ValueError("setups must lie in 1..17")
        if self.frames < 1 or self.noise < 0:
            raise ValueError("frames must be positive and noise non-negative")


def class_signature(k: int) -> tuple[tuple[int, ...], float]:
    """(animated parts, cycles per sequence) of 0-based class ``k``."""
    subsets = [
        tuple(sorted(c))
        for size in range(1, 6)
        for c in itertools.combinations(_PART_ORDER, size)
    ]
    parts = subsets[k % len(subsets)]
    freq = 1.0 + 0.5 * (k % 3) + 0.25 * (k // len(subsets))
    return parts, freq


def _axis_rotation(axis: str, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def _subtree(root: int) -> list[int]:
    out = [root]
    for child, parent in PARENT.items():
        if parent == root:
            out.extend(_subtree(child))
    return out


def subject_pose(subject: int, seed: int) -> np.ndarray:
    """Rest pose (25, 3) with per-subject size and bone-length variation."""
    rng = child_rng(seed, 1, subject)
    size = rng.uniform(0.85, 1.15)
    bone_scale = rng.uniform(0.95, 1.05, size=NUM_JOINTS + 1)
    rest = {k: np.array(v) for k, v in REST_POSE.items()}
    pose = np.zeros((NUM_JOINTS, 3))

    def place(j):
        for child, parent in PARENT.items():
            if parent == j:
                pose[child - 1] = pose[j - 1] + size * bone_scale[child] * (rest[child] - rest[j])
                place(child)

    pose[0] = rest[1]
    place(1)
    return pose


def animate(pose: np.ndarray, parts, freq: float, frames: int, phase: float, amplitude: float) -> np.ndarray:
    """(frames, 25, 3) body-frame trajectory."""
    out = np.repeat(pose[None], frames, axis=0)
    t = np.arange(frames) / frames
    activation = amplitude * 0.5 * (1.0 - np.cos(2 * math.pi * freq * t + phase))
    for part in parts:
        for pivot, moved, axis, peak in PART_MOTIONS[part]:
            if moved is None:
                moved = [j for j in _subtree(pivot) if j != pivot]
            idx = np.array(moved) - 1
            for f in range(frames):
                R = _axis_rotation(axis, peak * activation[f])
                origin = out[f, pivot - 1]
                out[f, idx] = (out[f, idx] - origin) @ R.T + origin
    return out


def camera_transform(camera: int, setup: int, replication: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Rotation R and translation t taking body-frame points to camera space: p_cam = R p + t."""
    cam = camera_setup(setup)
    facing = math.radians(SUBJECT_FACING_DEG if replication == 1 else -SUBJECT_FACING_DEG)
    body_to_world = _axis_rotation("y", facing)
    az = math.radians(CAMERA_AZIMUTH_DEG[camera])
    cam_pos = np.array([cam.distance * math.sin(az), cam.height, cam.distance * math.cos(az)])
    target = np.array([0.0, HIP_HEIGHT, 0.0])
    forward = target - cam_pos
    forward /= np.linalg.norm(forward)
    left = np.cross([0.0, 1.0, 0.0], forward)
    left /= np.linalg.norm(left)
    up = np.cross(forward, left)
    world_to_cam = np.vstack([left, up, forward])
    R = world_to_cam @ body_to_world
    t = world_to_cam @ (np.array([0.0, HIP_HEIGHT, 0.0]) - cam_pos)
    return R, t


def sample_meta(action: int, subject: int, camera: int, spec: SynthSpec) -> SampleMeta:
    setup = 1 + (subject - 1) % spec.setups
    return SampleMeta(setup=setup, camera=camera, performer=subject, replication=1, action=action + 1)


def _blob(frames: int, rng) -> list[BodyFrame]:
    """A static, wide and flat 'table' the tracker mistook for a body."""
    pts = np.column_stack(
        [rng.uniform(-0.6, 0.6, NUM_JOINTS), rng.uniform(-0.1, 0.1, NUM_JOINTS), rng.uniform(2.5, 3.0, NUM_JOINTS)]
    )
    pts[0] = (-0.6, 0.0, 2.7)
    pts[1] = (0.6, 0.0, 2.7)
    return [BodyFrame(BLOB_BODY_ID, pts, np.ones(NUM_JOINTS, bool)) for _ in range(frames)]


def generate_sequence(action: int, subject: int, camera: int, spec: SynthSpec) -> SkeletonSequence:
    """Sequence for 0-based class ``action``, 1-based subject and camera."""
    if not 0 <= action < spec.classes:
        raise ValueError(f"class {action} out of range for {spec.classes} classes")
    meta = sample_meta(action, subject, camera, spec)
    motion_rng = child_rng(spec.seed, 2, action, subject)
    phase = motion_rng.uniform(-0.5, 0.5)
    amplitude = motion_rng.uniform(0.8, 1.2)
    freq_jitter = motion_rng.uniform(0.95, 1.05)
    parts, freq = class_signature(action)
    body = animate(subject_pose(subject, spec.seed), parts, freq * freq_jitter, spec.frames, phase, amplitude)

    R, t = camera_transform(camera, meta.setup, meta.replication)
    cam = body @ R.T + t
    noise_rng = child_rng(spec.seed, 3, action, subject, camera)
    if spec.noise > 0:
        cam = cam + noise_rng.normal(0.0, spec.noise, size=cam.shape)

    body_id = BODY_ID_BASE + subject
    tracked = np.ones(NUM_JOINTS, bool)
    frames = [[BodyFrame(body_id, cam[f], tracked)] for f in range(spec.frames)]
    if spec.distractor_rate > 0 and noise_rng.random() < spec.distractor_rate:
        for frame, blob in zip(frames, _blob(spec.frames, noise_rng)):
            frame.insert(0, blob)
    return SkeletonSequence(meta, tuple(tuple(f) for f in frames))


def iter_samples(spec: SynthSpec):
    for subject in range(1, spec.subjects + 1):
        for camera in range(1, spec.cameras + 1):
            for action in range(spec.classes):
                yield action, subject, camera


def generate_catalog(spec: SynthSpec, out_dir: str | os.PathLike) -> Catalog:
    """Write one sequence file per (subject, camera, class) plus ``catalog.txt``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for action, subject, camera in iter_samples(spec):
        seq = generate_sequence(action, subject, camera, spec)
        path = out / f"{seq.sample_id}{SEQUENCE_SUFFIX}"
        save_sequence(seq, path)
        entries.append(CatalogEntry(seq.sample_id, seq.meta, str(path)))
    catalog = Catalog(entries)
    save_catalog(catalog, out / "catalog.txt")
    return catalog
