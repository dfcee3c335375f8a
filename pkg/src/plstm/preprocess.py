"""Skeleton preprocessing: noisy-body filter, main actor, body-frame
normalization and per-part input vectors."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .skeleton import NUM_JOINTS, BodyFrame, SkeletonSequence

# 1-based joint numbers used to build the body frame
SPINE_BASE, SPINE_MID, LEFT_SHOULDER, RIGHT_SHOULDER, SPINE = 1, 2, 5, 9, 21
REFERENCE_JOINTS = (SPINE_BASE, SPINE_MID, LEFT_SHOULDER, RIGHT_SHOULDER, SPINE)

NOISE_SPREAD_RATIO = 0.8
BASIS_EPS = 1e-6

PART_NAMES = ("torso", "left arm", "right arm", "left leg", "right leg")
DEFAULT_PARTS = (
    (1, 2, 3, 4, 21),
    (5, 6, 7, 8, 22, 23),
    (9, 10, 11, 12, 24, 25),
    (13, 14, 15, 16),
    (17, 18, 19, 20),
)


class PreprocessError(ValueError):
    """A sequence cannot be normalized (no usable actor or reference frame)."""


# ---------------------------------------------------------------------------
# noise filter and main actor


def body_spreads(seq: SkeletonSequence) -> dict[int, tuple[float, float]]:
    """(X spread, Y spread) of each body's tracked joints over the whole sequence."""
    lo: dict[int, np.ndarray] = {}
    hi: dict[int, np.ndarray] = {}
    for frame in seq.frames:
        for body in frame:
            lo.setdefault(body.body_id, np.full(2, np.inf))
            hi.setdefault(body.body_id, np.full(2, -np.inf))
            pts = body.positions[body.tracked, :2]
            if len(pts):
                lo[body.body_id] = np.minimum(lo[body.body_id], pts.min(axis=0))
                hi[body.body_id] = np.maximum(hi[body.body_id], pts.max(axis=0))
    out = {}
    for bid in lo:
        if np.isfinite(lo[bid][0]):
            sx, sy = hi[bid] - lo[bid]
        else:
            sx = sy = 0.0
        out[bid] = (float(sx), float(sy))
    return out


def filter_noisy_bodies(seq: SkeletonSequence, ratio: float = NOISE_SPREAD_RATIO) -> list[int]:
    """Ids of bodies that survive the spread test, in order of first appearance.

    A body is dropped when its X spread exceeds ``ratio`` times its Y
    spread; furniture picked up by the tracker is wide and flat.
    """
    spreads = body_spreads(seq)
    return [bid for bid, (sx, sy) in spreads.items() if not sx > ratio * sy]


def motion_scores(seq: SkeletonSequence, body_ids=None) -> dict[int, float]:
    """Summed per-joint displacement between consecutive frames.

    Only frame pairs where the body is present in both frames count, and a
    joint contributes only when it is tracked in both.
    """
    if body_ids is None:
        body_ids = seq.body_ids()
    scores = {}
    for bid in body_ids:
        total = 0.0
        prev = None
        for body in seq.track(bid):
            if body is not None and prev is not None:
                both = body.tracked & prev.tracked
                d = np.linalg.norm(body.positions - prev.positions, axis=1)
                total += float(np.sum(d[both]))
            prev = body
        scores[bid] = total
    return scores


def main_actor(seq: SkeletonSequence, candidates=None) -> int:
    """Body with the largest motion score; ties go to the smallest id."""
    if candidates is None:
        candidates = seq.body_ids()
    candidates = list(candidates)
    if not candidates:
        raise PreprocessError(f"{seq.sample_id}: no surviving bodies")
    scores = motion_scores(seq, candidates)
    return min(candidates, key=lambda b: (-scores[b], b))


# ---------------------------------------------------------------------------
# body basis and normalization


@dataclass(frozen=True)
class BodyBasis:
    """Similarity transform into the body frame.

    ``rotation`` has the body axes as columns, so a camera-space point p
    maps to ``rotation.T @ (p - origin) / scale``.
    """

    origin: np.ndarray
    rotation: np.ndarray
    scale: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - self.origin) @ self.rotation / self.scale


def has_reference_joints(body: BodyFrame) -> bool:
    return all(body.tracked[k - 1] for k in REFERENCE_JOINTS)


def body_basis(body: BodyFrame) -> BodyBasis:
    for k in REFERENCE_JOINTS:
        if not body.tracked[k - 1]:
            raise PreprocessError(f"body {body.body_id}: reference joint {k} not tracked")
    p = body.positions
    shoulders = p[LEFT_SHOULDER - 1] - p[RIGHT_SHOULDER - 1]
    spine = p[SPINE - 1] - p[SPINE_BASE - 1]
    ns, nv = np.linalg.norm(shoulders), np.linalg.norm(spine)
    if ns < BASIS_EPS:
        raise PreprocessError(f"body {body.body_id}: degenerate shoulder vector")
    if nv < BASIS_EPS:
        raise PreprocessError(f"body {body.body_id}: degenerate spine vector")
    x = shoulders / ns
    y = spine - np.dot(spine, x) * x
    ny = np.linalg.norm(y)
    if ny < BASIS_EPS * nv:
        raise PreprocessError(f"body {body.body_id}: spine parallel to shoulders")
    y = y / ny
    z = np.cross(x, y)
    return BodyBasis(p[SPINE_MID - 1].copy(), np.column_stack([x, y, z]), float(nv))


def reference_frame_index(seq: SkeletonSequence, body_id: int) -> int:
    for idx, body in enumerate(seq.track(body_id)):
        if body is not None and has_reference_joints(body):
            return idx
    raise PreprocessError(f"{seq.sample_id}: body {body_id} never has all reference joints tracked")


def normalize_sequence(seq: SkeletonSequence, body_id: int, per_frame: bool = False) -> SkeletonSequence:
    """Map every body into the main actor's body frame.

    By default one basis, taken from the first frame where the main actor
    has all reference joints, is applied to the whole sequence. With
    ``per_frame`` each frame gets its own basis from the main actor in
    that frame (falling back to the most recent valid one).
    """
    if not per_frame:
        ref = seq.track(body_id)[reference_frame_index(seq, body_id)]
        basis = body_basis(ref)
        return seq.map_bodies(lambda b: b.with_positions(basis.apply(b.positions)))

    basis = body_basis(seq.track(body_id)[reference_frame_index(seq, body_id)])
    frames = []
    for frame, actor in zip(seq.frames, seq.track(body_id)):
        if actor is not None and has_reference_joints(actor):
            try:
                basis = body_basis(actor)
            except PreprocessError:
                pass
        frames.append(tuple(b.with_positions(basis.apply(b.positions)) for b in frame))
    return SkeletonSequence(seq.meta, tuple(frames))


@dataclass
class PreprocessResult:
    sequence: SkeletonSequence
    main_body: int
    dropped_bodies: list[int] = field(default_factory=list)


def preprocess_sequence(seq: SkeletonSequence, per_frame: bool = False) -> PreprocessResult:
    """Filter noisy bodies, pick the main actor and normalize.

    The returned sequence keeps only surviving bodies.
    """
    keep = filter_noisy_bodies(seq)
    dropped = [b for b in seq.body_ids() if b not in keep]
    actor = main_actor(seq, keep)
    keep_set = set(keep)
    kept = SkeletonSequence(
        seq.meta, tuple(tuple(b for b in f if b.body_id in keep_set) for f in seq.frames)
    )
    return PreprocessResult(normalize_sequence(kept, actor, per_frame=per_frame), actor, dropped)


# ---------------------------------------------------------------------------
# part grouping and inputs


@dataclass(frozen=True)
class PartGrouping:
    """Partition of joints 1..25 into ordered body parts."""

    names: tuple[str, ...]
    parts: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        flat = [j for p in self.parts for j in p]
        if any(len(p) == 0 for p in self.parts):
            raise ValueError("empty body part")
        if sorted(flat) != list(range(1, NUM_JOINTS + 1)):
            raise ValueError("parts must cover joints 1..25 exactly once")
        if len(self.names) != len(self.parts):
            raise ValueError("one name per part required")

    @property
    def part_count(self) -> int:
        return len(self.parts)

    def assignment(self) -> dict[int, int]:
        return {j: p for p, joints in enumerate(self.parts) for j in joints}

    def part_dims(self, bodies: int = 1) -> tuple[int, ...]:
        return tuple(3 * len(p) * bodies for p in self.parts)


def default_part_grouping() -> PartGrouping:
    return PartGrouping(PART_NAMES, DEFAULT_PARTS)


def whole_body_grouping() -> PartGrouping:
    return PartGrouping(("body",), (tuple(range(1, NUM_JOINTS + 1)),))


@dataclass
class PartInputs:
    """Per-frame input vectors, parts concatenated in grouping order.

    ``vectors`` is (frames, sum(part_dims)); part p occupies the slice
    ``offsets[p]:offsets[p + 1]``.
    """

    vectors: np.ndarray
    part_dims: tuple[int, ...]
    skipped: int = 0

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.part_dims)])

    def part(self, t: int, p: int) -> np.ndarray:
        o = self.offsets
        return self.vectors[t, o[p]:o[p + 1]]


def _second_actor(seq: SkeletonSequence, body_id: int) -> int | None:
    others = [b for b in seq.body_ids() if b != body_id]
    if not others:
        return None
    return main_actor(seq, others)


def build_part_inputs(
    seq: SkeletonSequence,
    body_id: int,
    grouping: PartGrouping | None = None,
    two_actor: bool = False,
) -> PartInputs:
    """Concatenate each part's joint coordinates, ascending joint order.

    Frames where the main actor is absent are skipped. In two-actor mode
    each part vector is followed by the same part of the second most
    active body (zeros when it is absent), doubling every part dimension.
    """
    grouping = grouping or default_part_grouping()
    idx = [np.array(sorted(p)) - 1 for p in grouping.parts]
    second = _second_actor(seq, body_id) if two_actor else None
    main_track = seq.track(body_id)
    second_track = seq.track(second) if second is not None else [None] * len(seq)
    rows, skipped = [], 0
    for main, other in zip(main_track, second_track):
        if main is None:
            skipped += 1
            continue
        pieces = []
        for ix in idx:
            pieces.append(main.positions[ix].ravel())
            if two_actor:
                pieces.append(other.positions[ix].ravel() if other is not None else np.zeros(3 * len(ix)))
        rows.append(np.concatenate(pieces))
    dims = grouping.part_dims(2 if two_actor else 1)
    vectors = np.array(rows) if rows else np.zeros((0, sum(dims)))
    return PartInputs(vectors, dims, skipped)
