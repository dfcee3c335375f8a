"""Skeleton sequences, sample identities, camera setups and catalogs.

Joints are numbered 1..25 in everything a user reads or writes (file
format, grouping tables, error messages). Arrays are indexed 0..24, so
joint ``k`` lives at row ``k - 1``.

Canonical sequence file (UTF-8 text)::

    NTUSKEL 1
    S001C002P003R002A013
    frames 2
    frame 0 bodies 1
    body 72057594037931101 tracked 1 1 1 ... (25 flags)
    j 1 0.1 0.2 3.1
    ...
    j 25 ...

Coordinates are written with ``repr(float)``, which is the shortest
decimal string that round-trips to the same double.
"""
from __future__ import annotations

import io
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

NUM_JOINTS = 25
MAGIC = "NTUSKEL 1"
SEQUENCE_SUFFIX = ".skel"

JOINT_NAMES = (
    "base of the spine",
    "middle of the spine",
    "neck",
    "head",
    "left shoulder",
    "left elbow",
    "left wrist",
    "left hand",
    "right shoulder",
    "right elbow",
    "right wrist",
    "right hand",
    "left hip",
    "left knee",
    "left ankle",
    "left foot",
    "right hip",
    "right knee",
    "right ankle",
    "right foot",
    "spine",
    "tip of the left hand",
    "left thumb",
    "tip of the right hand",
    "right thumb",
)

# (height m, distance m) of the three cameras for collection setups 1..17
_CAMERA_SETUPS = {
    1: (1.7, 3.5), 2: (1.7, 2.5), 3: (1.4, 2.5), 4: (1.2, 3.0),
    5: (1.2, 3.0), 6: (0.8, 3.5), 7: (0.5, 4.5), 8: (1.4, 3.5),
    9: (0.8, 2.0), 10: (1.8, 3.0), 11: (1.9, 3.0), 12: (2.0, 3.0),
    13: (2.1, 3.0), 14: (2.2, 3.0), 15: (2.3, 3.5), 16: (2.7, 3.5),
    17: (2.5, 3.0),
}

FIELD_RANGES = {
    "setup": (1, 17),
    "camera": (1, 3),
    "performer": (1, 40),
    "replication": (1, 2),
    "action": (1, 60),
}

_SAMPLE_ID_RE = re.compile(r"^S(\d{3})C(\d{3})P(\d{3})R(\d{3})A(\d{3})$")


class SkeletonFormatError(ValueError):
    """Malformed sample id, sequence file or catalog listing."""


@dataclass(frozen=True)
class SampleMeta:
    setup: int
    camera: int
    performer: int
    replication: int
    action: int

    def __post_init__(self):
        for name, (lo, hi) in FIELD_RANGES.items():
            value = getattr(self, name)
            if not lo <= value <= hi:
                raise SkeletonFormatError(f"{name} {value} out of range [{lo}, {hi}]")

    @property
    def sample_id(self) -> str:
        return format_sample_id(self)

    @property
    def label(self) -> int:
        """0-based class index."""
        return self.action - 1


def format_sample_id(meta: SampleMeta) -> str:
    return (
        f"S{meta.setup:03d}C{meta.camera:03d}P{meta.performer:03d}"
        f"R{meta.replication:03d}A{meta.action:03d}"
    )


def parse_sample_id(text: str) -> SampleMeta:
    m = _SAMPLE_ID_RE.match(text.strip())
    if m is None:
        raise SkeletonFormatError(f"malformed sample id {text!r}")
    return SampleMeta(*(int(g) for g in m.groups()))


@dataclass(frozen=True)
class CameraSetup:
    setup_no: int
    height: float
    distance: float


def camera_setup(setup_no: int) -> CameraSetup:
    if setup_no not in _CAMERA_SETUPS:
        raise SkeletonFormatError(f"setup {setup_no} out of range [1, 17]")
    height, distance = _CAMERA_SETUPS[setup_no]
    return CameraSetup(setup_no, height, distance)


@dataclass(frozen=True)
class Joint:
    position: tuple[float, float, float]
    tracked: bool


@dataclass(frozen=True, eq=False)
class BodyFrame:
    """One tracked body in one frame.

    ``positions`` is (25, 3) in meters, camera coordinates; ``tracked`` is a
    (25,) bool mask.
    """

    body_id: int
    positions: np.ndarray
    tracked: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64)
        trk = np.array(self.tracked, dtype=bool).reshape(-1)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise SkeletonFormatError(f"joint positions must be (25, 3), got {pos.shape}")
        if pos.shape[0] != NUM_JOINTS or trk.shape[0] != NUM_JOINTS:
            raise SkeletonFormatError(f"expected {NUM_JOINTS} joints, got {pos.shape[0]}")
        if not np.all(np.isfinite(pos[trk])):
            raise SkeletonFormatError(f"body {self.body_id}: non-finite tracked joint")
        pos.flags.writeable = False
        trk.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "tracked", trk)

    def joint(self, k: int) -> Joint:
        """Joint ``k`` using 1-based numbering."""
        if not 1 <= k <= NUM_JOINTS:
            raise IndexError(f"joint {k} out of range 1..{NUM_JOINTS}")
        x, y, z = self.positions[k - 1]
        return Joint((float(x), float(y), float(z)), bool(self.tracked[k - 1]))

    def with_positions(self, positions: np.ndarray) -> "BodyFrame":
        return BodyFrame(self.body_id, positions, self.tracked)

    def __eq__(self, other):
        if not isinstance(other, BodyFrame):
            return NotImplemented
        return (
            self.body_id == other.body_id
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.tracked, other.tracked)
        )


@dataclass(frozen=True)
class SkeletonSequence:
    """Frames in capture order; each frame is a tuple of zero or more bodies."""

    meta: SampleMeta
    frames: tuple[tuple[BodyFrame, ...], ...]

    def __post_init__(self):
        frames = tuple(tuple(f) for f in self.frames)
        if not frames:
            raise SkeletonFormatError(f"{self.meta.sample_id}: sequence has no frames")
        object.__setattr__(self, "frames", frames)

    @property
    def sample_id(self) -> str:
        return self.meta.sample_id

    def __len__(self) -> int:
        return len(self.frames)

    def body_ids(self) -> list[int]:
        """Body ids in order of first appearance."""
        seen: dict[int, None] = {}
        for frame in self.frames:
            for body in frame:
                seen.setdefault(body.body_id, None)
        return list(seen)

    def track(self, body_id: int) -> list[BodyFrame | None]:
        """Per-frame view of one body (None where it is absent)."""
        out = []
        for frame in self.frames:
            match = None
            for body in frame:
                if body.body_id == body_id:
                    match = body
                    break
            out.append(match)
        return out

    def map_bodies(self, fn) -> "SkeletonSequence":
        return SkeletonSequence(self.meta, tuple(tuple(fn(b) for b in f) for f in self.frames))


def fill_untracked(positions: np.ndarray, tracked: np.ndarray) -> np.ndarray:
    """Give untracked joints of one body track finite coordinates.

    ``positions`` is (F, 25, 3) and ``tracked`` (F, 25). An untracked joint
    takes the last finite position of that joint seen earlier in the track,
    or the origin if there is none.
    """
    out = np.array(positions, dtype=np.float64)
    tracked = np.asarray(tracked, dtype=bool)
    bad = ~np.all(np.isfinite(out), axis=-1)
    if np.any(bad & tracked):
        raise SkeletonFormatError("non-finite coordinates on a tracked joint")
    last = np.zeros((NUM_JOINTS, 3))
    for f in range(out.shape[0]):
        out[f, bad[f]] = last[bad[f]]
        last = out[f].copy()
    return out


# ---------------------------------------------------------------------------
# sequence files


def write_sequence(seq: SkeletonSequence, stream: TextIO) -> None:
    lines = [MAGIC, seq.sample_id, f"frames {len(seq.frames)}"]
    for idx, frame in enumerate(seq.frames):
        lines.append(f"frame {idx} bodies {len(frame)}")
        for body in frame:
            if not np.all(np.isfinite(body.positions)):
                raise SkeletonFormatError(
                    f"{seq.sample_id}: frame {idx} body {body.body_id} has non-finite coordinates"
                )
            flags = " ".join("1" if t else "0" for t in body.tracked)
            lines.append(f"body {body.body_id} tracked {flags}")
            for k, (x, y, z) in enumerate(body.positions.tolist(), start=1):
                lines.append(f"j {k} {x!r} {y!r} {z!r}")
    stream.write("\n".join(lines))
    stream.write("\n")


def sequence_to_text(seq: SkeletonSequence) -> str:
    buf = io.StringIO()
    write_sequence(seq, buf)
    return buf.getvalue()


class _Lines:
    def __init__(self, stream: TextIO, source: str):
        self._it = iter(stream)
        self.source = source
        self.lineno = 0

    def next(self, what: str) -> list[str]:
        for raw in self._it:
            self.lineno += 1
            line = raw.strip()
            if line:
                return line.split()
        raise SkeletonFormatError(f"{self.source}: truncated stream, expected {what}")

    def error(self, msg: str) -> SkeletonFormatError:
        return SkeletonFormatError(f"{self.source}:{self.lineno}: {msg}")


def _expect(lines: _Lines, keyword: str, nfields: int) -> list[str]:
    tok = lines.next(keyword)
    if tok[0] != keyword or len(tok) != nfields:
        raise lines.error(f"expected {keyword!r} record, got {' '.join(tok)!r}")
    return tok


def read_sequence(stream: TextIO, source: str = "<stream>") -> SkeletonSequence:
    lines = _Lines(stream, source)
    if " ".join(lines.next("magic")) != MAGIC:
        raise lines.error(f"missing {MAGIC!r} header")
    meta = parse_sample_id(lines.next("sample id")[0])
    nframes = int(_expect(lines, "frames", 2)[1])
    if nframes < 1:
        raise lines.error(f"{meta.sample_id}: sequence has no frames")
    frames = []
    for f in range(nframes):
        tok = lines.next(f"frame {f}")
        if len(tok) != 4 or tok[0] != "frame" or tok[2] != "bodies":
            raise lines.error(f"expected header of frame {f}")
        if int(tok[1]) != f:
            raise lines.error(f"frame index {tok[1]} out of order, expected {f}")
        bodies = []
        for _ in range(int(tok[3])):
            btok = lines.next(f"body record in frame {f}")
            if len(btok) < 3 or btok[0] != "body" or btok[2] != "tracked":
                raise lines.error(f"frame {f}: expected body record")
            flags = btok[3:]
            if len(flags) != NUM_JOINTS:
                raise lines.error(f"frame {f}: {len(flags)} joints, expected {NUM_JOINTS}")
            tracked = np.array([fl == "1" for fl in flags])
            pos = np.empty((NUM_JOINTS, 3))
            for k in range(1, NUM_JOINTS + 1):
                jtok = lines.next(f"joint {k} in frame {f}")
                if jtok[0] != "j":
                    raise lines.error(f"frame {f}: {k - 1} joints, expected {NUM_JOINTS}")
                if len(jtok) != 5 or int(jtok[1]) != k:
                    raise lines.error(f"frame {f}: bad joint record {' '.join(jtok)!r}")
                xyz = [float(v) for v in jtok[2:]]
                if not all(math.isfinite(v) for v in xyz):
                    raise lines.error(f"frame {f}: non-finite coordinate for joint {k}")
                pos[k - 1] = xyz
            bodies.append(BodyFrame(int(btok[1]), pos, tracked))
        frames.append(tuple(bodies))
    return SkeletonSequence(meta, tuple(frames))


def sequence_from_text(text: str) -> SkeletonSequence:
    return read_sequence(io.StringIO(text))


def save_sequence(seq: SkeletonSequence, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_sequence(seq, fh)


def load_sequence(path: str | os.PathLike) -> SkeletonSequence:
    with open(path, encoding="utf-8") as fh:
        return read_sequence(fh, source=str(path))


# ---------------------------------------------------------------------------
# catalogs


@dataclass(frozen=True)
class CatalogEntry:
    sample_id: str
    meta: SampleMeta
    path: str


@dataclass
class Catalog:
    entries: list[CatalogEntry]
    rejects: list[str] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.sample_id in seen:
                raise SkeletonFormatError(f"duplicate sample id {e.sample_id}")
            seen.add(e.sample_id)
        self._by_id = {e.sample_id: e for e in self.entries}

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, sample_id: str) -> CatalogEntry:
        return self._by_id[sample_id]

    def __contains__(self, sample_id) -> bool:
        return sample_id in self._by_id

    @property
    def ids(self) -> list[str]:
        return [e.sample_id for e in self.entries]

    def subset(self, ids: Iterable[str]) -> "Catalog":
        return Catalog([self._by_id[i] for i in ids])


def catalog_from_names(names: Iterable[tuple[str, str]]) -> Catalog:
    """Build a catalog from (name, path) pairs; bad names go to ``rejects``."""
    entries, rejects = [], []
    for name, path in names:
        try:
            meta = parse_sample_id(name)
        except SkeletonFormatError:
            rejects.append(name)
            continue
        entries.append(CatalogEntry(format_sample_id(meta), meta, path))
    return Catalog(entries, rejects)


def read_listing(stream: TextIO, base: str | os.PathLike | None = None) -> Catalog:
    """Parse a ``<sample_id> <path>`` listing; relative paths resolve against ``base``."""
    pairs = []
    for raw in stream:
        tok = raw.split()
        if not tok or tok[0].startswith("#"):
            continue
        if len(tok) != 2:
            pairs.append((raw.strip(), ""))
            continue
        name, path = tok
        if base is not None and not os.path.isabs(path):
            path = os.path.join(base, path)
        pairs.append((name, path))
    return catalog_from_names(pairs)


def load_catalog(source: str | os.PathLike | TextIO) -> Catalog:
    """Load a catalog from a directory of ``*.skel`` files, a listing file,
    or an open listing stream."""
    if hasattr(source, "read"):
        return read_listing(source)
    p = Path(source)
    if p.is_dir():
        files = sorted(q for q in p.iterdir() if q.suffix == SEQUENCE_SUFFIX)
        return catalog_from_names((q.stem, str(q)) for q in files)
    with open(p, encoding="utf-8") as fh:
        return read_listing(fh, base=p.parent)


def write_listing(catalog: Catalog, stream: TextIO, base: str | os.PathLike | None = None) -> None:
    for e in catalog:
        path = os.path.relpath(e.path, base) if base is not None else e.path
        stream.write(f"{e.sample_id} {path}\n")


def save_catalog(catalog: Catalog, path: str | os.PathLike) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_listing(catalog, fh, base=path.parent)
