"""Cross-subject / cross-view protocols, classification and scoring."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Checkpoint
from .skeleton import Catalog, SkeletonFormatError
from .train import Sample, load_samples, predict_log_scores

CROSS_SUBJECT = "cross-subject"
CROSS_VIEW = "cross-view"
PROTOCOLS = (CROSS_SUBJECT, CROSS_VIEW)

TRAINING_SUBJECTS = frozenset(
    (1, 2, 4, 5, 8, 9, 13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34, 35, 38)
)
TEST_CAMERAS = frozenset((1,))

FULL_CATALOG_SIZE = 56_880
FULL_CATALOG_COUNTS = {CROSS_SUBJECT: (40_320, 16_560), CROSS_VIEW: (37_920, 18_960)}


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class Split:
    name: str
    train: tuple[str, ...]
    test: tuple[str, ...]


def _make_split(name: str, catalog: Catalog, is_train) -> Split:
    train = tuple(e.sample_id for e in catalog if is_train(e.meta))
    test = tuple(e.sample_id for e in catalog if not is_train(e.meta))
    if not train or not test:
        raise SplitError(f"{name}: empty {'training' if not train else 'test'} side")
    if len(catalog) == FULL_CATALOG_SIZE:
        expected = FULL_CATALOG_COUNTS[name]
        if (len(train), len(test)) != expected:
            raise SplitError(
                f"{name}: full catalog gives {len(train)}/{len(test)} samples, expected {expected[0]}/{expected[1]}"
            )
    return Split(name, train, test)


def cross_subject_split(catalog: Catalog) -> Split:
    return _make_split(CROSS_SUBJECT, catalog, lambda m: m.performer in TRAINING_SUBJECTS)


def cross_view_split(catalog: Catalog) -> Split:
    return _make_split(CROSS_VIEW, catalog, lambda m: m.camera not in TEST_CAMERAS)


def make_split(catalog: Catalog, protocol: str) -> Split:
    if protocol == CROSS_SUBJECT:
        return cross_subject_split(catalog)
    if protocol == CROSS_VIEW:
        return cross_view_split(catalog)
    raise SplitError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")


def split_to_text(split: Split) -> str:
    lines = [f"# {split.name} train {len(split.train)} test {len(split.test)}"]
    lines += [f"train {i}" for i in split.train]
    lines += [f"test {i}" for i in split.test]
    return "\n".join(lines) + "\n"


def classify(ckpt: Checkpoint, sample: Sample) -> int:
    """Class maximizing the time-averaged log-probability (lowest index on ties)."""
    scores = predict_log_scores(ckpt.spec, ckpt.params, [sample], ckpt.steps)[0]
    return int(np.argmax(scores))


@dataclass
class EvalResult:
    protocol: str
    confusion: np.ndarray  # rows: true class, cols: predicted

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.total) if self.total else 0.0

    @property
    def per_class_accuracy(self) -> np.ndarray:
        rows = self.confusion.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, np.diag(self.confusion) / np.maximum(rows, 1), np.nan)

    def to_text(self) -> str:
        lines = [f"{self.protocol} accuracy {100 * self.accuracy:.2f}"]
        lines += [" ".join(str(int(v)) for v in row) for row in self.confusion]
        return "\n".join(lines) + "\n"


def confusion_matrix(labels, predictions, classes: int) -> np.ndarray:
    cm = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels, dtype=int), np.asarray(predictions, dtype=int)), 1)
    return cm


def evaluate_samples(ckpt: Checkpoint, samples: list[Sample], protocol: str = "") -> EvalResult:
    K = ckpt.spec.classes
    if samples:
        preds = np.argmax(predict_log_scores(ckpt.spec, ckpt.params, samples, ckpt.steps), axis=1)
    else:
        preds = np.zeros(0, dtype=int)
    return EvalResult(protocol, confusion_matrix([s.label for s in samples], preds, K))


def evaluate(ckpt: Checkpoint, split: Split, catalog: Catalog, grouping=None) -> EvalResult:
    """Score the checkpoint on the split's test side."""
    missing = [i for i in split.test if i not in catalog]
    if missing:
        raise SkeletonFormatError(f"missing sequence for {missing[0]}")
    samples = load_samples(catalog, split.test, grouping, two_actor=ckpt.two_actor)
    return evaluate_samples(ckpt, samples, split.name)
