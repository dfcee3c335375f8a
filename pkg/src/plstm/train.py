"""Segment sampling, validation holdout and the SGD training loop."""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import Checkpoint, NetworkParams, NetworkSpec, backward, forward, init_params
from .numerics import child_rng
from .preprocess import PartGrouping, build_part_inputs, default_part_grouping, main_actor
from .skeleton import Catalog, SkeletonFormatError, load_sequence

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainingConfig:
    steps: int = 8
    epochs: int = 300
    batch_size: int = 64
    learning_rate: float = 0.02
    momentum: float = 0.9
    clip_norm: float = 5.0
    lr_decay: float = 0.5
    lr_decay_every: int = 100
    validation_fraction: float = 0.05
    dropout: float = 0.5
    selection_tiebreak: str = "val_loss"
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0.0 <= self.validation_fraction < 0.5:
            raise ValueError("validation fraction must lie in [0, 0.5)")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")
        if self.selection_tiebreak not in ("val_loss", "earliest"):
            raise ValueError(f"unknown selection tie-break {self.selection_tiebreak!r}")

    def learning_rate_at(self, epoch: int) -> float:
        """Rate for 0-based ``epoch``."""
        if self.lr_decay_every <= 0:
            return self.learning_rate
        return self.learning_rate * self.lr_decay ** (epoch // self.lr_decay_every)


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` document; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


# ---------------------------------------------------------------------------
# sampling and splits


def segment_bounds(n: int, steps: int) -> list[tuple[int, int]]:
    return [(k * n // steps, (k + 1) * n // steps) for k in range(steps)]


def sample_frame_indices(n: int, steps: int, rng=None) -> np.ndarray:
    """One frame per equal temporal segment.

    With ``rng`` the frame is drawn uniformly inside each segment,
    otherwise the segment's middle frame is used. Segments that are empty
    (n < steps) fall back to their start index clamped to the last frame.
    """
    if n < 1:
        raise ValueError("cannot sample from an empty sequence")
    out = np.empty(steps, dtype=int)
    for k, (lo, hi) in enumerate(segment_bounds(n, steps)):
        if hi <= lo:
            out[k] = min(lo, n - 1)
        elif rng is None:
            out[k] = lo + (hi - lo) // 2
        else:
            out[k] = rng.integers(lo, hi)
    return out


def holdout_split(ids, fraction: float, seed: int) -> tuple[list, list]:
    """Seeded shuffle, then the first round(fraction * n) ids go to validation.

    Both returned lists keep the input order.
    """
    if not 0.0 <= fraction < 0.5:
        raise ValueError("validation fraction must lie in [0, 0.5)")
    ids = list(ids)
    n_val = int(math.floor(fraction * len(ids) + 0.5))
    order = child_rng(seed, 7).permutation(len(ids))
    val = set(order[:n_val].tolist())
    return [x for i, x in enumerate(ids) if i not in val], [x for i, x in enumerate(ids) if i in val]


# ---------------------------------------------------------------------------
# data


@dataclass
class Sample:
    sample_id: str
    label: int
    frames: np.ndarray  # (N, input)


def sample_from_sequence(seq, grouping: PartGrouping | None = None, two_actor: bool = False) -> Sample:
    """Build network inputs from an already normalized sequence."""
    actor = main_actor(seq)
    inputs = build_part_inputs(seq, actor, grouping or default_part_grouping(), two_actor=two_actor)
    if len(inputs.vectors) == 0:
        raise TrainingError(f"{seq.sample_id}: main actor absent from every frame")
    return Sample(seq.sample_id, seq.meta.label, inputs.vectors)


def load_samples(catalog: Catalog, ids=None, grouping=None, two_actor: bool = False) -> list[Sample]:
    ids = catalog.ids if ids is None else ids
    out = []
    for i in ids:
        try:
            seq = load_sequence(catalog[i].path)
        except OSError as exc:
            raise SkeletonFormatError(f"{i}: cannot read sequence file ({exc})") from None
        out.append(sample_from_sequence(seq, grouping, two_actor))
    return out


def batch_inputs(samples, steps: int, rng=None) -> np.ndarray:
    """Stack sampled frames into a (steps, B, input) array."""
    return np.stack([s.frames[sample_frame_indices(len(s.frames), steps, rng)] for s in samples], axis=1)


def predict_log_scores(spec: NetworkSpec, params: NetworkParams, samples, steps: int) -> np.ndarray:
    """Mean over time of log class probabilities, deterministic sampling. (B, K)"""
    X = batch_inputs(samples, steps)
    return forward(spec, params, X).log_probs.mean(axis=0)


def predict(spec, params, samples, steps: int) -> np.ndarray:
    if not samples:
        return np.zeros(0, dtype=int)
    return np.argmax(predict_log_scores(spec, params, samples, steps), axis=1)


def error_rate(spec, params, samples, steps: int) -> float:
    if not samples:
        return float("nan")
    pred = predict(spec, params, samples, steps)
    return float(np.mean(pred != np.array([s.label for s in samples])))


# ---------------------------------------------------------------------------
# optimisation


def global_norm(grads: NetworkParams) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.named().values()))


def clip_gradients(grads: NetworkParams, max_norm: float) -> float:
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.named().values():
            g *= scale
    return norm


def sgd_momentum_step(params: NetworkParams, grads: NetworkParams, velocity: NetworkParams, lr: float, momentum: float):
    """``v <- momentum * v + g``, ``w <- w - lr * v``, in place."""
    pv, gv, vv = params.named(), grads.named(), velocity.named()
    for k, w in pv.items():
        v = vv[k]
        v *= momentum
        v += gv[k]
        w -= lr * v


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_error: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    selected_epoch: int = -1
    checkpoint: Checkpoint | None = None
    train_ids: list[str] = field(default_factory=list)
    val_ids: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        lines = ["epoch train_loss val_error val_loss"]
        for e, (loss, err, vl) in enumerate(zip(self.train_loss, self.val_error, self.val_loss), start=1):
            lines.append(f"{e} {loss:.6f} {err:.6f} {vl:.6f}")
        lines.append(f"# selected_epoch {self.selected_epoch}")
        return "\n".join(lines) + "\n"


def validation_scores(spec, params, samples, steps: int) -> tuple[float, float]:
    """(error rate, mean per-sample loss) under deterministic sampling."""
    if not samples:
        return float("nan"), float("nan")
    cache = forward(spec, params, batch_inputs(samples, steps))
    labels = np.array([s.label for s in samples])
    pred = np.argmax(cache.log_probs.mean(axis=0), axis=1)
    return float(np.mean(pred != labels)), float(cache.sample_losses(labels).mean())


def _selection_key(err: float, loss: float, epoch: int, tiebreak: str):
    if tiebreak == "val_loss":
        return (err, loss, epoch)
    return (err, epoch)


def train(spec: NetworkSpec, samples: list[Sample], config: TrainingConfig, two_actor: bool = False) -> TrainReport:
    """Minibatch SGD with momentum, model selection on the validation set.

    The kept epoch has the lowest validation error. Ties are broken by
    validation loss and then by epoch (``selection_tiebreak="val_loss"``),
    or by epoch alone (``"earliest"``). Without a validation set the last
    epoch is kept.
    """
    if not samples:
        raise TrainingError("empty training set")
    spec = dataclasses.replace(spec, dropout=config.dropout)
    train_ids, val_ids = holdout_split([s.sample_id for s in samples], config.validation_fraction, config.seed)
    by_id = {s.sample_id: s for s in samples}
    train_set = [by_id[i] for i in train_ids]
    val_set = [by_id[i] for i in val_ids]
    if any(s.label >= spec.classes for s in samples):
        raise TrainingError(f"label outside the network's {spec.classes} classes")

    params = init_params(spec, config.seed)
    velocity = params.zeros_like()
    rng = child_rng(config.seed, 1)
    report = TrainReport(train_ids=train_ids, val_ids=val_ids)
    best_key, best = None, None
    n = len(train_set)

    for epoch in range(config.epochs):
        lr = config.learning_rate_at(epoch)
        order = rng.permutation(n)
        total = 0.0
        for mb, start in enumerate(range(0, n, config.batch_size)):
            batch = [train_set[i] for i in order[start : start + config.batch_size]]
            X = batch_inputs(batch, config.steps, rng)
            labels = np.array([s.label for s in batch])
            cache = forward(spec, params, X, train=True, rng=rng)
            loss = cache.loss(labels)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss in epoch {epoch + 1}, minibatch {mb + 1}")
            total += loss
            grads = backward(spec, params, cache, labels).map(lambda g: g / len(batch))
            clip_gradients(grads, config.clip_norm)
            sgd_momentum_step(params, grads, velocity, lr, config.momentum)
        report.train_loss.append(total / n)
        err, vloss = validation_scores(spec, params, val_set, config.steps)
        report.val_error.append(err)
        report.val_loss.append(vloss)
        log.info("epoch %d loss %.4f val_error %.4f val_loss %.4f", epoch + 1, total / n, err, vloss)
        if val_set:
            key = _selection_key(err, vloss, epoch, config.selection_tiebreak)
            if best_key is None or key < best_key:
                best_key, best = key, (epoch, params.copy())
        else:
            best = (epoch, params)
    report.selected_epoch = best[0] + 1
    report.checkpoint = Checkpoint(spec, best[1].copy(), config.steps, two_actor)
    return report
