"""Stacked RNN, LSTM and part-aware LSTM classifiers with exact BPTT.

Shapes: time-major batches, ``X`` is (T, B, input). Every layer reads the
concatenation ``[x_t; h_{t-1}]`` through one packed weight matrix:

* rnn:   ``W`` (D, in + D); ``h = tanh(W [x; h] + b)``
* lstm:  ``W`` (4D, in + D), row blocks (i, f, o, g)
* plstm: per part ``W_p`` (3 d_p, in_p + D), row blocks (i, f, g), plus a
  shared output gate ``W_o`` (D, in + D). Part p owns the slice
  ``sum(d_<p) : sum(d_<=p)`` of the cell and hidden state.

Above the last layer ``y_t = softmax(V h_t + b)``. The loss of one
sample is the cross-entropy summed over time with the label held fixed.
For stacked part-aware nets, layer l > 1 sees the previous layer's
hidden vector split into the same d_p blocks as parts.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .numerics import DimensionError, log_softmax, seeded_rng, sigmoid

CELL_KINDS = ("rnn", "lstm", "plstm")
INIT_SCALE = 0.08


@dataclass(frozen=True)
class NetworkSpec:
    cell: str
    input_dims: tuple[int, ...]
    hidden: int
    classes: int
    layers: int = 1
    part_hidden: tuple[int, ...] | None = None
    dropout: float = 0.0
    bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "input_dims", tuple(int(d) for d in self.input_dims))
        if self.part_hidden is not None:
            object.__setattr__(self, "part_hidden", tuple(int(d) for d in self.part_hidden))
        if self.cell not in CELL_KINDS:
            raise ValueError(f"unknown cell kind {self.cell!r}; expected one of {CELL_KINDS}")
        if self.layers < 1:
            raise ValueError("need at least one layer")
        if self.hidden < 1 or self.classes < 1 or not self.input_dims or min(self.input_dims) < 1:
            raise ValueError("dimensions must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout rate {self.dropout} outside [0, 1)")
        if self.cell == "plstm":
            if self.part_hidden is None:
                raise ValueError("plstm needs part_hidden")
            if len(self.part_hidden) != len(self.input_dims):
                raise ValueError(
                    f"{len(self.part_hidden)} part hidden sizes for {len(self.input_dims)} input parts"
                )
            if sum(self.part_hidden) != self.hidden or min(self.part_hidden) < 1:
                raise ValueError(f"part hidden sizes {self.part_hidden} must be positive and sum to {self.hidden}")

    @property
    def input_size(self) -> int:
        return sum(self.input_dims)

    def layer_input_dims(self, layer: int) -> tuple[int, ...]:
        if layer == 0:
            return self.input_dims
        return self.part_hidden if self.cell == "plstm" else (self.hidden,)


# ---------------------------------------------------------------------------
# parameters


@dataclass
class RnnLayerParams:
    W: np.ndarray
    b: np.ndarray | None = None


@dataclass
class LstmLayerParams:
    W: np.ndarray
    b: np.ndarray | None = None


@dataclass
class PlstmLayerParams:
    part_W: list[np.ndarray]
    Wo: np.ndarray
    part_b: list[np.ndarray] | None = None
    bo: np.ndarray | None = None


@dataclass
class ClassifierParams:
    V: np.ndarray
    b: np.ndarray | None = None


@dataclass
class NetworkParams:
    layers: list
    classifier: ClassifierParams

    def named(self) -> dict[str, np.ndarray]:
        """Ordered name -> array mapping; arrays are shared, not copied."""
        out: dict[str, np.ndarray] = {}
        for l, layer in enumerate(self.layers):
            if isinstance(layer, PlstmLayerParams):
                for p, W in enumerate(layer.part_W):
                    out[f"l{l}.p{p}.W"] = W
                    if layer.part_b is not None:
                        out[f"l{l}.p{p}.b"] = layer.part_b[p]
                out[f"l{l}.Wo"] = layer.Wo
                if layer.bo is not None:
                    out[f"l{l}.bo"] = layer.bo
            else:
                out[f"l{l}.W"] = layer.W
                if layer.b is not None:
                    out[f"l{l}.b"] = layer.b
        out["out.V"] = self.classifier.V
        if self.classifier.b is not None:
            out["out.b"] = self.classifier.b
        return out

    def map(self, fn) -> "NetworkParams":
        """New params with ``fn`` applied to every array."""
        def conv(obj):
            if isinstance(obj, np.ndarray):
                return fn(obj)
            if isinstance(obj, list):
                return [conv(o) for o in obj]
            if obj is None:
                return None
            return type(obj)(**{f.name: conv(getattr(obj, f.name)) for f in fields(obj)})

        return NetworkParams([conv(l) for l in self.layers], conv(self.classifier))

    def copy(self) -> "NetworkParams":
        return self.map(np.copy)

    def zeros_like(self) -> "NetworkParams":
        return self.map(np.zeros_like)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.named().values()])

    def size(self) -> int:
        return sum(a.size for a in self.named().values())


def param_shapes(spec: NetworkSpec) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    D = spec.hidden
    for l in range(spec.layers):
        dims = spec.layer_input_dims(l)
        if spec.cell == "plstm":
            for p, (dx, dp) in enumerate(zip(dims, spec.part_hidden)):
                shapes[f"l{l}.p{p}.W"] = (3 * dp, dx + D)
                if spec.bias:
                    shapes[f"l{l}.p{p}.b"] = (3 * dp,)
            shapes[f"l{l}.Wo"] = (D, sum(dims) + D)
            if spec.bias:
                shapes[f"l{l}.bo"] = (D,)
        else:
            gates = 4 if spec.cell == "lstm" else 1
            shapes[f"l{l}.W"] = (gates * D, sum(dims) + D)
            if spec.bias:
                shapes[f"l{l}.b"] = (gates * D,)
    shapes["out.V"] = (spec.classes, D)
    if spec.bias:
        shapes["out.b"] = (spec.classes,)
    return shapes


def param_count(spec: NetworkSpec) -> int:
    """Number of trainable scalars, classifier included."""
    return sum(int(np.prod(s)) for s in param_shapes(spec).values())


def params_from_named(spec: NetworkSpec, named: dict[str, np.ndarray]) -> NetworkParams:
    shapes = param_shapes(spec)
    if set(named) != set(shapes):
        missing = sorted(set(shapes) - set(named))
        extra = sorted(set(named) - set(shapes))
        raise DimensionError(f"parameter names do not match spec (missing {missing}, unexpected {extra})")
    arrs = {}
    for k, shape in shapes.items():
        a = np.asarray(named[k], dtype=np.float64)
        if a.shape != shape:
            raise DimensionError(f"{k}: shape {a.shape}, spec requires {shape}")
        arrs[k] = a
    get = arrs.get
    layers = []
    for l in range(spec.layers):
        if spec.cell == "plstm":
            P = len(spec.input_dims)
            layers.append(
                PlstmLayerParams(
                    [arrs[f"l{l}.p{p}.W"] for p in range(P)],
                    arrs[f"l{l}.Wo"],
                    [arrs[f"l{l}.p{p}.b"] for p in range(P)] if spec.bias else None,
                    get(f"l{l}.bo"),
                )
            )
        elif spec.cell == "lstm":
            layers.append(LstmLayerParams(arrs[f"l{l}.W"], get(f"l{l}.b")))
        else:
            layers.append(RnnLayerParams(arrs[f"l{l}.W"], get(f"l{l}.b")))
    return NetworkParams(layers, ClassifierParams(arrs["out.V"], get("out.b")))


def init_params(spec: NetworkSpec, seed: int) -> NetworkParams:
    """Weights uniform in [-0.08, 0.08], biases zero, drawn in name order."""
    rng = seeded_rng(seed)
    named = {}
    for name, shape in param_shapes(spec).items():
        if name.endswith(".b") or name.endswith(".bo"):
            named[name] = np.zeros(shape)
        else:
            named[name] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
    return params_from_named(spec, named)


def check_params(spec: NetworkSpec, params: NetworkParams) -> None:
    shapes = param_shapes(spec)
    named = params.named()
    if set(named) != set(shapes):
        raise DimensionError("parameters do not match network spec")
    for k, a in named.items():
        if a.shape != shapes[k]:
            raise DimensionError(f"{k}: shape {a.shape}, spec requires {shapes[k]}")


# ---------------------------------------------------------------------------
# batched cell steps


def _affine(W, b, xh):
    z = xh @ W.T
    return z if b is None else z + b


def _join(x, h, W):
    if x.shape[-1] + h.shape[-1] != W.shape[1]:
        raise DimensionError(
            f"input {x.shape[-1]} + hidden {h.shape[-1]} does not match weights {W.shape}"
        )
    return np.concatenate([x, h], axis=-1)


def rnn_forward_step(layer: RnnLayerParams, x, h_prev):
    xh = _join(x, h_prev, layer.W)
    h = np.tanh(_affine(layer.W, layer.b, xh))
    return h, (xh, h)


def rnn_backward_step(layer: RnnLayerParams, grad: RnnLayerParams, cache, dh):
    xh, h = cache
    dz = dh * (1.0 - h * h)
    grad.W += dz.T @ xh
    if grad.b is not None:
        grad.b += dz.sum(axis=0)
    dxh = dz @ layer.W
    D = h.shape[-1]
    return dxh[:, :-D], dxh[:, -D:]


def lstm_forward_step(layer: LstmLayerParams, x, h_prev, c_prev):
    xh = _join(x, h_prev, layer.W)
    z = _affine(layer.W, layer.b, xh)
    D = h_prev.shape[-1]
    ifo = sigmoid(z[:, : 3 * D])
    i, f, o = ifo[:, :D], ifo[:, D : 2 * D], ifo[:, 2 * D :]
    g = np.tanh(z[:, 3 * D :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (xh, c_prev, i, f, o, g, tc)


def lstm_backward_step(layer: LstmLayerParams, grad: LstmLayerParams, cache, dh, dc):
    xh, c_prev, i, f, o, g, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    di = dc * g
    df = dc * c_prev
    dg = dc * i
    dz = np.concatenate(
        [di * i * (1.0 - i), df * f * (1.0 - f), do * o * (1.0 - o), dg * (1.0 - g * g)], axis=1
    )
    grad.W += dz.T @ xh
    if grad.b is not None:
        grad.b += dz.sum(axis=0)
    dxh = dz @ layer.W
    D = i.shape[-1]
    return dxh[:, :-D], dxh[:, -D:], dc * f


def _splits(dims):
    return np.concatenate([[0], np.cumsum(dims)]).astype(int)


def plstm_forward_step(layer: PlstmLayerParams, part_x, h_prev, part_c):
    if len(part_x) != len(layer.part_W) or len(part_c) != len(layer.part_W):
        raise DimensionError(
            f"{len(part_x)} part inputs / {len(part_c)} part cells for {len(layer.part_W)} parts"
        )
    x = np.concatenate(part_x, axis=-1)
    xh_all = _join(x, h_prev, layer.Wo)
    o = sigmoid(_affine(layer.Wo, layer.bo, xh_all))
    cs, part_caches = [], []
    for p, (W, xp, cp) in enumerate(zip(layer.part_W, part_x, part_c)):
        xh = _join(xp, h_prev, W)
        z = _affine(W, None if layer.part_b is None else layer.part_b[p], xh)
        d = cp.shape[-1]
        if z.shape[-1] != 3 * d:
            raise DimensionError(f"part {p}: weights give {z.shape[-1] // 3} units, cell has {d}")
        i = sigmoid(z[:, :d])
        f = sigmoid(z[:, d : 2 * d])
        g = np.tanh(z[:, 2 * d :])
        cs.append(f * cp + i * g)
        part_caches.append((xh, cp, i, f, g))
    c = np.concatenate(cs, axis=-1)
    tc = np.tanh(c)
    h = o * tc
    return h, cs, (xh_all, o, tc, part_caches)


def plstm_backward_step(layer: PlstmLayerParams, grad: PlstmLayerParams, cache, dh, dc):
    xh_all, o, tc, part_caches = cache
    D = o.shape[-1]
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    dzo = do * o * (1.0 - o)
    grad.Wo += dzo.T @ xh_all
    if grad.bo is not None:
        grad.bo += dzo.sum(axis=0)
    dxh_all = dzo @ layer.Wo
    dh_prev = dxh_all[:, -D:].copy()
    dx_parts, dc_prev = [], []
    off = 0
    for p, (xh, cp, i, f, g) in enumerate(part_caches):
        d = cp.shape[-1]
        dcp = dc[:, off : off + d]
        off += d
        dz = np.concatenate(
            [dcp * g * i * (1.0 - i), dcp * cp * f * (1.0 - f), dcp * i * (1.0 - g * g)], axis=1
        )
        grad.part_W[p] += dz.T @ xh
        if grad.part_b is not None:
            grad.part_b[p] += dz.sum(axis=0)
        dxh = dz @ layer.part_W[p]
        dx_parts.append(dxh[:, :-D])
        dh_prev += dxh[:, -D:]
        dc_prev.append(dcp * f)
    dx = dxh_all[:, :-D] + np.concatenate(dx_parts, axis=1)
    return dx, dh_prev, np.concatenate(dc_prev, axis=1)


# ---------------------------------------------------------------------------
# single-vector step API


def _row(v):
    return np.asarray(v, dtype=np.float64)[None, :]


def rnn_step(layer: RnnLayerParams, x, h_prev) -> np.ndarray:
    return rnn_forward_step(layer, _row(x), _row(h_prev))[0][0]


def lstm_step(layer: LstmLayerParams, x, h_prev, c_prev) -> tuple[np.ndarray, np.ndarray]:
    h, c, _ = lstm_forward_step(layer, _row(x), _row(h_prev), _row(c_prev))
    return h[0], c[0]


def plstm_step(layer: PlstmLayerParams, part_x, h_prev, part_c) -> tuple[np.ndarray, list[np.ndarray]]:
    h, cs, _ = plstm_forward_step(layer, [_row(x) for x in part_x], _row(h_prev), [_row(c) for c in part_c])
    return h[0], [c[0] for c in cs]


# ---------------------------------------------------------------------------
# whole-network forward / backward


@dataclass
class ForwardCache:
    spec: NetworkSpec
    batched: bool
    layer_inputs: list[np.ndarray]  # (T, B, in_l) after dropout
    input_masks: list[np.ndarray | None]
    step_caches: list[list]
    top: np.ndarray  # (T, B, D) after dropout
    top_mask: np.ndarray | None
    log_probs: np.ndarray  # (T, B, K)
    hidden: list[np.ndarray] = field(default_factory=list)

    @property
    def probs(self) -> np.ndarray:
        p = np.exp(self.log_probs)
        return p if self.batched else p[:, 0]

    def loss(self, labels) -> float:
        """Cross-entropy summed over time and batch."""
        lab = _labels(labels, self.log_probs.shape[1], self.spec.classes)
        T, B, _ = self.log_probs.shape
        return float(-self.log_probs[:, np.arange(B), lab].sum())

    def sample_losses(self, labels) -> np.ndarray:
        lab = _labels(labels, self.log_probs.shape[1], self.spec.classes)
        B = self.log_probs.shape[1]
        return -self.log_probs[:, np.arange(B), lab].sum(axis=0)


def _labels(labels, B, K):
    lab = np.broadcast_to(np.asarray(labels, dtype=int), (B,))
    if np.any(lab < 0) or np.any(lab >= K):
        raise IndexError(f"labels out of range for {K} classes")
    return lab


def _dropout_mask(rng, shape, rate):
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def forward(spec: NetworkSpec, params: NetworkParams, X, train: bool = False, rng=None) -> ForwardCache:
    """Run the network over ``X`` of shape (T, input) or (T, B, input).

    Dropout (inverted scaling) is active only when ``train`` is true and
    the spec's rate is positive; it hits the input of every layer above
    the first and the top hidden state before the classifier.
    """
    X = np.asarray(X, dtype=np.float64)
    batched = X.ndim == 3
    if not batched:
        X = X[:, None, :]
    if X.ndim != 3 or X.shape[0] < 1:
        raise DimensionError(f"expected (T, B, input) input with T >= 1, got {X.shape}")
    if X.shape[2] != spec.input_size:
        raise DimensionError(f"input size {X.shape[2]} does not match spec input {spec.input_size}")
    T, B, _ = X.shape
    D = spec.hidden
    use_dropout = train and spec.dropout > 0.0
    if use_dropout and rng is None:
        raise ValueError("dropout in training mode needs an rng")

    layer_inputs, masks, all_caches, hiddens = [], [], [], []
    U = X
    for l, layer in enumerate(params.layers):
        mask = None
        if l > 0 and use_dropout:
            mask = _dropout_mask(rng, U.shape, spec.dropout)
            U = U * mask
        layer_inputs.append(U)
        masks.append(mask)
        h = np.zeros((B, D))
        H = np.empty((T, B, D))
        caches = []
        if spec.cell == "rnn":
            for t in range(T):
                h, cache = rnn_forward_step(layer, U[t], h)
                H[t] = h
                caches.append(cache)
        elif spec.cell == "lstm":
            c = np.zeros((B, D))
            for t in range(T):
                h, c, cache = lstm_forward_step(layer, U[t], h, c)
                H[t] = h
                caches.append(cache)
        else:
            sx = _splits(spec.layer_input_dims(l))
            cs = [np.zeros((B, d)) for d in spec.part_hidden]
            for t in range(T):
                parts = [U[t][:, sx[p] : sx[p + 1]] for p in range(len(sx) - 1)]
                h, cs, cache = plstm_forward_step(layer, parts, h, cs)
                H[t] = h
                caches.append(cache)
        all_caches.append(caches)
        hiddens.append(H)
        U = H

    top_mask = None
    if use_dropout:
        top_mask = _dropout_mask(rng, U.shape, spec.dropout)
        U = U * top_mask
    logits = U @ params.classifier.V.T
    if params.classifier.b is not None:
        logits = logits + params.classifier.b
    return ForwardCache(spec, batched, layer_inputs, masks, all_caches, U, top_mask, log_softmax(logits), hiddens)


def backward(spec: NetworkSpec, params: NetworkParams, cache: ForwardCache, labels) -> NetworkParams:
    """Gradient of ``cache.loss(labels)`` with respect to every parameter."""
    if cache.spec != spec or len(cache.step_caches) != len(params.layers):
        raise DimensionError("forward cache does not belong to this network")
    T, B, K = cache.log_probs.shape
    lab = _labels(labels, B, K)
    grads = params.zeros_like()

    dlogits = np.exp(cache.log_probs)
    dlogits[:, np.arange(B), lab] -= 1.0
    grads.classifier.V += np.einsum("tbk,tbd->kd", dlogits, cache.top)
    if grads.classifier.b is not None:
        grads.classifier.b += dlogits.sum(axis=(0, 1))
    dH = dlogits @ params.classifier.V
    if cache.top_mask is not None:
        dH = dH * cache.top_mask

    D = spec.hidden
    for l in range(len(params.layers) - 1, -1, -1):
        layer, glayer, caches = params.layers[l], grads.layers[l], cache.step_caches[l]
        dU = np.empty_like(cache.layer_inputs[l])
        dh = np.zeros((B, D))
        dc = np.zeros((B, D))
        for t in range(T - 1, -1, -1):
            if spec.cell == "rnn":
                dx, dh = rnn_backward_step(layer, glayer, caches[t], dH[t] + dh)
            elif spec.cell == "lstm":
                dx, dh, dc = lstm_backward_step(layer, glayer, caches[t], dH[t] + dh, dc)
            else:
                dx, dh, dc = plstm_backward_step(layer, glayer, caches[t], dH[t] + dh, dc)
            dU[t] = dx
        if l == 0:
            break
        if cache.input_masks[l] is not None:
            dU = dU * cache.input_masks[l]
        dH = dU
    return grads


def loss_and_grad(spec, params, X, labels, train=False, rng=None):
    cache = forward(spec, params, X, train=train, rng=rng)
    return cache.loss(labels), backward(spec, params, cache, labels)




# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = "PLSTM-CHECKPOINT 1"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    """Network spec, weights and the input settings the network was trained with."""

    spec: NetworkSpec
    params: NetworkParams
    steps: int = 8
    two_actor: bool = False


def write_checkpoint(ckpt: Checkpoint, stream) -> None:
    spec = ckpt.spec
    lines = [
        CHECKPOINT_MAGIC,
        f"cell {spec.cell}",
        "input_dims " + " ".join(map(str, spec.input_dims)),
        f"hidden {spec.hidden}",
        "part_hidden " + (" ".join(map(str, spec.part_hidden)) if spec.part_hidden else "-"),
        f"classes {spec.classes}",
        f"layers {spec.layers}",
        f"dropout {spec.dropout!r}",
        f"bias {int(spec.bias)}",
        f"steps {ckpt.steps}",
        f"two_actor {int(ckpt.two_actor)}",
    ]
    for name, arr in ckpt.params.named().items():
        rows = arr.reshape(arr.shape[0], -1)
        cols = rows.shape[1] if arr.ndim == 2 else 1
        lines.append(f"param {name} {arr.shape[0]} {cols}")
        for row in rows.tolist():
            lines.append(" ".join(repr(v) for v in row))
    lines.append("end")
    stream.write("\n".join(lines) + "\n")


def read_checkpoint(stream) -> Checkpoint:
    it = (line.rstrip("\n") for line in stream)
    try:
        if next(it).strip() != CHECKPOINT_MAGIC:
            raise CheckpointError("not a checkpoint file")
        head = {}
        for key in ("cell", "input_dims", "hidden", "part_hidden", "classes", "layers",
                    "dropout", "bias", "steps", "two_actor"):
            tok = next(it).split()
            if not tok or tok[0] != key:
                raise CheckpointError(f"expected {key!r} record")
            head[key] = tok[1:]
        spec = NetworkSpec(
            cell=head["cell"][0],
            input_dims=tuple(int(v) for v in head["input_dims"]),
            hidden=int(head["hidden"][0]),
            classes=int(head["classes"][0]),
            layers=int(head["layers"][0]),
            part_hidden=None if head["part_hidden"] == ["-"] else tuple(int(v) for v in head["part_hidden"]),
            dropout=float(head["dropout"][0]),
            bias=head["bias"][0] == "1",
        )
        named = {}
        shapes = param_shapes(spec)
        while True:
            tok = next(it).split()
            if tok == ["end"]:
                break
            if len(tok) != 4 or tok[0] != "param":
                raise CheckpointError(f"bad record {' '.join(tok)!r}")
            name, rows, cols = tok[1], int(tok[2]), int(tok[3])
            data = np.array([[float(v) for v in next(it).split()] for _ in range(rows)])
            if data.shape != (rows, cols):
                raise CheckpointError(f"{name}: ragged rows")
            named[name] = data.reshape(shapes.get(name, data.shape))
    except StopIteration:
        raise CheckpointError("truncated checkpoint") from None
    params = params_from_named(spec, named)
    if not all(np.all(np.isfinite(a)) for a in named.values()):
        raise CheckpointError("non-finite weights")
    return Checkpoint(spec, params, int(head["steps"][0]), head["two_actor"][0] == "1")


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_checkpoint(ckpt, fh)


def load_checkpoint(path) -> Checkpoint:
    with open(path, encoding="utf-8") as fh:
        return read_checkpoint(fh)
