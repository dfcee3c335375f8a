"""Central finite-difference check of the analytic BPTT gradients.

The numeric side only ever calls ``forward``; it shares no code with
``backward``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CELL_KINDS, NetworkSpec, backward, forward, init_params
from .numerics import child_rng

EPS = 1e-5
TOLERANCE = 1e-5
# entries whose gradients are both below this are compared absolutely
REL_FLOOR = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_gradients(spec, params, X, labels, eps: float = EPS) -> dict[str, np.ndarray]:
    out = {}
    for name, arr in params.named().items():
        g = np.empty_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = forward(spec, params, X).loss(labels)
            flat[k] = orig - eps
            down = forward(spec, params, X).loss(labels)
            flat[k] = orig
            gflat[k] = (up - down) / (2 * eps)
        out[name] = g
    return out


def max_relative_error(spec, params, X, labels, eps: float = EPS) -> float:
    cache = forward(spec, params, X)
    grads = backward(spec, params, cache, labels).named()
    numeric = numeric_gradients(spec, params, X, labels, eps)
    return max(float(relative_error(grads[k], numeric[k]).max()) for k in grads)


def random_case(rng, cell: str, layers: int, T: int = 4, max_input: int = 20, max_hidden: int = 12, batch: int = 1):
    """Random small network, parameters, input and labels."""
    classes = int(rng.integers(2, 6))
    if cell == "plstm":
        P = int(rng.integers(1, 4))
        part_hidden = [int(rng.integers(1, 5)) for _ in range(P)]
        while sum(part_hidden) > max_hidden:
            part_hidden[int(np.argmax(part_hidden))] -= 1
        input_dims = [int(rng.integers(1, 8)) for _ in range(P)]
        while sum(input_dims) > max_input:
            input_dims[int(np.argmax(input_dims))] -= 1
        hidden = sum(part_hidden)
    else:
        part_hidden = None
        input_dims = [int(rng.integers(1, max_input + 1))]
        hidden = int(rng.integers(1, max_hidden + 1))
    spec = NetworkSpec(cell, tuple(input_dims), hidden, classes, layers=layers, part_hidden=part_hidden)
    params = init_params(spec, int(rng.integers(2**31))).map(lambda a: rng.uniform(-0.5, 0.5, a.shape))
    X = rng.normal(size=(T, batch, spec.input_size))
    labels = rng.integers(0, classes, size=batch)
    return spec, params, X, labels


@dataclass
class GradcheckResult:
    cell: str
    layers: int
    cases: int
    max_rel_error: float


def run_gradcheck(seed: int, cases: int = 20, cells=CELL_KINDS, layer_counts=(1, 2)) -> list[GradcheckResult]:
    results = []
    for ci, cell in enumerate(cells):
        for layers in layer_counts:
            rng = child_rng(seed, ci, layers)
            worst = 0.0
            for _ in range(cases):
                spec, params, X, labels = random_case(rng, cell, layers)
                worst = max(worst, max_relative_error(spec, params, X, labels))
            results.append(GradcheckResult(cell, layers, cases, worst))
    return results
