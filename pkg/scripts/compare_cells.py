"""Desk-scale comparison of RNN, LSTM and P-LSTM on the synthetic task.

Trains each cell kind (2 layers, D = 40, d_p = 8, T = 8) on the training
side of a protocol for several seeds and prints test accuracy per seed
plus the mean, as a plain-text table.

    python3 scripts/compare_cells.py --protocol cross-view --seeds 0 1 2
"""
import argparse
import time

import numpy as np

from plstm.evaluation import PROTOCOLS, evaluate_samples, make_split
from plstm.model import NetworkSpec, param_count
from plstm.preprocess import default_part_grouping, preprocess_sequence
from plstm.skeleton import Catalog, CatalogEntry
from plstm.synth import SynthSpec, generate_sequence, iter_samples
from plstm.train import TrainingConfig, sample_from_sequence, train


def build_task(spec: SynthSpec, protocol: str):
    samples, entries = {}, []
    for key in iter_samples(spec):
        seq = generate_sequence(*key, spec)
        samples[seq.sample_id] = sample_from_sequence(preprocess_sequence(seq).sequence)
        entries.append(CatalogEntry(seq.sample_id, seq.meta, ""))
    split = make_split(Catalog(entries), protocol)
    return [samples[i] for i in split.train], [samples[i] for i in split.test]


def network(cell: str, classes: int) -> NetworkSpec:
    dims = default_part_grouping().part_dims()
    if cell == "plstm":
        return NetworkSpec("plstm", dims, 40, classes, layers=2, part_hidden=(8,) * 5)
    return NetworkSpec(cell, dims, 40, classes, layers=2)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--protocol", default="cross-view", choices=PROTOCOLS)
    ap.add_argument("--cells", nargs="+", default=["rnn", "lstm", "plstm"])
    ap.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3])
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--classes", type=int, default=4)
    ap.add_argument("--subjects", type=int, default=8)
    ap.add_argument("--noise", type=float, default=0.01)
    args = ap.parse_args()

    spec = SynthSpec(classes=args.classes, subjects=args.subjects, noise=args.noise)
    train_set, test_set = build_task(spec, args.protocol)
    print(f"# {args.protocol}: {len(train_set)} train, {len(test_set)} test samples")
    print("cell params " + " ".join(f"seed{s}" for s in args.seeds) + " mean seconds")
    for cell in args.cells:
        net = network(cell, args.classes)
        accs, start = [], time.perf_counter()
        for seed in args.seeds:
            rep = train(net, train_set, TrainingConfig(epochs=args.epochs, seed=seed))
            accs.append(evaluate_samples(rep.checkpoint, test_set).accuracy)
        elapsed = time.perf_counter() - start
        cols = " ".join(f"{100 * a:.1f}" for a in accs)
        print(f"{cell} {param_count(net)} {cols} {100 * np.mean(accs):.1f} {elapsed:.0f}")


if __name__ == "__main__":
    main()
