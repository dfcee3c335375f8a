"""End-to-end acceptance checks; each prints one PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from plstm.cli import main
from plstm.evaluation import (
    TRAINING_SUBJECTS,
    cross_subject_split,
    cross_view_split,
    evaluate_samples,
)
from plstm.gradcheck import TOLERANCE, run_gradcheck
from plstm.model import NetworkSpec, backward, forward, init_params, param_count
from plstm.preprocess import default_part_grouping, normalize_sequence, preprocess_sequence
from plstm.skeleton import Catalog, CatalogEntry, SampleMeta
from plstm.synth import SynthSpec, generate_sequence, iter_samples
from plstm.train import TrainingConfig, sample_from_sequence, train

from test_evaluation import full_size_catalog
from test_model import _lstm_as_plstm
from test_preprocess import random_rotation


def test_gradient_oracle(acceptance_log):
    start = time.perf_counter()
    results = run_gradcheck(seed=1, cases=20)
    elapsed = time.perf_counter() - start
    worst = max(r.max_rel_error for r in results)
    combos = {(r.cell, r.layers) for r in results if r.cases >= 20}
    ok = worst <= TOLERANCE and elapsed < 120 and len(combos) == 6
    acceptance_log("gradient oracle", ok, f"max rel error {worst:.2e} over {len(combos)} configs x 20, {elapsed:.1f}s")
    assert ok


def test_single_part_reduction(acceptance_log):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        n, D, K = int(rng.integers(1, 76)), int(rng.integers(1, 12)), int(rng.integers(2, 8))
        L = int(rng.integers(1, 3))
        ls = NetworkSpec("lstm", (n,), D, K, layers=L)
        ps = NetworkSpec("plstm", (n,), D, K, layers=L, part_hidden=(D,))
        lp = init_params(ls, 0).map(lambda a: rng.uniform(-1, 1, a.shape))
        pp = _lstm_as_plstm(lp, D)
        X, y = rng.normal(size=(6, 3, n)), rng.integers(0, K, size=3)
        lc, pc = forward(ls, lp, X), forward(ps, pp, X)
        worst = max(worst, float(np.abs(lc.log_probs - pc.log_probs).max()))
        expect = _lstm_as_plstm(backward(ls, lp, lc, y), D).named()
        for k, g in backward(ps, pp, pc, y).named().items():
            worst = max(worst, float(np.abs(g - expect[k]).max()))
    ok = worst <= 1e-12
    acceptance_log("P=1 reduction", ok, f"max abs difference {worst:.2e} over 100 draws")
    assert ok


def test_normalization_invariance(acceptance_log):
    rng = np.random.default_rng(7)
    spec = SynthSpec(frames=40)
    worst = 0.0
    for k in range(100):
        seq = generate_sequence(k % spec.classes, 1 + k % spec.subjects, 1 + k % 3, spec)
        actor = seq.body_ids()[0]
        ref = normalize_sequence(seq, actor)
        R, t, s = random_rotation(rng), rng.normal(0, 5, size=3), rng.uniform(0.1, 10.0)
        moved = seq.map_bodies(lambda b: b.with_positions(s * b.positions @ R.T + t))
        out = normalize_sequence(moved, actor)
        for fa, fb in zip(ref.frames, out.frames):
            worst = max(worst, float(np.abs(fa[0].positions - fb[0].positions).max()))
    ok = worst <= 1e-9
    acceptance_log("normalization invariance", ok, f"max coordinate error {worst:.2e} over 100 transforms")
    assert ok


def test_split_correctness(acceptance_log):
    rng = np.random.default_rng(11)
    problems = []
    for _ in range(200):
        metas = {}
        for _ in range(int(rng.integers(2, 120))):
            m = SampleMeta(
                int(rng.integers(1, 18)), int(rng.integers(1, 4)), int(rng.integers(1, 41)),
                int(rng.integers(1, 3)), int(rng.integers(1, 61)),
            )
            metas[m.sample_id] = m
        cat = Catalog([CatalogEntry(i, m, "") for i, m in metas.items()])
        ids = set(metas)
        if any(m.performer in TRAINING_SUBJECTS for m in metas.values()) and any(
            m.performer not in TRAINING_SUBJECTS for m in metas.values()
        ):
            cs = cross_subject_split(cat)
            if set(cs.train) | set(cs.test) != ids or set(cs.train) & set(cs.test):
                problems.append("cross-subject not a partition")
            if any((metas[i].performer in TRAINING_SUBJECTS) != (i in cs.train) for i in ids):
                problems.append("cross-subject membership")
        if any(m.camera == 1 for m in metas.values()) and any(m.camera != 1 for m in metas.values()):
            cv = cross_view_split(cat)
            if set(cv.train) | set(cv.test) != ids or set(cv.train) & set(cv.test):
                problems.append("cross-view not a partition")
            if {i for i in ids if metas[i].camera == 1} != set(cv.test):
                problems.append("cross-view test side")
    full = full_size_catalog()
    cs, cv = cross_subject_split(full), cross_view_split(full)
    counts = (len(cs.train), len(cs.test), len(cv.train), len(cv.test))
    if counts != (40_320, 16_560, 37_920, 18_960):
        problems.append(f"full-size counts {counts}")
    ok = not problems
    acceptance_log("split correctness", ok, "200 random catalogs, full-size counts " + "/".join(map(str, counts)))
    assert ok, problems


@pytest.fixture(scope="module")
def desk_task():
    spec = SynthSpec(classes=4, subjects=8, cameras=3, noise=0.01, frames=100)
    samples, entries = {}, []
    for key in iter_samples(spec):
        seq = generate_sequence(*key, spec)
        samples[seq.sample_id] = sample_from_sequence(preprocess_sequence(seq).sequence)
        entries.append(CatalogEntry(seq.sample_id, seq.meta, ""))
    split = cross_view_split(Catalog(entries))
    return [samples[i] for i in split.train], [samples[i] for i in split.test]


def test_desk_scale_learnability(desk_task, acceptance_log):
    train_set, test_set = desk_task
    dims = default_part_grouping().part_dims()
    config = TrainingConfig(epochs=200, steps=8, seed=0)

    start = time.perf_counter()
    plstm = NetworkSpec("plstm", dims, 40, 4, layers=2, part_hidden=(8,) * 5)
    rep = train(plstm, train_set, config)
    acc = evaluate_samples(rep.checkpoint, test_set).accuracy
    plstm_time = time.perf_counter() - start

    start = time.perf_counter()
    rnn = NetworkSpec("rnn", dims, 40, 4, layers=2)
    rnn_rep = train(rnn, train_set, config)
    rnn_acc = evaluate_samples(rnn_rep.checkpoint, test_set).accuracy
    rnn_time = time.perf_counter() - start

    finite = all(math.isfinite(v) for v in rnn_rep.train_loss)
    ok = acc >= 0.9 and plstm_time < 600 and finite and rnn_time < 600
    acceptance_log(
        "desk-scale learnability", ok,
        f"P-LSTM cross-view {100 * acc:.1f}% in {plstm_time:.0f}s (epoch {rep.selected_epoch}); "
        f"RNN finite loss {finite}, {100 * rnn_acc:.1f}% in {rnn_time:.0f}s",
    )
    assert ok


def test_parameter_economy(acceptance_log):
    dims = (15, 18, 18, 12, 12)
    rows = []
    ok = True
    for D, dp in ((40, 8), (100, 20), (10, 2)):
        for bias in (True, False):
            p = param_count(NetworkSpec("plstm", dims, D, 60, part_hidden=(dp,) * 5, bias=bias))
            l = param_count(NetworkSpec("lstm", (75,), D, 60, bias=bias))
            # closed forms: LSTM 4D(75+D), P-LSTM sum_p 3 d_p (x_p+D) + D(75+D), plus biases and classifier
            extra = (4 * D if bias else 0) + 60 * D + (60 if bias else 0)
            assert l == 4 * D * (75 + D) + extra
            assert p == sum(3 * dp * (x + D) for x in dims) + D * (75 + D) + extra
            ok &= p < l
            rows.append(f"D={D}: {p} < {l}" if bias else "")
    acceptance_log("parameter economy", ok, "; ".join(r for r in rows if r))
    assert ok


def _pipeline(root):
    raw, clean, run = root / "raw", root / "clean", root / "run"
    codes = [
        main(["synth", "--out", str(raw), "--seed", "5"]),
        main(["preprocess", "--catalog", str(raw / "catalog.txt"), "--out", str(clean)]),
        main([
            "train", "--catalog", str(clean / "catalog.txt"), "--protocol", "cross-view",
            "--out", str(run), "--epochs", "100", "--seed", "5",
        ]),
        main([
            "eval", "--checkpoint", str(run / "checkpoint.txt"), "--catalog", str(clean / "catalog.txt"),
            "--protocol", "cross-view", "--out", str(run / "eval.txt"),
        ]),
    ]
    files = {}
    for d in (raw, clean, run):
        for p in sorted(d.iterdir()):
            files[f"{d.name}/{p.name}"] = p.read_bytes()
    return codes, files


def test_pipeline_determinism(tmp_path, acceptance_log):
    codes_a, a = _pipeline(tmp_path / "first")
    codes_b, b = _pipeline(tmp_path / "second")
    differing = sorted(k for k in a if a[k] != b.get(k))
    ok = codes_a == codes_b == [0, 0, 0, 0] and a.keys() == b.keys() and not differing
    acceptance_log("pipeline determinism", ok, f"{len(a)} files compared, {len(differing)} differ")
    assert ok, differing
