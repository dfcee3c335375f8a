import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plstm.evaluation import (
    CROSS_SUBJECT,
    CROSS_VIEW,
    TRAINING_SUBJECTS,
    EvalResult,
    SplitError,
    classify,
    confusion_matrix,
    cross_subject_split,
    cross_view_split,
    evaluate_samples,
    make_split,
    split_to_text,
)
from plstm.model import Checkpoint, NetworkSpec, forward, init_params
from plstm.skeleton import Catalog, CatalogEntry, SampleMeta
from plstm.train import Sample


def catalog_of(metas):
    return Catalog([CatalogEntry(m.sample_id, m, "") for m in metas])


metas = st.builds(
    SampleMeta,
    setup=st.integers(1, 17),
    camera=st.integers(1, 3),
    performer=st.integers(1, 40),
    replication=st.integers(1, 2),
    action=st.integers(1, 60),
)


def test_training_subjects():
    assert sorted(TRAINING_SUBJECTS) == [1, 2, 4, 5, 8, 9, 13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34, 35, 38]


@given(st.lists(metas, min_size=1, max_size=60, unique_by=lambda m: m.sample_id))
def test_splits_partition_catalog(ms):
    cat = catalog_of(ms)
    for protocol, rule in (
        (CROSS_SUBJECT, lambda m: m.performer in TRAINING_SUBJECTS),
        (CROSS_VIEW, lambda m: m.camera != 1),
    ):
        expect_train = [m.sample_id for m in ms if rule(m)]
        expect_test = [m.sample_id for m in ms if not rule(m)]
        if not expect_train or not expect_test:
            with pytest.raises(SplitError):
                make_split(cat, protocol)
            continue
        split = make_split(cat, protocol)
        assert list(split.train) == expect_train
        assert list(split.test) == expect_test


def test_cross_view_example():
    ms = [SampleMeta(1, c, 3, 1, 1) for c in (1, 2, 3)]
    split = cross_view_split(catalog_of(ms))
    assert split.test == ("S001C001P003R001A001",)
    assert split.train == ("S001C002P003R001A001", "S001C003P003R001A001")


def test_unknown_protocol():
    ms = [SampleMeta(1, c, 3, 1, 1) for c in (1, 2)]
    with pytest.raises(SplitError, match="unknown"):
        make_split(catalog_of(ms), "cross-setup")


def test_split_text():
    ms = [SampleMeta(1, c, 3, 1, 1) for c in (1, 2)]
    text = split_to_text(cross_view_split(catalog_of(ms)))
    assert text.splitlines() == [
        "# cross-view train 1 test 1",
        "train S001C002P003R001A001",
        "test S001C001P003R001A001",
    ]


def full_size_catalog(train_triples=224):
    """56,880 entries: 316 (setup, performer, replication) triples x 3 cameras x 60 actions."""
    train_p = sorted(TRAINING_SUBJECTS)
    test_p = [p for p in range(1, 41) if p not in TRAINING_SUBJECTS]

    def triples(performers):
        for p in performers:
            for s, r in itertools.product(range(1, 18), (1, 2)):
                yield s, p, r

    chosen = list(itertools.islice(triples(train_p), train_triples))
    chosen += list(itertools.islice(triples(test_p), 316 - train_triples))
    ms = [
        SampleMeta(s, c, p, r, a)
        for s, p, r in chosen
        for c in (1, 2, 3)
        for a in range(1, 61)
    ]
    return catalog_of(ms)


def test_full_catalog_counts():
    cat = full_size_catalog()
    assert len(cat) == 56_880
    cs, cv = cross_subject_split(cat), cross_view_split(cat)
    assert (len(cs.train), len(cs.test)) == (40_320, 16_560)
    assert (len(cv.train), len(cv.test)) == (37_920, 18_960)


def test_full_catalog_count_mismatch():
    cat = full_size_catalog(train_triples=223)
    with pytest.raises(SplitError, match="40320"):
        cross_subject_split(cat)


# ---------------------------------------------------------------------------
# classification and scoring


def flat_checkpoint(classes=10, bias=None):
    spec = NetworkSpec("lstm", (4,), 3, classes)
    params = init_params(spec, 0)
    params.classifier.V[:] = 0.0
    if bias is not None:
        params.classifier.b[:] = bias
    return Checkpoint(spec, params, steps=4)


def test_classify_tie_picks_lowest_index():
    sample = Sample("x", 0, np.random.default_rng(0).normal(size=(9, 4)))
    assert classify(flat_checkpoint(), sample) == 0


def test_classify_forced_class():
    b = np.zeros(10)
    b[7] = 5.0
    sample = Sample("x", 0, np.random.default_rng(0).normal(size=(9, 4)))
    assert classify(flat_checkpoint(bias=b), sample) == 7


def test_classify_uses_time_average(rng):
    spec = NetworkSpec("rnn", (1,), 1, 2)
    params = init_params(spec, 0)
    params.layers[0].W[:] = [[5.0, 0.0]]
    params.classifier.V[:] = [[1.0], [-1.0]]
    ckpt = Checkpoint(spec, params, steps=3)
    # hidden ~ (+1, +1, -1): two steps vote class 0
    sample = Sample("x", 0, np.array([[1.0], [1.0], [-1.0]]))
    assert classify(ckpt, sample) == 0
    sample = Sample("x", 0, np.array([[-1.0], [-1.0], [1.0]]))
    assert classify(ckpt, sample) == 1


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), max_size=50))
def test_confusion_invariants(pairs):
    labels = [a for a, _ in pairs]
    preds = [b for _, b in pairs]
    cm = confusion_matrix(labels, preds, 5)
    assert cm.sum() == len(pairs)
    assert cm.sum(axis=1).tolist() == [labels.count(k) for k in range(5)]
    res = EvalResult("p", cm)
    hits = sum(a == b for a, b in pairs)
    assert res.accuracy == (hits / len(pairs) if pairs else 0.0)


def test_eval_result_text():
    res = EvalResult(CROSS_VIEW, np.array([[3, 1], [0, 4]]))
    assert res.to_text() == "cross-view accuracy 87.50\n3 1\n0 4\n"
    np.testing.assert_allclose(res.per_class_accuracy, [0.75, 1.0])


def test_evaluate_samples_all_one_class():
    b = np.zeros(3)
    b[2] = 1.0
    ckpt = flat_checkpoint(classes=3, bias=b)
    rng = np.random.default_rng(0)
    samples = [Sample(f"s{i}", i % 3, rng.normal(size=(5, 4))) for i in range(6)]
    res = evaluate_samples(ckpt, samples, CROSS_SUBJECT)
    assert res.confusion[:, 2].tolist() == [2, 2, 2]
    assert res.accuracy == pytest.approx(1 / 3)


def test_classify_single_step(rng):
    spec = NetworkSpec("rnn", (2,), 3, 4)
    params = init_params(spec, 0).map(lambda a: rng.normal(size=a.shape))
    ckpt = Checkpoint(spec, params, steps=1)
    sample = Sample("x", 0, rng.normal(size=(7, 2)))
    probs = forward(spec, params, sample.frames[[3]]).probs[0]
    assert classify(ckpt, sample) == int(np.argmax(probs))


def test_evaluation_repeatable(rng):
    spec = NetworkSpec("lstm", (4,), 3, 3)
    ckpt = Checkpoint(spec, init_params(spec, 0).map(lambda a: rng.normal(size=a.shape)), steps=4)
    samples = [Sample(f"s{i}", i % 3, rng.normal(size=(6, 4))) for i in range(9)]
    a, b = evaluate_samples(ckpt, samples, "p"), evaluate_samples(ckpt, samples, "p")
    assert a.to_text() == b.to_text()
    assert a.accuracy == np.trace(a.confusion) / a.confusion.sum()
