import math

import numpy as np
import pytest

from detrac import classifier as clf
from detrac import dataset as ds
from detrac.errors import DataError, FormatError, TrainingDiverged


def identity_pm(names):
    return ds.ParentMap(
        tuple(f"{n}_1" for n in names),
        np.arange(len(names)),
        ds.LabelSpace(tuple(names)),
    )


def blob_decomposed(rng, centers, per_class, sigma=0.3):
    feats = []
    labels = []
    for i, c in enumerate(centers):
        feats.append(rng.normal(loc=c, scale=sigma, size=(per_class, len(c))))
        labels.extend([i] * per_class)
    pm = identity_pm([f"c{i}" for i in range(len(centers))])
    return ds.DecomposedSet(
        np.vstack(feats).astype(np.float32), np.asarray(labels), pm
    )


# --- predict_proba -----------------------------------------------------------


def test_zero_head_is_uniform():
    head = clf.SoftmaxHead(w1=np.zeros((4, 3)), b1=np.zeros(3))
    probs = clf.predict_proba(head, np.ones((5, 4)))
    assert np.allclose(probs, 1.0 / 3.0)


def test_softmax_rows_normalized(rng):
    head = clf.SoftmaxHead.init(6, 4, seed=1)
    probs = clf.predict_proba(head, rng.normal(size=(20, 6)) * 10)
    assert np.max(np.abs(probs.sum(axis=1) - 1.0)) <= 1e-9
    assert probs.min() > 0.0


def test_softmax_stable_for_large_logits():
    head = clf.SoftmaxHead(w1=np.array([[100.0, 0.0]]), b1=np.zeros(2))
    probs = clf.predict_proba(head, np.array([[1.0]]))
    assert np.isfinite(probs).all()
    assert probs[0, 0] == pytest.approx(1.0, abs=1e-9)
    big = clf.predict_proba(head, np.array([[100.0]]))  # logit magnitude 1e4
    assert np.isfinite(big).all()


def test_predict_dimension_mismatch():
    head = clf.SoftmaxHead.init(3, 2, seed=0)
    with pytest.raises(DataError, match="feature count"):
        clf.predict_proba(head, np.ones((2, 5)))
    with pytest.raises(DataError, match="non-finite"):
        clf.predict_proba(head, np.array([[np.nan, 1.0, 2.0]]))


# --- cross entropy -------------------------------------------------------------


def test_uniform_prediction_loss_is_log_c():
    probs = np.full((7, 5), 0.2)
    assert clf.cross_entropy(probs, np.zeros(7, dtype=int)) == pytest.approx(
        math.log(5), rel=1e-12
    )


def test_perfect_prediction_loss_near_zero():
    probs = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert clf.cross_entropy(probs, np.array([0, 1])) <= 1e-11


def test_cross_entropy_hand_value():
    probs = np.array([[0.9, 0.1], [0.2, 0.8]])
    expected = -(math.log(0.9) + math.log(0.8)) / 2
    assert clf.cross_entropy(probs, np.array([0, 1])) == pytest.approx(
        expected, rel=1e-9
    )
    assert expected == pytest.approx(0.164252, abs=1e-6)


def test_cross_entropy_label_out_of_range():
    with pytest.raises(DataError, match="label index"):
        clf.cross_entropy(np.array([[0.5, 0.5]]), np.array([2]))


def test_cross_entropy_reduces_to_binary_form(rng):
    # with two classes, -mean(ln p[y]) equals -mean(y ln z + (1-y) ln(1-z))
    z = rng.uniform(0.05, 0.95, size=12)  # probability of class 1
    probs = np.stack([1.0 - z, z], axis=1)
    y = rng.integers(0, 2, size=12)
    binary = -np.mean(y * np.log(z) + (1 - y) * np.log(1.0 - z))
    assert clf.cross_entropy(probs, y) == pytest.approx(binary, rel=1e-12)


# --- gradient check -------------------------------------------------------------


def test_gradient_check_linear_head(rng):
    head = clf.SoftmaxHead.init(4, 3, seed=5)
    X = rng.normal(size=(8, 4))
    labels = rng.integers(0, 3, size=8)
    assert clf.gradient_check(head, X, labels, h=1e-5) <= 1e-4


def test_gradient_check_hidden_head(rng):
    head = clf.SoftmaxHead.init(4, 3, hidden=6, seed=6)
    X = rng.normal(size=(8, 4))
    labels = rng.integers(0, 3, size=8)
    assert clf.gradient_check(head, X, labels, h=1e-5) <= 1e-4


def test_bias_gradient_closed_form_on_zero_input(rng):
    head = clf.SoftmaxHead.init(3, 4, seed=9)
    X = np.zeros((6, 3))
    labels = rng.integers(0, 4, size=6)
    _, grads = clf._forward_backward(head, X, labels)
    probs = clf.predict_proba(head, X)
    onehot = np.zeros((6, 4))
    onehot[np.arange(6), labels] = 1.0
    assert np.allclose(grads[1], (probs - onehot).mean(axis=0), rtol=1e-12)
    assert np.allclose(grads[0], 0.0)


def test_gradient_check_step_sweep(rng):
    head = clf.SoftmaxHead.init(3, 2, seed=2)
    X = rng.normal(size=(5, 3))
    labels = rng.integers(0, 2, size=5)
    for h in (1e-4, 1e-5, 1e-6):
        assert clf.gradient_check(head, X, labels, h=h) <= 1e-3


# --- training --------------------------------------------------------------------


def test_train_separable_blobs_reach_full_accuracy(rng):
    data = blob_decomposed(rng, [(0.0, 0.0), (5.0, 5.0)], 100)
    head = clf.SoftmaxHead.init(2, 2, seed=0)
    cfg = clf.TrainConfig(epochs=50, seed=1)
    trained, history = clf.train(head, data, None, cfg)
    assert max(history.train_acc) == 1.0
    assert history.train_acc[-1] == 1.0
    assert history.val_loss is None


def test_train_zero_lr_keeps_parameters(rng):
    data = blob_decomposed(rng, [(0.0, 0.0), (2.0, 2.0)], 10)
    head = clf.SoftmaxHead.init(2, 2, seed=3)
    cfg = clf.TrainConfig(learning_rate=0.0, head_learning_rate=0.0, epochs=1, seed=0)
    trained, history = clf.train(head, data, None, cfg)
    assert trained.w1.tobytes() == head.w1.tobytes()
    assert trained.b1.tobytes() == head.b1.tobytes()
    assert len(history.epochs) == 1


def test_epochs_zero_forbidden():
    with pytest.raises(DataError):
        clf.TrainConfig(epochs=0)


def test_lr_schedule_steps():
    cfg = clf.TrainConfig(lr_drop_factor=0.95, lr_drop_period_epochs=5)
    assert [cfg.lr_at(e) for e in range(1, 6)] == [1.0] * 5
    assert [cfg.lr_at(e) for e in range(6, 11)] == [0.95] * 5
    assert cfg.lr_at(11) == pytest.approx(0.95**2)


def test_history_lr_column_follows_schedule(rng):
    data = blob_decomposed(rng, [(0.0, 0.0), (2.0, 2.0)], 10)
    head = clf.SoftmaxHead.init(2, 2, seed=0)
    cfg = clf.TrainConfig(epochs=12, seed=0)
    _, history = clf.train(head, data, None, cfg)
    expected = [cfg.head_learning_rate * cfg.lr_at(e) for e in history.epochs]
    assert list(history.lr) == expected


def test_train_deterministic(rng):
    data = blob_decomposed(rng, [(0.0, 0.0), (3.0, 3.0)], 30)
    val = blob_decomposed(rng, [(0.0, 0.0), (3.0, 3.0)], 10)
    head = clf.SoftmaxHead.init(2, 2, seed=4)
    cfg = clf.TrainConfig(epochs=7, seed=42)
    t1, h1 = clf.train(head, data, val, cfg)
    t2, h2 = clf.train(head, data, val, cfg)
    assert h1 == h2
    assert t1.w1.tobytes() == t2.w1.tobytes()
    assert h1.val_loss is not None and len(h1.val_loss) == 7


def test_full_batch_loss_non_increasing_early(rng):
    data = blob_decomposed(rng, [(0.0, 0.0), (5.0, 5.0)], 50)
    head = clf.SoftmaxHead.init(2, 2, seed=1)
    cfg = clf.TrainConfig(
        epochs=10,
        batch_size=100,  # full batch
        head_learning_rate=0.01,
        momentum=0.0,
        weight_decay=0.0,
        seed=0,
        shuffle=False,
    )
    _, history = clf.train(head, data, None, cfg)
    losses = list(history.train_loss)
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_one_step_update_rule_matches_formula(rng):
    feats = rng.normal(size=(6, 3)).astype(np.float32)
    labels = np.array([0, 1, 0, 1, 0, 1])
    pm = identity_pm(["a", "b"])
    train_set = ds.DecomposedSet(feats, labels, pm)

    head = clf.SoftmaxHead.init(3, 2, seed=5)
    lr, wd = 0.2, 0.1
    cfg = clf.TrainConfig(
        head_learning_rate=lr, weight_decay=wd, momentum=0.5,
        batch_size=6, epochs=1, seed=0, shuffle=False,
    )
    # one full-batch step from zero velocity: v = -lr*(g + wd*p), p += v
    _, grads = clf._forward_backward(head, feats.astype(np.float64), labels)
    expected_w = head.w1 - lr * (grads[0] + wd * head.w1)
    expected_b = head.b1 - lr * (grads[1] + wd * head.b1)
    trained, _ = clf.train(head, train_set, None, cfg)
    assert np.allclose(trained.w1, expected_w, rtol=1e-12)
    assert np.allclose(trained.b1, expected_b, rtol=1e-12)


def test_weight_decay_shrinks_weights_on_zero_input(rng):
    pm = identity_pm(["a", "b"])
    # zero features + balanced labels: weight gradient vanishes, decay remains
    data = ds.DecomposedSet(
        np.zeros((8, 3), dtype=np.float32), np.array([0, 1] * 4), pm
    )
    head = clf.SoftmaxHead.init(3, 2, seed=8)
    cfg = clf.TrainConfig(
        epochs=15, head_learning_rate=0.5, weight_decay=0.1, momentum=0.0,
        batch_size=8, seed=0,
    )
    w0 = head.w1.copy()
    norms = [np.linalg.norm(w0)]
    current = head
    for _ in range(3):
        current, _ = clf.train(
            current, data, None,
            clf.TrainConfig(epochs=1, head_learning_rate=0.5, weight_decay=0.1,
                            momentum=0.0, batch_size=8, seed=0),
        )
        norms.append(np.linalg.norm(current.w1))
    assert all(b < a for a, b in zip(norms, norms[1:]))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_guard(rng):
    data = blob_decomposed(rng, [(0.0, 0.0), (5.0, 5.0)], 20)
    head = clf.SoftmaxHead.init(2, 2, seed=0)
    cfg = clf.TrainConfig(epochs=30, head_learning_rate=1e6, weight_decay=1e6, seed=0)
    with pytest.raises(TrainingDiverged) as exc:
        clf.train(head, data, None, cfg)
    assert exc.value.epoch >= 1


def test_train_rejects_out_of_range_labels(rng):
    data = blob_decomposed(rng, [(0.0, 0.0), (5.0, 5.0)], 5)
    head = clf.SoftmaxHead.init(2, 1, seed=0)  # too few outputs
    with pytest.raises(DataError, match="exceed head output"):
        clf.train(head, data, None, clf.TrainConfig(epochs=1, seed=0))


# --- history CSV / head blob ------------------------------------------------------


def test_history_csv_layout(tmp_path, rng):
    data = blob_decomposed(rng, [(0.0, 0.0), (2.0, 2.0)], 10)
    head = clf.SoftmaxHead.init(2, 2, seed=0)
    _, history = clf.train(head, data, data, clf.TrainConfig(epochs=3, seed=0))
    path = tmp_path / "history.csv"
    history.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,lr,train_loss,train_acc,val_loss,val_acc"
    assert len(lines) == 4
    assert lines[1].split(",")[0] == "1"

    _, no_val = clf.train(head, data, None, clf.TrainConfig(epochs=2, seed=0))
    no_val.to_csv(path)
    assert path.read_text().splitlines()[0] == "epoch,lr,train_loss,train_acc"


def test_head_blob_round_trip(tmp_path):
    for hidden in (0, 5):
        head = clf.SoftmaxHead.init(4, 3, hidden=hidden, seed=2)
        path = tmp_path / f"head{hidden}.dhed"
        clf.write_head(head, path)
        assert path.read_bytes()[:4] == b"DHED"
        back = clf.read_head(path)
        assert back.hidden == hidden
        for a, b in zip(head.params(), back.params()):
            assert a.tobytes() == b.tobytes()


def test_head_blob_errors(tmp_path):
    p = tmp_path / "bad.dhed"
    p.write_bytes(b"WHAT" + b"\x00" * 40)
    with pytest.raises(FormatError, match="bad magic"):
        clf.read_head(p)
    head = clf.SoftmaxHead.init(3, 2, seed=0)
    good = tmp_path / "good.dhed"
    clf.write_head(head, good)
    (tmp_path / "t.dhed").write_bytes(good.read_bytes()[:-8])
    with pytest.raises(FormatError, match="truncated"):
        clf.read_head(tmp_path / "t.dhed")
