import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from varnn import training
from varnn.core import make_rng, softmax_xent
from varnn.corpus import Sequence, build_vocab
from varnn.gradcheck import check_gradients, random_instance
from varnn.network import ModelConfig, ModelParams, forward_sequence, init_params, sample_mask_set
from varnn.synthetic import tiny_corpus
from varnn.training import (NonFiniteLossError, TrainConfig, bptt, clip_gradients, sequence_loss,
                            sgd_step, total_objective, train)


def test_sequence_loss_examples():
    assert sequence_loss(np.zeros((1, 128)), [5]) == pytest.approx(math.log(128), abs=1e-12)
    assert sequence_loss(np.zeros((1, 128)), [5]) == pytest.approx(4.85203, abs=5e-6)
    assert sequence_loss(np.zeros((3, 128)), [0, 1, 2]) == pytest.approx(3 * math.log(128), abs=1e-12)
    logits = np.zeros((2, 4))
    logits[0, 1] = logits[1, 3] = 800.0
    assert sequence_loss(logits, [1, 3]) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        sequence_loss(np.zeros((2, 3)), [0])


@given(arrays(np.float64, (4, 5), elements=st.floats(-20, 20)),
       st.lists(st.integers(0, 4), min_size=4, max_size=4))
def test_sequence_loss_is_sum_of_token_xent(logits, labels):
    expected = sum(softmax_xent(row, y)[0] for row, y in zip(logits, labels))
    assert sequence_loss(logits, labels) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_total_objective_examples():
    p = ModelParams({"embedding": np.array([[3.0, 4.0]]), "decoder_bias": np.array([9.0])})
    assert total_objective(p, 2.0, 0.0) == 2.0
    assert total_objective(p, 2.0, 0.01) == pytest.approx(2.25)
    zero = ModelParams({"embedding": np.zeros((2, 2))})
    assert total_objective(zero, 1.5, 3.0) == 1.5


def test_clip_examples():
    g = {"a": np.array([3.0, 4.0])}
    out = clip_gradients(g, 5.0)
    np.testing.assert_array_equal(out["a"], [3.0, 4.0])
    out = clip_gradients(g, 2.5)
    np.testing.assert_allclose(out["a"], [1.5, 2.0], rtol=1e-15)
    out = clip_gradients({"a": np.zeros(3)}, 1.0)
    np.testing.assert_array_equal(out["a"], 0.0)


@given(arrays(np.float64, 6, elements=st.floats(-1e3, 1e3)), st.floats(1e-3, 1e3))
def test_clip_preserves_direction(g, threshold):
    out = clip_gradients({"a": g}, threshold)["a"]
    assert np.linalg.norm(out) <= threshold * (1 + 1e-12) or np.allclose(out, g)
    norm = np.linalg.norm(g)
    if norm > 0:
        scale = np.linalg.norm(out) / norm
        np.testing.assert_allclose(out, scale * g, rtol=1e-12, atol=1e-300)
        assert scale >= 0


def test_sgd_step_examples():
    p = ModelParams({"embedding": np.array([[1.0]]), "decoder_bias": np.array([1.0])})
    g = {"embedding": np.array([[0.5]]), "decoder_bias": np.array([0.5])}
    sgd_step(p, g, 0.1, 0.0)
    assert p["embedding"][0, 0] == pytest.approx(0.95)
    assert p["decoder_bias"][0] == pytest.approx(0.95)

    p = ModelParams({"embedding": np.array([[1.0]])})
    sgd_step(p, {"embedding": np.array([[7.0]])}, 0.0, 0.0)
    assert p["embedding"][0, 0] == 1.0

    p = ModelParams({"embedding": np.array([[1.0, -2.0]]), "decoder_bias": np.array([1.0])})
    zero = {"embedding": np.zeros((1, 2)), "decoder_bias": np.zeros(1)}
    prev = np.abs(p["embedding"]).copy()
    for _ in range(5):
        sgd_step(p, zero, 0.1, 0.5)
        cur = np.abs(p["embedding"])
        assert np.all(cur < prev)
        prev = cur.copy()
    assert p["decoder_bias"][0] == 1.0  # biases are not decayed

    with pytest.raises(ValueError):
        sgd_step(ModelParams({"embedding": np.zeros((1, 2))}), {"embedding": np.zeros(2)}, 0.1)


@pytest.mark.parametrize("kind", ["vanilla", "lstm", "gru"])
@pytest.mark.parametrize("direction", ["uni", "bi"])
@pytest.mark.parametrize("regime", ["none", "naive", "variational"])
def test_bptt_matches_finite_differences(kind, direction, regime):
    cfg = ModelConfig(vocab_size=6, cell_kind=kind, direction=direction, embed_dim=3,
                      hidden_dim=3, label_count=3, dropout_regime=regime)
    params, seq, rng = random_instance(cfg, 11, 3)
    masks = sample_mask_set(cfg, rng) if regime == "variational" else None
    errs = check_gradients(params, cfg, seq, 1e-3, masks, 5 if regime == "naive" else None)
    assert max(errs.values()) < 1e-4, errs


def test_gru_flag_gradients():
    cfg = ModelConfig(vocab_size=6, cell_kind="gru", direction="bi", embed_dim=3, hidden_dim=3,
                      label_count=3, dropout_regime="variational", mask_gru_candidate_hidden=True)
    params, seq, rng = random_instance(cfg, 3, 4)
    errs = check_gradients(params, cfg, seq, 0.0, sample_mask_set(cfg, rng))
    assert max(errs.values()) < 1e-4, errs


def test_absent_token_rows_have_zero_gradient():
    cfg = ModelConfig(vocab_size=10, embed_dim=3, hidden_dim=3, label_count=3, direction="bi")
    p = init_params(cfg, make_rng(0))
    seq = Sequence(np.array([1, 4, 4, 7]), np.array([0, 1, 2, 0]))
    logits, tape = forward_sequence(p, cfg, seq.tokens)
    g = bptt(p, tape, logits, seq.labels)
    for row in range(10):
        assert np.any(g["embedding"][row]) == (row in (1, 4, 7))


def test_zero_upstream_gives_zero_gradient():
    # labels whose softmax is exactly one-hot make dlogits vanish
    cfg = ModelConfig(vocab_size=4, embed_dim=2, hidden_dim=2, label_count=2)
    p = init_params(cfg, make_rng(0))
    p.tensors["decoder"][...] = 0.0
    p.tensors["decoder_bias"][...] = [1000.0, 0.0]
    seq = Sequence(np.array([1, 2]), np.array([0, 0]))
    logits, tape = forward_sequence(p, cfg, seq.tokens)
    for g in bptt(p, tape, logits, seq.labels).values():
        assert not np.any(g)


def test_mask_values_identical_in_forward_and_backward(monkeypatch):
    seen = []
    real_bptt = training.bptt

    def spy(params, tape, logits, labels):
        before = tape.masks.z_x.tobytes(), tape.masks.z_h_fwd.tobytes(), tape.masks.z_d.tobytes()
        out = real_bptt(params, tape, logits, labels)
        after = tape.masks.z_x.tobytes(), tape.masks.z_h_fwd.tobytes(), tape.masks.z_d.tobytes()
        seen.append(before == after and all(s.z_x is tape.masks.z_x for s in tape.steps["fwd"]))
        return out

    monkeypatch.setattr(training, "bptt", spy)
    cfg, train_set, labels = _tiny_setup("lstm", "uni", regime="variational")
    train(cfg, train_set, train_set, TrainConfig(epochs=1, seed=0), labels)
    assert seen and all(seen)


def _tiny_setup(kind, direction, regime="none", dim=16):
    corpus = tiny_corpus()
    vocab = build_vocab(corpus)
    train_set = [vocab.encode(s) for s in corpus]
    cfg = ModelConfig(vocab_size=len(vocab.words), cell_kind=kind, direction=direction,
                      embed_dim=dim, hidden_dim=dim, label_count=len(vocab.labels),
                      dropout_regime=regime)
    return cfg, train_set, vocab.labels


def test_tiny_corpus_shape():
    corpus = tiny_corpus()
    vocab = build_vocab(corpus)
    assert len(corpus) == 8
    assert len(vocab.words) - 1 == 12
    assert len(vocab.labels) == 4


def test_overfit_smoke_lstm():
    cfg, train_set, labels = _tiny_setup("lstm", "uni")
    result = train(cfg, train_set, train_set, TrainConfig(epochs=300, patience=300, seed=0), labels)
    assert result.best_f == 1.0
    assert training.evaluate(result.params, cfg, train_set, labels).f_measure == 1.0
    assert result.history[-1].train_loss < result.history[0].train_loss


def test_history_is_deterministic():
    cfg, train_set, labels = _tiny_setup("gru", "bi", regime="variational")
    tc = TrainConfig(epochs=5, patience=5, seed=4)
    a = train(cfg, train_set, train_set, tc, labels)
    b = train(cfg, train_set, train_set, tc, labels)
    assert a.history == b.history
    for name in a.params.names():
        assert a.params[name].tobytes() == b.params[name].tobytes()


def test_early_stopping_returns_best_epoch(monkeypatch):
    cfg, train_set, labels = _tiny_setup("vanilla", "uni")
    scores = iter([0.9, 0.5, 0.4, 0.3])
    snapshots = []

    def fake_eval(params, config, seqs, label_names):
        snapshots.append(params["decoder"].copy())
        f = next(scores)
        return type("Report", (), {"precision": f, "recall": f, "f_measure": f})

    monkeypatch.setattr(training, "evaluate", fake_eval)
    result = train(cfg, train_set, train_set, TrainConfig(epochs=10, patience=1, seed=0), labels)
    assert result.best_epoch == 1 and len(result.history) == 2
    np.testing.assert_array_equal(result.params["decoder"], snapshots[0])
    assert np.any(snapshots[1] != snapshots[0])


def test_non_finite_loss_is_reported(monkeypatch):
    cfg, train_set, labels = _tiny_setup("lstm", "uni")
    monkeypatch.setattr(training, "sequence_loss", lambda logits, y: float("nan"))
    with pytest.raises(NonFiniteLossError, match="epoch 1"):
        train(cfg, train_set, train_set, TrainConfig(epochs=1), labels)


def test_train_rejects_empty_sets():
    cfg, train_set, labels = _tiny_setup("lstm", "uni")
    with pytest.raises(ValueError):
        train(cfg, [], train_set, TrainConfig(), labels)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)
    with pytest.raises(ValueError):
        TrainConfig(clip_norm=-1.0)


def test_history_format():
    rec = training.EpochRecord(3, 1.25, 0.5, 0.25, 1 / 3)
    assert rec.line() == "3\t1.250000\t0.5000\t0.2500\t0.3333"
    assert training.format_history([rec]).splitlines()[0].split("\t") == [
        "epoch", "train_loss", "val_precision", "val_recall", "val_f"]
