import numpy as np
import pytest

from memgauge.errors import EmptyCorpus, IndexOutOfVocab, IoFailure, SchemaViolation, UnsupportedTask
from memgauge.models.run import Hyperparameters
from memgauge.models.sample import Corpus, Sample, Task
from memgauge.services import refmodel
from memgauge.services.synthetic import pseudo_word
from memgauge.services.telemetry import MemorySink, build_trace

from conftest import misuse_sample, search_sample


def corpus_of(*pairs, task=Task.METHOD_NAME):
    samples = [
        Sample(id=f"s{i}", task=task, tokens=tuple(tokens), target_label=label)
        for i, (tokens, label) in enumerate(pairs)
    ]
    return Corpus.from_samples(task, samples)


def random_model(rng, vocab_size, classes, dim):
    vocab = refmodel.Vocab(itos=refmodel.SPECIAL_TOKENS + tuple(f"t{i}" for i in range(vocab_size - 2)))
    return refmodel.RefModel(
        vocab=vocab,
        classes=tuple(f"c{i}" for i in range(classes)),
        dim=dim,
        seed=0,
        embeddings=rng.normal(size=(vocab_size, dim)),
        weights=rng.normal(size=(classes, dim)),
    )


def test_build_vocab_orders_by_frequency():
    corpus = corpus_of((["a"] * 5 + ["b"] * 2, "x"))
    vocab = refmodel.build_vocab(corpus, min_count=1)
    assert vocab.itos == ("<unk>", "<pad>", "a", "b")
    assert len(vocab) == 4
    assert refmodel.build_vocab(corpus, min_count=3).itos == ("<unk>", "<pad>", "a")
    assert refmodel.build_vocab(corpus) == vocab
    with pytest.raises(EmptyCorpus):
        refmodel.build_vocab(Corpus.from_samples(Task.METHOD_NAME, []))


def test_featurize_uses_subtokens():
    vocab = refmodel.Vocab(itos=refmodel.SPECIAL_TOKENS + ("set", "up"))
    sample = Sample(id="s", task=Task.METHOD_NAME, tokens=("setUp",), target_label="setUp")
    assert sorted(refmodel.featurize(sample, vocab).tolist()) == [vocab.lookup("set"), vocab.lookup("up")]
    oov = Sample(id="o", task=Task.METHOD_NAME, tokens=("zip", "zap"), target_label="x")
    assert refmodel.featurize(oov, vocab).tolist() == [refmodel.UNK, refmodel.UNK]
    empty = Sample(id="e", task=Task.METHOD_NAME, tokens=("(", ")"), target_label="x")
    assert refmodel.featurize(empty, vocab).size == 0


def test_code_search_features_include_query():
    sample = search_sample("p", "1", tokens=("x",), query=("find",))
    corpus = Corpus.from_samples(Task.CODE_SEARCH, [sample])
    vocab = refmodel.build_vocab(corpus)
    assert set(vocab.itos[2:]) == {"x", "find"}
    assert refmodel.class_catalogue(Task.CODE_SEARCH, corpus) == ("0", "1")


def test_forward_examples():
    vocab = refmodel.Vocab(itos=refmodel.SPECIAL_TOKENS + ("a", "b"))
    zero = refmodel.init_model(vocab, ("x", "y", "z"), dim=4, seed=0, scale=0.0)
    assert refmodel.forward(zero, np.array([2, 3])).tolist() == [0.0, 0.0, 0.0]
    # empty input is treated as a single PAD
    assert refmodel.forward(zero, np.array([], dtype=np.int64)).tolist() == [0.0, 0.0, 0.0]

    model = refmodel.init_model(vocab, ("x", "y"), dim=2, seed=0, scale=0.0)
    model.embeddings[2] = [1.0, 0.0]
    model.weights[0] = [1.0, 0.0]
    model.weights[1] = [0.0, 1.0]
    assert int(np.argmax(refmodel.forward(model, np.array([2])))) == 0
    np.testing.assert_array_equal(refmodel.forward(model, np.array([2, 2])), refmodel.forward(model, np.array([2])))
    with pytest.raises(IndexOutOfVocab):
        refmodel.forward(model, np.array([9]))


def test_parameter_count():
    vocab = refmodel.Vocab(itos=refmodel.SPECIAL_TOKENS + ("a", "b", "c"))
    model = refmodel.init_model(vocab, ("x", "y"), dim=8, seed=1)
    assert model.parameter_count == 8 * (5 + 2)
    assert np.all(np.abs(model.embeddings) <= refmodel.INIT_SCALE)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    step = 1e-5
    for _ in range(100):
        vocab_size = int(rng.integers(3, 11))
        classes = int(rng.integers(2, 4))
        dim = int(rng.integers(1, 5))
        model = random_model(rng, vocab_size, classes, dim)
        batch = [rng.integers(0, vocab_size, size=int(rng.integers(1, 5))) for _ in range(3)]
        labels = rng.integers(0, classes, size=3)
        _, grad_embeddings, grad_weights = refmodel.loss_and_gradients(model, batch, labels)

        for table, grad in ((model.embeddings, grad_embeddings), (model.weights, grad_weights)):
            numeric = np.zeros_like(table)
            for index in np.ndindex(table.shape):
                saved = table[index]
                table[index] = saved + step
                plus = refmodel.loss_and_gradients(model, batch, labels)[0]
                table[index] = saved - step
                minus = refmodel.loss_and_gradients(model, batch, labels)[0]
                table[index] = saved
                numeric[index] = (plus - minus) / (2 * step)
            np.testing.assert_allclose(grad, numeric, rtol=1e-4, atol=1e-7)


def _two_class_corpus():
    return corpus_of((["alpha", "beta"], "run"), (["gamma", "delta"], "stop"))


def test_single_sample_converges():
    corpus = corpus_of((["readFile", "buffer"], "run"))
    heldout = corpus_of((["readFile"], "run"))
    vocab = refmodel.build_vocab(corpus)
    model = refmodel.init_model(vocab, ("run", "stop"), dim=8, seed=3)
    sink = MemorySink()
    hyper = Hyperparameters(epochs=200, batch_size=1, learning_rate=0.5, seed=3, dim=8)
    trained = refmodel.train(model, corpus, heldout, hyper, sink)

    trace = build_trace(sink.records)
    assert trace.epoch_count == 200
    assert trace.records(199, "train")[0].loss < 0.01
    assert refmodel.predict(trained, ["readFile", "buffer"]).label == "run"


def test_small_learning_rate_never_increases_loss():
    corpus = corpus_of((["readFile", "buffer"], "run"))
    model = refmodel.init_model(refmodel.build_vocab(corpus), ("run", "stop"), dim=4, seed=5)
    sink = MemorySink()
    refmodel.train(model, corpus, corpus, Hyperparameters(epochs=30, batch_size=1, learning_rate=0.1, dim=4), sink)
    losses = [r.loss for r in sink.records if r.split == "train"]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_zero_learning_rate_keeps_weights():
    corpus = _two_class_corpus()
    model = refmodel.init_model(refmodel.build_vocab(corpus), ("run", "stop"), dim=4, seed=2)
    sink = MemorySink()
    trained = refmodel.train(model, corpus, corpus, Hyperparameters(epochs=3, learning_rate=0.0, dim=4), sink)
    np.testing.assert_array_equal(trained.embeddings, model.embeddings)
    np.testing.assert_array_equal(trained.weights, model.weights)
    trace = build_trace(sink.records)
    first = [r.model_dump(exclude={"epoch"}) for r in trace.records(0, "train")]
    last = [r.model_dump(exclude={"epoch"}) for r in trace.records(2, "train")]
    assert first == last


def test_training_is_deterministic():
    corpus = _two_class_corpus()
    hyper = Hyperparameters(epochs=5, batch_size=1, learning_rate=0.3, seed=9, dim=4)
    runs = []
    for _ in range(2):
        model = refmodel.init_model(refmodel.build_vocab(corpus), ("run", "stop"), dim=4, seed=9)
        sink = MemorySink()
        trained = refmodel.train(model, corpus, corpus, hyper, sink)
        runs.append((trained, [r.to_json() for r in sink.records]))
    assert runs[0][1] == runs[1][1]
    np.testing.assert_array_equal(runs[0][0].weights, runs[1][0].weights)
    np.testing.assert_array_equal(runs[0][0].embeddings, runs[1][0].embeddings)


def test_predict_tie_goes_to_lowest_index():
    vocab = refmodel.Vocab(itos=refmodel.SPECIAL_TOKENS + ("a",))
    classes = tuple(f"c{i}" for i in range(10))
    zero = refmodel.init_model(vocab, classes, dim=3, seed=0, scale=0.0)
    prediction = refmodel.predict(zero, ["a", "b"])
    assert prediction.label == "c0"
    assert prediction.score == pytest.approx(0.1)
    assert refmodel.predict(zero, ["anything", "else"]).label == "c0"


def test_untrainable_tasks():
    corpus = Corpus.from_samples(Task.VAR_MISUSE, [misuse_sample("b0", True)])
    model = refmodel.init_model(refmodel.build_vocab(corpus), ("0",), dim=2, seed=0)
    with pytest.raises(UnsupportedTask):
        refmodel.train(model, corpus, corpus, Hyperparameters(epochs=1, dim=2), MemorySink())


def test_checkpoint_round_trip(tmp_path):
    corpus = _two_class_corpus()
    model = refmodel.init_model(refmodel.build_vocab(corpus), ("run", "stop"), dim=4, seed=2)
    trained = refmodel.train(model, corpus, corpus, Hyperparameters(epochs=2, dim=4), MemorySink())
    path = refmodel.save_checkpoint(trained, tmp_path / "model.json")
    loaded = refmodel.load_checkpoint(path)
    assert loaded.vocab.itos == trained.vocab.itos
    assert loaded.classes == trained.classes
    assert loaded.hyper == trained.hyper
    np.testing.assert_array_equal(loaded.weights, trained.weights)
    np.testing.assert_array_equal(loaded.embeddings, trained.embeddings)

    bogus = tmp_path / "bogus.json"
    bogus.write_text('{"format": "something-else"}')
    with pytest.raises(SchemaViolation):
        refmodel.load_checkpoint(bogus)
    with pytest.raises(IoFailure):
        refmodel.load_checkpoint(tmp_path / "missing.json")


def test_sparse_step_matches_dense_gradient():
    rng = np.random.default_rng(3)
    model = random_model(rng, vocab_size=9, classes=3, dim=4)
    batch = [np.array([2, 2, 5]), np.array([], dtype=np.int64), np.array([7])]
    labels = np.array([0, 2, 1])
    _, grad_embeddings, grad_weights = refmodel.loss_and_gradients(model, batch, labels)
    expected_embeddings = model.embeddings - 0.3 * grad_embeddings
    expected_weights = model.weights - 0.3 * grad_weights

    refmodel._sgd_step(model, batch, labels, 0.3)
    np.testing.assert_allclose(model.embeddings, expected_embeddings, rtol=0, atol=1e-12)
    np.testing.assert_allclose(model.weights, expected_weights, rtol=0, atol=1e-12)
    # rows absent from the batch are never written
    np.testing.assert_array_equal(model.embeddings[[0, 3, 4, 6, 8]], expected_embeddings[[0, 3, 4, 6, 8]])


def test_per_sample_descent_memorizes_arbitrary_labels():
    classes = ("get", "put", "run", "set")
    corpus = corpus_of(*(
        (["value", "result", pseudo_word(i)], classes[(i * 7 + i // 3) % 4]) for i in range(40)
    ))
    model = refmodel.init_model(refmodel.build_vocab(corpus), classes, dim=16, seed=4)
    sink = MemorySink()
    hyper = Hyperparameters(epochs=200, batch_size=1, learning_rate=0.5, seed=4, dim=16)
    refmodel.train(model, corpus, corpus, hyper, sink)
    final = build_trace(sink.records).records(199, "train")
    assert all(record.correct for record in final)


def test_training_needs_heldout_samples():
    corpus = _two_class_corpus()
    model = refmodel.init_model(refmodel.build_vocab(corpus), ("run", "stop"), dim=2, seed=0)
    empty = Corpus.from_samples(Task.METHOD_NAME, [])
    with pytest.raises(EmptyCorpus):
        refmodel.train(model, corpus, empty, Hyperparameters(epochs=1, dim=2), MemorySink())
