import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from pydantic import ValidationError

from gdlnn.config import TrainConfig, make
from gdlnn.errors import ConfigError, DimensionMismatchError, ModelFormatError, ModelVersionError, TrainingError
from gdlnn.graph import Graph
from gdlnn.gdl import parse_program
from gdlnn.matcher import satisfies
from gdlnn.mining import ScoredProgram
from gdlnn.model import (
    MLP,
    ActivationKind,
    Model,
    accuracy,
    embed,
    embed_graphs,
    fit_model,
    format_model,
    load_model,
    numerical_gradients,
    parse_model,
    predict,
    predict_from_representation,
    predict_many,
    save_model,
    train_mlp,
)

from .conftest import P1_TEXT, P2_TEXT
from .strategies import graphs, instances


def permuted(g, perm):
    """``g`` with node i renamed to ``perm[i]``."""
    perm = np.asarray(perm, dtype=np.int64)
    x = np.zeros_like(g.node_features)
    x[perm] = g.node_features
    edges = perm[g.edges] if g.m else g.edges
    return Graph(x, edges, g.edge_features, g.label)


def separable_pairs(count=20):
    pairs = []
    for i in range(count):
        pairs.append((np.array([1.0, 0.0]), 1) if i % 2 == 0 else (np.array([0.0, 1.0]), 2))
    return pairs


def test_embed_example_graphs(p1, p2, toy):
    reps = [embed(g, [p1, p2]).tolist() for g in toy]
    assert reps == [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]


def test_embed_counts(p1, p2, g1):
    assert embed(g1, [p1, p2], ActivationKind.SIGMA_COUNT).tolist() == [2.0, 0.0]
    assert embed(g1, [p1, p2], "sigma_count").tolist() == [2.0, 0.0]


def test_embed_empty_layer(g1):
    assert embed(g1, []).shape == (0,)
    assert embed_graphs([g1, g1], []).shape == (2, 0)
    assert embed_graphs([], []).shape == (0, 0)


def test_embed_checks_dimensions(p1):
    with pytest.raises(DimensionMismatchError):
        embed(Graph.from_lists([[1.0, 2.0]], []), [p1])


def test_embed_graphs_parallel_matches_serial(p1, p2, toy):
    serial = embed_graphs(toy, [p1, p2], jobs=1)
    parallel = embed_graphs(toy, [p1, p2], jobs=2)
    assert np.array_equal(serial, parallel)


def test_representation_ignores_node_order(p1, p2, g1):
    shuffled = permuted(g1, [3, 0, 2, 1])
    assert np.array_equal(embed(shuffled, [p1, p2]), embed(g1, [p1, p2]))


@given(instances(max_vars=3, max_nodes=5), st.randoms())
def test_satisfaction_ignores_node_order(instance, random):
    p, g = instance
    perm = list(range(g.n))
    random.shuffle(perm)
    assert satisfies(p, permuted(g, perm)) == satisfies(p, g)


@pytest.mark.parametrize("seed", range(100))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    mlp = MLP.init([5, 8, 6, 3], rng)
    for b in mlp.biases:
        b += rng.normal(0.0, 0.1, size=b.shape)
    x = rng.normal(size=(7, 5))
    y = rng.integers(0, 3, size=7)
    loss, grads_w, grads_b = mlp.loss_and_grads(x, y, weight_decay=1e-3)
    assert loss == pytest.approx(mlp.loss(x, y, 1e-3))
    num_w, num_b = numerical_gradients(mlp, x, y, 1e-3)
    for analytic, numeric in zip(grads_w + grads_b, num_w + num_b):
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7)


def test_mlp_shape_checks():
    with pytest.raises(TrainingError):
        MLP([np.zeros((2, 3))], [np.zeros(2)])
    with pytest.raises(TrainingError):
        MLP([np.zeros((2, 3)), np.zeros((4, 2))], [np.zeros(3), np.zeros(2)])
    with pytest.raises(TrainingError):
        MLP([], [])


def test_train_on_separable_data():
    mlp = train_mlp(separable_pairs(), [], TrainConfig())
    predicted = np.argmax(mlp.forward(np.array([[1.0, 0.0], [0.0, 1.0]])), axis=1)
    assert predicted.tolist() == [0, 1]


def test_training_is_seeded():
    first = train_mlp(separable_pairs(), separable_pairs(4), TrainConfig(epochs=30, seed=7))
    second = train_mlp(separable_pairs(), separable_pairs(4), TrainConfig(epochs=30, seed=7))
    for a, b in zip(first.weights + first.biases, second.weights + second.biases):
        assert np.array_equal(a, b)


def test_indistinguishable_graphs_cap_accuracy():
    pairs = [(np.array([1.0, 0.0]), 1), (np.array([1.0, 0.0]), 2)]
    fit = fit_model(pairs, [], TrainConfig(epochs=20))
    assert fit.val_accuracy <= 0.5


def test_minibatches_above_full_batch_limit():
    cfg = TrainConfig(epochs=50, full_batch_limit=8, batch_size=4)
    mlp = train_mlp(separable_pairs(), [], cfg)
    assert mlp.sizes == [2, 64, 64, 2]


def test_train_errors():
    with pytest.raises(TrainingError):
        train_mlp([], [], TrainConfig())
    with pytest.raises(TrainingError):
        train_mlp([(np.zeros(2), 1), (np.zeros(3), 2)], [], TrainConfig())
    with pytest.raises(TrainingError):
        train_mlp(separable_pairs(), [], TrainConfig(), classes=[1])


def test_early_stopping_keeps_the_best_validation_weights():
    rng = np.random.default_rng(11)
    train = [(rng.integers(0, 2, size=6).astype(float), int(rng.integers(1, 3))) for _ in range(40)]
    val = [(rng.integers(0, 2, size=6).astype(float), int(rng.integers(1, 3))) for _ in range(20)]
    seen = []
    cfg = TrainConfig(epochs=80, patience=15, seed=3)
    mlp = train_mlp(train, val, cfg, on_epoch=lambda _, metric: seen.append(metric))
    vx = np.array([x for x, _ in val])
    vy = np.array([y - 1 for _, y in val])
    kept = float(np.mean(np.argmax(mlp.forward(vx), axis=1) == vy))
    assert seen
    assert kept >= seen[-1]
    assert kept == max(seen)


LAYER_TEXTS = [P1_TEXT, P2_TEXT, "node a <[1.0, 1.0]>", "node a\nnode b\nedge (a, b)"]


@given(st.permutations(range(len(LAYER_TEXTS))), graphs(d=1, c=0, max_nodes=6))
def test_predictions_ignore_program_order(order, g):
    layer = tuple(ScoredProgram(parse_program(text), 1, 0.5, 1, 1) for text in LAYER_TEXTS)
    mlp = MLP.init([len(layer), 8, 2], np.random.default_rng(0))
    model = Model(layer, mlp, ActivationKind.SIGMA, (1, 2))
    perm = list(order)
    reordered = Model(
        tuple(layer[i] for i in perm),
        MLP([mlp.weights[0][perm]] + mlp.weights[1:], list(mlp.biases)),
        ActivationKind.SIGMA,
        (1, 2),
    )
    label, probs = predict(model, g)
    other_label, other_probs = predict(reordered, g)
    np.testing.assert_allclose(other_probs, probs, rtol=1e-12, atol=1e-12)
    assert other_label == label


def test_train_config_grid_checks():
    with pytest.raises(ValidationError):
        TrainConfig(lr=0.3)
    with pytest.raises(ConfigError):
        make(TrainConfig, hidden=7)
    assert TrainConfig(lr=0.3, override=True).lr == 0.3


def test_predict_composes_embed_and_mlp(toy_model, toy):
    for g in toy:
        label, probs = predict(toy_model, g)
        expected, expected_probs = predict_from_representation(toy_model, toy_model.embed(g))
        assert label == expected
        assert np.array_equal(probs, expected_probs)
        assert probs.sum() == pytest.approx(1.0)
    assert predict_many(toy_model, toy) == [1, 2, 1, 2]
    assert accuracy(toy_model, toy) == 1.0
    assert accuracy(toy_model, []) == 0.0


def test_ties_go_to_the_lowest_class(toy_model):
    label, probs = predict_from_representation(toy_model, np.zeros(2))
    assert label == 1
    assert probs[0] == probs[1]


def test_model_checks_widths(toy_model):
    with pytest.raises(TrainingError):
        Model(toy_model.programs[:1], toy_model.mlp, ActivationKind.SIGMA, (1, 2))
    with pytest.raises(TrainingError):
        Model(toy_model.programs, toy_model.mlp, ActivationKind.SIGMA, (1, 2, 3))


def test_model_file_round_trip(tmp_path, toy_model, toy):
    path = tmp_path / "toy.model"
    toy_model.metadata["epsilon"] = "1.0"
    save_model(toy_model, str(path))
    loaded = load_model(str(path))
    assert loaded.program_list == toy_model.program_list
    assert loaded.classes == (1, 2)
    assert loaded.metadata == {"epsilon": "1.0"}
    assert loaded.activation is ActivationKind.SIGMA
    for g in toy:
        assert np.array_equal(predict(loaded, g)[1], predict(toy_model, g)[1])


def test_model_without_programs_round_trips(g1):
    mlp = MLP.init([0, 4, 2], np.random.default_rng(0))
    mlp.biases[-1][:] = [0.0, 1.0]
    model = Model((), mlp, ActivationKind.SIGMA, (3, 5))
    loaded = parse_model(format_model(model))
    assert loaded.programs == ()
    assert predict(loaded, g1)[0] == 5


def test_truncated_model_file(toy_model):
    lines = format_model(toy_model).splitlines()
    with pytest.raises(ModelFormatError):
        parse_model("\n".join(lines[:-3]))
    with pytest.raises(ModelFormatError):
        parse_model("\n".join(lines[:3]))


def test_model_version_mismatch(toy_model):
    text = format_model(toy_model).replace("gdlnn-model v1", "gdlnn-model v9", 1)
    with pytest.raises(ModelVersionError):
        parse_model(text)
    with pytest.raises(ModelFormatError):
        parse_model("hello\n")
