import os

import numpy as np
import pytest

from gdlnn.config import SplitConfig
from gdlnn.errors import ConfigError, DataError, GraphError, SchemaError
from gdlnn.data import (
    Dataset,
    Splits,
    generate_ba2motifs,
    load_dataset,
    load_json,
    load_tu,
    save_json,
    split,
    stats,
)
from gdlnn.graph import Graph


def write_tu(folder, name, files):
    folder.mkdir(parents=True, exist_ok=True)
    for suffix, lines in files.items():
        (folder / f"{name}_{suffix}.txt").write_text("\n".join(lines) + "\n")


def tiny_dataset(count):
    return Dataset.from_graphs([Graph.from_lists([[float(i)]], [], label=1 + i % 2) for i in range(count)])


def test_load_example_json(toy_json, toy):
    dataset = load_json(toy_json)
    assert dataset.name == "toy"
    assert (dataset.d, dataset.c) == (1, 0)
    assert list(dataset.graphs) == toy
    assert dataset.label_set == (1, 2)
    assert dataset.splits is None


def test_json_round_trip(tmp_path):
    g = Graph.from_lists([[0.5, 1.0], [2.0, -1.0]], [(0, 1), (1, 1)], edge_features=[[3.0], [4.0]], label=7)
    dataset = Dataset((g, g.with_label(8)), "pair", 2, 1, Splits((0,), (1,), ()))
    path = tmp_path / "nested" / "pair.json"
    save_json(dataset, str(path))
    loaded = load_json(str(path))
    assert loaded == dataset


def test_json_errors(tmp_path):
    with pytest.raises(DataError):
        load_json(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text('{"d": 1, "graphs": [{"nodes": "nope"}]}')
    with pytest.raises(SchemaError):
        load_json(str(bad))
    wrong_width = tmp_path / "width.json"
    wrong_width.write_text('{"d": 2, "graphs": [{"nodes": [[1.0]]}]}')
    with pytest.raises(SchemaError):
        load_json(str(wrong_width))
    dangling = tmp_path / "dangling.json"
    dangling.write_text('{"d": 1, "graphs": [{"nodes": [[1.0]], "edges": [[0, 3]]}]}')
    with pytest.raises(GraphError):
        load_json(str(dangling))


def test_load_tu(tmp_path):
    folder = tmp_path / "TOY"
    write_tu(folder, "TOY", {
        "A": ["1,2", "2,1", "3,4", "4,5"],
        "graph_indicator": ["1", "1", "2", "2", "2"],
        "graph_labels": ["1", "-1"],
        "node_labels": ["0", "1", "2", "0", "1"],
        "edge_labels": ["5", "5", "6", "7"],
    })
    dataset = load_tu(str(folder))
    assert dataset.name == "TOY"
    assert len(dataset) == 2
    assert (dataset.d, dataset.c) == (1, 1)
    first, second = dataset.graphs
    assert first.label == 1 and second.label == -1
    assert first.node_features.ravel().tolist() == [0.0, 1.0]
    assert first.edges.tolist() == [[0, 1], [1, 0]]
    assert second.edges.tolist() == [[0, 1], [1, 2]]
    assert second.edge_features.ravel().tolist() == [6.0, 7.0]
    assert load_dataset(str(folder), "tu") == dataset


def test_load_tu_attributes_and_labels(tmp_path):
    # attributes win unless the known width also asks for the labels
    folder = tmp_path / "MUTAG"
    write_tu(folder, "MUTAG", {
        "A": ["1,2"],
        "graph_indicator": ["1", "1"],
        "graph_labels": ["1"],
        "node_labels": ["3", "4"],
        "node_attributes": ["0.5,0.25", "1.5,0.75"],
    })
    dataset = load_tu(str(folder))
    assert dataset.d == 2
    assert dataset.graphs[0].node_features.tolist() == [[0.5, 0.25], [1.5, 0.75]]


def test_load_tu_errors(tmp_path):
    with pytest.raises(DataError, match="missing"):
        load_tu(str(tmp_path / "NONE"))
    folder = tmp_path / "CROSS"
    write_tu(folder, "CROSS", {
        "A": ["1,3"],
        "graph_indicator": ["1", "1", "2"],
        "graph_labels": ["0", "1"],
    })
    with pytest.raises(DataError, match="different graphs"):
        load_tu(str(folder))
    folder = tmp_path / "RANGE"
    write_tu(folder, "RANGE", {
        "A": ["1,9"],
        "graph_indicator": ["1", "1"],
        "graph_labels": ["0"],
    })
    with pytest.raises(DataError):
        load_tu(str(folder))


def test_load_dataset_rejects_generated_format(tmp_path):
    with pytest.raises(ConfigError):
        load_dataset(str(tmp_path), "ba2motifs")


@pytest.mark.parametrize("count, sizes", [(10, (8, 1, 1)), (1000, (800, 100, 100)), (3, (2, 0, 1))])
def test_split_sizes(count, sizes):
    splits = split(tiny_dataset(count)).splits
    assert tuple(len(part) for part in splits) == sizes
    assert sorted(splits.train + splits.val + splits.test) == list(range(count))
    assert list(splits.train) == sorted(splits.train)


def test_split_is_seeded():
    dataset = tiny_dataset(50)
    assert split(dataset, SplitConfig(seed=4)).splits == split(dataset, SplitConfig(seed=4)).splits
    assert split(dataset, SplitConfig(seed=4)).splits != split(dataset, SplitConfig(seed=5)).splits


def test_split_needs_three_graphs():
    with pytest.raises(DataError):
        split(tiny_dataset(2))


def test_subsets_need_splits():
    dataset = tiny_dataset(10)
    assert len(dataset.subset("all")) == 10
    with pytest.raises(DataError):
        dataset.subset("train")
    with pytest.raises(ConfigError):
        split(dataset).subset("holdout")


def test_dataset_checks_dimensions_and_partition(g1):
    wide = Graph.from_lists([[1.0, 2.0]], [], label=1)
    with pytest.raises(DataError):
        Dataset((g1, wide), "mixed", 1, 0)
    with pytest.raises(DataError):
        Dataset((g1, g1), "bad", 1, 0, Splits((0,), (0,), ()))


def test_ba2motifs_structure():
    dataset = generate_ba2motifs(20, seed=1)
    assert len(dataset) == 20
    assert [g.label for g in dataset.graphs] == [1] * 10 + [2] * 10
    for g in dataset.graphs:
        assert g.n == 25
        assert (g.d, g.c) == (1, 0)
        pairs = {(int(u), int(v)) for u, v in g.edges}
        assert all((v, u) in pairs for u, v in pairs)
        degrees = np.bincount(g.edges[:, 0], minlength=g.n)
        assert g.node_features.ravel().tolist() == degrees.astype(float).tolist()
        assert ((21, 22) in pairs) == (g.label == 1)
        assert (20, 21) in pairs and (20, 22) in pairs and (23, 24) in pairs


def test_ba2motifs_is_seeded():
    assert generate_ba2motifs(4, seed=3).graphs == generate_ba2motifs(4, seed=3).graphs


def test_ba2motifs_rejects_odd_counts():
    with pytest.raises(ConfigError):
        generate_ba2motifs(7)


def test_stats():
    summary = stats(generate_ba2motifs(10))
    assert summary.graphs == 10
    assert summary.avg_nodes == 25.0
    # 19 base edges, one connector, 6 or 5 house edges
    assert summary.avg_edges == pytest.approx(25.5)
    assert summary.avg_directed_edges == pytest.approx(51.0)
    assert (summary.labels, summary.d, summary.c) == (2, 1, 0)
    empty = stats(Dataset.from_graphs([]))
    assert (empty.graphs, empty.avg_nodes) == (0, 0.0)


@pytest.mark.skipif("GDLNN_DATA" not in os.environ, reason="needs TU datasets under $GDLNN_DATA")
def test_mutag_statistics():
    summary = stats(load_tu(os.path.join(os.environ["GDLNN_DATA"], "MUTAG")))
    assert summary.graphs == 188
    assert summary.labels == 2
    assert (summary.d, summary.c) == (1, 1)
    assert summary.avg_nodes == pytest.approx(17.93, abs=0.01)
