"""Datasets: TU text files, JSON files, splits and the BA-2Motifs generator."""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, Field, ValidationError

from .config import SplitConfig
from .errors import ConfigError, DataError, SchemaError
from .graph import Graph
from .log import kv
from .mining import TrainingSet

logger = logging.getLogger(__name__)

# (node feature dim, edge feature dim) of the benchmark datasets, used to
# decide whether integer labels are appended to continuous attributes.
KNOWN_DIMS: Dict[str, Tuple[int, int]] = {
    "MUTAG": (1, 1),
    "Mutagenicity": (1, 1),
    "BBBP": (9, 3),
    "BACE": (9, 3),
    "ENZYMES": (19, 0),
    "PROTEINS": (2, 0),
    "PTC_MR": (1, 1),
    "NCI1": (1, 0),
}

SPLIT_NAMES = ("all", "train", "val", "test")


class Splits(NamedTuple):
    train: Tuple[int, ...]
    val: Tuple[int, ...]
    test: Tuple[int, ...]


@dataclass(frozen=True)
class Dataset:
    """Labeled graphs sharing node and edge feature dimensions."""

    graphs: Tuple[Graph, ...]
    name: str = ""
    d: int = 0
    c: int = 0
    splits: Optional[Splits] = None

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        for i, g in enumerate(self.graphs):
            if (g.d, g.c) != (self.d, self.c):
                raise DataError(
                    f"graph {i} has feature dimensions ({g.d}, {g.c}), dataset has ({self.d}, {self.c})"
                )
        if self.splits is not None:
            splits = Splits(*(tuple(int(i) for i in part) for part in self.splits))
            everything = sorted(splits.train + splits.val + splits.test)
            if everything != list(range(len(self.graphs))):
                raise DataError("splits must partition the dataset's graph indices")
            object.__setattr__(self, "splits", splits)

    @classmethod
    def from_graphs(cls, graphs: Sequence[Graph], name: str = "") -> "Dataset":
        d, c = (graphs[0].d, graphs[0].c) if graphs else (0, 0)
        return cls(tuple(graphs), name, d, c)

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def label_set(self) -> Tuple[int, ...]:
        return tuple(sorted({g.label for g in self.graphs if g.label is not None}))

    def with_splits(self, splits: Splits) -> "Dataset":
        return Dataset(self.graphs, self.name, self.d, self.c, splits)

    def indices(self, split: str = "all") -> Tuple[int, ...]:
        if split == "all":
            return tuple(range(len(self.graphs)))
        if split not in SPLIT_NAMES:
            raise ConfigError(f"unknown split {split!r}, expected one of {SPLIT_NAMES}")
        if self.splits is None:
            raise DataError(f"dataset {self.name!r} has not been split")
        return getattr(self.splits, split)

    def subset(self, split: str = "all") -> List[Graph]:
        return [self.graphs[i] for i in self.indices(split)]

    @property
    def train(self) -> List[Graph]:
        return self.subset("train")

    @property
    def val(self) -> List[Graph]:
        return self.subset("val")

    @property
    def test(self) -> List[Graph]:
        return self.subset("test")

    def training_set(self, split: str = "train") -> TrainingSet:
        return TrainingSet.from_graphs(self.subset(split))


# JSON

class GraphRecord(BaseModel):
    nodes: List[List[float]]
    edges: List[Tuple[int, int]] = Field(default_factory=list)
    edge_features: Optional[List[List[float]]] = None
    label: Optional[int] = None


class SplitsRecord(BaseModel):
    train: List[int]
    val: List[int]
    test: List[int]


class DatasetRecord(BaseModel):
    """On-disk JSON layout of a dataset; node ids are 0-indexed."""

    name: str = ""
    d: int = Field(0, ge=0)
    c: int = Field(0, ge=0)
    graphs: List[GraphRecord] = Field(default_factory=list)
    splits: Optional[SplitsRecord] = None


def _graph_from_record(i: int, record: GraphRecord, d: int, c: int) -> Graph:
    for row in record.nodes:
        if len(row) != d:
            raise SchemaError(f"graph {i}: node feature row of length {len(row)}, expected {d}")
    m = len(record.edges)
    edge_rows = record.edge_features if record.edge_features is not None else [[] for _ in range(m)]
    if len(edge_rows) != m:
        raise SchemaError(f"graph {i}: {m} edges but {len(edge_rows)} edge feature rows")
    for row in edge_rows:
        if len(row) != c:
            raise SchemaError(f"graph {i}: edge feature row of length {len(row)}, expected {c}")
    x = np.array(record.nodes, dtype=np.float64).reshape(len(record.nodes), d)
    e = np.array(record.edges, dtype=np.int64).reshape(m, 2)
    ef = np.array(edge_rows, dtype=np.float64).reshape(m, c)
    return Graph(x, e, ef, record.label)


def _graph_to_record(g: Graph) -> GraphRecord:
    return GraphRecord(
        nodes=g.node_features.tolist(),
        edges=[(int(u), int(v)) for u, v in g.edges],
        edge_features=g.edge_features.tolist() if g.c else None,
        label=g.label,
    )


def load_json(path: str) -> Dataset:
    """Load a dataset from its JSON layout.

    Raises:
        DataError: unreadable file
        SchemaError: malformed JSON or a record violating the layout
        GraphError: a graph violating the graph invariants
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise DataError(f"cannot read dataset {path}: {e}") from e
    try:
        record = DatasetRecord.model_validate_json(text)
    except ValidationError as e:
        raise SchemaError(f"{path} is not a valid dataset: {e}") from e
    graphs = tuple(_graph_from_record(i, g, record.d, record.c) for i, g in enumerate(record.graphs))
    splits = None
    if record.splits is not None:
        splits = Splits(tuple(record.splits.train), tuple(record.splits.val), tuple(record.splits.test))
    dataset = Dataset(graphs, record.name, record.d, record.c, splits)
    logger.info(kv("data.loaded", path=path, graphs=len(dataset), d=dataset.d, c=dataset.c))
    return dataset


def save_json(dataset: Dataset, path: str) -> None:
    splits = None
    if dataset.splits is not None:
        splits = SplitsRecord(
            train=list(dataset.splits.train), val=list(dataset.splits.val), test=list(dataset.splits.test)
        )
    record = DatasetRecord(
        name=dataset.name,
        d=dataset.d,
        c=dataset.c,
        graphs=[_graph_to_record(g) for g in dataset.graphs],
        splits=splits,
    )
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(record.model_dump_json(indent=1))


# TU format

def _tu_file(directory: Path, name: str, suffix: str) -> Path:
    return directory / f"{name}_{suffix}.txt"


def _load_txt(path: Path, dtype, ndmin: int) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", dtype=dtype, ndmin=ndmin)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot parse {path.name}: {e}") from e


def _optional(directory: Path, name: str, suffix: str, dtype, ndmin: int) -> Optional[np.ndarray]:
    path = _tu_file(directory, name, suffix)
    if not path.exists():
        return None
    return _load_txt(path, dtype, ndmin)


def _features(
    attributes: Optional[np.ndarray], labels: Optional[np.ndarray], rows: int, expected: Optional[int], what: str
) -> np.ndarray:
    if attributes is not None and len(attributes) != rows:
        raise DataError(f"{len(attributes)} {what} attribute rows for {rows} {what}s")
    if labels is not None and len(labels) != rows:
        raise DataError(f"{len(labels)} {what} labels for {rows} {what}s")
    parts = []
    if attributes is not None:
        parts.append(attributes.astype(np.float64))
        if labels is not None and expected == attributes.shape[1] + 1:
            parts.append(labels.reshape(-1, 1).astype(np.float64))
    elif labels is not None:
        parts.append(labels.reshape(-1, 1).astype(np.float64))
    if not parts:
        return np.zeros((rows, 0))
    return np.hstack(parts)


def load_tu(directory: str, name: Optional[str] = None) -> Dataset:
    """Load a dataset in the TU plain-text layout.

    Args:
        directory: Folder holding ``<name>_A.txt`` and its siblings
        name: File prefix; defaults to the folder name

    Returns:
        Dataset with node ids re-indexed from 0 inside each graph. Edges are
        kept as the directed pairs listed in ``_A.txt``.

    Raises:
        DataError: missing files, out-of-range ids or inconsistent counts
    """
    folder = Path(directory)
    name = name or folder.name
    for suffix in ("A", "graph_indicator", "graph_labels"):
        if not _tu_file(folder, name, suffix).exists():
            raise DataError(f"missing {_tu_file(folder, name, suffix)}")

    indicator = _load_txt(_tu_file(folder, name, "graph_indicator"), np.int64, 1) - 1
    graph_labels = _load_txt(_tu_file(folder, name, "graph_labels"), np.int64, 1)
    adjacency = _load_txt(_tu_file(folder, name, "A"), np.int64, 2) - 1
    if adjacency.size == 0:
        adjacency = np.zeros((0, 2), dtype=np.int64)
    if adjacency.shape[1] != 2:
        raise DataError(f"{name}_A.txt must hold comma-separated node pairs")

    n_nodes, n_graphs = len(indicator), len(graph_labels)
    if n_nodes and (indicator.min() < 0 or indicator.max() >= n_graphs):
        raise DataError(f"graph indicator refers to graphs outside 1..{n_graphs}")
    if np.any(np.diff(indicator) < 0):
        raise DataError("graph indicator must list each graph's nodes contiguously")
    if adjacency.size and (adjacency.min() < 0 or adjacency.max() >= n_nodes):
        raise DataError(f"edge endpoint outside 1..{n_nodes}")

    expected_d, expected_c = KNOWN_DIMS.get(name, (None, None))
    x = _features(
        _optional(folder, name, "node_attributes", np.float64, 2),
        _optional(folder, name, "node_labels", np.int64, 1),
        n_nodes, expected_d, "node",
    )
    ef = _features(
        _optional(folder, name, "edge_attributes", np.float64, 2),
        _optional(folder, name, "edge_labels", np.int64, 1),
        len(adjacency), expected_c, "edge",
    )

    src_graph = indicator[adjacency[:, 0]]
    if np.any(src_graph != indicator[adjacency[:, 1]]):
        raise DataError("an edge connects nodes of different graphs")
    counts = np.bincount(indicator, minlength=n_graphs)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    order = np.argsort(src_graph, kind="stable")
    edge_counts = np.bincount(src_graph, minlength=n_graphs)
    edge_offsets = np.concatenate([[0], np.cumsum(edge_counts)[:-1]])

    graphs = []
    for gi in range(n_graphs):
        start = offsets[gi]
        rows = order[edge_offsets[gi]:edge_offsets[gi] + edge_counts[gi]]
        graphs.append(Graph(
            x[start:start + counts[gi]],
            adjacency[rows] - start,
            ef[rows],
            int(graph_labels[gi]),
        ))
    dataset = Dataset(tuple(graphs), name, x.shape[1], ef.shape[1])
    logger.info(kv("data.loaded", path=str(folder), name=name, graphs=len(dataset), d=dataset.d, c=dataset.c))
    return dataset


def load_dataset(path: str, fmt: str = "json", name: Optional[str] = None) -> Dataset:
    if fmt == "tu":
        return load_tu(path, name)
    if fmt == "json":
        return load_json(path)
    raise ConfigError(f"cannot load format {fmt!r} from a path")


# Splitting

def split(dataset: Dataset, cfg: Optional[SplitConfig] = None) -> Dataset:
    """Seeded shuffle, then cut at the floor of each cumulative ratio.

    Raises:
        DataError: fewer than three graphs
    """
    cfg = cfg or SplitConfig()
    n = len(dataset)
    if n < 3:
        raise DataError(f"cannot split {n} graphs into train/val/test")
    perm = np.random.default_rng(cfg.seed).permutation(n)
    first = math.floor(cfg.ratios[0] * n + 1e-9)
    second = math.floor((cfg.ratios[0] + cfg.ratios[1]) * n + 1e-9)
    splits = Splits(
        tuple(sorted(int(i) for i in perm[:first])),
        tuple(sorted(int(i) for i in perm[first:second])),
        tuple(sorted(int(i) for i in perm[second:])),
    )
    logger.info(kv("data.split", train=len(splits.train), val=len(splits.val), test=len(splits.test), seed=cfg.seed))
    return dataset.with_splits(splits)


# BA-2Motifs

BASE_NODES = 20
ATTACHMENT = 1


def _house(with_middle_edge: bool, offset: int) -> List[Tuple[int, int]]:
    roof, left, right, bottom_left, bottom_right = range(offset, offset + 5)
    edges = [(roof, left), (roof, right), (left, bottom_left), (right, bottom_right), (bottom_left, bottom_right)]
    if with_middle_edge:
        edges.append((left, right))
    return edges


def generate_ba2motifs(
    count: int = 1000, seed: int = 0, base_nodes: int = BASE_NODES, attach: int = ATTACHMENT
) -> Dataset:
    """Synthetic two-class benchmark.

    Every graph is a Barabasi-Albert base graph plus a five-node house motif
    joined by one edge from a motif middle node to a random base node. The
    two middle nodes are adjacent in label 1 graphs and not in label 2 ones.
    Node features are undirected degrees; every edge is stored in both
    directions. The first half of the graphs carry label 1.
    """
    if count < 0 or count % 2:
        raise ConfigError(f"BA-2Motifs needs an even graph count, got {count}")
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(count):
        label = 1 if i < count // 2 else 2
        g = nx.barabasi_albert_graph(base_nodes, attach, seed=int(rng.integers(2 ** 31)))
        g.add_edges_from(_house(label == 1, base_nodes))
        g.add_edge(base_nodes + 1, int(rng.integers(base_nodes)))
        n = g.number_of_nodes()
        degrees = np.array([[float(g.degree(v))] for v in range(n)])
        pairs = sorted({(u, v) for a, b in g.edges() for u, v in ((a, b), (b, a))})
        graphs.append(Graph(degrees, np.array(pairs, dtype=np.int64).reshape(-1, 2), np.zeros((len(pairs), 0)), label))
    dataset = Dataset(tuple(graphs), "BA-2Motifs", 1, 0)
    logger.info(kv("data.generated", name=dataset.name, graphs=count, seed=seed))
    return dataset


# Statistics

@dataclass(frozen=True)
class DatasetStats:
    graphs: int
    avg_nodes: float
    avg_edges: float
    avg_directed_edges: float
    labels: int
    d: int
    c: int


def _undirected_edges(g: Graph) -> int:
    return len({(min(int(u), int(v)), max(int(u), int(v))) for u, v in g.edges})


def stats(dataset: Dataset) -> DatasetStats:
    """Graph count, average sizes, label count and feature dimensions.

    Average edges count each undirected pair once; directed pairs as stored
    are reported separately.
    """
    if not dataset.graphs:
        return DatasetStats(0, 0.0, 0.0, 0.0, 0, dataset.d, dataset.c)
    return DatasetStats(
        graphs=len(dataset),
        avg_nodes=float(np.mean([g.n for g in dataset.graphs])),
        avg_edges=float(np.mean([_undirected_edges(g) for g in dataset.graphs])),
        avg_directed_edges=float(np.mean([g.m for g in dataset.graphs])),
        labels=len(dataset.label_set),
        d=dataset.d,
        c=dataset.c,
    )
