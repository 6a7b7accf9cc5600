"""Mining GDL programs from a labeled training set.

Every training graph seeds a hill climb: start from the most specific
program describing the graph, repeatedly move to the best-scoring one-step
generalization, stop when every generalization scores strictly lower. The
mined programs are pooled and the top k by score form the GDL layer.
"""

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .config import DEFAULT_BUDGET, MiningConfig
from .errors import BudgetExceeded, DataError, ModelFormatError
from .gdl import (
    Constraints,
    Description,
    EdgeDescription,
    Interval,
    NodeDescription,
    Program,
    canonical_text,
    parse_program,
    print_program,
)
from .graph import Graph
from .log import kv
from .matcher import candidate_mask, satisfies
from .workers import map_ordered

logger = logging.getLogger(__name__)

RESULT_CACHE_LIMIT = 20000


@dataclass(frozen=True)
class TrainingSet:
    """Graphs paired with their labels."""

    graphs: Tuple[Graph, ...]
    labels: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        object.__setattr__(self, "labels", tuple(int(y) for y in self.labels))
        if len(self.graphs) != len(self.labels):
            raise DataError(f"{len(self.graphs)} graphs but {len(self.labels)} labels")

    @classmethod
    def from_pairs(cls, items: Iterable[Tuple[Graph, int]]) -> "TrainingSet":
        items = list(items)
        return cls(tuple(g for g, _ in items), tuple(y for _, y in items))

    @classmethod
    def from_graphs(cls, graphs: Sequence[Graph]) -> "TrainingSet":
        for i, g in enumerate(graphs):
            if g.label is None:
                raise DataError(f"training graph {i} has no label")
        return cls(tuple(graphs), tuple(g.label for g in graphs))

    @property
    def items(self) -> List[Tuple[Graph, int]]:
        return list(zip(self.graphs, self.labels))

    @cached_property
    def label_set(self) -> Tuple[int, ...]:
        return tuple(sorted(set(self.labels)))

    def indices_of(self, label: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.labels) == label)

    def __len__(self) -> int:
        return len(self.graphs)


class ScoreResult(NamedTuple):
    score: float
    matched_same: int
    matched_total: int


@dataclass(frozen=True)
class ScoredProgram:
    program: Program
    label: int
    score: float
    matched_same: int
    matched_total: int

    @cached_property
    def canonical(self) -> str:
        return canonical_text(self.program)

    @property
    def sort_key(self) -> Tuple[float, int, str]:
        return (-self.score, self.program.size, self.canonical)


def score_value(matched_same: int, matched_total: int, eps: float) -> float:
    return matched_same / (matched_total + eps)


class ScoreIndex:
    """Satisfaction queries of many programs against one training set.

    Each distinct constraint vector is evaluated once over the concatenated
    node (and edge) features of all graphs, giving per-graph necessary
    conditions; only graphs passing them reach the backtracking matcher.
    """

    def __init__(self, training: TrainingSet, budget: int = DEFAULT_BUDGET):
        self.training = training
        self.budget = budget
        self.budget_misses = 0
        graphs = training.graphs
        self.size = len(graphs)
        self.labels = np.asarray(training.labels, dtype=np.int64)
        self.n_nodes = np.array([g.n for g in graphs], dtype=np.int64)
        self.n_edges = np.array([g.m for g in graphs], dtype=np.int64)
        self.node_graph = np.repeat(np.arange(self.size), self.n_nodes)
        self.edge_graph = np.repeat(np.arange(self.size), self.n_edges)

        dims = {(g.d, g.c) for g in graphs}
        if len(dims) > 1:
            raise DataError(f"training graphs disagree on feature dimensions: {sorted(dims)}")
        d, c = dims.pop() if dims else (0, 0)
        offsets = np.concatenate([[0], np.cumsum(self.n_nodes)[:-1]]) if graphs else np.zeros(0, dtype=np.int64)
        self.node_x = np.vstack([g.node_features for g in graphs]) if graphs else np.zeros((0, d))
        self.edge_x = np.vstack([g.edge_features for g in graphs]) if graphs else np.zeros((0, c))
        if self.n_edges.sum():
            self.edge_src = np.concatenate([g.edges[:, 0] + off for g, off in zip(graphs, offsets)])
            self.edge_dst = np.concatenate([g.edges[:, 1] + off for g, off in zip(graphs, offsets)])
        else:
            self.edge_src = np.zeros(0, dtype=np.int64)
            self.edge_dst = np.zeros(0, dtype=np.int64)
        self.self_loop = self.edge_src == self.edge_dst

        self._node_masks: Dict[Constraints, np.ndarray] = {}
        self._node_counts: Dict[Constraints, np.ndarray] = {}
        self._edge_masks: Dict[Constraints, np.ndarray] = {}
        self._edge_hosts: Dict[Tuple, np.ndarray] = {}
        self._results: Dict[Program, Tuple[np.ndarray, np.ndarray]] = {}

    def _node_mask(self, constraints: Constraints) -> np.ndarray:
        mask = self._node_masks.get(constraints)
        if mask is None:
            mask = candidate_mask(constraints, self.node_x)
            self._node_masks[constraints] = mask
        return mask

    def _node_count(self, constraints: Constraints) -> np.ndarray:
        counts = self._node_counts.get(constraints)
        if counts is None:
            mask = self._node_mask(constraints)
            counts = np.bincount(self.node_graph[mask], minlength=self.size)
            self._node_counts[constraints] = counts
        return counts

    def _edge_host(self, src: Constraints, dst: Constraints, edge: Constraints, loop: bool) -> np.ndarray:
        key = (src, dst, edge, loop)
        hosts = self._edge_hosts.get(key)
        if hosts is None:
            mask = self._node_mask(src)[self.edge_src] & self._node_mask(dst)[self.edge_dst]
            if edge is not None:
                emask = self._edge_masks.get(edge)
                if emask is None:
                    emask = candidate_mask(edge, self.edge_x)
                    self._edge_masks[edge] = emask
                mask &= emask
            if loop:
                mask &= self.self_loop
            hosts = np.bincount(self.edge_graph[mask], minlength=self.size) > 0
            self._edge_hosts[key] = hosts
        return hosts

    def prefilter(self, p: Program) -> np.ndarray:
        """Graphs that pass cheap necessary conditions for ``p``."""
        ok = (self.n_nodes >= len(p.nodes)) & (self.n_edges >= len(p.edges))
        for constraints, needed in Counter(nd.constraints for nd in p.nodes).items():
            ok &= self._node_count(constraints) >= needed
        constraints_of = {nd.var: nd.constraints for nd in p.nodes}
        for ed in p.edges:
            ok &= self._edge_host(constraints_of[ed.src], constraints_of[ed.dst], ed.constraints, ed.src == ed.dst)
        return ok

    def matches(self, p: Program, known: Optional[np.ndarray] = None) -> np.ndarray:
        """Boolean vector of training graphs satisfying ``p``.

        Args:
            p: Program to evaluate
            known: Graphs already known to satisfy ``p``; they are not rechecked

        Returns:
            Read-only boolean array of length ``len(training)``
        """
        entry = self._results.get(p)
        if entry is None:
            if len(self._results) >= RESULT_CACHE_LIMIT:
                self._results.clear()
            entry = (np.zeros(self.size, dtype=bool), np.zeros(self.size, dtype=bool))
            self._results[p] = entry
        resolved, hit = entry
        # graphs assumed from ``known`` stay unresolved so a later call without them rechecks
        if known is None:
            known = np.zeros(self.size, dtype=bool)
        todo = ~known & ~resolved
        passed = self.prefilter(p) if todo.any() else todo
        for i in np.flatnonzero(todo & passed):
            try:
                hit[i] = satisfies(p, self.training.graphs[i], self.budget)
            except BudgetExceeded:
                self.budget_misses += 1
                logger.warning(kv("score.budget_exceeded", graph=int(i), budget=self.budget, size=p.size))
        resolved |= todo
        result = known | hit
        result.setflags(write=False)
        return result

    def evaluate(
        self, p: Program, label: int, eps: float, known: Optional[np.ndarray] = None
    ) -> Tuple[ScoreResult, np.ndarray]:
        matched = self.matches(p, known)
        same = int(np.count_nonzero(matched & (self.labels == label)))
        total = int(np.count_nonzero(matched))
        return ScoreResult(score_value(same, total, eps), same, total), matched


def score(
    p: Program,
    training: TrainingSet,
    label: int,
    eps: float,
    budget: int = DEFAULT_BUDGET,
    index: Optional[ScoreIndex] = None,
) -> ScoreResult:
    """Precision-style quality of ``p`` for ``label``.

    Returns:
        ``(matched_same / (matched_total + eps), matched_same, matched_total)``
    """
    if eps <= 0:
        raise ValueError(f"epsilon must be positive, got {eps}")
    index = index or ScoreIndex(training, budget)
    result, _ = index.evaluate(p, label, eps)
    return result


def initialize(g: Graph) -> Program:
    """The most specific program describing ``g``: one degenerate interval per feature."""
    names = [f"v{i}" for i in range(g.n)]
    descriptions: List[Description] = []
    for i in range(g.n):
        descriptions.append(NodeDescription(names[i], tuple(Interval.point(v) for v in g.node_features[i])))
    for j, (u, v) in enumerate(g.edges):
        descriptions.append(
            EdgeDescription(names[u], names[v], tuple(Interval.point(x) for x in g.edge_features[j]))
        )
    return Program(tuple(descriptions))


def generalize_itv(vector: Sequence[Interval]) -> List[Tuple[Interval, ...]]:
    """Vectors widening exactly one bound of one coordinate to infinity."""
    vector = tuple(vector)
    widened = []
    for j, itv in enumerate(vector):
        if itv.lo != -math.inf:
            widened.append(vector[:j] + (Interval(-math.inf, itv.hi),) + vector[j + 1:])
    for j, itv in enumerate(vector):
        if itv.hi != math.inf:
            widened.append(vector[:j] + (Interval(itv.lo, math.inf),) + vector[j + 1:])
    return widened


def _replace(d: Description, constraints: Tuple[Interval, ...]) -> Description:
    if isinstance(d, NodeDescription):
        return NodeDescription(d.var, constraints)
    return EdgeDescription(d.src, d.dst, constraints)


def enumerate_mutations(p: Program) -> List[Program]:
    """All one-step generalizations of ``p``, deduplicated, in rule order.

    Rules: remove a node with its incident edges, remove an edge, widen one
    bound of a node's or an edge's constraint vector.
    """
    descriptions = p.descriptions
    out: Dict[Program, None] = {}
    for i, d in enumerate(descriptions):
        if isinstance(d, NodeDescription):
            kept = tuple(
                e for j, e in enumerate(descriptions)
                if j != i and not (isinstance(e, EdgeDescription) and d.var in e.pair)
            )
            out.setdefault(Program(kept))
    for i, d in enumerate(descriptions):
        if isinstance(d, EdgeDescription):
            out.setdefault(Program(descriptions[:i] + descriptions[i + 1:]))
    for kind in (NodeDescription, EdgeDescription):
        for i, d in enumerate(descriptions):
            if not isinstance(d, kind) or d.constraints is None:
                continue
            for vector in generalize_itv(d.constraints):
                out.setdefault(Program(descriptions[:i] + (_replace(d, vector),) + descriptions[i + 1:]))
    return list(out)


class _Choice(NamedTuple):
    program: Program
    result: ScoreResult
    matched: np.ndarray


def _choose(
    candidates: Iterable[Program],
    index: ScoreIndex,
    label: int,
    eps: float,
    known: Optional[np.ndarray] = None,
) -> Optional[_Choice]:
    best: Optional[_Choice] = None
    best_key: Tuple[float, int] = (0.0, 0)
    best_text: Optional[str] = None
    for candidate in candidates:
        result, matched = index.evaluate(candidate, label, eps, known)
        key = (-result.score, candidate.size)
        if best is None or key < best_key:
            best, best_key, best_text = _Choice(candidate, result, matched), key, None
        elif key == best_key:
            if best_text is None:
                best_text = canonical_text(best.program)
            text = canonical_text(candidate)
            if text < best_text:
                best, best_text = _Choice(candidate, result, matched), text
    return best


def choose(
    candidates: Iterable[Program],
    training: TrainingSet,
    label: int,
    eps: float,
    budget: int = DEFAULT_BUDGET,
    index: Optional[ScoreIndex] = None,
) -> Optional[Program]:
    """Best-scoring candidate, or None when there are none.

    Ties go to fewer descriptions, then the smaller canonical text.
    """
    index = index or ScoreIndex(training, budget)
    chosen = _choose(candidates, index, label, eps)
    return chosen.program if chosen else None


def mine(
    training: TrainingSet,
    g: Graph,
    label: int,
    cfg: MiningConfig,
    index: Optional[ScoreIndex] = None,
) -> ScoredProgram:
    """Hill-climb from ``initialize(g)`` towards a higher-scoring program.

    The best mutation is taken while its score is at least the current one,
    so the walk crosses plateaus and stops only when every mutation scores
    strictly lower. ``cfg.stop_on_plateau`` stops on ties instead. Each step
    lowers ``generality_measure``, so the loop terminates.
    """
    index = index or ScoreIndex(training, cfg.match_budget)
    eps = cfg.epsilon
    p = initialize(g)
    result, matched = index.evaluate(p, label, eps)
    steps = 0
    while True:
        chosen = _choose(enumerate_mutations(p), index, label, eps, known=matched)
        if chosen is None:
            break
        if chosen.result.score < result.score:
            break
        if cfg.stop_on_plateau and chosen.result.score <= result.score:
            break
        p, result, matched = chosen
        steps += 1
    logger.debug(kv("mine.converged", label=label, steps=steps, size=p.size, score=result.score))
    return ScoredProgram(p, label, result.score, result.matched_same, result.matched_total)


def select_seeds(training: TrainingSet, cfg: MiningConfig) -> List[int]:
    """Indices of training graphs to mine from.

    Every graph by default; with ``max_seeds`` a seeded sample stratified by
    label, returned in ascending index order.
    """
    n = len(training)
    if cfg.max_seeds is None or cfg.max_seeds >= n:
        return list(range(n))
    rng = np.random.default_rng(cfg.seed)
    counts = {y: len(training.indices_of(y)) for y in training.label_set}
    quota = {y: (cfg.max_seeds * counts[y]) // n for y in counts}
    remaining = cfg.max_seeds - sum(quota.values())
    for y in sorted(counts, key=lambda y: (-counts[y], y)):
        if remaining <= 0:
            break
        quota[y] += 1
        remaining -= 1
    chosen: List[int] = []
    for y in training.label_set:
        members = training.indices_of(y)
        picked = members[rng.permutation(len(members))[: quota[y]]]
        chosen.extend(int(i) for i in picked)
    return sorted(chosen)


_WORKER: Optional[Tuple[TrainingSet, MiningConfig, ScoreIndex]] = None


def _init_miner(training: TrainingSet, cfg: MiningConfig) -> None:
    global _WORKER
    _WORKER = (training, cfg, ScoreIndex(training, cfg.match_budget))


def _mine_seed(i: int) -> Tuple[ScoredProgram, int]:
    training, cfg, index = _WORKER
    before = index.budget_misses
    mined = mine(training, training.graphs[i], training.labels[i], cfg, index)
    logger.info(kv("mine.done", seed=i, label=mined.label, score=mined.score,
                   matched=f"{mined.matched_same}/{mined.matched_total}", size=mined.program.size))
    return mined, index.budget_misses - before


def mine_pool(training: TrainingSet, cfg: MiningConfig, jobs: int = 1) -> List[ScoredProgram]:
    """Mine one program per seed graph, in seed order."""
    global _WORKER
    seeds = select_seeds(training, cfg)
    logger.info(kv("mine.start", graphs=len(training), seeds=len(seeds), epsilon=cfg.epsilon, jobs=jobs))
    try:
        results = map_ordered(_mine_seed, seeds, jobs, initializer=_init_miner, initargs=(training, cfg))
    finally:
        _WORKER = None
    misses = sum(m for _, m in results)
    if misses:
        logger.warning(kv("mine.budget_misses", count=misses))
    return [mined for mined, _ in results]


def top_k(pool: Sequence[ScoredProgram], k: int, balanced: bool = False) -> List[ScoredProgram]:
    """The k best distinct programs by (score desc, size, canonical text).

    Structurally equal programs keep their first occurrence. With
    ``balanced`` the layer is filled round-robin across labels.
    """
    seen = set()
    unique = []
    for mined in pool:
        if mined.canonical in seen:
            continue
        seen.add(mined.canonical)
        unique.append(mined)
    ranked = sorted(unique, key=lambda s: s.sort_key)
    if not balanced:
        return ranked[:k]

    buckets: Dict[int, List[ScoredProgram]] = {}
    for mined in ranked:
        buckets.setdefault(mined.label, []).append(mined)
    chosen: List[ScoredProgram] = []
    depth = 0
    while len(chosen) < k and any(depth < len(b) for b in buckets.values()):
        for label in sorted(buckets):
            if depth < len(buckets[label]) and len(chosen) < k:
                chosen.append(buckets[label][depth])
        depth += 1
    return sorted(chosen, key=lambda s: s.sort_key)


def learn(training: TrainingSet, cfg: MiningConfig, jobs: int = 1) -> List[ScoredProgram]:
    """Mine every seed graph and keep the top k programs."""
    layer = top_k(mine_pool(training, cfg, jobs), cfg.k, cfg.balanced)
    logger.info(kv("learn.done", k=len(layer), requested=cfg.k))
    return layer


def representations(programs: Sequence[Program], graphs: Sequence[Graph], budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """0/1 satisfaction matrix, one row per graph."""
    out = np.zeros((len(graphs), len(programs)))
    for i, g in enumerate(graphs):
        for j, p in enumerate(programs):
            out[i, j] = 1.0 if satisfies(p, g, budget) else 0.0
    return out


def hamming_objective(programs: Sequence[Program], training: TrainingSet, budget: int = DEFAULT_BUDGET) -> float:
    """Signed sum of pairwise Hamming similarities of σ-representations.

    Same-label pairs count positively, different-label pairs negatively,
    over ordered pairs i != j. With no programs the similarity is undefined:
    the result is 0.0 and a warning is logged.
    """
    if not programs:
        logger.warning(kv("objective.undefined", reason="no programs"))
        return 0.0
    n = len(training)
    if n < 2:
        return 0.0
    reps = representations(programs, training.graphs, budget)
    k = reps.shape[1]
    agree = reps @ reps.T + (1.0 - reps) @ (1.0 - reps).T
    sim = agree / k
    labels = np.asarray(training.labels)
    sign = np.where(labels[:, None] == labels[None, :], 1.0, -1.0)
    np.fill_diagonal(sim, 0.0)
    return float((sim * sign).sum())


# Layer files

_LAYER_HEADER = re.compile(r"gdl-layer k=(\d+) epsilon=(\S+)\Z")
_PROGRAM_HEADER = re.compile(r"# program (\d+) label=(-?\d+) score=(\S+) matched=(\d+)/(\d+)\Z")


def format_layer(programs: Sequence[ScoredProgram], epsilon: float) -> str:
    lines = [f"gdl-layer k={len(programs)} epsilon={epsilon!r}"]
    for i, mined in enumerate(programs):
        lines.append(
            f"# program {i} label={mined.label} score={mined.score!r} "
            f"matched={mined.matched_same}/{mined.matched_total}"
        )
        text = print_program(mined.program)
        if text:
            lines.append(text)
        lines.append("")
    return "\n".join(lines) + "\n"


def parse_layer(text: str) -> Tuple[List[ScoredProgram], float]:
    """Parse a layer block.

    Returns:
        The scored programs in file order and the recorded epsilon

    Raises:
        ModelFormatError: malformed header or program block
    """
    lines = text.splitlines()
    if not lines:
        raise ModelFormatError("empty layer block")
    header = _LAYER_HEADER.match(lines[0].strip())
    if header is None:
        raise ModelFormatError(f"bad layer header {lines[0]!r}")
    k, epsilon = int(header.group(1)), float(header.group(2))

    blocks: List[Tuple[re.Match, List[str]]] = []
    for line in lines[1:]:
        match = _PROGRAM_HEADER.match(line.strip())
        if match:
            blocks.append((match, []))
        elif blocks:
            blocks[-1][1].append(line)
        elif line.strip():
            raise ModelFormatError(f"text before the first program header: {line!r}")

    programs = []
    for i, (match, body) in enumerate(blocks):
        if int(match.group(1)) != i:
            raise ModelFormatError(f"program {match.group(1)} out of sequence, expected {i}")
        try:
            program = parse_program("\n".join(body))
        except DataError as e:
            raise ModelFormatError(f"program {i}: {e}") from e
        programs.append(ScoredProgram(
            program=program,
            label=int(match.group(2)),
            score=float(match.group(3)),
            matched_same=int(match.group(4)),
            matched_total=int(match.group(5)),
        ))
    if len(programs) != k:
        raise ModelFormatError(f"layer header announces {k} programs, found {len(programs)}")
    return programs, epsilon


def save_layer(programs: Sequence[ScoredProgram], epsilon: float, path: str) -> None:
    with open(path, 'w') as f:
        f.write(format_layer(programs, epsilon))


def load_layer(path: str) -> Tuple[List[ScoredProgram], float]:
    try:
        with open(path, 'r') as f:
            text = f.read()
    except OSError as e:
        raise DataError(f"cannot read layer file {path}: {e}") from e
    return parse_layer(text)
