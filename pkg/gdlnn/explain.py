"""Explaining predictions with subgraphs.

A local surrogate over the GDL layer picks the programs that push the
prediction towards its class; nodes are then removed from the graph for as
long as every picked program the graph satisfied stays satisfied.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.linear_model import Ridge

from .config import DEFAULT_BUDGET, ExplainConfig
from .errors import DataError, MatchError
from .gdl import Program, print_program
from .graph import Graph
from .log import kv
from .matcher import satisfies
from .model import Model, predict, predict_from_representation
from .workers import map_ordered

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImportanceResult:
    """Surrogate weights over the GDL layer for one graph.

    Attributes:
        label: Predicted label the surrogate explains
        weights: One coefficient per program (0.0 for inactive programs)
        selected: Program indices with positive weight, strongest first
        r2: Weighted fit of the surrogate on its samples
        degenerate: No variation to learn from; ``selected`` is empty
    """

    label: int
    weights: Tuple[float, ...]
    selected: Tuple[int, ...]
    r2: float
    degenerate: bool = False


@dataclass(frozen=True)
class SubgraphExplanation:
    kept_nodes: Tuple[int, ...]
    subgraph: Graph
    satisfied: Tuple[int, ...]
    iterations: int

    @property
    def kept_edges(self) -> List[Tuple[int, int]]:
        """Kept edges in the original graph's node numbering."""
        return [(self.kept_nodes[u], self.kept_nodes[v]) for u, v in self.subgraph.edges]


@dataclass(frozen=True)
class Explanation:
    importance: ImportanceResult
    subgraph: SubgraphExplanation


def _kernel_width(cfg: ExplainConfig, k: int) -> float:
    return cfg.kernel_width if cfg.kernel_width is not None else 0.75 * math.sqrt(max(1, k))


def important_features(g: Graph, m: Model, cfg: Optional[ExplainConfig] = None) -> ImportanceResult:
    """Fit a weighted ridge surrogate around ``g``'s representation.

    Each sample switches every active coordinate off with probability 0.5
    (inactive ones stay 0); the first sample is the unmasked representation.
    The target is the MLP's probability for the predicted class, the sample
    weight ``exp(-d^2 / width^2)`` with ``d`` the number of switched-off
    coordinates.
    """
    cfg = cfg or ExplainConfig()
    rep = m.embed(g)
    k = len(rep)
    label, _ = predict_from_representation(m, rep)
    target_class = m.classes.index(label)
    active = np.flatnonzero(rep != 0)
    if active.size == 0:
        logger.warning(kv("explain.degenerate", reason="no active programs"))
        return ImportanceResult(label, (0.0,) * k, (), 0.0, True)

    rng = np.random.default_rng(cfg.seed)
    keep = rng.random((cfg.samples, active.size)) >= 0.5
    keep[0] = True
    if (keep == keep[0]).all():
        logger.warning(kv("explain.degenerate", reason="identical masks"))
        return ImportanceResult(label, (0.0,) * k, (), 0.0, True)

    perturbed = np.zeros((cfg.samples, k))
    perturbed[:, active] = keep * rep[active]
    target = m.mlp.predict_proba(perturbed)[:, target_class]
    distance = (~keep).sum(axis=1).astype(np.float64)
    width = _kernel_width(cfg, k)
    sample_weight = np.exp(-(distance ** 2) / width ** 2)

    surrogate = Ridge(alpha=cfg.ridge_alpha)
    features = keep.astype(np.float64)
    surrogate.fit(features, target, sample_weight=sample_weight)
    r2 = float(surrogate.score(features, target, sample_weight=sample_weight))

    weights = np.zeros(k)
    weights[active] = surrogate.coef_
    ranked = sorted((int(i) for i in active if weights[i] > 0), key=lambda i: (-weights[i], i))
    selected = tuple(ranked[: cfg.select])
    logger.debug(kv("explain.surrogate", label=label, active=int(active.size), selected=len(selected), r2=r2))
    return ImportanceResult(label, tuple(float(w) for w in weights), selected, r2)


def _removable_pass(g: Graph, required: Sequence[Program], budget: int) -> List[int]:
    keep = list(range(g.n))
    for node in range(g.n - 1, -1, -1):
        trial = [i for i in keep if i != node]
        sub = g.induced(trial)
        if all(satisfies(p, sub, budget) for p in required):
            keep = trial
    return keep


def refine_nodes(g: Graph, programs: Sequence[Program], budget: int = DEFAULT_BUDGET) -> List[int]:
    """Nodes of ``g`` surviving one greedy removal sweep.

    Nodes are tried in descending index order; a removal stands when every
    program ``g`` satisfies is still satisfied by the induced subgraph.
    """
    required = [p for p in programs if satisfies(p, g, budget)]
    return _removable_pass(g, required, budget)


def refine(g: Graph, programs: Sequence[Program], budget: int = DEFAULT_BUDGET) -> Graph:
    keep = refine_nodes(g, programs, budget)
    if len(keep) == g.n:
        return g
    return g.induced(keep)


def explain(g: Graph, m: Model, cfg: Optional[ExplainConfig] = None) -> Explanation:
    """Pick important programs, then refine ``g`` until no node can go."""
    cfg = cfg or ExplainConfig()
    importance = important_features(g, m, cfg)
    programs = [m.programs[i].program for i in importance.selected]
    satisfied = tuple(i for i, p in zip(importance.selected, programs) if satisfies(p, g, cfg.budget))
    if not importance.selected:
        logger.warning(kv("explain.empty_selection", nodes=g.n))

    kept = list(range(g.n))
    current = g
    iterations = 0
    while True:
        iterations += 1
        local = refine_nodes(current, programs, cfg.budget)
        if len(local) == current.n:
            break
        kept = [kept[i] for i in local]
        current = current.induced(local)

    for i in satisfied:
        if not satisfies(m.programs[i].program, current, cfg.budget):
            raise MatchError(f"refined subgraph no longer satisfies program {i}")
    logger.info(kv("explain.done", label=importance.label, nodes=g.n, kept=len(kept), iterations=iterations))
    return Explanation(importance, SubgraphExplanation(tuple(kept), current, satisfied, iterations))


_EXPLAINER: Optional[Tuple[Model, ExplainConfig]] = None


def _init_explainer(m: Model, cfg: ExplainConfig) -> None:
    global _EXPLAINER
    _EXPLAINER = (m, cfg)


def _explain_one(g: Graph) -> Explanation:
    m, cfg = _EXPLAINER
    return explain(g, m, cfg)


def explain_all(graphs: Sequence[Graph], m: Model, cfg: Optional[ExplainConfig] = None, jobs: int = 1) -> List[Explanation]:
    global _EXPLAINER
    try:
        return map_ordered(_explain_one, graphs, jobs, initializer=_init_explainer, initargs=(m, cfg or ExplainConfig()))
    finally:
        _EXPLAINER = None


def fidelity(m: Model, test: Sequence[Tuple[Graph, int]], explanations: Sequence[SubgraphExplanation]) -> float:
    """Mean of ``[pred(G) == y] - [pred(subgraph) == y]``; lower is better."""
    if len(test) != len(explanations):
        raise DataError(f"{len(test)} graphs but {len(explanations)} explanations")
    if not test:
        return 0.0
    total = 0
    for (g, y), e in zip(test, explanations):
        total += int(predict(m, g)[0] == y) - int(predict(m, e.subgraph)[0] == y)
    return total / len(test)


def sparsity(graphs: Sequence[Graph], explanations: Sequence[SubgraphExplanation]) -> float:
    """Mean fraction of nodes an explanation drops; higher is better.

    Explanations that keep no node at all (nothing selected, or nothing the
    graph satisfied) are left out, so every counted term lies in [0, 1).
    ``empty_explanations`` reports how many were left out.
    """
    if len(graphs) != len(explanations):
        raise DataError(f"{len(graphs)} graphs but {len(explanations)} explanations")
    fractions = [1.0 - len(e.kept_nodes) / g.n for g, e in zip(graphs, explanations) if e.kept_nodes]
    if not fractions:
        return 0.0
    return float(np.mean(fractions))


def empty_explanations(explanations: Sequence[SubgraphExplanation]) -> int:
    return sum(1 for e in explanations if not e.kept_nodes)


def attribution_gap(
    g: Graph, m: Model, importance: ImportanceResult, trials: int = 30, seed: int = 0
) -> float:
    """How much more the selected programs matter than random active ones.

    Returns the mean over ``trials`` of the predicted-class probability drop
    from zeroing the selected coordinates minus the drop from zeroing as many
    randomly chosen unselected active coordinates. 0.0 when nothing is
    selected or there is nothing to compare against.
    """
    rep = m.embed(g)
    target_class = m.classes.index(importance.label)
    selected = list(importance.selected)
    others = [int(i) for i in np.flatnonzero(rep != 0) if int(i) not in set(selected)]
    if not selected or not others:
        return 0.0

    def prob(r: np.ndarray) -> float:
        return float(m.mlp.predict_proba(r.reshape(1, -1))[0, target_class])

    base = prob(rep)
    masked = rep.copy()
    masked[selected] = 0.0
    drop_selected = base - prob(masked)
    rng = np.random.default_rng(seed)
    size = min(len(selected), len(others))
    gaps = []
    for _ in range(trials):
        masked = rep.copy()
        masked[rng.choice(others, size=size, replace=False)] = 0.0
        gaps.append(drop_selected - (base - prob(masked)))
    return float(np.mean(gaps))


def to_dot(g: Graph, kept: Sequence[int]) -> str:
    """DOT rendering of the subgraph induced by ``kept`` (original numbering)."""
    kept = sorted(set(int(i) for i in kept))
    members = set(kept)
    lines = ["digraph explanation {"]
    for i in kept:
        features = ", ".join(repr(float(v)) for v in g.node_features[i])
        lines.append(f'  n{i} [label="{i}: <{features}>"];')
    for j, (u, v) in enumerate(g.edges):
        if int(u) in members and int(v) in members:
            attrs = ""
            if g.c:
                attrs = ' [label="<' + ", ".join(repr(float(x)) for x in g.edge_features[j]) + '>"]'
            lines.append(f"  n{int(u)} -> n{int(v)}{attrs};")
    lines.append("}")
    return "\n".join(lines)


def format_explanation(index: int, g: Graph, m: Model, e: Explanation) -> str:
    imp, sub = e.importance, e.subgraph
    lines = [
        f"explanation graph={index}",
        f"predicted {imp.label}",
        "weights " + " ".join(repr(w) for w in imp.weights),
        f"r2 {imp.r2!r}",
        "selected " + " ".join(str(i) for i in imp.selected),
        "satisfied " + " ".join(str(i) for i in sub.satisfied),
    ]
    for i in imp.selected:
        lines.append(f"program {i}")
        text = print_program(m.programs[i].program)
        if text:
            lines.append(text)
    lines.append("kept " + " ".join(str(i) for i in sub.kept_nodes))
    lines.append(to_dot(g, sub.kept_nodes))
    return "\n".join(lines) + "\n"


def write_explanation(path: str, index: int, g: Graph, m: Model, e: Explanation) -> None:
    with open(path, 'w') as f:
        f.write(format_explanation(index, g, m, e))
