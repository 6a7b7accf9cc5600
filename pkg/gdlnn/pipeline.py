"""End-to-end steps behind the CLI commands."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import MiningConfig, RunConfig, epsilon_grid, topk_grid
from .data import Dataset, generate_ba2motifs, load_dataset, split
from .errors import ConfigError, DataError, TrainingError
from .explain import Explanation, empty_explanations, explain_all, fidelity, sparsity
from .graph import Graph
from .log import kv
from .mining import ScoredProgram, TrainingSet, hamming_objective, learn, mine_pool, top_k
from .model import FitResult, Model, accuracy, embed_graphs, fit_model

logger = logging.getLogger(__name__)


def resolve_dataset(run: RunConfig, needs_split: bool = True) -> Dataset:
    """Load or generate the dataset a run names, split unless it already is.

    Raises:
        ConfigError: no --data for a file format
        DataError: the path does not exist or cannot be parsed
    """
    if run.format == "ba2motifs":
        dataset = generate_ba2motifs(run.count, run.split.seed)
    else:
        if not run.data:
            raise ConfigError(f"--data is required for format {run.format!r}")
        if not Path(run.data).exists():
            raise DataError(f"dataset path {run.data} does not exist")
        dataset = load_dataset(run.data, run.format, run.name)
    if needs_split and dataset.splits is None:
        dataset = split(dataset, run.split)
    return dataset


def graphs_for(dataset: Dataset, split_name: str) -> List[Graph]:
    graphs = dataset.subset(split_name)
    if not graphs:
        raise DataError(f"split {split_name!r} of {dataset.name or 'the dataset'} is empty")
    return graphs


def mining_config_for(run: RunConfig, epsilon: float) -> MiningConfig:
    return run.mining.model_copy(update={"epsilon": epsilon})


def mine_layer(training: TrainingSet, run: RunConfig) -> List[ScoredProgram]:
    return learn(training, run.mining, run.jobs)


def _pairs(reps: np.ndarray, graphs: Sequence[Graph]) -> List[Tuple[np.ndarray, int]]:
    return [(reps[i], g.label) for i, g in enumerate(graphs)]


@dataclass
class TrainOutcome:
    model: Model
    val_accuracy: Optional[float]
    test_accuracy: Optional[float]


def train_model(
    train_graphs: Sequence[Graph],
    val_graphs: Sequence[Graph],
    test_graphs: Sequence[Graph],
    run: RunConfig,
    classes: Sequence[int],
    layer: Optional[Tuple[List[ScoredProgram], float]] = None,
) -> TrainOutcome:
    """Mine a GDL layer (or take ``layer``), embed, fit the MLP head.

    With ``run.grid`` every epsilon in the epsilon grid is mined once and
    every layer width in the top-k grid is tried against the full MLP grid;
    the best validation accuracy wins, earlier candidates winning ties.
    """
    if not train_graphs:
        raise TrainingError("no training graphs")
    training = TrainingSet.from_graphs(train_graphs)
    n = len(training)

    if layer is not None:
        epsilons = [layer[1]]
    elif run.grid:
        epsilons = epsilon_grid(n)
    else:
        epsilons = [run.mining.epsilon]

    best: Optional[Tuple[float, List[ScoredProgram], float, FitResult]] = None
    for epsilon in epsilons:
        if layer is not None:
            pool = list(layer[0])
            widths = [len(pool)]
        else:
            pool = mine_pool(training, mining_config_for(run, epsilon), run.jobs)
            widths = topk_grid(n) if run.grid else [run.mining.k]
        ranking = top_k(pool, len(pool)) if layer is None else pool
        column = {mined.canonical: i for i, mined in enumerate(ranking)}
        programs = [mined.program for mined in ranking]
        train_reps = embed_graphs(train_graphs, programs, run.activation, run.mining.match_budget, run.jobs)
        val_reps = embed_graphs(val_graphs, programs, run.activation, run.mining.match_budget, run.jobs)

        for k in widths:
            chosen = ranking if layer is not None else top_k(pool, k, run.mining.balanced)
            cols = [column[mined.canonical] for mined in chosen]
            fit = fit_model(
                _pairs(train_reps[:, cols], train_graphs),
                _pairs(val_reps[:, cols], val_graphs),
                run.train,
                classes,
                grid=run.grid,
            )
            logger.info(kv("train.layer", epsilon=epsilon, k=len(chosen), accuracy=fit.val_accuracy))
            if best is None or fit.val_accuracy > best[0]:
                best = (fit.val_accuracy, chosen, epsilon, fit)

    selection_accuracy, chosen, epsilon, fit = best
    metadata = {
        "epsilon": repr(float(epsilon)),
        "k": str(len(chosen)),
        "split_seed": str(run.split.seed),
        "lr": repr(fit.cfg.lr),
        "hidden": str(fit.cfg.hidden),
        "layers": str(fit.cfg.layers),
        "weight_decay": repr(fit.cfg.weight_decay),
        "train_seed": str(fit.cfg.seed),
    }
    model = Model(tuple(chosen), fit.mlp, run.activation, tuple(classes), epsilon, run.mining.match_budget, metadata)
    val_accuracy = selection_accuracy if val_graphs else None
    test_accuracy = accuracy(model, test_graphs, jobs=run.jobs) if test_graphs else None
    if val_accuracy is not None:
        model.metadata["val_accuracy"] = repr(val_accuracy)
    if test_accuracy is not None:
        model.metadata["test_accuracy"] = repr(test_accuracy)
    logger.info(kv("train.done", k=len(chosen), epsilon=epsilon, val_accuracy=val_accuracy, test_accuracy=test_accuracy))
    return TrainOutcome(model, val_accuracy, test_accuracy)


@dataclass
class EvalReport:
    graphs: int
    accuracy: float
    fidelity: float
    sparsity: float
    objective: float
    empty: int = 0


def evaluate(model: Model, graphs: Sequence[Graph], run: RunConfig) -> Tuple[EvalReport, List[Explanation]]:
    """Accuracy, explanation quality and the Hamming objective on ``graphs``."""
    labels = [g.label for g in graphs]
    if any(y is None for y in labels):
        raise DataError("evaluation needs labeled graphs")
    explanations = explain_all(graphs, model, run.explain, run.jobs)
    subgraphs = [e.subgraph for e in explanations]
    report = EvalReport(
        graphs=len(graphs),
        accuracy=accuracy(model, graphs, labels, run.jobs),
        fidelity=fidelity(model, list(zip(graphs, labels)), subgraphs),
        sparsity=sparsity(graphs, subgraphs),
        objective=hamming_objective(model.program_list, TrainingSet.from_graphs(graphs), model.budget),
        empty=empty_explanations(subgraphs),
    )
    logger.info(kv("eval.done", graphs=report.graphs, accuracy=report.accuracy,
                   fidelity=report.fidelity, sparsity=report.sparsity, objective=report.objective,
                   empty=report.empty))
    return report, explanations

