"""Full pipeline runs on benchmark-sized data; run with ``pytest -m slow``."""

import os

import pytest

from gdlnn.config import RunConfig, default_topk
from gdlnn.data import generate_ba2motifs, load_tu, split
from gdlnn.pipeline import evaluate, train_model

pytestmark = pytest.mark.slow


def fit(dataset, run):
    dataset = split(dataset, run.split)
    run = run.model_copy(update={"mining": run.mining.model_copy(update={"k": default_topk(len(dataset.train))})})
    return dataset, train_model(dataset.train, dataset.val, dataset.test, run, dataset.label_set)


def test_ba2motifs_is_learned_and_explained():
    run = RunConfig(command="train", format="ba2motifs", jobs=os.cpu_count() or 1)
    dataset, outcome = fit(generate_ba2motifs(1000, seed=0), run)
    assert outcome.test_accuracy >= 0.95
    report, explanations = evaluate(outcome.model, dataset.test, run)
    assert report.accuracy == outcome.test_accuracy
    assert report.fidelity <= 0.1
    assert report.sparsity >= 0.5
    assert len(explanations) == len(dataset.test)


@pytest.mark.skipif("GDLNN_DATA" not in os.environ, reason="needs TU datasets under $GDLNN_DATA")
def test_mutag_accuracy():
    run = RunConfig(command="train", format="tu", grid=True, jobs=os.cpu_count() or 1)
    dataset = load_tu(os.path.join(os.environ["GDLNN_DATA"], "MUTAG"))
    _, outcome = fit(dataset, run)
    assert outcome.test_accuracy >= 0.85
