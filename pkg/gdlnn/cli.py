import functools
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from . import __version__
from .config import (
    ExplainConfig,
    MiningConfig,
    RunConfig,
    SplitConfig,
    TrainConfig,
    default_topk,
    load_config,
    make,
    save_run_config,
)
from .data import SPLIT_NAMES, save_json, generate_ba2motifs, stats as dataset_stats
from .errors import GDLNNError
from .explain import explain_all, write_explanation
from .gdl import print_program
from .log import setup_logging
from .mining import load_layer, save_layer
from .model import load_model, predict_many, save_model
from .pipeline import evaluate, graphs_for, mine_layer, resolve_dataset, train_model

console = Console()
err_console = Console(stderr=True)


def handle_errors(fn):
    """Turn gdlnn errors into a red message and the error's exit code."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except GDLNNError as e:
            err_console.print(f"Error: {e}", style="red", markup=False, highlight=False)
            sys.exit(e.exit_code)

    return wrapper


def _options(*decorators):
    def apply(fn):
        for decorator in reversed(decorators):
            fn = decorator(fn)
        return fn
    return apply


dataset_options = _options(
    click.option('--data', 'data', default=None, help='Dataset path (TU directory or JSON file)'),
    click.option('--format', 'fmt', type=click.Choice(['tu', 'json', 'ba2motifs']), default='json',
                 help='Dataset format (default: json)'),
    click.option('--name', default=None, help='TU file prefix (default: directory name)'),
    click.option('--count', default=1000, type=int, help='Graphs to generate for ba2motifs (default: 1000)'),
    click.option('--seed', default=0, type=int, help='Seed for splitting, mining, training and explaining'),
    click.option('--jobs', default=1, type=int, help='Worker processes (default: 1)'),
)

mining_options = _options(
    click.option('--epsilon', default=1.0, type=float, help='Score smoothing constant (default: 1.0)'),
    click.option('--topk', default=None, type=int, help='GDL layer width (default: 20% of training graphs)'),
    click.option('--budget', default=None, type=int, help='Matcher step budget per query'),
    click.option('--balanced', is_flag=True, help='Fill the layer round-robin across labels'),
    click.option('--max-seeds', default=None, type=int, help='Mine from at most this many seed graphs'),
    click.option('--stop-on-plateau', is_flag=True, help='Stop mining when no mutation strictly improves'),
)

train_options = _options(
    click.option('--lr', default=0.01, type=float, help='Learning rate (default: 0.01)'),
    click.option('--hidden', default=64, type=int, help='Hidden layer width (default: 64)'),
    click.option('--layers', default=2, type=int, help='Hidden layers (default: 2)'),
    click.option('--weight-decay', default=5e-4, type=float, help='L2 weight decay (default: 5e-4)'),
    click.option('--epochs', default=500, type=int, help='Maximum epochs (default: 500)'),
    click.option('--patience', default=100, type=int, help='Early-stopping patience (default: 100)'),
    click.option('--activation', type=click.Choice(['sigma', 'sigma_count']), default='sigma',
                 help='GDL layer activation (default: sigma)'),
    click.option('--grid', is_flag=True, help='Search epsilon, top-k and MLP hyperparameter grids'),
    click.option('--override', is_flag=True, help='Allow hyperparameters outside the grids'),
)

explain_options = _options(
    click.option('--samples', default=1000, type=int, help='Surrogate samples (default: 1000)'),
    click.option('--select', default=10, type=int, help='Programs kept by the surrogate (default: 10)'),
    click.option('--budget', default=None, type=int, help='Matcher step budget per query'),
)


def _run_config(ctx: click.Context, command: str, params: Dict[str, Any]) -> RunConfig:
    """Assemble and validate the RunConfig for one invocation."""
    seed = params.get('seed', 0)
    budget = params.get('budget')
    budget_kw = {'match_budget': budget} if budget is not None else {}
    explain_budget = {'budget': budget} if budget is not None else {}
    mining = make(
        MiningConfig,
        epsilon=params.get('epsilon', 1.0),
        k=params['topk'] if params.get('topk') is not None else 1,
        seed=seed,
        balanced=params.get('balanced', False),
        stop_on_plateau=params.get('stop_on_plateau', False),
        max_seeds=params.get('max_seeds'),
        **budget_kw,
    )
    train_values = {
        key: params[key]
        for key in ('lr', 'hidden', 'layers', 'weight_decay', 'epochs', 'patience', 'override')
        if key in params
    }
    train = make(TrainConfig, seed=seed, **train_values)
    explain = make(ExplainConfig, samples=params.get('samples', 1000), select=params.get('select', 10),
                   seed=seed, **explain_budget)
    return make(
        RunConfig,
        command=command,
        data=params.get('data'),
        format=params.get('fmt', 'json'),
        name=params.get('name'),
        count=params.get('count', 1000),
        split=make(SplitConfig, seed=seed),
        mining=mining,
        train=train,
        explain=explain,
        activation=params.get('activation', 'sigma'),
        out=params.get('out'),
        layer=params.get('layer'),
        model=params.get('model'),
        jobs=params.get('jobs', 1),
        grid=params.get('grid', False),
        verbosity=ctx.obj.get('verbosity', 0) if ctx.obj else 0,
    )


def _with_topk(run: RunConfig, topk: Optional[int], n_train: int) -> RunConfig:
    k = topk if topk is not None else default_topk(n_train)
    return run.model_copy(update={'mining': run.mining.model_copy(update={'k': k})})


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4f}"


@click.group()
@click.version_option(version=__version__)
@click.option('--config', 'config_path', default=None, help='JSON file of per-command option defaults')
@click.option('-v', '--verbose', count=True, help='More logging (repeatable)')
@click.option('-q', '--quiet', count=True, help='Less logging (repeatable)')
@click.pass_context
@handle_errors
def cli(ctx: click.Context, config_path: Optional[str], verbose: int, quiet: int):
    """GDLNN - mine graph-pattern programs, train and explain graph classifiers."""
    setup_logging(verbose - quiet)
    ctx.ensure_object(dict)
    ctx.obj['verbosity'] = verbose - quiet
    if config_path:
        ctx.default_map = load_config(config_path)


@cli.command()
@dataset_options
@mining_options
@click.option('--split', 'split_name', type=click.Choice(SPLIT_NAMES), default='train',
              help='Graphs to mine from (default: train)')
@click.option('--out', required=True, help='Layer file to write')
@click.pass_context
@handle_errors
def mine(ctx: click.Context, **params):
    """Mine a GDL layer from a dataset.

    Examples:

      # Mine two programs from every graph of a JSON dataset
      gdlnn mine --data graphs.json --split all --topk 2 --out layer.gdl
    """
    run = _run_config(ctx, 'mine', params)
    dataset = resolve_dataset(run, needs_split=params['split_name'] != 'all')
    graphs = graphs_for(dataset, params['split_name'])
    run = _with_topk(run, params['topk'], len(graphs))
    training = dataset.training_set(params['split_name'])
    layer = mine_layer(training, run)
    save_layer(layer, run.mining.epsilon, run.out)
    save_run_config(run, run.out)

    table = Table(title=f"Mined GDL layer ({len(layer)} programs)")
    table.add_column("#", style="cyan")
    table.add_column("Label", style="magenta")
    table.add_column("Score")
    table.add_column("Matched")
    table.add_column("Descriptions")
    for i, mined in enumerate(layer):
        table.add_row(str(i), str(mined.label), f"{mined.score:.4f}",
                      f"{mined.matched_same}/{mined.matched_total}", str(mined.program.size))
    console.print(table)
    console.print(f"[green]✓[/green] Layer written to {run.out}")


@cli.command()
@dataset_options
@mining_options
@train_options
@click.option('--split', 'split_name', type=click.Choice(['train', 'all']), default='train',
              help='Graphs to train on; "train" also validates on the val split (default: train)')
@click.option('--layer', default=None, help='Use a mined layer file instead of mining')
@click.option('--out', required=True, help='Model file to write')
@click.pass_context
@handle_errors
def train(ctx: click.Context, **params):
    """Mine (or load) a GDL layer and train the MLP head.

    Examples:

      # Train on BA-2Motifs with the default settings
      gdlnn train --format ba2motifs --out ba2.model
    """
    run = _run_config(ctx, 'train', params)
    split_name = params['split_name']
    holdout = split_name == 'train'
    dataset = resolve_dataset(run, needs_split=holdout)
    train_graphs = graphs_for(dataset, split_name)
    # "all" trains on every graph, so nothing is left to validate or test on
    val_graphs = dataset.val if holdout else []
    test_graphs = dataset.test if holdout else []
    run = _with_topk(run, params['topk'], len(train_graphs))
    layer = load_layer(run.layer) if run.layer else None
    outcome = train_model(train_graphs, val_graphs, test_graphs, run, dataset.label_set, layer)
    save_model(outcome.model, run.out)
    save_run_config(run, run.out)

    meta = outcome.model.metadata
    console.print(Panel(
        f"[bold]Programs:[/bold] {len(outcome.model.programs)}\n"
        f"[bold]Epsilon:[/bold] {meta['epsilon']}\n"
        f"[bold]MLP:[/bold] lr={meta['lr']} hidden={meta['hidden']} weight_decay={meta['weight_decay']}\n"
        f"[bold]Validation accuracy:[/bold] {_fmt(outcome.val_accuracy)}\n"
        f"[bold]Test accuracy:[/bold] {_fmt(outcome.test_accuracy)}\n"
        f"[bold]Model:[/bold] {run.out}",
        title="Training Complete",
        border_style="green",
    ))


@cli.command()
@dataset_options
@click.option('--model', 'model', required=True, help='Model file')
@click.option('--split', 'split_name', type=click.Choice(SPLIT_NAMES), default='all',
              help='Graphs to classify (default: all)')
@click.option('--out', default=None, help='Also write "index<TAB>label" lines to this file')
@click.pass_context
@handle_errors
def predict(ctx: click.Context, **params):
    """Classify graphs with a trained model."""
    run = _run_config(ctx, 'predict', params)
    model = load_model(run.model)
    dataset = resolve_dataset(run, needs_split=params['split_name'] != 'all')
    indices = dataset.indices(params['split_name'])
    graphs = [dataset.graphs[i] for i in indices]
    labels = predict_many(model, graphs, run.jobs)

    table = Table(title="Predictions")
    table.add_column("Graph", style="cyan")
    table.add_column("Predicted", style="magenta")
    table.add_column("Label")
    for i, g, label in zip(indices, graphs, labels):
        table.add_row(str(i), str(label), "-" if g.label is None else str(g.label))
    console.print(table)
    if run.out:
        Path(run.out).write_text("".join(f"{i}\t{label}\n" for i, label in zip(indices, labels)))


@cli.command()
@dataset_options
@explain_options
@click.option('--model', 'model', required=True, help='Model file')
@click.option('--split', 'split_name', type=click.Choice(SPLIT_NAMES), default='test',
              help='Graphs to explain (default: test)')
@click.option('--index', 'indices', type=int, multiple=True, help='Only explain these graph indices')
@click.option('--out', required=True, help='Directory for per-graph explanation files')
@click.pass_context
@handle_errors
def explain(ctx: click.Context, **params):
    """Explain predictions as subgraphs, one file per graph."""
    run = _run_config(ctx, 'explain', params)
    model = load_model(run.model)
    dataset = resolve_dataset(run, needs_split=params['split_name'] != 'all')
    indices: List[int] = list(dataset.indices(params['split_name']))
    if params['indices']:
        wanted = set(params['indices'])
        indices = [i for i in indices if i in wanted]
    graphs = [dataset.graphs[i] for i in indices]
    explanations = explain_all(graphs, model, run.explain, run.jobs)

    out_dir = Path(run.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = Table(title="Explanations")
    table.add_column("Graph", style="cyan")
    table.add_column("Predicted", style="magenta")
    table.add_column("Selected")
    table.add_column("Kept nodes")
    for i, g, e in zip(indices, graphs, explanations):
        write_explanation(str(out_dir / f"graph_{i}.txt"), i, g, model, e)
        table.add_row(str(i), str(e.importance.label), " ".join(map(str, e.importance.selected)) or "-",
                      f"{len(e.subgraph.kept_nodes)}/{g.n}")
    console.print(table)
    save_run_config(run, str(out_dir / "explanations"))
    for i in sorted({j for e in explanations for j in e.importance.selected}):
        console.print(Panel(print_program(model.programs[i].program) or "(empty program)",
                            title=f"Program {i}", border_style="blue"))


@cli.command(name='eval')
@dataset_options
@explain_options
@click.option('--model', 'model', required=True, help='Model file')
@click.option('--split', 'split_name', type=click.Choice(SPLIT_NAMES), default='test',
              help='Graphs to evaluate (default: test)')
@click.pass_context
@handle_errors
def evaluate_cmd(ctx: click.Context, **params):
    """Report accuracy, fidelity, sparsity and the Hamming objective."""
    run = _run_config(ctx, 'eval', params)
    model = load_model(run.model)
    dataset = resolve_dataset(run, needs_split=params['split_name'] != 'all')
    graphs = graphs_for(dataset, params['split_name'])
    report, _ = evaluate(model, graphs, run)

    table = Table(title=f"Evaluation on {params['split_name']} ({report.graphs} graphs)")
    table.add_column("Metric", style="cyan")
    table.add_column("Value")
    table.add_row("Accuracy", f"{report.accuracy:.4f}")
    table.add_row("Fidelity (lower is better)", f"{report.fidelity:.4f}")
    table.add_row("Sparsity (higher is better)", f"{report.sparsity:.4f}")
    table.add_row("Empty explanations (not in sparsity)", str(report.empty))
    table.add_row("Hamming objective", f"{report.objective:.4f}")
    console.print(table)


@cli.command()
@dataset_options
@click.pass_context
@handle_errors
def stats(ctx: click.Context, **params):
    """Show dataset statistics."""
    run = _run_config(ctx, 'stats', params)
    dataset = resolve_dataset(run, needs_split=False)
    summary = dataset_stats(dataset)

    table = Table(title=f"Dataset {dataset.name or run.data}")
    table.add_column("Statistic", style="cyan")
    table.add_column("Value")
    table.add_row("Graphs", str(summary.graphs))
    table.add_row("Avg nodes", f"{summary.avg_nodes:.1f}")
    table.add_row("Avg edges", f"{summary.avg_edges:.1f}")
    table.add_row("Avg directed edges", f"{summary.avg_directed_edges:.1f}")
    table.add_row("Labels", str(summary.labels))
    table.add_row("Node features", str(summary.d))
    table.add_row("Edge features", str(summary.c))
    console.print(table)


@cli.command()
@click.option('--count', default=1000, type=int, help='Graphs to generate (default: 1000)')
@click.option('--seed', default=0, type=int, help='Generator seed (default: 0)')
@click.option('--out', required=True, help='JSON file to write')
@click.pass_context
@handle_errors
def generate(ctx: click.Context, count: int, seed: int, out: str):
    """Write a BA-2Motifs dataset as JSON."""
    run = _run_config(ctx, 'generate', {'fmt': 'ba2motifs', 'count': count, 'seed': seed, 'out': out})
    dataset = generate_ba2motifs(count, seed)
    save_json(dataset, out)
    save_run_config(run, out)
    console.print(f"[green]✓[/green] Wrote {len(dataset)} graphs to {out}")


if __name__ == '__main__':
    cli()
