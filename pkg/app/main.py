"""
Main CLI entry point for the fringe prover.
"""
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import List, Sequence, Tuple

import click
import numpy as np
from rich.table import Table

from app.config import ConfigError, RunConfig, load_config
from app.corpus import CorpusError, CorpusRecord, generate_corpus, library_of, load_corpus, save_corpus, split
from app.env import NotTerminalError, export_search_graph
from app.kernel import TermSyntaxError, Theorem, VariableBudgetError, parse_goal
from app.learner import (
    CheckpointError,
    TrainingError,
    evaluate,
    load_checkpoint,
    train as run_training,
)
from app.proof_script import ScriptError, minimize, parse_script, replay_script
from app.strategies import DEFAULT_ABLATION, StrategySpec, ablate as run_ablation, run_strategy
from app.utils.formatting import (
    ablation_text,
    configure_logging,
    console,
    create_ablation_table,
    create_eval_table,
    create_proof_panel,
    format_mean,
    format_percentage,
    print_error,
    print_success,
    print_warning,
)
from app.utils.plotting import plot_learning_curve, read_metrics

EXIT_FAILURE = 1
EXIT_USAGE = 2


class Unproved(Exception):
    """A command ran fine but did not establish what it was asked to."""


@contextmanager
def handle_errors():
    """Print library errors and exit 1 for domain failures, 2 for usage and IO problems."""
    try:
        yield
    except (Unproved, ScriptError, TrainingError, NotTerminalError) as exc:
        print_error(str(exc))
        sys.exit(EXIT_FAILURE)
    except (ConfigError, CorpusError, CheckpointError, TermSyntaxError, VariableBudgetError, OSError, ValueError) as exc:
        print_error(str(exc))
        sys.exit(EXIT_USAGE)


def _config(ctx: click.Context, **overrides) -> RunConfig:
    return load_config(ctx.obj.get("config_file"), overrides)


def _read_corpus(path: str) -> List[CorpusRecord]:
    if not Path(path).is_file():
        raise CorpusError(None, f"corpus file not found: {path}")
    return load_corpus(path)


def _splits(cfg: RunConfig) -> Tuple[List[Theorem], List[Theorem], List[Theorem]]:
    records = _read_corpus(cfg.corpus)
    train_records, test_records = split(records, cfg.train_ratio, cfg.split_seed)
    return (
        library_of(records),
        [r.to_theorem() for r in train_records],
        [r.to_theorem() for r in test_records],
    )


def _select(which: str, train_set: List[Theorem], test_set: List[Theorem]) -> List[Theorem]:
    if which == "train":
        return train_set
    if which == "all":
        return sorted(train_set + test_set, key=lambda t: t.library_index)
    return test_set


def _read_checkpoint(path: str):
    if not Path(path).is_file():
        raise CheckpointError(f"checkpoint file not found: {path}")
    return load_checkpoint(path)


def _parse_strategy(text: str) -> StrategySpec:
    try:
        return StrategySpec.parse(text)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--strategy")


def _single_goal_search(cfg: RunConfig, goal_text: str, strategy: str):
    """Load the checkpoint (and the corpus, if present) and run one search on `goal_text`."""
    goal = parse_goal(goal_text)
    checkpoint = _read_checkpoint(cfg.checkpoint)
    library: Sequence[Theorem] = ()
    if Path(cfg.corpus).is_file():
        library = library_of(load_corpus(cfg.corpus))
    rng = np.random.default_rng([cfg.seed, 0])
    return run_strategy(
        goal, checkpoint.params, _parse_strategy(strategy), cfg.budget, rng,
        library, len(library), cfg.episode, "goal",
    )


@click.group()
@click.option('--verbose', '-v', count=True,
              help='Increase log output (-v for info, -vv for debug)')
@click.option('--config', '-c', 'config_file', type=click.Path(dir_okay=False), default=None,
              help='JSON file with configuration values')
@click.pass_context
def cli(ctx, verbose, config_file):
    """Reinforcement-learning guided tactic prover over propositional goals."""
    configure_logging(verbose)
    ctx.ensure_object(dict)
    ctx.obj["config_file"] = config_file


@cli.command()
@click.pass_context
def config(ctx):
    """
    Display the merged configuration.
    """
    with handle_errors():
        cfg = _config(ctx)
    table = Table(title="FringeProver Configuration")
    table.add_column("Key", style="cyan")
    table.add_column("Value", justify="right")
    for key, value in cfg.to_dict().items():
        table.add_row(key, str(value))
    console.print(table)
    if ctx.obj.get("config_file"):
        console.print(f"Config file: {ctx.obj['config_file']}")


@cli.command('gen-corpus')
@click.option('--output', '-o', type=str, default=None,
              help='Corpus file to write (defaults to the configured corpus path)')
@click.option('--seed', '-s', type=int, default=None, help='Generator seed')
@click.option('--n', '-n', 'size', type=click.IntRange(1), default=250, help='Number of theorems')
@click.option('--max-vars', type=click.IntRange(1, 8), default=5, help='Variables per theory')
@click.option('--max-depth', type=click.IntRange(1), default=5, help='Maximum statement depth')
@click.option('--theories', type=click.IntRange(1, 26), default=5, help='Number of theories')
@click.pass_context
def gen_corpus(ctx, output, seed, size, max_vars, max_depth, theories):
    """Generate a corpus of tautologies."""
    with handle_errors():
        cfg = _config(ctx, seed=seed, corpus=output)
        records = generate_corpus(cfg.seed, size, max_vars, max_depth, theories)
        save_corpus(records, cfg.corpus)
    print_success(f"Wrote {len(records)} theorems to {cfg.corpus}")


@cli.command()
@click.option('--corpus', type=str, default=None, help='Corpus file')
@click.option('--seed', '-s', type=int, default=None, help='Training seed')
@click.option('--iterations', '-i', type=int, default=None, help='Training iterations')
@click.option('--budget', '-b', type=int, default=None, help='Timesteps per episode')
@click.option('--gamma', type=float, default=None, help='Discount factor')
@click.option('--lr', type=float, default=None, help='RMSProp learning rate')
@click.option('--workers', '-w', type=int, default=None, help='Parallel rollout workers')
@click.option('--checkpoint', type=str, default=None, help='Checkpoint file to write')
@click.option('--checkpoint-every', type=int, default=None, help='Checkpoint every K iterations')
@click.option('--metrics', type=str, default=None, help='Metrics log (JSONL) to write')
@click.option('--pretrain-epochs', type=int, default=None, help='Encoder reconstruction pretraining epochs')
@click.option('--baseline', is_flag=True, help='Subtract a moving-average return baseline')
@click.option('--record-wallclock', is_flag=True, help='Record iteration wall-clock time in the metrics log')
@click.option('--resume', is_flag=True, help='Continue from the checkpoint file')
@click.pass_context
def train(ctx, corpus, seed, iterations, budget, gamma, lr, workers, checkpoint, checkpoint_every,
          metrics, pretrain_epochs, baseline, record_wallclock, resume):
    """Train the policy with REINFORCE on the training split."""
    with handle_errors():
        cfg = _config(
            ctx, corpus=corpus, seed=seed, iterations=iterations, budget=budget, gamma=gamma, lr=lr,
            workers=workers, checkpoint=checkpoint, checkpoint_every=checkpoint_every, metrics=metrics,
            pretrain_epochs=pretrain_epochs, baseline=baseline or None, record_wallclock=record_wallclock or None,
        )
        library, train_set, _ = _splits(cfg)
        start = _read_checkpoint(cfg.checkpoint) if resume else None
        with console.status(f"Training on {len(train_set)} theorems...") as status:
            def progress(record):
                status.update(
                    f"Iteration {record['iteration']}: proof rate {format_percentage(record['proof_rate'])}"
                )
            result = run_training(train_set, library, cfg.learner, cfg.metrics, cfg.checkpoint, start, progress)
    if result.metrics:
        last = result.metrics[-1]
        console.print(
            f"Final iteration {last['iteration']}: proof rate {format_percentage(last['proof_rate'])}, "
            f"mean return {last['mean_return']:.3f}"
        )
    print_success(f"Checkpoint saved to {cfg.checkpoint}; metrics in {cfg.metrics}")


@cli.command('eval')
@click.option('--corpus', type=str, default=None, help='Corpus file')
@click.option('--checkpoint', type=str, default=None, help='Checkpoint to evaluate')
@click.option('--seed', '-s', type=int, default=None, help='Evaluation seed')
@click.option('--budget', '-b', type=int, default=None, help='Timesteps per theorem')
@click.option('--strategy', default='learned', help='Search strategy, kind[:mode[:b]]')
@click.option('--split', 'which', type=click.Choice(['test', 'train', 'all']), default='test',
              help='Which theorems to attempt')
@click.option('--detailed', '-d', is_flag=True, help='Show one row per theorem')
@click.pass_context
def eval_command(ctx, corpus, checkpoint, seed, budget, strategy, which, detailed):
    """Evaluate a checkpoint: proved count, mean timesteps and mean proof length."""
    with handle_errors():
        cfg = _config(ctx, corpus=corpus, checkpoint=checkpoint, seed=seed, budget=budget)
        spec = _parse_strategy(strategy)
        library, train_set, test_set = _splits(cfg)
        ckpt = _read_checkpoint(cfg.checkpoint)
        theorems = _select(which, train_set, test_set)
        report = evaluate(ckpt.params, theorems, library, cfg.budget, cfg.seed, cfg.episode, spec)
    if detailed:
        console.print(create_eval_table(report.rows, title=f"{spec.label} on {which} split"))
    console.print(f"Proved: {report.proved}/{report.total}")
    console.print(f"Mean timesteps: {format_mean(report.mean_timesteps if report.proved else None)}")
    console.print(f"Mean proof length: {format_mean(report.mean_proof_length if report.proved else None)}")


@cli.command()
@click.option('--corpus', type=str, default=None, help='Corpus file')
@click.option('--checkpoint', type=str, default=None, help='Trained checkpoint')
@click.option('--seed', '-s', type=int, default=None, help='Evaluation seed')
@click.option('--budget', '-b', type=int, default=None, help='Timesteps per theorem')
@click.option('--strategy', 'strategies', multiple=True,
              help='Strategy to compare, kind[:mode[:b]]; repeatable (defaults to the full comparison)')
@click.option('--split', 'which', type=click.Choice(['test', 'train', 'all']), default='test',
              help='Which theorems to attempt')
@click.option('--output', '-o', type=str, default=None, help='Also write the table as plain text')
@click.pass_context
def ablate(ctx, corpus, checkpoint, seed, budget, strategies, which, output):
    """Compare search strategies under one frozen checkpoint."""
    with handle_errors():
        cfg = _config(ctx, corpus=corpus, checkpoint=checkpoint, seed=seed, budget=budget)
        specs = [_parse_strategy(s) for s in strategies] or list(DEFAULT_ABLATION)
        library, train_set, test_set = _splits(cfg)
        ckpt = _read_checkpoint(cfg.checkpoint)
        rows = run_ablation(_select(which, train_set, test_set), library, ckpt.params, specs,
                            cfg.budget, cfg.seed, cfg.episode)
        console.print(create_ablation_table(rows))
        if output:
            Path(output).write_text(ablation_text(rows) + "\n", encoding="utf-8")
            print_success(f"Table written to {output}")


@cli.command()
@click.argument('goal')
@click.option('--checkpoint', type=str, default=None, help='Trained checkpoint')
@click.option('--corpus', type=str, default=None, help='Corpus whose theorems may be used as arguments')
@click.option('--seed', '-s', type=int, default=None, help='Search seed')
@click.option('--budget', '-b', type=int, default=None, help='Timestep budget')
@click.option('--strategy', default='learned', help='Search strategy, kind[:mode[:b]]')
@click.option('--minimize', 'shrink', is_flag=True, help='Drop redundant theorem arguments from the proof')
@click.option('--output', '-o', type=str, default=None, help='Write the proof script to a file')
@click.option('--dot', type=str, default=None, help='Write the search graph as DOT')
@click.pass_context
def prove(ctx, goal, checkpoint, corpus, seed, budget, strategy, shrink, output, dot):
    """Search for a proof of GOAL, written as `a1, a2 |- c` or a bare term."""
    with handle_errors():
        cfg = _config(ctx, checkpoint=checkpoint, corpus=corpus, seed=seed, budget=budget)
        result = _single_goal_search(cfg, goal, strategy)
        if dot:
            Path(dot).write_text(export_search_graph(result.env.state, "search"), encoding="utf-8")
        if not result.proved:
            raise Unproved(f"no proof found within {cfg.budget} timesteps")
        script = minimize(result.proof, cfg.fuel) if shrink else result.proof
        text = script.render()
        console.print(create_proof_panel(text, script.name, result.timesteps))
        if output:
            Path(output).write_text(text, encoding="utf-8")
            print_success(f"Proof written to {output}")


@cli.command()
@click.argument('script_file', type=click.Path(exists=True, dir_okay=False))
@click.option('--corpus', type=str, default=None, help='Corpus resolving theorem names in the script')
@click.pass_context
def replay(ctx, script_file, corpus):
    """Check a proof script through the tactic engine."""
    with handle_errors():
        cfg = _config(ctx, corpus=corpus)
        library = {}
        if corpus is not None or Path(cfg.corpus).is_file():
            library = {t.name: t for t in library_of(_read_corpus(cfg.corpus))}
        script = parse_script(Path(script_file).read_text(encoding="utf-8"), library)
        replay_script(script, cfg.fuel)
    print_success(f"{script.name}: proof checked ({script.length} steps)")


@cli.command('export-dot')
@click.argument('goal')
@click.option('--checkpoint', type=str, default=None, help='Trained checkpoint')
@click.option('--corpus', type=str, default=None, help='Corpus whose theorems may be used as arguments')
@click.option('--seed', '-s', type=int, default=None, help='Search seed')
@click.option('--budget', '-b', type=int, default=None, help='Timestep budget')
@click.option('--strategy', default='learned', help='Search strategy, kind[:mode[:b]]')
@click.option('--output', '-o', type=str, default='search.dot', help='DOT file to write')
@click.pass_context
def export_dot(ctx, goal, checkpoint, corpus, seed, budget, strategy, output):
    """Run one search on GOAL and write its fringe graph."""
    with handle_errors():
        cfg = _config(ctx, checkpoint=checkpoint, corpus=corpus, seed=seed, budget=budget)
        result = _single_goal_search(cfg, goal, strategy)
        Path(output).write_text(export_search_graph(result.env.state, "search"), encoding="utf-8")
    if not result.proved:
        print_warning(f"no proof found; the graph shows {len(result.env.state.fringes)} fringes")
    print_success(f"Search graph written to {output}")


@cli.command('plot-metrics')
@click.argument('metrics_file', type=click.Path(exists=True, dir_okay=False))
@click.option('--output', '-o', type=str, default='learning_curve.png', help='PNG file to write')
@click.option('--title', '-t', type=str, default='Training', help='Plot title')
def plot_metrics(metrics_file, output, title):
    """Plot proof rate and mean return per iteration from a metrics log."""
    with handle_errors():
        plot_learning_curve(read_metrics(metrics_file), output, title)
    print_success(f"Learning curve written to {output}")


if __name__ == "__main__":
    cli()
