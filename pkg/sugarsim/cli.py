"""CLI interface for sugarsim."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import yaml
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from . import __version__
from .config import ScenarioError, config_digest, get_runtime_settings, load_scenario
from .domain import ContractViolation
from .engine.checkpoint import CheckpointError, load_checkpoint
from .engine.ledger import LedgerImbalanceError, audit_ledger
from .engine.metrics import TYPE_KEYS, MetricsFrame
from .engine.simulation import init_state, run
from .experiment.output import OutputWriter
from .experiment.sweep import ResultTable, SweepSpec, run_sweep

console = Console()
logger = logging.getLogger(__name__)

EXPECTED_ERRORS = (ScenarioError, ContractViolation, LedgerImbalanceError, CheckpointError, OSError)


def _setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else get_runtime_settings().log_level.upper()
    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        level=level,
    )


def parse_values(text: str) -> list[Any]:
    """Comma-separated lever values, each read as a YAML scalar (so 275 is an int)."""
    values = [yaml.safe_load(token) for token in text.split(",") if token.strip()]
    if not values:
        raise ScenarioError(f"no values in {text!r}")
    return values


def parse_seeds(text: str) -> list[int]:
    try:
        return [int(token) for token in text.split(",") if token.strip()]
    except ValueError as e:
        raise ScenarioError(f"seeds must be integers: {text!r}") from e


def _summary_table(frame: MetricsFrame, title: str) -> Table:
    table = Table(title=title, title_justify="left")
    table.add_column("type")
    table.add_column("farmers", justify="right")
    table.add_column("exited", justify="right")
    table.add_column("exit fraction", justify="right")
    table.add_column("mean savings", justify="right")
    for key in TYPE_KEYS:
        table.add_row(
            key,
            str(frame.population.get(key, 0)),
            str(frame.exited.get(key, 0)),
            f"{frame.exit_fraction(key):.3f}",
            f"{frame.mean_savings.get(key, 0.0):,.0f}",
        )
    return table


def _sweep_table(result: ResultTable) -> Table:
    table = Table(title=f"Exit fraction vs {result.parameter}", title_justify="left")
    table.add_column("value", justify="right")
    table.add_column("mean", justify="right")
    table.add_column("sd", justify="right")
    table.add_column("runs", justify="right")
    for row in result.plot_data("exit_fraction").itertuples(index=False):
        table.add_row(str(row.x), f"{row.mean:.4f}", f"{row.sd:.4f}", str(row.n))
    return table


def cmd_validate(args: argparse.Namespace) -> int:
    """Load a scenario and show what it resolves to."""
    config = load_scenario(args.scenario)
    lines = [
        f"[bold cyan]{config.name}[/bold cyan]",
        f"[dim]population[/dim] {config.population.size}  "
        f"[dim]steps[/dim] {config.steps}  [dim]seed[/dim] {config.seed}",
        f"[dim]crops[/dim] {', '.join(c.id for c in config.crops)}",
        f"[dim]pricing[/dim] {config.pricing_mode}  [dim]FRP[/dim] {config.policy.frp}  "
        f"[dim]ethanol requirement[/dim] {config.policy.ethanol_requirement}",
        f"[dim]sha256[/dim] {config_digest(config)}",
    ]
    console.print(Panel("\n".join(lines), border_style="blue", title="[bold]Scenario[/bold]", title_align="left"))
    console.print(f"[bold green]✓ {args.scenario} is valid[/bold green]")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    """Run one scenario and write its time series."""
    if args.resume:
        state = load_checkpoint(args.resume)
        config = state.config
        console.print(f"[dim]Resuming '{config.name}' from step {state.step}[/dim]")
    else:
        config = load_scenario(args.scenario)
        if args.seed is not None:
            config = config.model_copy(update={"seed": args.seed})
        with console.status("[bold blue]Initializing population...[/bold blue]"):
            state = init_state(config)

    steps = args.steps if args.steps is not None else config.steps
    with console.status(f"[bold blue]Simulating {steps} steps...[/bold blue]"):
        frames = run(
            resume=state,
            steps=steps,
            checkpoint_path=args.checkpoint,
            checkpoint_every=args.checkpoint_every,
        )

    report = audit_ledger(state.ledger, exited=state.exited_accounts())
    report.raise_if_unbalanced()
    console.print(f"[green]✓ Ledger balanced over {report.transfer_count} transfers[/green]")

    out_dir = Path(args.out) if args.out else get_runtime_settings().out_dir
    paths = OutputWriter(out_dir).write_run(frames, config)
    console.print(_summary_table(frames[-1], f"{config.name}, step {frames[-1].step}"))
    for path in paths:
        console.print(f"  [dim]{path}[/dim]")
    console.print("[bold green]✓ Done[/bold green]")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    """Run a single-lever sweep over seeds."""
    config = load_scenario(args.scenario)
    spec = SweepSpec(
        base=config,
        parameter=args.param,
        values=parse_values(args.values),
        seeds=parse_seeds(args.seeds),
        steps=args.steps,
    )
    spec.validate()
    jobs = args.jobs if args.jobs is not None else get_runtime_settings().jobs

    points = len(spec.values) * len(spec.seeds)
    with console.status(f"[bold blue]Running {points} simulations on {jobs} workers...[/bold blue]"):
        table = run_sweep(spec, parallelism=jobs)

    out_dir = Path(args.out) if args.out else get_runtime_settings().out_dir
    paths = OutputWriter(out_dir).write_sweep(table, spec)
    console.print(_sweep_table(table))
    for path in paths:
        console.print(f"  [dim]{path}[/dim]")

    if table.failures:
        for row in table.failures:
            console.print(f"[red]✗ {spec.parameter}={row.value!r} seed {row.seed}: {row.error}[/red]")
        console.print(f"[yellow]⚠ {len(table.failures)} of {points} runs failed[/yellow]")
        return 1
    console.print("[bold green]✓ Done[/bold green]")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sugarsim",
        description="Multi-agent simulation of the sugar and sugarcane supply chain.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    validate = commands.add_parser("validate", help="check a scenario file")
    validate.add_argument("--scenario", required=True, help="scenario YAML file")
    validate.set_defaults(handler=cmd_validate)

    run_cmd = commands.add_parser("run", help="run one scenario")
    source = run_cmd.add_mutually_exclusive_group(required=True)
    source.add_argument("--scenario", help="scenario YAML file")
    source.add_argument("--resume", help="checkpoint file to continue from")
    run_cmd.add_argument("--steps", type=int, help="last step to reach (default: the scenario's)")
    run_cmd.add_argument("--seed", type=int, help="override the scenario seed")
    run_cmd.add_argument("--out", help="output directory (default: $SUGARSIM_OUT_DIR or ./out)")
    run_cmd.add_argument("--checkpoint", help="write checkpoints to this file")
    run_cmd.add_argument("--checkpoint-every", type=int, default=0, help="checkpoint interval in steps")
    run_cmd.set_defaults(handler=cmd_run)

    sweep = commands.add_parser("sweep", help="vary one lever across seeds")
    sweep.add_argument("--scenario", required=True, help="base scenario YAML file")
    sweep.add_argument("--param", required=True, help="dotted lever path, e.g. policy.frp")
    sweep.add_argument("--values", required=True, help="comma-separated lever values")
    sweep.add_argument("--seeds", default="0", help="comma-separated seeds (default: 0)")
    sweep.add_argument("--steps", type=int, help="steps per run (default: the scenario's)")
    sweep.add_argument("--jobs", type=int, help="worker processes (default: $SUGARSIM_JOBS or 1)")
    sweep.add_argument("--out", help="output directory (default: $SUGARSIM_OUT_DIR or ./out)")
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run the command and return its exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.handler(args)
    except EXPECTED_ERRORS as e:
        console.print(f"[red]✗ {e}[/red]")
        return 1


def main():
    """Main entry point."""
    try:
        sys.exit(run_cli())
    except KeyboardInterrupt:
        console.print("\n[dim]Interrupted[/dim]")
        sys.exit(130)


if __name__ == "__main__":
    main()
