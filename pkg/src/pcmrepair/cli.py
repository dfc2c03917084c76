"""Command-line interface: evaluate, repair, minimize, random-index
estimation, and the HTTP server.

Exit codes: 0 success, 2 input/validation problem, 3 environment problem,
4 solver or work limit hit. Human-readable output rounds to 4 decimals;
--json emits full precision.
"""
from __future__ import annotations

import json
import socket
import sys

import click

from . import indices, pcm, reduce
from .errors import (
    BranchLimit,
    ConvergenceFailure,
    DeadlineExceeded,
    PcmError,
    WorkBudgetExceeded,
)
from .indices import DEFAULT_RI, IndexKind, RandomIndexTable
from .pcm import ScaleBound

EXIT_VALIDATION = 2
EXIT_ENVIRONMENT = 3
EXIT_SOLVER_LIMIT = 4

_SOLVER_LIMIT_ERRORS = (BranchLimit, ConvergenceFailure, DeadlineExceeded,
                        WorkBudgetExceeded)


def _read_matrix(source: str, fmt: str):
    if source == "-":
        text = sys.stdin.read()
    else:
        try:
            with open(source, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as e:
            click.echo(f"error: cannot read {source}: {e}", err=True)
            sys.exit(EXIT_ENVIRONMENT)
    return pcm.parse(text, fmt=fmt)


def _load_ri(path):
    if path is None:
        return DEFAULT_RI
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return RandomIndexTable.from_json(fh.read())
    except OSError as e:
        click.echo(f"error: cannot read RI table {path}: {e}", err=True)
        sys.exit(EXIT_ENVIRONMENT)


def _fail(exc: Exception):
    click.echo(f"error: {exc}", err=True)
    if isinstance(exc, _SOLVER_LIMIT_ERRORS):
        sys.exit(EXIT_SOLVER_LIMIT)
    sys.exit(EXIT_VALIDATION)


def _positions_str(positions):
    return "{" + ", ".join(f"({p.i},{p.j})" for p in positions) + "}"


@click.group()
def main():
    """Inconsistency indices and minimal-change repairs for pairwise
    comparison matrices."""


@main.command()
@click.argument("matrix")
@click.option("--index", "kind", type=click.Choice(["cr", "cm", "ci", "all"]),
              default="all", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["auto", "dense", "upper", "csv"]),
              default="auto", show_default=True)
@click.option("--ri-table", type=click.Path(), default=None,
              help="JSON file overriding the random-index table.")
@click.option("--json", "as_json", is_flag=True, help="Emit full-precision JSON.")
def evaluate(matrix, kind, fmt, ri_table, as_json):
    """Evaluate inconsistency indices of MATRIX (path or '-' for stdin)."""
    ri = _load_ri(ri_table)
    try:
        m = _read_matrix(matrix, fmt)
        kinds = [IndexKind(kind)] if kind != "all" else list(IndexKind)
        reports = {k.value: indices.evaluate(k, m, ri) for k in kinds}
    except PcmError as e:
        _fail(e)
    if as_json:
        click.echo(json.dumps({k: r.to_json() for k, r in reports.items()}))
        return
    for k, rep in reports.items():
        click.echo(f"{k.upper()} = {rep.value:.4f}")
        if k == "cr":
            click.echo(f"lambda_max = {rep.detail['lambda_max']:.4f}")
        if k == "cm":
            t = rep.detail["worst_triad"]
            click.echo(f"worst triad = ({t.i},{t.j},{t.k})")


@main.command("reduce")
@click.argument("matrix")
@click.option("--index", "kind", type=click.Choice(["cr", "cm", "ci"]), required=True)
@click.option("--threshold", type=float, required=True,
              help="Acceptance threshold in index units.")
@click.option("--all", "enumerate_all", is_flag=True,
              help="Enumerate every optimal position set.")
@click.option("--bound", type=float, default=9.0, show_default=True,
              help="Scale bound M; entries stay within [1/M, M].")
@click.option("--format", "fmt", type=click.Choice(["auto", "dense", "upper", "csv"]),
              default="auto", show_default=True)
@click.option("--ri-table", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
def reduce_cmd(matrix, kind, threshold, enumerate_all, bound, fmt, ri_table, as_json):
    """Fewest cells to modify so the index drops below the threshold."""
    ri = _load_ri(ri_table)
    try:
        m = _read_matrix(matrix, fmt)
        query = reduce.ReductionQuery(m, IndexKind(kind),
                                      reduce.MinChanges(threshold),
                                      bound=ScaleBound(bound), ri=ri)
        if enumerate_all:
            result = reduce.enumerate_optimal(query)
        else:
            result = reduce.min_changes(query)
    except PcmError as e:
        _fail(e)
    if as_json:
        click.echo(json.dumps(result.to_json()))
        return
    sets = "; ".join(_positions_str(s.positions) for s in result.solutions)
    click.echo(f"L*={result.l_star}; solutions: {sets}")
    for s in result.solutions:
        if s.positions:
            vals = ", ".join(f"({p.i},{p.j})->{s.witness.entry(p.i, p.j):.4f}"
                             for p in s.positions)
            click.echo(f"  {_positions_str(s.positions)}: {vals} "
                       f"[{kind.upper()}={s.achieved:.4f}]")


@main.command()
@click.argument("matrix")
@click.option("--index", "kind", type=click.Choice(["cr", "cm", "ci"]), required=True)
@click.option("--budget", type=int, required=True,
              help="Maximum number of cells that may change.")
@click.option("--bound", type=float, default=9.0, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["auto", "dense", "upper", "csv"]),
              default="auto", show_default=True)
@click.option("--ri-table", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
def minimize(matrix, kind, budget, bound, fmt, ri_table, as_json):
    """Lowest inconsistency reachable with at most BUDGET changed cells."""
    ri = _load_ri(ri_table)
    try:
        m = _read_matrix(matrix, fmt)
        query = reduce.ReductionQuery(m, IndexKind(kind), reduce.MinIndex(budget),
                                      bound=ScaleBound(bound), ri=ri)
        result = reduce.min_index(query)
    except PcmError as e:
        _fail(e)
    if as_json:
        click.echo(json.dumps(result.to_json()))
        return
    sol = result.solutions[0]
    click.echo(f"alpha_opt={result.alpha_opt:.4f}; positions: "
               f"{_positions_str(sol.positions)}")


@main.command()
@click.option("--n", type=int, required=True, help="Matrix order.")
@click.option("--samples", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def ri(n, samples, seed, as_json):
    """Monte Carlo estimate of the random index RI_n."""
    if samples < 1:
        raise click.UsageError("--samples must be >= 1")
    if n < 3:
        raise click.UsageError("--n must be >= 3")
    value = indices.estimate_ri(n, samples, seed)
    if as_json:
        click.echo(json.dumps({"n": n, "samples": samples, "seed": seed,
                               "ri": value}))
    else:
        click.echo(f"RI_{n} = {value:.4f}")


@main.command()
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--ri-table", type=click.Path(), default=None)
@click.option("--work-budget", type=int, default=200000, show_default=True,
              help="Subproblem-count cap per request.")
@click.option("--timeout-secs", type=float, default=60.0, show_default=True)
@click.option("--cors/--no-cors", default=True, show_default=True)
def serve(port, host, ri_table, work_budget, timeout_secs, cors):
    """Run the HTTP JSON service."""
    import uvicorn

    from .service import create_app

    table = _load_ri(ri_table)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as e:
        click.echo(f"error: cannot bind {host}:{port}: {e}", err=True)
        sys.exit(EXIT_ENVIRONMENT)
    finally:
        probe.close()
    app = create_app(ri=table, work_budget=work_budget,
                     timeout_secs=timeout_secs, cors=cors)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
