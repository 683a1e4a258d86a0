"""Command-line interface: run a scenario, compare formulations, dump
diagnostics, or lint a case.

Errors exit with status 1 and a single machine-parsable line on stderr of the
form ``TSSIM_ERROR <ExceptionClass>: <message>``; usage errors exit with 2.
"""

import os
import sys

import click
import numpy as np

from . import bench, report
from .dae import Formulation
from .errors import TssimError
from .scenario import (Scenario, all_split_blocks, initialize, parse_case,
                       parse_h, parse_scenario, run_scenario)


def _fail(exc):
    click.echo(f"TSSIM_ERROR {type(exc).__name__}: {exc}", err=True)
    sys.exit(1)


def _formulation(mode, split_blocks, devices):
    if mode == "full":
        return Formulation.full()
    if split_blocks and list(split_blocks) == ["none"]:
        return Formulation.split([])
    if split_blocks:
        return Formulation.split(split_blocks)
    return Formulation.split(all_split_blocks(devices))


def _load_scenario(scenario_path, case, t_end):
    if scenario_path:
        sc = parse_scenario(_resolve(scenario_path))
        if t_end is not None:
            sc.t_end = t_end
        return sc
    if not case:
        raise click.UsageError("either --scenario or --case is required")
    return Scenario(case=case, t_end=t_end if t_end is not None else 5.0)


def _resolve(name):
    from .scenario import bundled_case_path
    p = str(name)
    if os.path.exists(p):
        return p
    cand = bundled_case_path(os.path.splitext(p)[0])
    if cand.exists():
        return str(cand)
    return p


@click.group()
def main():
    """Transient-stability simulator with full and split DAE formulations."""


@main.command("run")
@click.option("--scenario", "scenario_path", default=None,
              help="Scenario file (bundled name or path).")
@click.option("--case", default=None, help="Case file for a flat run.")
@click.option("--formulation", type=click.Choice(["full", "split"]),
              default=None, help="Override the scenario formulation.")
@click.option("--split-blocks", multiple=True,
              help="Split block ids ('none' for a degenerate split).")
@click.option("--h", "h_", default=None, help="Step size, e.g. 1/120.")
@click.option("--tol", type=float, default=None, help="Newton tolerance.")
@click.option("--t-end", type=float, default=None, help="Simulation horizon, s.")
@click.option("--out", default="out", show_default=True,
              help="Output directory.")
@click.option("--plots/--no-plots", default=True, show_default=True,
              help="Render figures next to the CSV output.")
def run_cmd(scenario_path, case, formulation, split_blocks, h_, tol, t_end,
            out, plots):
    """Run a single scenario and write trajectory.csv, steps.csv, figures."""
    try:
        sc = _load_scenario(scenario_path, case, t_end)
        _, devices, _ = parse_case(sc.case)
        if formulation is not None or split_blocks:
            sc.formulation = _formulation(formulation or "split",
                                          split_blocks, devices)
        if h_ is not None:
            sc.solver_overrides["h"] = parse_h(h_)
        if tol is not None:
            sc.solver_overrides["tol"] = tol
        traj, rep = run_scenario(sc)
    except TssimError as exc:
        _fail(exc)

    os.makedirs(out, exist_ok=True)
    traj.write_csv(os.path.join(out, "trajectory.csv"))
    res = bench.ArmResult(arm=bench.arm_id(sc.formulation, rep.h),
                          formulation=rep.formulation, h=rep.h,
                          report=rep, trajectory=traj,
                          trajectory_max_dev=0.0)
    bench.emit_report([res], out)
    if plots:
        report.render_trajectory_figure(traj, out)
    click.echo(f"{rep.formulation} h={rep.h:.6g}: {rep.n_steps} steps, "
               f"{rep.total_iterations} iterations, "
               f"{rep.total_factorizations} factorizations, "
               f"wall {rep.wall_time_s:.3f}s -> {out}/")


@main.command("compare")
@click.option("--scenario", "scenario_path", default=None,
              help="Scenario file (bundled name or path).")
@click.option("--case", default=None, help="Case file for a flat-run matrix.")
@click.option("--split-blocks", multiple=True,
              help="Blocks for the split arm (default: all split-eligible).")
@click.option("--h", "h_", multiple=True,
              help="Step sizes (repeatable), default 1/120 and 1/30.")
@click.option("--tol", type=float, default=None)
@click.option("--t-end", type=float, default=None)
@click.option("--repetitions", type=int, default=3, show_default=True)
@click.option("--out", default="out", show_default=True)
@click.option("--plots/--no-plots", default=True, show_default=True)
def compare_cmd(scenario_path, case, split_blocks, h_, tol, t_end,
                repetitions, out, plots):
    """Run the full-vs-split comparison matrix and emit CSV tables."""
    try:
        sc = _load_scenario(scenario_path, case, t_end)
        _, devices, _ = parse_case(sc.case)
        if tol is not None:
            sc.solver_overrides["tol"] = tol
        split = _formulation("split", split_blocks, devices)
        steps = [parse_h(v) for v in h_] or [1.0 / 120.0, 1.0 / 30.0]
        matrix = bench.ComparisonMatrix(
            scenario=sc, formulations=[Formulation.full(), split],
            step_sizes=steps, repetitions=repetitions)
        results = bench.run_comparison(matrix)
        paths = bench.emit_report(results, out)
        if plots:
            paths += report.render_comparison_figures(results, out)
    except TssimError as exc:
        _fail(exc)
    for res in results:
        if res.failed:
            click.echo(f"{res.arm}: FAILED ({res.error})")
        else:
            click.echo(f"{res.arm}: {res.report.total_iterations} iterations, "
                       f"wall {res.report.wall_time_s:.3f}s, "
                       f"max dev {res.trajectory_max_dev}")
    click.echo(f"wrote {len(paths)} files under {out}/")
    if any(r.failed for r in results):
        sys.exit(1)


@main.command("dump")
@click.option("--case", required=True)
@click.option("--formulation", type=click.Choice(["full", "split"]),
              default="full", show_default=True)
@click.option("--split-blocks", multiple=True)
@click.option("--out", default="out", show_default=True)
def dump_cmd(case, formulation, split_blocks, out):
    """Dump the equilibrium residual vector and Jacobian triplets."""
    try:
        grid, devices, dispatch = parse_case(case)
        form = Formulation.full() if formulation == "full" \
            else _formulation("split", split_blocks, devices)
        system, z0, _ = initialize(grid, devices, dispatch, form)
        res = system.residual(z0, None)
        jac = system.jacobian(z0, None).tocoo()
    except TssimError as exc:
        _fail(exc)

    os.makedirs(out, exist_ok=True)
    names = system.registry.newton_names()
    rp = os.path.join(out, "residual.txt")
    with open(rp, "w") as fh:
        fh.write(f"# residual at t=0, formulation {form.label}\n")
        for name, val in zip(names, res):
            fh.write(f"{name} {val:.16e}\n")
    jp = os.path.join(out, "jacobian.txt")
    with open(jp, "w") as fh:
        fh.write(f"# jacobian triplets (row col value), formulation {form.label}\n")
        order = np.lexsort((jac.col, jac.row))
        for k in order:
            fh.write(f"{jac.row[k]} {jac.col[k]} {jac.data[k]:.16e}\n")
    acc = system.registry.accounting()
    click.echo(f"n_x={acc['n_x']} n_y_full={acc['n_y_full']} "
               f"n_y_split={acc['n_y_split']} "
               f"(selected {acc['n_split_selected']})")
    click.echo(f"wrote {rp} and {jp}")


@main.command("validate")
@click.option("--case", required=True)
def validate_cmd(case):
    """Parse a case, check invariants, run the power flow and device init."""
    try:
        grid, devices, dispatch = parse_case(case)
        system, z0, sol = initialize(grid, devices, dispatch,
                                     Formulation.full())
    except TssimError as exc:
        _fail(exc)
    acc = system.registry.accounting()
    click.echo(f"case ok: {grid.n_bus} buses, {len(devices)} devices, "
               f"power flow converged in {sol.iterations} iterations")
    click.echo(f"variables: n_x={acc['n_x']} n_y_full={acc['n_y_full']} "
               f"split-eligible={len(all_split_blocks(devices))} blocks "
               f"({acc['n_split_selected']} selected)")


if __name__ == "__main__":
    main()
