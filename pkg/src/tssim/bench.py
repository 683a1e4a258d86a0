"""Benchmark harness: full-vs-split comparison matrices across step sizes,
iteration/factorization/time metrics, and CSV emission.

Timing uses the median over repetitions (desk-scale runs are short; medians
resist scheduler noise).  Iteration and factorization totals are
deterministic functions of (case, scenario, formulation, h, tol, policy) and
must be identical across repetitions; the trajectory digest enforces that.
CSV columns are bit-stable across runs except wall_time_s.
"""

import csv
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace as dc_replace

from .dae import Formulation
from .errors import TssimError
from .scenario import RunReport, Trajectory, run_scenario

THREADS_ENV = "TSSIM_BENCH_THREADS"


@dataclass
class ComparisonMatrix:
    scenario: object                        # Scenario; formulation/h overridden per arm
    formulations: list = field(default_factory=lambda: [Formulation.full()])
    step_sizes: list = field(default_factory=lambda: [1.0 / 120.0, 1.0 / 30.0])
    repetitions: int = 3

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    def arms(self):
        out = []
        for form in self.formulations:
            for h in self.step_sizes:
                out.append((arm_id(form, h), form, h))
        return out


def arm_id(formulation, h):
    inv = 1.0 / h
    htag = f"h{inv:g}" if abs(inv - round(inv)) < 1e-9 else f"h{h:g}"
    ftag = "full" if formulation.mode == "full" else "split"
    return f"{ftag}_{htag}"


@dataclass
class ArmResult:
    arm: str
    formulation: str
    h: float
    report: RunReport = None
    trajectory: Trajectory = None
    error: str = ""
    trajectory_max_dev: float = None

    @property
    def failed(self):
        return self.report is None


def _run_arm(matrix, form, h):
    scenario = dc_replace(matrix.scenario, formulation=form)
    scenario.solver_overrides = dict(matrix.scenario.solver_overrides)
    scenario.solver_overrides["h"] = h
    walls, digest, traj, report = [], None, None, None
    for _ in range(matrix.repetitions):
        t, r = run_scenario(scenario)
        walls.append(r.wall_time_s)
        if digest is None:
            digest, traj, report = r.trajectory_digest, t, r
        elif r.trajectory_digest != digest:
            raise TssimError(
                f"non-deterministic trajectory across repetitions ({scenario.case})")
    report.wall_time_s = statistics.median(walls)
    return traj, report


def run_comparison(matrix):
    """Execute every arm on identical inputs; failures are recorded, not fatal.

    Arms run in parallel only when repetitions == 1 and TSSIM_BENCH_THREADS
    asks for it; timing arms are pinned to sequential execution.
    """
    arms = matrix.arms()
    results = []

    def exec_arm(spec):
        aid, form, h = spec
        res = ArmResult(arm=aid, formulation=form.label, h=h)
        try:
            res.trajectory, res.report = _run_arm(matrix, form, h)
        except TssimError as exc:
            res.error = f"{type(exc).__name__}: {exc}"
        return res

    n_threads = int(os.environ.get(THREADS_ENV, "1"))
    if n_threads > 1 and matrix.repetitions == 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(exec_arm, arms))
    else:
        results = [exec_arm(a) for a in arms]

    full_by_h = {r.h: r for r in results
                 if not r.failed and r.formulation == "full"}
    for r in results:
        if r.failed:
            continue
        ref = full_by_h.get(r.h)
        if ref is None or ref is r:
            r.trajectory_max_dev = 0.0 if ref is r else None
        else:
            r.trajectory_max_dev = r.trajectory.max_state_deviation(ref.trajectory)
    return results


def emit_report(results, out_dir):
    """Write per-arm steps.csv files plus one summary.csv; returns the paths."""
    paths = []
    os.makedirs(out_dir, exist_ok=True)
    for res in results:
        if res.failed:
            continue
        arm_dir = os.path.join(out_dir, res.arm)
        os.makedirs(arm_dir, exist_ok=True)
        p = os.path.join(arm_dir, "steps.csv")
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "iterations", "factorizations", "residual",
                        "converged"])
            for s in res.report.steps:
                w.writerow([f"{s.t:.12g}", s.iterations, s.factorizations,
                            f"{s.residual:.12g}", int(s.converged)])
        paths.append(p)

    p = os.path.join(out_dir, "summary.csv")
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arm", "formulation", "h", "steps", "total_iterations",
                    "total_factorizations", "wall_time_s",
                    "trajectory_max_dev", "error"])
        for res in results:
            if res.failed:
                w.writerow([res.arm, res.formulation, f"{res.h:.12g}",
                            "", "", "", "", "", res.error])
            else:
                dev = "" if res.trajectory_max_dev is None \
                    else f"{res.trajectory_max_dev:.12g}"
                w.writerow([res.arm, res.formulation, f"{res.h:.12g}",
                            res.report.n_steps, res.report.total_iterations,
                            res.report.total_factorizations,
                            f"{res.report.wall_time_s:.6f}", dev, ""])
    paths.append(p)
    return paths
