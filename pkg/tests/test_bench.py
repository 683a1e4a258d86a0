import csv
import os

import pytest

from tssim.bench import ComparisonMatrix, arm_id, emit_report, \
    run_comparison
from tssim.dae import Formulation
from tssim.report import render_comparison_figures, render_trajectory_figure
from tssim.scenario import (Scenario, bundled_case_path, parse_scenario,
                            run_scenario)

FLUX = "genrou.flux"


@pytest.fixture(scope="module")
def smib_matrix_results():
    sc = Scenario(case="smib", t_end=1.0)
    matrix = ComparisonMatrix(
        scenario=sc,
        formulations=[Formulation.full(), Formulation.split([FLUX])],
        step_sizes=[1.0 / 120.0, 1.0 / 30.0],
        repetitions=2)
    return run_comparison(matrix)


class TestComparison:
    def test_four_arms(self, smib_matrix_results):
        assert len(smib_matrix_results) == 4
        assert {r.arm for r in smib_matrix_results} == \
            {"full_h120", "full_h30", "split_h120", "split_h30"}

    def test_counts_deterministic_across_repetitions(self, smib_matrix_results):
        # _run_arm raises if the trajectory digest differs between reps
        assert all(not r.failed for r in smib_matrix_results)

    def test_trajectory_dev_against_full_reference(self, smib_matrix_results):
        by_arm = {r.arm: r for r in smib_matrix_results}
        assert by_arm["full_h120"].trajectory_max_dev == 0.0
        assert by_arm["split_h120"].trajectory_max_dev < 1e-3

    def test_arm_ids(self):
        assert arm_id(Formulation.full(), 1.0 / 120.0) == "full_h120"
        assert arm_id(Formulation.split([FLUX]), 1.0 / 30.0) == "split_h30"

    def test_failed_arm_recorded_not_fatal(self, tmp_path):
        # an impossible event keeps one arm failing while others complete
        sc = parse_scenario(bundled_case_path("smib_fault"))
        sc.solver_overrides["max_iter"] = 1          # force step failures
        matrix = ComparisonMatrix(scenario=sc,
                                  formulations=[Formulation.full()],
                                  step_sizes=[1.0 / 120.0], repetitions=1)
        results = run_comparison(matrix)
        assert results[0].failed
        assert "StepFailure" in results[0].error
        paths = emit_report(results, tmp_path)
        with open(os.path.join(tmp_path, "summary.csv")) as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["error"]


class TestIterationDominance:
    def test_split_dominates_per_step_post_disturbance(self):
        # flux split at the large step: split needs at least as many Newton
        # iterations as full in >= 90% of post-disturbance steps
        import numpy as np
        from dataclasses import replace
        sc0 = parse_scenario(bundled_case_path("fivegen_fault"))
        series = {}
        for form, tag in ((Formulation.full(), "full"),
                          (Formulation.split([FLUX]), "split")):
            sc = replace(sc0, formulation=form)
            sc.solver_overrides = {"h": 1.0 / 30.0}
            _, rep = run_scenario(sc)
            series[tag] = rep
        fi = np.array([s.iterations for s in series["full"].steps])
        si = np.array([s.iterations for s in series["split"].steps])
        t = np.array([s.t for s in series["full"].steps])
        post = t > 0.1
        assert np.mean(si[post] >= fi[post]) >= 0.90


class TestEmitReport:
    def test_file_layout_and_row_counts(self, smib_matrix_results, tmp_path):
        paths = emit_report(smib_matrix_results, tmp_path)
        for res in smib_matrix_results:
            p = os.path.join(tmp_path, res.arm, "steps.csv")
            assert p in paths
            with open(p) as fh:
                rows = list(csv.DictReader(fh))
            assert len(rows) == res.report.n_steps
            assert list(rows[0]) == ["t", "iterations", "factorizations",
                                     "residual", "converged"]
        with open(os.path.join(tmp_path, "summary.csv")) as fh:
            srows = list(csv.DictReader(fh))
        assert len(srows) == 4
        by_h = {}
        for row in srows:
            by_h.setdefault(row["h"], set()).add(row["steps"])
        for steps in by_h.values():
            assert len(steps) == 1            # same grid => same step count

    def test_summary_bit_stable_except_wall_time(self, tmp_path):
        sc = Scenario(case="smib", t_end=0.5)
        matrix = ComparisonMatrix(scenario=sc,
                                  formulations=[Formulation.full()],
                                  step_sizes=[1.0 / 30.0], repetitions=1)
        rows = []
        for d in ("a", "b"):
            out = tmp_path / d
            emit_report(run_comparison(matrix), out)
            with open(out / "summary.csv") as fh:
                rows.append(list(csv.DictReader(fh)))
        a, b = rows[0][0], rows[1][0]
        for key in a:
            if key != "wall_time_s":
                assert a[key] == b[key], key


class TestFigures:
    def test_comparison_figures_written(self, smib_matrix_results, tmp_path):
        paths = render_comparison_figures(smib_matrix_results, tmp_path)
        assert sorted(os.path.basename(p) for p in paths) == \
            ["iterations.png", "timing.png"]
        for p in paths:
            assert os.path.getsize(p) > 0

    def test_trajectory_figure_written(self, smib_matrix_results, tmp_path):
        res = smib_matrix_results[0]
        p = render_trajectory_figure(res.trajectory, tmp_path)
        assert os.path.exists(p) and os.path.getsize(p) > 0
