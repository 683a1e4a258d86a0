"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines; every tolerance is fixed here, nothing is calibrated at runtime.
"""

import gc
import math
import statistics
import time
from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from tssim.dae import Formulation, VariableRegistry
from tssim.scenario import (Scenario, bundled_case_path, initialize,
                            parse_case, parse_scenario, run_scenario)
from tssim.solver import (LUFactor, SolverConfig, _LuState, newton_solve_step,
                          trapezoidal_residual)

FLUX = ("genrou.flux",)
RE_BLOCKS = ("regca.lvpl", "reeca.vdev", "reeca.iqinj")
CASES = ("smib", "fivegen", "fivegen_re")
H_FAST = 1.0 / 30.0
H_FINE = 1.0 / 120.0


def _report(criterion, label, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {criterion:02d} {label}: {status}  {detail}")
    assert ok, f"criterion {criterion} ({label}): {detail}"


def _run(case, formulation, h, events=(), t_end=5.0, scenario=None):
    if scenario is not None:
        sc = replace(scenario, formulation=formulation)
        sc.solver_overrides = dict(scenario.solver_overrides)
    else:
        sc = Scenario(case=case, t_end=t_end, formulation=formulation,
                      events=list(events))
    sc.solver_overrides["h"] = h
    return run_scenario(sc)


def test_criterion_1_equilibrium_fidelity():
    ok = True
    details = []
    for case in CASES:
        t0 = time.perf_counter()
        grid, devices, dispatch = parse_case(case)
        system, z0, _ = initialize(grid, devices, dispatch, Formulation.full())
        res = np.max(np.abs(system.residual(z0, None)))
        devs = []
        for h in (H_FINE, H_FAST):
            traj, _ = _run(case, Formulation.full(), h)
            devs.append(np.max(np.abs(traj.data - traj.data[0])))
        elapsed = time.perf_counter() - t0
        case_ok = res < 1e-8 and max(devs) < 1e-6 and elapsed < 5.0
        ok = ok and case_ok
        details.append(f"{case}: res={res:.1e} dev={max(devs):.1e} "
                       f"t={elapsed:.1f}s")
    _report(1, "equilibrium-fidelity", ok, "; ".join(details))


def test_criterion_2_trajectory_equivalence():
    t0 = time.perf_counter()
    sc = parse_scenario(bundled_case_path("fivegen_linetrip"))
    t_full, _ = _run(None, Formulation.full(), H_FINE, scenario=sc)
    t_split, _ = _run(None, Formulation.split(FLUX), H_FINE, scenario=sc)
    dev = t_full.max_state_deviation(t_split)
    elapsed = time.perf_counter() - t0
    _report(2, "trajectory-equivalence", dev < 1e-3 and elapsed < 30.0,
            f"state inf-norm dev={dev:.2e}, t={elapsed:.1f}s")


def test_criterion_3_variable_accounting():
    grid, devices, _ = parse_case("fivegen")
    assert sum(1 for d in devices if d.split_blocks
               and d.split_blocks[0].block_id == "genrou.flux") == 5
    full = VariableRegistry(devices, grid, Formulation.full())
    split = VariableRegistry(devices, grid, Formulation.split(FLUX))
    delta = full.accounting()["n_y_full"] - split.accounting()["n_y_split"]
    _report(3, "variable-accounting", delta == 15,
            f"n_y(full) - n_y(split) = {delta}")


def test_criterion_4_nonlinear_split_iteration_penalty():
    sc = parse_scenario(bundled_case_path("fivegen_fault"))
    iters = {}
    for h in (H_FAST, H_FINE):
        for form, tag in ((Formulation.full(), "full"),
                          (Formulation.split(FLUX), "split")):
            _, rep = _run(None, form, h, scenario=sc)
            iters[(h, tag)] = rep.total_iterations
    r_fast = iters[(H_FAST, "split")] / iters[(H_FAST, "full")]
    r_fine = iters[(H_FINE, "split")] / iters[(H_FINE, "full")]
    ordering = iters[(H_FAST, "split")] >= iters[(H_FAST, "full")]
    shrinks = abs(r_fine - 1.0) <= abs(r_fast - 1.0)
    _report(4, "nonlinear-split-penalty", ordering and shrinks,
            f"h=1/30 split/full={iters[(H_FAST,'split')]}/"
            f"{iters[(H_FAST,'full')]} (r={r_fast:.3f}); "
            f"h=1/120 r={r_fine:.3f}")


def test_criterion_5_linear_split_neutrality():
    sc = parse_scenario(bundled_case_path("fivegen_re_fault"))
    ok = True
    details = []
    for h in (H_FAST, H_FINE):
        its = {}
        for form, tag in ((Formulation.full(), "full"),
                          (Formulation.split(RE_BLOCKS), "split")):
            _, rep = _run(None, form, h, scenario=sc)
            its[tag] = rep.total_iterations
        rel = abs(its["split"] - its["full"]) / its["full"]
        ok = ok and rel <= 0.05
        details.append(f"h=1/{round(1/h)}: {its['split']}/{its['full']} "
                       f"({rel*100:.2f}%)")
    _report(5, "linear-split-neutrality", ok, "; ".join(details))


def test_criterion_6_step_size_scaling():
    scenarios = {
        "smib": ("smib_fault", FLUX),
        "fivegen": ("fivegen_fault", FLUX),
        "fivegen_re": ("fivegen_re_fault", RE_BLOCKS),
    }
    reps = 3
    ok = True
    details = []
    for case, (name, blocks) in scenarios.items():
        sc = parse_scenario(bundled_case_path(name))
        med = {}
        for form, tag in ((Formulation.full(), "full"),
                          (Formulation.split(blocks), "split")):
            for h in (H_FINE, H_FAST):
                walls = []
                for _ in range(reps):
                    gc.collect()
                    _, rep = _run(None, form, h, scenario=sc)
                    walls.append(rep.wall_time_s)
                med[(tag, h)] = statistics.median(walls)
        strict = med[("full", H_FAST)] < med[("full", H_FINE)]
        ok = ok and strict
        details.append(f"{case}: full {med[('full', H_FINE)]:.3f}s->"
                       f"{med[('full', H_FAST)]:.3f}s")

    # The split arm gains no more from the larger step than full does.  The
    # nonlinear-split convergence penalty only exceeds the desk-scale timing
    # noise floor on the terminal-fault SMIB scenario (12-14% extra
    # iterations); measure there with paired per-round speedup ratios so slow
    # machine drift cancels.
    sc = parse_scenario(bundled_case_path("smib_fault"))
    rounds = []
    for _ in range(5):
        times = {}
        for form, tag in ((Formulation.full(), "full"),
                          (Formulation.split(FLUX), "split")):
            for h in (H_FINE, H_FAST):
                gc.collect()
                _, rep = _run(None, form, h, scenario=sc)
                times[(tag, h)] = rep.wall_time_s
        rounds.append((times[("full", H_FINE)] / times[("full", H_FAST)],
                       times[("split", H_FINE)] / times[("split", H_FAST)]))
    full_s = statistics.median(r[0] for r in rounds)
    split_s = statistics.median(r[1] for r in rounds)
    ok = ok and split_s <= full_s
    details.append(f"smib speedup full={full_s:.2f} split={split_s:.2f}")
    _report(6, "step-size-scaling", ok, "; ".join(details))


def test_criterion_7_integrator_order():
    class _Decay:
        def residual(self, z, step):
            x0, f0, h = step
            return trapezoidal_residual(z, x0, -z, f0, h)

        def jacobian(self, z, step):
            return sp.csc_matrix([[1.0 + 0.5 * step[2]]])

    errors = {}
    for h in (1.0 / 30.0, 1.0 / 60.0, 1.0 / 120.0):
        x = np.array([1.0])
        cfg = SolverConfig(h=h, tol=1e-14, max_iter=20)
        lu = _LuState()
        for _ in range(int(round(1.0 / h))):
            x, _ = newton_solve_step(_Decay(), x, (x.copy(), -x.copy(), h),
                                     cfg, True, lu)
        errors[h] = abs(x[0] - math.exp(-1.0))
    p1 = math.log(errors[1 / 30] / errors[1 / 60]) / math.log(2.0)
    p2 = math.log(errors[1 / 60] / errors[1 / 120]) / math.log(2.0)
    ok = 1.9 <= p1 <= 2.1 and 1.9 <= p2 <= 2.1
    _report(7, "integrator-order", ok, f"observed orders {p1:.3f}, {p2:.3f}")


def test_criterion_8_jacobian_correctness():
    rng = np.random.default_rng(8)
    worst = 0.0
    for case in CASES:
        grid, devices, dispatch = parse_case(case)
        system, z0, _ = initialize(grid, devices, dispatch, Formulation.full())
        n = len(z0)
        checked = 0
        while checked < 100:
            z = z0 + rng.uniform(-0.02, 0.02, n)
            if system.breakpoint_margin(z) < 1e-3:
                continue
            checked += 1
            jac = system.jacobian(z, None).toarray()
            fd = np.empty_like(jac)
            for k in range(n):
                h = 1e-6 * max(1.0, abs(z[k]))
                zp, zm = z.copy(), z.copy()
                zp[k] += h
                zm[k] -= h
                fd[:, k] = (system.residual(zp, None)
                            - system.residual(zm, None)) / (2 * h)
            rel = np.abs(jac - fd) / np.maximum(1.0, np.abs(fd))
            worst = max(worst, float(rel.max()))
    _report(8, "jacobian-correctness", worst < 1e-6,
            f"worst rel err {worst:.2e} over 100 pts x {len(CASES)} cases")


def test_criterion_9_split_explicit_consistency():
    rng = np.random.default_rng(9)
    _, devices, _ = parse_case("fivegen_re")
    worst = 0.0
    blocks_seen = set()
    for dev in devices:
        if not dev.split_blocks:
            continue
        for blk in dev.split_blocks:
            blocks_seen.add(blk.block_id)
            idx = [dev.alg_index(nm) for nm in blk.var_names]
            for _ in range(1000):
                x = rng.uniform(-1.0, 1.5, dev.n_states)
                y = rng.uniform(-1.0, 1.5, dev.n_algs)
                v = rng.uniform(0.2, 1.3)
                th = rng.uniform(-0.5, 0.5)
                vals = dev.explicit_block(blk.block_id, x, y, v, th)
                # substituting the explicit values zeroes the block residuals
                y2 = y.copy()
                for k, j in enumerate(idx):
                    y2[j] = vals[k]
                g = dev.g_residual(x, y2, v, th)
                worst = max(worst, float(np.max(np.abs(g[idx]))))
                # solving the triangular residuals reproduces the same values
                y3 = y.copy()
                for j in idx:
                    g_row = dev.g_residual(x, y3, v, th)[j]
                    y3[j] = y3[j] + g_row        # output coefficient is -1
                worst = max(worst, float(np.max(np.abs(y3[idx] - vals))))
    ok = worst < 1e-12 and blocks_seen == {"genrou.flux", *RE_BLOCKS}
    _report(9, "split-explicit-consistency", ok,
            f"worst gap {worst:.2e} on 1000 pts/block ({len(blocks_seen)} blocks)")


def test_criterion_10_dishonest_policy_accounting():
    class _Scripted:
        def __init__(self, k):
            self.k = k
            self.calls = 0

        def residual(self, z, step):
            self.calls += 1
            return np.array([0.0 if self.calls >= self.k else 1.0])

        def jacobian(self, z, step):
            return sp.csc_matrix([[1.0]])

    ok = True
    rows = []
    for k in range(1, 11):
        cfg = SolverConfig(tol=0.5, max_iter=15, refresh_every=3)
        lu = _LuState()
        lu.lu = LUFactor(sp.identity(1, format="csc"))
        _, st = newton_solve_step(_Scripted(k), np.zeros(1), None, cfg,
                                  False, lu)
        dis_ok = (st.iterations, st.factorizations) == (k, max(0, (k - 1) // 3))
        _, sh = newton_solve_step(_Scripted(k), np.zeros(1), None, cfg,
                                  True, _LuState())
        hon_ok = (sh.iterations, sh.factorizations) == (k, k)
        ok = ok and dis_ok and hon_ok
        rows.append(f"k={k}:{st.factorizations}/{sh.factorizations}")
    _report(10, "dishonest-policy-accounting", ok, " ".join(rows))
