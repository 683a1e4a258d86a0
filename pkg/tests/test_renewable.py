import numpy as np
import pytest

from tssim.devices.renewable import (RegcaParams, ReecaParams, RenewablePlant,
                                     iq_injection, lvpl_gain, lvpl_output,
                                     voltage_deviation)
from tssim.errors import InitializationError, ParameterError


def _plant(with_reeca=True, **regca_kw):
    return RenewablePlant("re1", 1, RegcaParams(**regca_kw),
                          ReecaParams() if with_reeca else None)


class TestLvpl:
    def test_above_breakpoint_no_limiting(self):
        p = RegcaParams(brkpt=0.9, zerox=0.4, lvpl1=1.22)
        for v in (0.9, 1.0, 1.2):
            assert lvpl_gain(v, p) >= p.lvpl1 - 1e-12
        assert lvpl_output(0.8, lvpl_gain(1.0, p)) == 0.8

    def test_zero_at_zerox(self):
        p = RegcaParams(brkpt=0.9, zerox=0.4, lvpl1=1.22)
        assert lvpl_gain(0.4, p) == 0.0
        assert lvpl_output(0.8, lvpl_gain(0.4, p)) == 0.0
        assert lvpl_gain(0.2, p) == 0.0

    def test_midpoint_gain(self):
        p = RegcaParams(brkpt=0.9, zerox=0.4, lvpl1=1.22)
        v = 0.5 * (0.4 + 0.9)
        assert lvpl_gain(v, p) == pytest.approx(0.61, abs=1e-12)

    def test_cap_active_when_gain_below_state(self):
        assert lvpl_output(0.8, 0.3) == 0.3
        assert lvpl_output(0.3, 0.3) == 0.3   # tie goes to the cap

    def test_breakpoint_order_enforced(self):
        with pytest.raises(ParameterError):
            RegcaParams(brkpt=0.3, zerox=0.4).validate()


class TestReeca:
    def test_nominal_voltage_no_injection(self):
        p = ReecaParams(kqv=2.0, iql1=-1.0, iqh1=1.0)
        dv = voltage_deviation(1.0, 1.0)
        assert dv == 0.0
        assert iq_injection(dv, p) == 0.0

    def test_linear_gain_within_limits(self):
        p = ReecaParams(kqv=2.0, iql1=-1.0, iqh1=1.0)
        assert iq_injection(-0.1, p) == pytest.approx(0.2, abs=1e-15)

    def test_upper_clamp(self):
        p = ReecaParams(kqv=2.0, iql1=-1.0, iqh1=1.0)
        assert iq_injection(-10.0, p) == 1.0

    def test_limit_order_enforced(self):
        with pytest.raises(ParameterError):
            ReecaParams(iql1=1.0, iqh1=-1.0).validate()


class TestPlantEquilibrium:
    @pytest.mark.parametrize("with_reeca", [True, False])
    def test_init_residual(self, with_reeca):
        plant = _plant(with_reeca)
        x, y = plant.initialize(1.0, 0.1, 0.4, 0.05)
        res = np.concatenate([plant.f_rhs(x, y, 1.0, 0.1),
                              plant.g_residual(x, y, 1.0, 0.1)])
        assert np.max(np.abs(res)) < 1e-12
        pj, qj = plant.injection(x, y, 1.0, 0.1)
        assert pj == pytest.approx(0.4, abs=1e-12)
        assert qj == pytest.approx(0.05, abs=1e-12)

    def test_vref_defaults_to_powerflow_voltage(self):
        plant = _plant(True)
        plant.initialize(1.03, 0.0, 0.4, 0.0)
        assert plant.v_ref0 == 1.03

    def test_lvpl_infeasible_dispatch_raises(self):
        plant = _plant(False)
        with pytest.raises(InitializationError):
            plant.initialize(0.5, 0.0, 0.9, 0.0)   # cap below dispatch current


class TestPlantJacobian:
    @pytest.mark.parametrize("with_reeca", [True, False])
    def test_matches_central_differences(self, with_reeca, rng):
        plant = _plant(with_reeca)
        x0, y0 = plant.initialize(1.0, 0.0, 0.4, 0.05)

        def stacked(z):
            ns, na = plant.n_states, plant.n_algs
            x, y, v, th = z[:ns], z[ns:ns + na], z[-2], z[-1]
            return np.concatenate([plant.f_rhs(x, y, v, th),
                                   plant.g_residual(x, y, v, th),
                                   plant.injection(x, y, v, th)])

        checked = 0
        while checked < 20:
            x = x0 + rng.uniform(-0.1, 0.1, plant.n_states)
            y = y0 + rng.uniform(-0.1, 0.1, plant.n_algs)
            v = 1.0 + rng.uniform(-0.2, 0.2)
            th = rng.uniform(-0.3, 0.3)
            if plant.breakpoint_margin(x, y, v, th) < 1e-3:
                continue
            checked += 1
            J = plant.jacobian(x, y, v, th)
            mat = np.vstack([np.hstack([J.fx, J.fy, J.fv]),
                             np.hstack([J.gx, J.gy, J.gv]),
                             np.hstack([J.inj_x, J.inj_y, J.inj_v])])
            z0 = np.concatenate([x, y, [v, th]])
            fd = np.empty_like(mat)
            for k in range(len(z0)):
                h = 1e-7
                zp, zm = z0.copy(), z0.copy()
                zp[k] += h
                zm[k] -= h
                fd[:, k] = (stacked(zp) - stacked(zm)) / (2 * h)
            rel = np.abs(mat - fd) / np.maximum(1.0, np.abs(fd))
            assert rel.max() < 1e-6


class TestSplitBlocksAreLinear:
    def test_symbolic_flags(self):
        plant = _plant(True)
        assert all(blk.linear for blk in plant.split_blocks)
        assert {b.block_id for b in plant.split_blocks} == \
            {"regca.lvpl", "reeca.vdev", "reeca.iqinj"}
