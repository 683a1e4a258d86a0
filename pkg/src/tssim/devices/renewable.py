"""Reduced-order renewable converter (REGCA_LITE) and electrical control
(REECA_LITE) models.

Only the blocks whose treatment the split formulation changes are modeled in
full: the low-voltage active-power management output of the converter, and
the voltage-deviation / additional reactive-current-injection equations of
the control, plus the minimal lag states feeding them.  Every split-eligible
equation here is piecewise linear; breakpoints use half-open [lo, hi)
intervals with the right-segment slope at a breakpoint.

Injection convention: P = v * ip_out, Q = v * iq (positive iq supports the
bus voltage).
"""

from dataclasses import dataclass, replace

import numpy as np

from ..errors import InitializationError, ParameterError
from .base import DeviceJacobian, DeviceModel, SplitBlock

LVPL_BLOCK = "regca.lvpl"
VDEV_BLOCK = "reeca.vdev"
IQINJ_BLOCK = "reeca.iqinj"


@dataclass
class RegcaParams:
    tg: float = 0.02         # converter current lag, s
    rrpwr: float = 10.0      # active-current ramp limit, pu/s
    brkpt: float = 0.9       # upper LVPL voltage breakpoint, pu
    zerox: float = 0.4       # zero-crossing LVPL voltage, pu
    lvpl1: float = 1.22      # LVPL gain at brkpt, pu current

    def validate(self, name=""):
        tag = f"REGCA_LITE {name}: " if name else ""
        if not (self.brkpt > self.zerox >= 0.0):
            raise ParameterError(tag + "requires brkpt > zerox >= 0")
        if self.tg <= 0.0:
            raise ParameterError(tag + "tg must be > 0")
        if self.rrpwr <= 0.0:
            raise ParameterError(tag + "rrpwr must be > 0")
        return self

    def to_system_base(self, mva, system_mva=100.0):
        k = system_mva / mva
        return replace(self, lvpl1=self.lvpl1 / k, rrpwr=self.rrpwr / k)


@dataclass
class ReecaParams:
    vref0: float = 0.0       # <= 0 means "use the power-flow voltage"
    kqv: float = 2.0         # reactive-injection gain on voltage dip
    iql1: float = -1.0       # lower injection limit, pu
    iqh1: float = 1.0        # upper injection limit, pu
    trv: float = 0.02        # terminal voltage filter, s

    def validate(self, name=""):
        tag = f"REECA_LITE {name}: " if name else ""
        if self.iqh1 < self.iql1:
            raise ParameterError(tag + "requires iqh1 >= iql1")
        if self.trv <= 0.0:
            raise ParameterError(tag + "trv must be > 0")
        return self

    def to_system_base(self, mva, system_mva=100.0):
        k = system_mva / mva
        return replace(self, kqv=self.kqv / k, iql1=self.iql1 / k,
                       iqh1=self.iqh1 / k)


def lvpl_gain(v, params):
    """Piecewise-linear low-voltage power-logic gain.

    Zero below zerox, the (zerox, 0) -- (brkpt, lvpl1) segment from zerox
    upward; the segment continues above brkpt where the logic imposes no
    limit of its own.
    """
    if v < params.zerox:
        return 0.0
    return params.lvpl1 * (v - params.zerox) / (params.brkpt - params.zerox)


def lvpl_gain_slope(v, params):
    if v < params.zerox:
        return 0.0
    return params.lvpl1 / (params.brkpt - params.zerox)


def lvpl_output(ip, lvpl):
    """Cap the active current state; the cap is active when lvpl <= ip."""
    return lvpl if lvpl <= ip else ip


def voltage_deviation(v_filt, v_ref0):
    return v_filt - v_ref0


def iq_injection(dv, params):
    """Reactive current injected against the voltage deviation, clamped."""
    u = -params.kqv * dv
    if u < params.iql1:
        return params.iql1
    if u > params.iqh1:
        return params.iqh1
    return u


class RenewablePlant(DeviceModel):
    """REGCA_LITE converter, optionally closed by a REECA_LITE control.

    Variable order (states): ip, iq[, vfilt].  Algebraics: lvpl, ipout
    [, dv, iqinj].  All split-eligible blocks are linear.
    """

    def __init__(self, dev_id, bus, regca, reeca=None):
        self.id = dev_id
        self.bus = bus
        self.rg = regca.validate(dev_id)
        self.re = reeca.validate(dev_id) if reeca else None

        states = ["ip", "iq"]
        algs = ["lvpl", "ipout"]
        blocks = [SplitBlock(LVPL_BLOCK, ("lvpl", "ipout"), linear=True)]
        if self.re:
            states.append("vfilt")
            algs += ["dv", "iqinj"]
            blocks += [SplitBlock(VDEV_BLOCK, ("dv",), linear=True),
                       SplitBlock(IQINJ_BLOCK, ("iqinj",), linear=True)]
        self.state_names = tuple(states)
        self.alg_names = tuple(algs)
        self.split_blocks = tuple(blocks)

        self.ip_cmd0 = 0.0
        self.iq_cmd0 = 0.0
        self.v_ref0 = 0.0
        self._i = {n: k for k, n in enumerate(self.state_names)}
        self._j = {n: k for k, n in enumerate(self.alg_names)}

    # -- equations ----------------------------------------------------------

    def f_rhs(self, x, y, v, theta):
        rg = self.rg
        ip, iq = x[0], x[1]
        f = np.empty(self.n_states)
        rate = (self.ip_cmd0 - ip) / rg.tg
        f[0] = min(max(rate, -rg.rrpwr), rg.rrpwr)
        iq_cmd = self.iq_cmd0 + (y[self._j["iqinj"]] if self.re else 0.0)
        f[1] = (iq_cmd - iq) / rg.tg
        if self.re:
            f[2] = (v - x[2]) / self.re.trv
        return f

    def g_residual(self, x, y, v, theta):
        g = np.empty(self.n_algs)
        g[0] = lvpl_gain(v, self.rg) - y[0]
        g[1] = lvpl_output(x[0], y[0]) - y[1]
        if self.re:
            g[2] = voltage_deviation(x[2], self.v_ref0) - y[2]
            g[3] = iq_injection(y[2], self.re) - y[3]
        return g

    def injection(self, x, y, v, theta):
        return v * y[1], v * x[1]

    def explicit_block(self, block_id, x, y, v, theta):
        if block_id == LVPL_BLOCK:
            gain = lvpl_gain(v, self.rg)
            return np.array([gain, lvpl_output(x[0], gain)])
        if self.re and block_id == VDEV_BLOCK:
            return np.array([voltage_deviation(x[2], self.v_ref0)])
        if self.re and block_id == IQINJ_BLOCK:
            return np.array([iq_injection(y[self._j["dv"]], self.re)])
        raise KeyError(block_id)

    def jacobian(self, x, y, v, theta):
        rg = self.rg
        J = DeviceJacobian(self.n_states, self.n_algs)
        rate = (self.ip_cmd0 - x[0]) / rg.tg
        if -rg.rrpwr <= rate < rg.rrpwr:
            J.fx[0, 0] = -1.0 / rg.tg
        J.fx[1, 1] = -1.0 / rg.tg
        if self.re:
            J.fy[1, self._j["iqinj"]] = 1.0 / rg.tg
            J.fx[2, 2] = -1.0 / self.re.trv
            J.fv[2, 0] = 1.0 / self.re.trv

        J.gv[0, 0] = lvpl_gain_slope(v, rg)
        J.gy[0, 0] = -1.0
        if y[0] <= x[0]:          # cap active
            J.gy[1, 0] = 1.0
        else:
            J.gx[1, 0] = 1.0
        J.gy[1, 1] = -1.0
        if self.re:
            re = self.re
            J.gx[2, 2] = 1.0
            J.gy[2, 2] = -1.0
            u = -re.kqv * y[2]
            if re.iql1 <= u < re.iqh1:
                J.gy[3, 2] = -re.kqv
            J.gy[3, 3] = -1.0

        J.inj_v[0, 0] = y[1]
        J.inj_y[0, 1] = v
        J.inj_v[1, 0] = x[1]
        J.inj_x[1, 1] = v
        return J

    def consistent_algebraics(self, x, v, theta):
        """Back-compute internal algebraics from states and bus voltage."""
        y = np.zeros(self.n_algs)
        y[0] = lvpl_gain(v, self.rg)
        y[1] = lvpl_output(x[0], y[0])
        if self.re:
            y[2] = voltage_deviation(x[2], self.v_ref0)
            y[3] = iq_injection(y[2], self.re)
        return y

    def breakpoint_margin(self, x, y, v, theta):
        """Distance to the nearest piecewise-linear breakpoint."""
        rg = self.rg
        m = min(abs(v - rg.zerox), abs(v - rg.brkpt), abs(x[0] - y[0]),
                abs(abs((self.ip_cmd0 - x[0]) / rg.tg) - rg.rrpwr))
        if self.re:
            u = -self.re.kqv * y[self._j["dv"]]
            m = min(m, abs(u - self.re.iql1), abs(u - self.re.iqh1))
        return m

    # -- equilibrium ----------------------------------------------------------

    def initialize(self, v, theta, p_out, q_out):
        rg = self.rg
        if v <= 0.0:
            raise InitializationError(f"device {self.id}: zero bus voltage")
        ip0 = p_out / v
        iq0 = q_out / v
        gain = lvpl_gain(v, rg)
        if gain < ip0:
            raise InitializationError(
                f"device {self.id}: LVPL cap {gain:.3f} below dispatch current "
                f"{ip0:.3f} at v = {v:.3f}")
        self.ip_cmd0 = ip0

        x = np.zeros(self.n_states)
        y = np.zeros(self.n_algs)
        x[0], x[1] = ip0, iq0
        y[0], y[1] = gain, ip0
        if self.re:
            self.v_ref0 = self.re.vref0 if self.re.vref0 > 0.0 else v
            x[2] = v
            dv0 = voltage_deviation(v, self.v_ref0)
            inj0 = iq_injection(dv0, self.re)
            y[2], y[3] = dv0, inj0
            self.iq_cmd0 = iq0 - inj0
        else:
            self.iq_cmd0 = iq0

        res = np.max(np.abs(np.concatenate([
            self.f_rhs(x, y, v, theta), self.g_residual(x, y, v, theta)])))
        if res > 1e-8:
            raise InitializationError(
                f"device {self.id}: equilibrium residual {res:.2e} > 1e-8")
        return x, y
