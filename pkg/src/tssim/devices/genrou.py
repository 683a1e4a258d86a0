"""Round-rotor synchronous generator with transient and subtransient rotor
dynamics, air-gap flux / saturation block, and optional simplified exciter
(EXST_LITE) and turbine governor (TGOV_LITE) sections.

Machine frame
-------------
The rotor frame is tied to the bus phasor through

    vd = v * cos(delta - theta),    vq = v * sin(delta - theta)

which corresponds to (vd + j*vq) = conj(V) * exp(j*delta) for the network
phasor V.  Machine currents map with the opposite orientation,
(Id + j*Iq) = -conj(I) * exp(j*delta) for the injected network current I, so
the terminal injection is

    P = -(vd*Id + vq*Iq),           Q = -(vd*Iq - vq*Id).

Stator, flux and torque equations:

    0 = vq + ra*Iq - eq' + xd'*Id
    0 = vd + ra*Id - ed' - xq'*Iq
    psi_aq = gq1*ed' + (1 - gq1)*psi_kq
    psi_ad = gd1*eq' + gd2*(xd' - xl)*psi_kd
    psi_a  = sqrt(psi_ad**2 + psi_aq**2)
    tau_e  = psi_ad*Iq - psi_aq*Id

with gd1 = (xd'' - xl)/(xd' - xl), gq1 = (xq'' - xl)/(xq' - xl),
gd2 = (1 - gd1)/(xd' - xl), gq2 = (1 - gq1)/(xq' - xl) and xq'' = xd''.

In this frame the unloaded machine sits at delta = theta with ed' = v and
eq' = 0, so the field input drives ed' (time constant tq0') while the eq'
circuit is source-free.  Rotor ODE signs and gains are fixed by requiring a
consistent, small-signal-stable equilibrium (flat-run invariant): the current
orientation above keeps external reactance additive in the armature loops,
and the source-free axis carries a weak reaction gain (xd' - xd'') because
the full (xd - xd') gain makes the steady-state synchronizing torque of this
equation set negative for realistic parameters.  Saturation enters the two
transient-emf equations multiplicatively as (1 + S(psi_a)).
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import InitializationError, ParameterError
from .base import DeviceJacobian, DeviceModel, SplitBlock

FLUX_BLOCK = "genrou.flux"


# ---------------------------------------------------------------------------
# parameters


@dataclass
class GenrouParams:
    xd: float = 1.8
    xq: float = 1.7
    xdp: float = 0.3
    xqp: float = 0.55
    xdpp: float = 0.25       # xq'' = xd''
    xl: float = 0.15
    ra: float = 0.0
    td0p: float = 8.0
    tq0p: float = 0.4
    td0pp: float = 0.03
    tq0pp: float = 0.05
    h: float = 6.5           # inertia constant, s
    d: float = 0.0           # damping torque coefficient, pu
    s10: float = 0.0
    s12: float = 0.0

    def validate(self, name=""):
        tag = f"GENROU {name}: " if name else ""
        if not (self.xd > self.xdp > self.xdpp > self.xl >= 0.0):
            raise ParameterError(
                tag + "reactance ordering xd > xd' > xd'' > xl >= 0 violated")
        if not (self.xq > self.xqp > self.xdpp):
            raise ParameterError(
                tag + "reactance ordering xq > xq' > xq''(=xd'') violated")
        for tc in ("td0p", "tq0p", "td0pp", "tq0pp"):
            if getattr(self, tc) <= 0.0:
                raise ParameterError(tag + f"time constant {tc} must be > 0")
        if self.h <= 0.0:
            raise ParameterError(tag + "H must be > 0")
        if self.s12 < self.s10:
            raise ParameterError(tag + "saturation requires S12 >= S10")
        if self.s10 < 0.0:
            raise ParameterError(tag + "saturation factors must be >= 0")
        return self

    def to_system_base(self, mva, system_mva=100.0):
        k = system_mva / mva
        return replace(
            self,
            xd=self.xd * k, xq=self.xq * k, xdp=self.xdp * k,
            xqp=self.xqp * k, xdpp=self.xdpp * k, xl=self.xl * k,
            ra=self.ra * k, h=self.h / k, d=self.d / k,
        )

    @property
    def gd1(self):
        return (self.xdpp - self.xl) / (self.xdp - self.xl)

    @property
    def gq1(self):
        return (self.xdpp - self.xl) / (self.xqp - self.xl)

    @property
    def gd2(self):
        return (1.0 - self.gd1) / (self.xdp - self.xl)

    @property
    def gq2(self):
        return (1.0 - self.gq1) / (self.xqp - self.xl)


@dataclass
class ExciterParams:
    """EXST_LITE: one voltage-error lag with output limits."""

    ke: float = 50.0
    te: float = 0.5
    e_min: float = -5.0
    e_max: float = 6.0

    def validate(self, name=""):
        tag = f"EXST_LITE {name}: " if name else ""
        if self.te <= 0.0:
            raise ParameterError(tag + "te must be > 0")
        if self.e_max <= self.e_min:
            raise ParameterError(tag + "e_max must exceed e_min")
        return self


@dataclass
class GovernorParams:
    """TGOV_LITE: droop plus one lag with output limits."""

    r_droop: float = 0.05
    t1: float = 0.5
    v_min: float = -2.0
    v_max: float = 2.0
    dt: float = 0.0          # frequency-damping torque coefficient

    def validate(self, name=""):
        tag = f"TGOV_LITE {name}: " if name else ""
        if self.t1 <= 0.0:
            raise ParameterError(tag + "t1 must be > 0")
        if self.r_droop <= 0.0:
            raise ParameterError(tag + "droop must be > 0")
        if self.v_max <= self.v_min:
            raise ParameterError(tag + "v_max must exceed v_min")
        return self

    def to_system_base(self, mva, system_mva=100.0):
        k = system_mva / mva
        return replace(self, r_droop=self.r_droop * k, dt=self.dt / k,
                       v_min=self.v_min / k, v_max=self.v_max / k)


# ---------------------------------------------------------------------------
# elementary blocks


def d_axis_projection(v, theta, delta):
    """Project the bus voltage onto the rotor frame; vd^2 + vq^2 == v^2."""
    return v * math.cos(delta - theta), v * math.sin(delta - theta)


def stator_residual(vd, vq, i_d, i_q, edp, eqp, ra, xdp, xqp):
    """Two-axis stator pair; zero iff (Id, Iq) solve the 2x2 linear system."""
    r_q = vq + ra * i_q - eqp + xdp * i_d
    r_d = vd + ra * i_d - edp - xqp * i_q
    return r_q, r_d


def flux_linkage_eval(edp, eqp, psikd, psikq, params):
    """Air-gap flux components and magnitude (saturation function input).

    This is the explicit form used by the split formulation; the residual
    form (expression minus output variable) is the same three equations.
    """
    psiaq = params.gq1 * edp + (1.0 - params.gq1) * psikq
    psiad = params.gd1 * eqp + params.gd2 * (params.xdp - params.xl) * psikd
    psia = math.hypot(psiad, psiaq)
    return psiaq, psiad, psia


def fit_saturation(s10, s12):
    """Fit S(psi) = b*(psi - a)**2 / psi through S(1.0)=s10, S(1.2)=s12."""
    if s12 < s10 or s10 < 0.0:
        raise ParameterError("saturation requires 0 <= S10 <= S12")
    if s12 == 0.0:
        return 1.0, 0.0
    if s10 == 0.0:
        return 1.0, 1.2 * s12 / 0.04
    c = math.sqrt(1.2 * s12 / s10)
    a = (c - 1.2) / (c - 1.0)
    b = s10 / (1.0 - a) ** 2
    return a, b


def saturation_value(psia, a, b):
    if b == 0.0 or psia <= a or psia < 1e-9:
        return 0.0
    return b * (psia - a) ** 2 / psia


def saturation_slope(psia, a, b):
    if b == 0.0 or psia <= a or psia < 1e-9:
        return 0.0
    return b * (1.0 - a * a / (psia * psia))


def exciter_lag_rhs(vr, v, v_ref, params):
    """First-order voltage-error lag: te * dvr/dt = ke*(v_ref - v) - vr."""
    return (params.ke * (v_ref - v) - vr) / params.te


def governor_lag_rhs(pm, omega, p_ref, params):
    """Droop-compensated lag: t1 * dpm/dt = p_ref - (omega-1)/R - pm."""
    return (p_ref - (omega - 1.0) / params.r_droop - pm) / params.t1


def _clamp(u, lo, hi):
    return lo if u < lo else (hi if u > hi else u)


def _clamp_slope(u, lo, hi):
    # half-open [lo, hi): at u == hi the right (flat) segment applies
    return 1.0 if (lo <= u < hi) else 0.0


# ---------------------------------------------------------------------------
# the composed generator unit


class GenrouGenerator(DeviceModel):
    """GENROU machine plus optional exciter / governor sections.

    Variable order (states): delta, omega, eqp, edp, psikd, psikq[, vr][, pm].
    Variable order (algebraics): vd, vq, i_d, i_q, psiaq, psiad, psia, tau_e
    [, efd_out][, taum_out].  The flux block (psiaq, psiad, psia) is the only
    split-eligible group and its psia equation is the only nonlinear one.
    """

    def __init__(self, dev_id, bus, params, exciter=None, governor=None,
                 f_hz=60.0, use_saturation=True):
        self.id = dev_id
        self.bus = bus
        self.p = params.validate(dev_id)
        self.exciter = exciter.validate(dev_id) if exciter else None
        self.governor = governor.validate(dev_id) if governor else None
        self.omega_base = 2.0 * math.pi * f_hz
        self.use_saturation = use_saturation and (params.s10 > 0 or params.s12 > 0)
        self.sat_a, self.sat_b = fit_saturation(params.s10, params.s12)

        states = ["delta", "omega", "eqp", "edp", "psikd", "psikq"]
        algs = ["vd", "vq", "i_d", "i_q", "psiaq", "psiad", "psia", "tau_e"]
        if self.exciter:
            states.append("vr")
            algs.append("efd_out")
        if self.governor:
            states.append("pm")
            algs.append("taum_out")
        self.state_names = tuple(states)
        self.alg_names = tuple(algs)
        self.split_blocks = (
            SplitBlock(FLUX_BLOCK, ("psiaq", "psiad", "psia"), linear=False),
        )

        # equilibrium inputs; set by initialize()
        self.efd0 = 0.0
        self.taum0 = 0.0
        self.v_ref = 1.0
        self.p_ref = 0.0
        # cached variable positions
        self._i = {n: k for k, n in enumerate(self.state_names)}
        self._j = {n: k for k, n in enumerate(self.alg_names)}

    # -- helpers ------------------------------------------------------------

    def _sat(self, psia):
        if not self.use_saturation:
            return 1.0, 0.0
        s = saturation_value(psia, self.sat_a, self.sat_b)
        ds = saturation_slope(psia, self.sat_a, self.sat_b)
        return 1.0 + s, ds

    def _efd(self, y):
        return y[self._j["efd_out"]] if self.exciter else self.efd0

    def _taum(self, y):
        return y[self._j["taum_out"]] if self.governor else self.taum0

    # -- equations ----------------------------------------------------------

    def f_rhs(self, x, y, v, theta):
        p = self.p
        delta, omega, eqp, edp, psikd, psikq = x[:6]
        i_d, i_q = y[2], y[3]
        psia = y[6]
        sat, _ = self._sat(psia)

        chi_d = p.gd1 * i_d + p.gd2 * (eqp - psikd)
        chi_q = p.gq1 * i_q + p.gq2 * (edp - psikq)

        f = np.empty(self.n_states)
        f[0] = self.omega_base * (omega - 1.0)
        f[1] = (self._taum(y) - y[7] - p.d * (omega - 1.0)) / (2.0 * p.h)
        f[2] = (-sat * eqp - (p.xdp - p.xdpp) * chi_d) / p.td0p
        f[3] = (self._efd(y) - sat * edp + (p.xq - p.xqp) * chi_q) / p.tq0p
        f[4] = (eqp - psikd - (p.xdp - p.xl) * i_d) / p.td0pp
        f[5] = (edp - psikq - (p.xqp - p.xl) * i_q) / p.tq0pp
        if self.exciter:
            f[self._i["vr"]] = exciter_lag_rhs(x[self._i["vr"]], v, self.v_ref,
                                               self.exciter)
        if self.governor:
            f[self._i["pm"]] = governor_lag_rhs(x[self._i["pm"]], omega,
                                                self.p_ref, self.governor)
        return f

    def g_residual(self, x, y, v, theta):
        p = self.p
        delta, omega, eqp, edp, psikd, psikq = x[:6]
        vd, vq, i_d, i_q, psiaq, psiad, psia, tau_e = y[:8]

        pvd, pvq = d_axis_projection(v, theta, delta)
        r_q, r_d = stator_residual(vd, vq, i_d, i_q, edp, eqp, p.ra, p.xdp, p.xqp)
        xaq, xad, _ = flux_linkage_eval(edp, eqp, psikd, psikq, p)

        g = np.empty(self.n_algs)
        g[0] = pvd - vd
        g[1] = pvq - vq
        g[2] = r_q
        g[3] = r_d
        g[4] = xaq - psiaq
        g[5] = xad - psiad
        g[6] = math.hypot(psiad, psiaq) - psia
        g[7] = psiad * i_q - psiaq * i_d - tau_e
        if self.exciter:
            e = self.exciter
            g[self._j["efd_out"]] = (_clamp(x[self._i["vr"]], e.e_min, e.e_max)
                                     - y[self._j["efd_out"]])
        if self.governor:
            gv = self.governor
            g[self._j["taum_out"]] = (_clamp(x[self._i["pm"]], gv.v_min, gv.v_max)
                                      - gv.dt * (omega - 1.0)
                                      - y[self._j["taum_out"]])
        return g

    def injection(self, x, y, v, theta):
        vd, vq, i_d, i_q = y[0], y[1], y[2], y[3]
        return -(vd * i_d + vq * i_q), -(vd * i_q - vq * i_d)

    def explicit_block(self, block_id, x, y, v, theta):
        if block_id != FLUX_BLOCK:
            raise KeyError(block_id)
        eqp, edp, psikd, psikq = x[2], x[3], x[4], x[5]
        psiaq, psiad, psia = flux_linkage_eval(edp, eqp, psikd, psikq, self.p)
        return np.array([psiaq, psiad, psia])

    # -- derivatives ---------------------------------------------------------

    def jacobian(self, x, y, v, theta):
        p = self.p
        delta, omega, eqp, edp = x[0], x[1], x[2], x[3]
        i_d, i_q = y[2], y[3]
        psiaq, psiad, psia = y[4], y[5], y[6]
        sat, dsat = self._sat(psia)
        J = DeviceJacobian(self.n_states, self.n_algs)

        # f rows
        J.fx[0, 1] = self.omega_base
        J.fx[1, 1] = -p.d / (2.0 * p.h)
        J.fy[1, 7] = -1.0 / (2.0 * p.h)
        J.fx[2, 2] = (-sat - (p.xdp - p.xdpp) * p.gd2) / p.td0p
        J.fx[2, 4] = (p.xdp - p.xdpp) * p.gd2 / p.td0p
        J.fy[2, 2] = -(p.xdp - p.xdpp) * p.gd1 / p.td0p
        J.fy[2, 6] = -eqp * dsat / p.td0p
        J.fx[3, 3] = (-sat + (p.xq - p.xqp) * p.gq2) / p.tq0p
        J.fx[3, 5] = -(p.xq - p.xqp) * p.gq2 / p.tq0p
        J.fy[3, 3] = (p.xq - p.xqp) * p.gq1 / p.tq0p
        J.fy[3, 6] = -edp * dsat / p.tq0p
        J.fx[4, 2] = 1.0 / p.td0pp
        J.fx[4, 4] = -1.0 / p.td0pp
        J.fy[4, 2] = -(p.xdp - p.xl) / p.td0pp
        J.fx[5, 3] = 1.0 / p.tq0pp
        J.fx[5, 5] = -1.0 / p.tq0pp
        J.fy[5, 3] = -(p.xqp - p.xl) / p.tq0pp
        if self.exciter:
            iv, jo = self._i["vr"], self._j["efd_out"]
            J.fx[iv, iv] = -1.0 / self.exciter.te
            J.fv[iv, 0] = -self.exciter.ke / self.exciter.te
            J.fy[3, jo] = 1.0 / p.tq0p
        if self.governor:
            ip, jo = self._i["pm"], self._j["taum_out"]
            J.fx[ip, ip] = -1.0 / self.governor.t1
            J.fx[ip, 1] = -1.0 / (self.governor.r_droop * self.governor.t1)
            J.fy[1, jo] = 1.0 / (2.0 * p.h)

        # g rows
        sd, cd = math.sin(delta - theta), math.cos(delta - theta)
        J.gx[0, 0] = -v * sd
        J.gy[0, 0] = -1.0
        J.gv[0, 0] = cd
        J.gv[0, 1] = v * sd
        J.gx[1, 0] = v * cd
        J.gy[1, 1] = -1.0
        J.gv[1, 0] = sd
        J.gv[1, 1] = -v * cd
        J.gy[2, 1] = 1.0
        J.gy[2, 3] = p.ra
        J.gx[2, 2] = -1.0
        J.gy[2, 2] = p.xdp
        J.gy[3, 0] = 1.0
        J.gy[3, 2] = p.ra
        J.gx[3, 3] = -1.0
        J.gy[3, 3] = -p.xqp
        J.gx[4, 3] = p.gq1
        J.gx[4, 5] = 1.0 - p.gq1
        J.gy[4, 4] = -1.0
        J.gx[5, 2] = p.gd1
        J.gx[5, 4] = p.gd2 * (p.xdp - p.xl)
        J.gy[5, 5] = -1.0
        mag = math.hypot(psiad, psiaq)
        if mag < 1e-12:
            mag = 1e-12
        J.gy[6, 5] = psiad / mag
        J.gy[6, 4] = psiaq / mag
        J.gy[6, 6] = -1.0
        J.gy[7, 5] = i_q
        J.gy[7, 4] = -i_d
        J.gy[7, 3] = psiad
        J.gy[7, 2] = -psiaq
        J.gy[7, 7] = -1.0
        if self.exciter:
            e = self.exciter
            iv, jo = self._i["vr"], self._j["efd_out"]
            J.gx[jo, iv] = _clamp_slope(x[iv], e.e_min, e.e_max)
            J.gy[jo, jo] = -1.0
        if self.governor:
            gv = self.governor
            ip, jo = self._i["pm"], self._j["taum_out"]
            J.gx[jo, ip] = _clamp_slope(x[ip], gv.v_min, gv.v_max)
            J.gx[jo, 1] = -gv.dt
            J.gy[jo, jo] = -1.0

        # injection rows
        vd, vq = y[0], y[1]
        J.inj_y[0, 0] = -i_d
        J.inj_y[0, 1] = -i_q
        J.inj_y[0, 2] = -vd
        J.inj_y[0, 3] = -vq
        J.inj_y[1, 0] = -i_q
        J.inj_y[1, 1] = i_d
        J.inj_y[1, 2] = vq
        J.inj_y[1, 3] = -vd
        return J

    def consistent_algebraics(self, x, v, theta):
        """Back-compute internal algebraics from states and bus voltage.

        Used to seed the post-event algebraic re-solve; the stator pair is
        linear in (Id, Iq) so this is closed form.
        """
        p = self.p
        delta, omega, eqp, edp, psikd, psikq = x[:6]
        vd, vq = d_axis_projection(v, theta, delta)
        det = -p.xdp * p.xqp - p.ra * p.ra
        rhs_q = eqp - vq
        rhs_d = edp - vd
        i_d = (-p.xqp * rhs_q - p.ra * rhs_d) / det
        i_q = (p.ra * rhs_q - p.xdp * rhs_d) / det
        psiaq, psiad, psia = flux_linkage_eval(edp, eqp, psikd, psikq, p)
        y = np.zeros(self.n_algs)
        y[:8] = [vd, vq, i_d, i_q, psiaq, psiad, psia,
                 psiad * i_q - psiaq * i_d]
        if self.exciter:
            e = self.exciter
            y[self._j["efd_out"]] = _clamp(x[self._i["vr"]], e.e_min, e.e_max)
        if self.governor:
            g = self.governor
            y[self._j["taum_out"]] = (_clamp(x[self._i["pm"]], g.v_min, g.v_max)
                                      - g.dt * (omega - 1.0))
        return y

    def breakpoint_margin(self, x, y, v, theta):
        """Distance to the nearest saturation knee / limiter breakpoint."""
        m = float("inf")
        if self.use_saturation:
            m = abs(y[6] - self.sat_a)
        if self.exciter:
            vr = x[self._i["vr"]]
            m = min(m, abs(vr - self.exciter.e_min), abs(vr - self.exciter.e_max))
        if self.governor:
            pmv = x[self._i["pm"]]
            m = min(m, abs(pmv - self.governor.v_min), abs(pmv - self.governor.v_max))
        return m

    # -- equilibrium ----------------------------------------------------------

    def initialize(self, v, theta, p_out, q_out):
        """Equilibrium back-substitution from the power-flow operating point.

        Closed form for the unsaturated machine (the rotor locates at the
        angle of V + (ra - j*xd)*I in this frame), then Newton on the reduced
        equilibrium system when saturation is active.
        """
        pm = self.p
        v_ph = v * complex(math.cos(theta), math.sin(theta))
        i_ph = np.conj(complex(p_out, q_out) / v_ph) if v > 0 else 0j

        x_loc = 2.0 * pm.xdp - pm.xdpp
        e_loc = v_ph - complex(pm.ra, -x_loc) * i_ph
        delta = math.atan2(e_loc.imag, e_loc.real)

        u = self._machine_frame(delta, v_ph, i_ph)
        if self.use_saturation:
            u = self._newton_equilibrium(u, v, theta, p_out, q_out)
        delta, eqp, edp, psikd, psikq, i_d, i_q = u

        vd, vq = d_axis_projection(v, theta, delta)
        psiaq, psiad, psia = flux_linkage_eval(edp, eqp, psikd, psikq, pm)
        sat, _ = self._sat(psia)
        chi_q = pm.gq1 * i_q + pm.gq2 * (edp - psikq)
        self.efd0 = sat * edp - (pm.xq - pm.xqp) * chi_q
        tau_e = psiad * i_q - psiaq * i_d
        self.taum0 = tau_e

        x = np.zeros(self.n_states)
        x[:6] = [delta, 1.0, eqp, edp, psikd, psikq]
        y = np.zeros(self.n_algs)
        y[:8] = [vd, vq, i_d, i_q, psiaq, psiad, psia, tau_e]

        if self.exciter:
            e = self.exciter
            if not (e.e_min <= self.efd0 <= e.e_max):
                raise InitializationError(
                    f"device {self.id}: field voltage {self.efd0:.4f} violates "
                    f"exciter limits [{e.e_min}, {e.e_max}] at initialization")
            x[self._i["vr"]] = self.efd0
            y[self._j["efd_out"]] = self.efd0
            self.v_ref = v + self.efd0 / e.ke
        if self.governor:
            gv = self.governor
            if not (gv.v_min <= self.taum0 <= gv.v_max):
                raise InitializationError(
                    f"device {self.id}: mechanical torque {self.taum0:.4f} "
                    f"violates governor limits at initialization")
            x[self._i["pm"]] = self.taum0
            y[self._j["taum_out"]] = self.taum0
            self.p_ref = self.taum0

        res = np.max(np.abs(np.concatenate([
            self.f_rhs(x, y, v, theta), self.g_residual(x, y, v, theta)])))
        if res > 1e-8:
            raise InitializationError(
                f"device {self.id}: equilibrium residual {res:.2e} > 1e-8")
        return x, y

    def _machine_frame(self, delta, v_ph, i_ph):
        """Back-substitute machine-frame quantities for a given rotor angle."""
        pm = self.p
        rot = complex(math.cos(delta), math.sin(delta))
        vdq = np.conj(v_ph) * rot
        idq = -np.conj(i_ph) * rot
        vd, vq = vdq.real, vdq.imag
        i_d, i_q = idq.real, idq.imag
        eqp = vq + pm.ra * i_q + pm.xdp * i_d
        edp = vd + pm.ra * i_d - pm.xqp * i_q
        psikd = eqp - (pm.xdp - pm.xl) * i_d
        psikq = edp - (pm.xqp - pm.xl) * i_q
        return np.array([delta, eqp, edp, psikd, psikq, i_d, i_q])

    def _equilibrium_residual(self, u, v, theta, p_out, q_out):
        pm = self.p
        delta, eqp, edp, psikd, psikq, i_d, i_q = u
        vd, vq = d_axis_projection(v, theta, delta)
        psiaq, psiad, psia = flux_linkage_eval(edp, eqp, psikd, psikq, pm)
        sat, _ = self._sat(psia)
        chi_d = pm.gd1 * i_d + pm.gd2 * (eqp - psikd)
        return np.array([
            vq + pm.ra * i_q - eqp + pm.xdp * i_d,
            vd + pm.ra * i_d - edp - pm.xqp * i_q,
            eqp - psikd - (pm.xdp - pm.xl) * i_d,
            edp - psikq - (pm.xqp - pm.xl) * i_q,
            sat * eqp + (pm.xdp - pm.xdpp) * chi_d,
            vd * i_d + vq * i_q + p_out,
            vd * i_q - vq * i_d + q_out,
        ])

    def _newton_equilibrium(self, u0, v, theta, p_out, q_out, tol=1e-12):
        u = u0.copy()
        for _ in range(50):
            r = self._equilibrium_residual(u, v, theta, p_out, q_out)
            if np.max(np.abs(r)) < tol:
                return u
            jac = np.empty((7, 7))
            for k in range(7):
                h = 1e-7 * max(1.0, abs(u[k]))
                up, um = u.copy(), u.copy()
                up[k] += h
                um[k] -= h
                jac[:, k] = (self._equilibrium_residual(up, v, theta, p_out, q_out)
                             - self._equilibrium_residual(um, v, theta, p_out, q_out)
                             ) / (2.0 * h)
            u = u - np.linalg.solve(jac, r)
        raise InitializationError(
            f"device {self.id}: saturated equilibrium solve did not converge")
