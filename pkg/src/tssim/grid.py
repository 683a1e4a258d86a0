"""Static network model: buses, branches, shunts, loads, and the admittance
matrix, plus the Newton-Raphson power flow used to obtain the t=0 operating
point.

Conventions
-----------
* Network variables are polar: per-bus voltage magnitude v (pu) and angle
  theta (rad).
* Network balance residuals are power mismatches, two per bus (P, Q), with
  device injections positive into the network.
* System base is 100 MVA; every quantity stored here is already on system
  base.
* Loads are converted to constant shunt admittance y = (p - jq) / v0**2 at
  the solved power-flow voltage before dynamic simulation.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import ParameterError, PowerFlowError, StructuralError

SYSTEM_BASE_MVA = 100.0

BUS_KINDS = ("slack", "pv", "pq")


@dataclass
class Bus:
    id: int
    v_mag: float = 1.0
    theta: float = 0.0
    base_kv: float = 230.0
    kind: str = "pq"

    def __post_init__(self):
        if self.v_mag <= 0.0:
            raise ParameterError(f"bus {self.id}: v_mag must be > 0")
        if self.kind not in BUS_KINDS:
            raise ParameterError(f"bus {self.id}: unknown kind {self.kind!r}")


@dataclass
class Branch:
    from_bus: int
    to_bus: int
    r: float = 0.0
    x: float = 0.0
    b: float = 0.0
    tap: float = 1.0
    status: str = "in_service"
    id: str = ""

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise ParameterError(f"branch {self.id or '?'}: from_bus == to_bus")
        if self.status == "in_service" and self.x == 0.0 and self.r == 0.0:
            raise ParameterError(
                f"branch {self.from_bus}-{self.to_bus}: zero series impedance")
        if not self.id:
            self.id = f"L{self.from_bus}-{self.to_bus}"

    @property
    def in_service(self):
        return self.status == "in_service"


@dataclass
class ShuntElement:
    bus: int
    g: float = 0.0
    b: float = 0.0
    tag: str = "fixed"


@dataclass
class Load:
    bus: int
    p: float = 0.0
    q: float = 0.0


@dataclass
class GridModel:
    """Immutable-by-convention network container.

    Mutation happens only through explicit event application (branch status
    toggles, fault shunt insertion/removal); reads are thread-safe.
    """

    buses: list
    branches: list = field(default_factory=list)
    shunts: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    f_hz: float = 60.0
    base_mva: float = SYSTEM_BASE_MVA

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise StructuralError("duplicate bus ids")
        self._index = {bid: i for i, bid in enumerate(ids)}
        for br in self.branches:
            self.bus_index(br.from_bus)
            self.bus_index(br.to_bus)
        for sh in self.shunts:
            self.bus_index(sh.bus)
        for ld in self.loads:
            self.bus_index(ld.bus)

    @property
    def n_bus(self):
        return len(self.buses)

    def bus_index(self, bus_id):
        try:
            return self._index[bus_id]
        except KeyError:
            raise StructuralError(f"reference to unknown bus {bus_id}") from None

    def branch_by_id(self, branch_id):
        for br in self.branches:
            if br.id == branch_id:
                return br
        raise StructuralError(f"reference to unknown branch {branch_id!r}")

    def slack_index(self):
        slacks = [i for i, b in enumerate(self.buses) if b.kind == "slack"]
        if len(slacks) != 1:
            raise StructuralError(
                f"exactly one slack bus required, found {len(slacks)}")
        return slacks[0]


def build_ybus(grid, load_admittance=None):
    """Assemble the complex bus admittance matrix from in-service elements.

    ``load_admittance`` maps bus index -> complex shunt admittance for loads
    already converted to constant impedance; power flow runs without it,
    dynamic simulation runs with it.  Pure function of element status:
    trip followed by reconnect reproduces the original matrix.
    """
    n = grid.n_bus
    rows, cols, vals = [], [], []

    def add(i, j, y):
        rows.append(i)
        cols.append(j)
        vals.append(y)

    for br in grid.branches:
        if not br.in_service:
            continue
        if br.x == 0.0 and br.r == 0.0:
            raise ParameterError(
                f"branch {br.id}: zero series impedance while in service")
        i = grid.bus_index(br.from_bus)
        j = grid.bus_index(br.to_bus)
        ys = 1.0 / complex(br.r, br.x)
        bc = 0.5j * br.b
        t = br.tap if br.tap else 1.0
        add(i, i, (ys + bc) / (t * t))
        add(j, j, ys + bc)
        add(i, j, -ys / t)
        add(j, i, -ys / t)

    for sh in grid.shunts:
        i = grid.bus_index(sh.bus)
        add(i, i, complex(sh.g, sh.b))

    if load_admittance:
        for i, y in load_admittance.items():
            add(i, i, y)

    ybus = sp.coo_matrix(
        (np.asarray(vals, dtype=complex), (rows, cols)), shape=(n, n))
    return ybus.tocsc()


def load_admittances(grid, v_mag):
    """Constant-impedance conversion y = (p - jq) / v0**2 at the solved
    voltage, accumulated per bus index."""
    out = {}
    for ld in grid.loads:
        i = grid.bus_index(ld.bus)
        v0 = v_mag[i]
        out[i] = out.get(i, 0.0) + complex(ld.p, -ld.q) / (v0 * v0)
    return out


def _dS_dV(ybus, v_cplx):
    """Partial derivatives of the complex bus power injections with respect
    to voltage magnitude and angle (polar form), matpower-style."""
    n = len(v_cplx)
    ib = np.arange(n)
    i_bus = ybus @ v_cplx
    diag_v = sp.csr_matrix((v_cplx, (ib, ib)))
    diag_i = sp.csr_matrix((i_bus, (ib, ib)))
    diag_vnorm = sp.csr_matrix((v_cplx / np.abs(v_cplx), (ib, ib)))
    dS_dVm = diag_v @ (ybus @ diag_vnorm).conjugate() + diag_i.conjugate() @ diag_vnorm
    dS_dVa = 1j * diag_v @ (diag_i - ybus @ diag_v).conjugate()
    return dS_dVm.tocsr(), dS_dVa.tocsr()


def network_power(ybus, v_mag, theta):
    """Complex power drawn from each bus by the network, S = V conj(Y V)."""
    v_cplx = v_mag * np.exp(1j * theta)
    return v_cplx * np.conj(ybus @ v_cplx)


def network_residual(v_mag, theta, ybus, p_inj, q_inj):
    """Power-balance mismatch per bus, interleaved (P_0, Q_0, P_1, Q_1, ...).

    ``p_inj``/``q_inj`` are the accumulated device injections.  Zero at a
    consistent solution; this is the external algebraic block of the DAE.
    """
    n = ybus.shape[0]
    if len(v_mag) != n or len(theta) != n:
        raise StructuralError(
            f"voltage vector length {len(v_mag)} != ybus dimension {n}")
    s_net = network_power(ybus, v_mag, theta)
    res = np.empty(2 * n)
    res[0::2] = p_inj - s_net.real
    res[1::2] = q_inj - s_net.imag
    return res


def network_jacobian(v_mag, theta, ybus):
    """Triplets of d(P_net, Q_net)/d(v, theta) with interleaved ordering.

    Rows alternate (P_i, Q_i); columns alternate (v_i, theta_i).  Entries are
    evaluated per element of the Y pattern, so the triplet layout depends
    only on the admittance structure (stable between topology events).
    Callers building balance residuals `inj - net` negate these entries.
    """
    yc = ybus.tocoo()
    i, j, yij = yc.row, yc.col, yc.data
    v_cplx = v_mag * np.exp(1j * theta)
    e_ij = v_cplx[i] * np.conj(yij * v_cplx[j])
    s_bus = np.zeros(ybus.shape[0], dtype=complex)
    np.add.at(s_bus, i, e_ij)
    off = i != j
    dS_dth = np.where(off, -1j * e_ij, 1j * (s_bus[i] - e_ij))
    dS_dv = np.where(off, e_ij / v_mag[j], (s_bus[i] + e_ij) / v_mag[i])
    rows = np.concatenate([2 * i, 2 * i + 1, 2 * i, 2 * i + 1])
    cols = np.concatenate([2 * j, 2 * j, 2 * j + 1, 2 * j + 1])
    vals = np.concatenate([dS_dv.real, dS_dv.imag, dS_dth.real, dS_dth.imag])
    return rows, cols, vals


@dataclass
class PowerFlowSolution:
    v_mag: np.ndarray
    theta: np.ndarray
    p_net: np.ndarray   # net injection actually flowing into the network
    q_net: np.ndarray
    iterations: int
    mismatch: float


def solve_powerflow(grid, p_spec, q_spec, ybus=None, tol=1e-10, max_iter=20):
    """Polar Newton-Raphson power flow.

    ``p_spec``/``q_spec`` are the specified net injections per bus (device
    dispatch minus load).  PV buses hold v_mag at the bus record setpoint;
    the slack bus holds both v_mag and theta.  Raises PowerFlowError with the
    final mismatch on divergence.
    """
    if tol <= 0:
        raise ParameterError("power flow tol must be > 0")
    n = grid.n_bus
    slack = grid.slack_index()
    if ybus is None:
        ybus = build_ybus(grid)

    kinds = [b.kind for b in grid.buses]
    pv = np.array([i for i, k in enumerate(kinds) if k == "pv"], dtype=int)
    pq = np.array([i for i, k in enumerate(kinds) if k == "pq"], dtype=int)
    pvpq = np.concatenate([pv, pq])

    v_mag = np.array([b.v_mag for b in grid.buses], dtype=float)
    theta = np.array([b.theta for b in grid.buses], dtype=float)
    theta[:] = grid.buses[slack].theta
    v_mag[pq] = 1.0  # flat start on magnitude for PQ buses

    p_spec = np.asarray(p_spec, dtype=float)
    q_spec = np.asarray(q_spec, dtype=float)

    mismatch = np.inf
    for it in range(1, max_iter + 1):
        v_cplx = v_mag * np.exp(1j * theta)
        s_calc = v_cplx * np.conj(ybus @ v_cplx)
        dp = s_calc.real - p_spec
        dq = s_calc.imag - q_spec
        f = np.concatenate([dp[pvpq], dq[pq]])
        mismatch = np.max(np.abs(f)) if len(f) else 0.0
        if mismatch < tol:
            p_net = s_calc.real.copy()
            q_net = s_calc.imag.copy()
            return PowerFlowSolution(v_mag, theta, p_net, q_net, it, mismatch)

        dS_dVm, dS_dVa = _dS_dV(ybus, v_cplx)
        j11 = dS_dVa[pvpq][:, pvpq].real
        j12 = dS_dVm[pvpq][:, pq].real
        j21 = dS_dVa[pq][:, pvpq].imag
        j22 = dS_dVm[pq][:, pq].imag
        jac = sp.bmat([[j11, j12], [j21, j22]], format="csc")
        dx = spsolve(jac, f)
        theta[pvpq] -= dx[: len(pvpq)]
        v_mag[pq] -= dx[len(pvpq):]

    raise PowerFlowError(
        f"power flow diverged after {max_iter} iterations "
        f"(mismatch inf-norm {mismatch:.3e})",
        mismatch=mismatch, iterations=max_iter)
