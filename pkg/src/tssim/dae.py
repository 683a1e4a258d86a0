"""Variable registry and formulation-aware assembly of residual vectors and
sparse Jacobians.

Two formulations are assembled behind the same device interface:

* full -- every internal algebraic variable is a Newton unknown and every
  internal algebraic equation contributes a residual row;
* split -- internal algebraic variables belonging to the selected blocks are
  excluded from the Newton vector, held in a frozen-value store, refreshed
  from the previous iterate by explicit evaluation, and treated as constants
  by the Jacobian (their rows and columns simply do not exist).

Newton vector layout: [states | unsplit internal algebraics | network pairs
(v_i, theta_i) per bus].  Residual rows mirror the columns; state rows carry
the implicit-trapezoidal discretization when a step context is supplied, so
the Newton matrix is one square system.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, StructuralError
from .grid import build_ybus, load_admittances, network_jacobian, network_residual


@dataclass(frozen=True)
class Formulation:
    mode: str = "full"                       # 'full' | 'split'
    selection: tuple = ()                    # split block ids, split mode only

    def __post_init__(self):
        if self.mode not in ("full", "split"):
            raise ConfigurationError(f"unknown formulation mode {self.mode!r}")

    @classmethod
    def full(cls):
        return cls("full", ())

    @classmethod
    def split(cls, selection):
        return cls("split", tuple(sorted(set(selection))))

    @property
    def label(self):
        if self.mode == "full":
            return "full"
        return "split(" + ",".join(self.selection) + ")" if self.selection else "split()"


@dataclass
class _DeviceSlot:
    device: object
    x_offset: int
    alg_full: np.ndarray       # local alg index -> index into full y_i order
    alg_newton: np.ndarray     # local alg index -> Newton column, -1 if frozen
    alg_frozen: np.ndarray     # local alg index -> frozen-store slot, -1 if not
    blocks: list = field(default_factory=list)   # selected (block, local idx array)


class VariableRegistry:
    """Dense, disjoint global indices for x, unsplit y_i and y_e.

    Also tracks the full (unsplit) variable universe so that trajectories and
    accounting are formulation-independent.
    """

    def __init__(self, devices, grid, formulation):
        known_blocks = set()
        for dev in devices:
            for blk in dev.split_blocks:
                known_blocks.add(blk.block_id)
        selection = set(formulation.selection) if formulation.mode == "split" else set()
        unknown = selection - known_blocks
        if unknown:
            raise ConfigurationError(
                f"split selection references unknown block(s): {sorted(unknown)}")

        self.formulation = formulation
        self.grid = grid
        self.devices = list(devices)
        self.slots = []
        self.state_names = []
        self.alg_full_names = []

        x_ofs = 0
        yi_newton = 0
        frozen = 0
        frozen_names = []
        for dev in self.devices:
            eligible = {}
            sel_blocks = []
            for blk in dev.split_blocks:
                if blk.block_id in selection:
                    idx = np.array([dev.alg_index(n) for n in blk.var_names])
                    sel_blocks.append((blk, idx))
                    for k in idx:
                        eligible[int(k)] = True
            alg_full = np.arange(len(self.alg_full_names),
                                 len(self.alg_full_names) + dev.n_algs)
            alg_newton = np.full(dev.n_algs, -1, dtype=int)
            alg_frozen = np.full(dev.n_algs, -1, dtype=int)
            for j in range(dev.n_algs):
                if j in eligible:
                    alg_frozen[j] = frozen
                    frozen_names.append(f"{dev.id}.{dev.alg_names[j]}")
                    frozen += 1
                else:
                    alg_newton[j] = yi_newton
                    yi_newton += 1
            self.slots.append(_DeviceSlot(dev, x_ofs, alg_full, alg_newton,
                                          alg_frozen, sel_blocks))
            self.state_names += [f"{dev.id}.{n}" for n in dev.state_names]
            self.alg_full_names += [f"{dev.id}.{n}" for n in dev.alg_names]
            x_ofs += dev.n_states

        self.n_x = x_ofs
        self.n_yi_newton = yi_newton
        self.n_frozen = frozen
        self.n_ye = 2 * grid.n_bus
        self.frozen_names = frozen_names
        self.ye_names = []
        for b in grid.buses:
            self.ye_names += [f"bus{b.id}.v", f"bus{b.id}.theta"]

    # -- layout ---------------------------------------------------------------

    @property
    def ye_offset(self):
        return self.n_x + self.n_yi_newton

    @property
    def n_newton(self):
        return self.n_x + self.n_yi_newton + self.n_ye

    @property
    def n_yi_full(self):
        return len(self.alg_full_names)

    def accounting(self):
        """Variable counts for the two formulations of this system."""
        n_y_full = self.n_yi_full + self.n_ye
        return {
            "n_x": self.n_x,
            "n_y_full": n_y_full,
            "n_y_split": n_y_full - self.n_frozen,
            "n_split_selected": self.n_frozen,
            "n_yi_full": self.n_yi_full,
            "n_ye": self.n_ye,
        }

    def newton_names(self):
        names = list(self.state_names)
        for slot in self.slots:
            for j, npos in enumerate(slot.alg_newton):
                if npos >= 0:
                    names.append(f"{slot.device.id}.{slot.device.alg_names[j]}")
        return names + self.ye_names

    def full_names(self):
        """Formulation-independent variable order: x, all y_i, y_e."""
        return self.state_names + self.alg_full_names + self.ye_names

    def full_vector(self, z, frozen):
        """Map a Newton vector plus frozen store onto the full variable order."""
        out = np.empty(self.n_x + self.n_yi_full + self.n_ye)
        out[:self.n_x] = z[:self.n_x]
        base = self.n_x
        for slot in self.slots:
            for j in range(slot.device.n_algs):
                gi = base + slot.alg_full[j]
                if slot.alg_newton[j] >= 0:
                    out[gi] = z[self.n_x + slot.alg_newton[j]]
                else:
                    out[gi] = frozen[slot.alg_frozen[j]]
        out[base + self.n_yi_full:] = z[self.ye_offset:]
        return out

    def state_mask_full(self):
        m = np.zeros(self.n_x + self.n_yi_full + self.n_ye, dtype=bool)
        m[:self.n_x] = True
        return m


class SystemFunction:
    """Assembled residual and Jacobian evaluators for one formulation.

    Holds the dynamic admittance matrix (loads folded in as constant
    impedance), the frozen split-value store, and the per-device active mask
    used by generator trips.  The sparsity pattern is frozen between topology
    events; `mark_topology_event` allows the next assembly to re-derive it.
    """

    def __init__(self, grid, devices, formulation, load_y=None):
        self.grid = grid
        self.devices = list(devices)
        self.formulation = formulation
        self.registry = VariableRegistry(devices, grid, formulation)
        self.load_y = dict(load_y) if load_y else {}
        self.ybus = build_ybus(grid, self.load_y)
        self.active = {dev.id: True for dev in devices}
        self.frozen = np.zeros(self.registry.n_frozen)
        self._pinned = {}
        self._pattern = None
        self._topology_epoch = 0
        self._pattern_epoch = -1

    # -- events / bookkeeping -------------------------------------------------

    def refresh_ybus(self):
        self.ybus = build_ybus(self.grid, self.load_y)
        self.mark_topology_event()

    def mark_topology_event(self):
        self._topology_epoch += 1

    def deactivate_device(self, dev_id, z):
        """Freeze a tripped device: pin its variables, zero its injection."""
        slot = self._slot(dev_id)
        if not self.active[dev_id]:
            raise StructuralError(f"device {dev_id} already inactive")
        self.active[dev_id] = False
        reg = self.registry
        cols = list(range(slot.x_offset, slot.x_offset + slot.device.n_states))
        cols += [reg.n_x + int(n) for n in slot.alg_newton if n >= 0]
        self._pinned[dev_id] = (np.array(cols, dtype=int), z[np.array(cols, dtype=int)].copy())
        self.mark_topology_event()

    def _slot(self, dev_id):
        for slot in self.registry.slots:
            if slot.device.id == dev_id:
                return slot
        raise StructuralError(f"unknown device {dev_id}")

    def n_active_sources(self):
        return sum(1 for d in self.devices if self.active[d.id])

    # -- variable plumbing ------------------------------------------------------

    def bus_vtheta(self, z):
        ye = z[self.registry.ye_offset:]
        return ye[0::2], ye[1::2]

    def device_vectors(self, z, slot):
        """Per-device (x, full y) with frozen values substituted."""
        dev = slot.device
        x = z[slot.x_offset:slot.x_offset + dev.n_states]
        y = np.empty(dev.n_algs)
        for j in range(dev.n_algs):
            if slot.alg_newton[j] >= 0:
                y[j] = z[self.registry.n_x + slot.alg_newton[j]]
            else:
                y[j] = self.frozen[slot.alg_frozen[j]]
        return x, y

    def seed_frozen(self, z):
        """Load the frozen store directly from a consistent solution."""
        for slot in self.registry.slots:
            x, y = self.device_vectors(z, slot)
            for j in range(slot.device.n_algs):
                if slot.alg_frozen[j] >= 0:
                    self.frozen[slot.alg_frozen[j]] = y[j]

    def reset_algebraic_guess(self, z):
        """Overwrite internal-algebraic entries (and frozen values) with
        device back-computed values consistent with the current states and
        network voltages; used to seed post-event re-solves."""
        v, th = self.bus_vtheta(z)
        for slot in self.registry.slots:
            dev = slot.device
            if not self.active[dev.id]:
                continue
            i = self.grid.bus_index(dev.bus)
            x = z[slot.x_offset:slot.x_offset + dev.n_states]
            y = dev.consistent_algebraics(x, v[i], th[i])
            for j in range(dev.n_algs):
                if slot.alg_newton[j] >= 0:
                    z[self.registry.n_x + slot.alg_newton[j]] = y[j]
                else:
                    self.frozen[slot.alg_frozen[j]] = y[j]

    def split_update(self, z):
        """Refresh frozen values from the previous iterate (Jacobi style).

        All explicit forms are evaluated on the same snapshot (the incoming
        z plus the current frozen store) and written back together.
        """
        if self.registry.n_frozen == 0:
            return
        v, th = self.bus_vtheta(z)
        updates = []
        for slot in self.registry.slots:
            if not self.active[slot.device.id] or not slot.blocks:
                continue
            i = self.grid.bus_index(slot.device.bus)
            x, y = self.device_vectors(z, slot)
            for blk, idx in slot.blocks:
                vals = slot.device.explicit_block(blk.block_id, x, y, v[i], th[i])
                for k, j in enumerate(idx):
                    updates.append((slot.alg_frozen[j], vals[k]))
        for pos, val in updates:
            self.frozen[pos] = val

    # -- residual ---------------------------------------------------------------

    def f_states(self, z):
        """Plain state derivatives f(x, y) in global state order."""
        v, th = self.bus_vtheta(z)
        out = np.zeros(self.registry.n_x)
        for slot in self.registry.slots:
            if not self.active[slot.device.id]:
                continue
            i = self.grid.bus_index(slot.device.bus)
            x, y = self.device_vectors(z, slot)
            out[slot.x_offset:slot.x_offset + slot.device.n_states] = \
                slot.device.f_rhs(x, y, v[i], th[i])
        return out

    def residual(self, z, step=None):
        """Assembled residual.

        ``step`` is None for the pure [f; g] system (initialization checks,
        diagnostics) or an (x0, f0, h) triple for trapezoidal state rows
        x - x0 - h/2 (f + f0); algebraic rows are identical in both.
        """
        reg = self.registry
        if len(z) != reg.n_newton:
            raise StructuralError(
                f"vector length {len(z)} != system dimension {reg.n_newton}")
        v, th = self.bus_vtheta(z)
        r = np.zeros(reg.n_newton)
        p_inj = np.zeros(self.grid.n_bus)
        q_inj = np.zeros(self.grid.n_bus)

        for slot in reg.slots:
            dev = slot.device
            if not self.active[dev.id]:
                cols, vals = self._pinned[dev.id]
                r[cols] = z[cols] - vals
                continue
            i = self.grid.bus_index(dev.bus)
            x, y = self.device_vectors(z, slot)
            fv = dev.f_rhs(x, y, v[i], th[i])
            sl = slice(slot.x_offset, slot.x_offset + dev.n_states)
            if step is None:
                r[sl] = fv
            else:
                x0, f0, h = step
                r[sl] = x - x0[sl] - 0.5 * h * (fv + f0[sl])
            gv = dev.g_residual(x, y, v[i], th[i])
            for j in range(dev.n_algs):
                npos = slot.alg_newton[j]
                if npos >= 0:
                    r[reg.n_x + npos] = gv[j]
            pi, qi = dev.injection(x, y, v[i], th[i])
            p_inj[i] += pi
            q_inj[i] += qi

        r[reg.ye_offset:] = network_residual(v, th, self.ybus, p_inj, q_inj)
        return r

    # -- Jacobian -----------------------------------------------------------------

    def jacobian(self, z, step=None):
        """Sparse CSC Jacobian of `residual` at z.

        Frozen split variables contribute nothing: their columns are not
        assembled and their rows do not exist.  Dense device blocks are
        emitted in full so the triplet pattern is independent of operating
        point; the canonical pattern is frozen between topology events.
        """
        reg = self.registry
        v, th = self.bus_vtheta(z)
        h = step[2] if step is not None else None
        rows, cols, vals = [], [], []

        def emit_block(block, row0, colmap):
            nr, nc = block.shape
            r_idx = np.repeat(np.arange(row0, row0 + nr), nc)
            c_idx = np.tile(colmap, nr)
            keep = c_idx >= 0
            rows.append(r_idx[keep])
            cols.append(c_idx[keep])
            vals.append(block.ravel()[keep])

        def emit_rows(block, rowmap, colmap):
            for k, rr in enumerate(rowmap):
                if rr < 0:
                    continue
                keep = colmap >= 0
                rows.append(np.full(keep.sum(), rr))
                cols.append(colmap[keep])
                vals.append(block[k, keep])

        for slot in reg.slots:
            dev = slot.device
            if not self.active[dev.id]:
                pc, _ = self._pinned[dev.id]
                rows.append(pc)
                cols.append(pc)
                vals.append(np.ones(len(pc)))
                continue
            i = self.grid.bus_index(dev.bus)
            x, y = self.device_vectors(z, slot)
            J = dev.jacobian(x, y, v[i], th[i])
            x_cols = np.arange(slot.x_offset, slot.x_offset + dev.n_states)
            y_cols = np.where(slot.alg_newton >= 0, reg.n_x + slot.alg_newton, -1)
            e_cols = np.array([reg.ye_offset + 2 * i, reg.ye_offset + 2 * i + 1])

            scale = 1.0 if h is None else -0.5 * h
            emit_block(scale * J.fx, slot.x_offset, x_cols)
            emit_block(scale * J.fy, slot.x_offset, y_cols)
            emit_block(scale * J.fv, slot.x_offset, e_cols)
            if h is not None:
                rows.append(x_cols)
                cols.append(x_cols)
                vals.append(np.ones(dev.n_states))

            g_rows = np.where(slot.alg_newton >= 0, reg.n_x + slot.alg_newton, -1)
            emit_rows(J.gx, g_rows, x_cols)
            emit_rows(J.gy, g_rows, y_cols)
            emit_rows(J.gv, g_rows, e_cols)

            inj_rows = np.array([reg.ye_offset + 2 * i, reg.ye_offset + 2 * i + 1])
            emit_rows(J.inj_x, inj_rows, x_cols)
            emit_rows(J.inj_y, inj_rows, y_cols)
            emit_rows(J.inj_v, inj_rows, e_cols)

        nr, nc, nv = network_jacobian(v, th, self.ybus)
        rows.append(reg.ye_offset + nr)
        cols.append(reg.ye_offset + nc)
        vals.append(-nv)

        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(reg.n_newton, reg.n_newton)).tocsc()
        key = (h is None, self._topology_epoch)
        pattern = (mat.indptr.tobytes(), mat.indices.tobytes())
        if self._pattern is not None and self._pattern_epoch == key:
            if pattern != self._pattern:
                raise StructuralError(
                    "Jacobian sparsity pattern changed without a topology event")
        else:
            self._pattern = pattern
            self._pattern_epoch = key
        return mat

    def breakpoint_margin(self, z):
        v, th = self.bus_vtheta(z)
        m = float("inf")
        for slot in self.registry.slots:
            if not self.active[slot.device.id]:
                continue
            i = self.grid.bus_index(slot.device.bus)
            x, y = self.device_vectors(z, slot)
            m = min(m, slot.device.breakpoint_margin(x, y, v[i], th[i]))
        return m


def build_system(grid, devices, formulation, powerflow=None):
    """Construct a SystemFunction with loads folded in at the power-flow
    voltage (flat 1.0 pu when no solution is supplied)."""
    if powerflow is not None:
        ly = load_admittances(grid, powerflow.v_mag)
    else:
        ly = load_admittances(grid, np.ones(grid.n_bus))
    return SystemFunction(grid, devices, formulation, ly)
