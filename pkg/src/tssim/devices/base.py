"""Device-model interface shared by the full and split DAE formulations.

A device owns a contiguous block of state variables and a contiguous block of
internal algebraic variables, declares which internal algebraics are
split-eligible (grouped into named blocks that each provide an explicit
evaluator), and contributes a power injection at its bus.  Devices are pure
functions over variable slices; assembly into shared vectors is the caller's
responsibility.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class VariableDecl:
    name: str
    kind: str                    # 'state' | 'internal_algebraic' | 'external_ref'
    split_eligible: bool = False


@dataclass(frozen=True)
class SplitBlock:
    """A group of internal algebraic variables with an explicit form.

    ``linear`` is the symbolic flag: True when every equation of the block is
    (piecewise) linear in the variables it reads.
    """

    block_id: str
    var_names: tuple
    linear: bool


class DeviceJacobian:
    """Dense per-device derivative blocks.

    Rows: f (state equations), g (internal algebraic residuals), inj (P, Q).
    Columns: x (own states), y (own internal algebraics, full set), v
    (own-bus v and theta, in that order).
    """

    def __init__(self, n_states, n_algs):
        self.fx = np.zeros((n_states, n_states))
        self.fy = np.zeros((n_states, n_algs))
        self.fv = np.zeros((n_states, 2))
        self.gx = np.zeros((n_algs, n_states))
        self.gy = np.zeros((n_algs, n_algs))
        self.gv = np.zeros((n_algs, 2))
        self.inj_x = np.zeros((2, n_states))
        self.inj_y = np.zeros((2, n_algs))
        self.inj_v = np.zeros((2, 2))


class DeviceModel:
    """Base class; concrete devices fill in names, blocks and equations."""

    id = ""
    bus = None
    state_names = ()
    alg_names = ()
    split_blocks = ()

    @property
    def n_states(self):
        return len(self.state_names)

    @property
    def n_algs(self):
        return len(self.alg_names)

    def declarations(self):
        decls = [VariableDecl(n, "state") for n in self.state_names]
        eligible = set()
        for blk in self.split_blocks:
            eligible.update(blk.var_names)
        decls += [
            VariableDecl(n, "internal_algebraic", split_eligible=n in eligible)
            for n in self.alg_names
        ]
        decls += [VariableDecl("v", "external_ref"), VariableDecl("theta", "external_ref")]
        return decls

    def alg_index(self, name):
        return self.alg_names.index(name)

    def state_index(self, name):
        return self.state_names.index(name)

    # -- equations ---------------------------------------------------------

    def initialize(self, v, theta, p, q):
        raise NotImplementedError

    def f_rhs(self, x, y, v, theta):
        raise NotImplementedError

    def g_residual(self, x, y, v, theta):
        raise NotImplementedError

    def injection(self, x, y, v, theta):
        raise NotImplementedError

    def jacobian(self, x, y, v, theta):
        raise NotImplementedError

    def explicit_block(self, block_id, x, y, v, theta):
        """Explicit values for a split block, evaluated on one snapshot.

        The snapshot is the previous Newton iterate when called from the
        split-formulation update; every read comes from that snapshot.
        """
        raise NotImplementedError

    def breakpoint_margin(self, x, y, v, theta):
        """Distance to the nearest piecewise-linear breakpoint (inf if none)."""
        return float("inf")
