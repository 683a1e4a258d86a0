"""Case-file parsing, disturbance definitions, and end-to-end scenario
execution tying grid, devices, dae and solver together.

Case and scenario files are TOML documents; the schema is documented in the
repository README.  Bundled cases live in tssim/cases and are addressable by
bare name (e.g. "smib").
"""

import hashlib
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dae import Formulation, build_system
from .devices import (ExciterParams, GenrouGenerator, GenrouParams,
                      GovernorParams, RegcaParams, ReecaParams, RenewablePlant)
from .errors import (CaseParseError, CaseValidationError, EventError,
                     InitializationError, ParameterError)
from .grid import Branch, Bus, GridModel, Load, ShuntElement, solve_powerflow
from .solver import SolverConfig, run_simulation

EVENT_KINDS = ("line_trip", "line_reconnect", "bus_fault_apply",
               "bus_fault_clear", "generator_trip")

DEFAULT_FAULT_XF = 1e-4


# ---------------------------------------------------------------------------
# data types


@dataclass
class Event:
    t: float
    kind: str
    target: object                  # branch id, bus id, or device id
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.t <= 0:
            raise CaseValidationError(f"event at t={self.t}: t must be > 0")
        if self.kind not in EVENT_KINDS:
            raise CaseValidationError(f"unknown event kind {self.kind!r}")


@dataclass
class Scenario:
    case: str                       # bundled name or path
    t_end: float = 5.0
    formulation: Formulation = field(default_factory=Formulation.full)
    events: list = field(default_factory=list)
    solver_overrides: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        self.events = sorted(self.events, key=lambda e: e.t)
        if self.events and self.t_end <= self.events[-1].t:
            raise CaseValidationError("t_end must exceed the last event time")
        pending = set()
        for ev in self.events:
            if ev.kind == "bus_fault_apply":
                pending.add(ev.target)
            elif ev.kind == "bus_fault_clear":
                if ev.target not in pending:
                    raise CaseValidationError(
                        f"fault_clear at bus {ev.target} has no matching apply")
                pending.discard(ev.target)

    def config(self, base=None):
        return (base or SolverConfig()).with_overrides(**self.solver_overrides)


class Trajectory:
    """Per-variable series on the fixed step grid, keyed by registry name."""

    def __init__(self, times, names, data, state_mask):
        self.times = np.asarray(times)
        self.names = list(names)
        self.data = np.asarray(data)
        self.state_mask = np.asarray(state_mask, dtype=bool)
        self._col = {n: k for k, n in enumerate(self.names)}

    def column(self, name):
        return self.data[:, self._col[name]]

    def states(self):
        return self.data[:, self.state_mask]

    def max_state_deviation(self, other):
        """Inf-norm over all states between two trajectories on equal grids."""
        if self.data.shape[0] != other.data.shape[0]:
            raise ParameterError("trajectories are on different grids")
        a = self.states()
        b = other.states()
        return float(np.max(np.abs(a - b)))

    def digest(self):
        return hashlib.sha256(self.data.tobytes()).hexdigest()

    def write_csv(self, path):
        header = "t," + ",".join(self.names)
        body = np.column_stack([self.times, self.data])
        np.savetxt(path, body, delimiter=",", header=header, comments="",
                   fmt="%.12g")


@dataclass
class RunReport:
    """Per-run statistics: step series, totals, and the trajectory digest."""

    formulation: str
    h: float
    steps: list
    wall_time_s: float
    trajectory_digest: str

    @property
    def n_steps(self):
        return len(self.steps)

    @property
    def total_iterations(self):
        return sum(s.iterations for s in self.steps)

    @property
    def total_factorizations(self):
        return sum(s.factorizations for s in self.steps)


# ---------------------------------------------------------------------------
# case parsing


def bundled_case_path(name):
    res = resources.files("tssim").joinpath("cases").joinpath(f"{name}.toml")
    with resources.as_file(res) as p:
        return Path(p)


def _resolve_case_path(case):
    p = Path(case)
    if p.suffix == ".toml" and p.exists():
        return p
    candidate = bundled_case_path(str(case))
    if candidate.exists():
        return candidate
    if p.exists():
        return p
    raise CaseParseError(f"case {case!r} not found (no file and no bundled case)")


def _require(rec, key, path, what):
    if key not in rec:
        raise CaseParseError(f"missing field {key!r}", path=path,
                             record=f"{what} {rec.get('id', rec)}")
    return rec[key]


def _take(rec, path, what, required, optional):
    out = {}
    rec = dict(rec)
    for key in required:
        out[key] = _require(rec, key, path, what)
        rec.pop(key)
    for key, default in optional.items():
        out[key] = rec.pop(key, default)
    if rec:
        raise CaseParseError(f"unknown field(s) {sorted(rec)!r}", path=path,
                             record=f"{what} {out.get('id', '')}")
    return out


_GENROU_KEYS = ("xd", "xq", "xdp", "xqp", "xdpp", "xl", "ra", "td0p", "tq0p",
                "td0pp", "tq0pp", "h", "d", "s10", "s12")
_EXST_KEYS = ("ke", "te", "e_min", "e_max")
_TGOV_KEYS = ("r_droop", "t1", "v_min", "v_max", "dt")
_REGCA_KEYS = ("tg", "rrpwr", "brkpt", "zerox", "lvpl1")
_REECA_KEYS = ("vref0", "kqv", "iql1", "iqh1", "trv")


def parse_case(path):
    """Parse a case file into (GridModel, devices, dispatch).

    ``dispatch`` maps device id -> scheduled active power (system base).
    Controller records (EXST_LITE, TGOV_LITE, REECA_LITE) are composed onto
    their parent GENROU / REGCA_LITE units.  Per-unit conversion to the
    100 MVA system base happens here.
    """
    path = _resolve_case_path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise CaseParseError(f"TOML error: {exc}", path=str(path)) from None

    f_hz = float(doc.get("f_hz", 60.0))
    buses, branches, shunts, loads = [], [], [], []
    for rec in doc.get("buses", []):
        r = _take(rec, path, "bus", ["id"],
                  {"kind": "pq", "v_mag": 1.0, "theta": 0.0, "base_kv": 230.0})
        buses.append(Bus(**r))
    for rec in doc.get("branches", []):
        r = _take(rec, path, "branch", ["from_bus", "to_bus", "x"],
                  {"r": 0.0, "b": 0.0, "tap": 1.0, "status": "in_service",
                   "id": ""})
        branches.append(Branch(**r))
    for rec in doc.get("shunts", []):
        r = _take(rec, path, "shunt", ["bus"], {"g": 0.0, "b": 0.0,
                                                "tag": "fixed"})
        shunts.append(ShuntElement(**r))
    for rec in doc.get("loads", []):
        r = _take(rec, path, "load", ["bus"], {"p": 0.0, "q": 0.0})
        loads.append(Load(**r))

    ids = [br.id for br in branches]
    if len(set(ids)) != len(ids):
        raise CaseValidationError(f"{path}: duplicate branch ids")
    grid = GridModel(buses, branches, shunts, loads, f_hz=f_hz)

    gens, excs, govs, regcas, reecas = {}, {}, {}, {}, {}
    dispatch = {}
    for rec in doc.get("devices", []):
        model = _require(rec, "model", path, "device")
        rec = {k: v for k, v in rec.items() if k != "model"}
        if model == "GENROU":
            r = _take(rec, path, "GENROU", ["id", "bus"],
                      {"mva": 100.0, "p_set": 0.0, "sat": True,
                       **{k: getattr(GenrouParams(), k) for k in _GENROU_KEYS}})
            params = GenrouParams(**{k: r[k] for k in _GENROU_KEYS})
            params = params.validate(r["id"]).to_system_base(r["mva"])
            gens[r["id"]] = (r, params)
            dispatch[r["id"]] = r["p_set"]
        elif model == "EXST_LITE":
            r = _take(rec, path, "EXST_LITE", ["id", "gen"],
                      {k: getattr(ExciterParams(), k) for k in _EXST_KEYS})
            excs[r["gen"]] = (r, ExciterParams(**{k: r[k] for k in _EXST_KEYS}))
        elif model == "TGOV_LITE":
            r = _take(rec, path, "TGOV_LITE", ["id", "gen"],
                      {"mva": 100.0, **{k: getattr(GovernorParams(), k)
                                        for k in _TGOV_KEYS}})
            p = GovernorParams(**{k: r[k] for k in _TGOV_KEYS})
            govs[r["gen"]] = (r, p.validate(r["id"]).to_system_base(r["mva"]))
        elif model == "REGCA_LITE":
            r = _take(rec, path, "REGCA_LITE", ["id", "bus"],
                      {"mva": 100.0, "p_set": 0.0,
                       **{k: getattr(RegcaParams(), k) for k in _REGCA_KEYS}})
            p = RegcaParams(**{k: r[k] for k in _REGCA_KEYS})
            regcas[r["id"]] = (r, p.validate(r["id"]).to_system_base(r["mva"]))
            dispatch[r["id"]] = r["p_set"]
        elif model == "REECA_LITE":
            r = _take(rec, path, "REECA_LITE", ["id", "regc"],
                      {"mva": 100.0, **{k: getattr(ReecaParams(), k)
                                        for k in _REECA_KEYS}})
            p = ReecaParams(**{k: r[k] for k in _REECA_KEYS})
            reecas[r["regc"]] = (r, p.validate(r["id"]).to_system_base(r["mva"]))
        else:
            raise CaseParseError(f"unknown device model {model!r}", path=path)

    for gen_id in list(excs) + list(govs):
        if gen_id not in gens:
            raise CaseValidationError(
                f"{path}: controller references unknown generator {gen_id!r}")
    for regc_id in reecas:
        if regc_id not in regcas:
            raise CaseValidationError(
                f"{path}: REECA_LITE references unknown converter {regc_id!r}")

    devices = []
    for gen_id, (r, params) in gens.items():
        grid.bus_index(r["bus"])
        exciter = excs.get(gen_id, (None, None))[1]
        governor = govs.get(gen_id, (None, None))[1]
        devices.append(GenrouGenerator(gen_id, r["bus"], params,
                                       exciter=exciter, governor=governor,
                                       f_hz=f_hz, use_saturation=r["sat"]))
    for regc_id, (r, params) in regcas.items():
        grid.bus_index(r["bus"])
        reeca = reecas.get(regc_id, (None, None))[1]
        devices.append(RenewablePlant(regc_id, r["bus"], params, reeca))

    if not devices:
        raise CaseValidationError(f"{path}: case declares no dynamic devices")
    devices.sort(key=lambda d: d.id)
    return grid, devices, dispatch


def all_split_blocks(devices):
    """Sorted ids of every split-eligible block declared by the devices."""
    out = set()
    for dev in devices:
        for blk in dev.split_blocks:
            out.add(blk.block_id)
    return sorted(out)


def parse_h(value):
    """Step sizes may be numbers or 'a/b' fraction strings."""
    if isinstance(value, (int, float)):
        return float(value)
    txt = str(value).strip()
    if "/" in txt:
        num, den = txt.split("/", 1)
        return float(num) / float(den)
    return float(txt)


def parse_scenario(path, base_dir=None):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise CaseParseError(f"TOML error: {exc}", path=str(path)) from None

    case = doc.get("case")
    if case is None:
        raise CaseParseError("scenario lacks a 'case' reference", path=str(path))
    case_path = Path(case)
    if not case_path.is_absolute() and case_path.suffix == ".toml":
        case = str((base_dir or path.parent) / case_path)

    mode = doc.get("formulation", "full")
    if mode == "split":
        form = Formulation.split(doc.get("split_blocks", []))
    else:
        form = Formulation.full()

    solver = dict(doc.get("solver", {}))
    if "h" in solver:
        solver["h"] = parse_h(solver["h"])

    events = []
    for rec in doc.get("events", []):
        rec = dict(rec)
        t = rec.pop("t", None)
        kind = rec.pop("kind", None)
        if t is None or kind is None:
            raise CaseParseError("event needs 't' and 'kind'", path=str(path))
        target = rec.pop("branch", None) or rec.pop("bus", None) \
            or rec.pop("device", None)
        if target is None:
            raise CaseParseError(
                f"event {kind} at t={t} needs a branch/bus/device target",
                path=str(path))
        events.append(Event(t=float(t), kind=kind, target=target, params=rec))

    return Scenario(case=str(case), t_end=float(doc.get("t_end", 5.0)),
                    formulation=form, events=events, solver_overrides=solver,
                    name=doc.get("name", path.stem))


# ---------------------------------------------------------------------------
# initialization


def _allocate_injections(grid, devices, dispatch, sol):
    """Distribute the power-flow bus injections over the devices at each bus.

    PV/PQ-bus devices keep their scheduled P; the slack surplus and the bus
    reactive output are shared in proportion to scheduled P (equal split
    when a bus has no scheduled power).
    """
    by_bus = {}
    for dev in devices:
        by_bus.setdefault(dev.bus, []).append(dev)
    out = {}
    for bus_id, devs in by_bus.items():
        i = grid.bus_index(bus_id)
        p_load = sum(l.p for l in grid.loads if l.bus == bus_id)
        q_load = sum(l.q for l in grid.loads if l.bus == bus_id)
        p_bus = sol.p_net[i] + p_load
        q_bus = sol.q_net[i] + q_load
        p_sched = [dispatch.get(d.id, 0.0) for d in devs]
        total = sum(p_sched)
        if total > 0:
            w = [p / total for p in p_sched]
        else:
            w = [1.0 / len(devs)] * len(devs)
        surplus = p_bus - total
        for dev, sched, wk in zip(devs, p_sched, w):
            out[dev.id] = (sched + surplus * wk, q_bus * wk)
    return out


def initialize(grid, devices, dispatch, formulation, pf_tol=1e-10):
    """Power flow plus device equilibrium; returns (system, z0, pf solution).

    The assembled full-DAE residual at (z0, frozen store) is verified to be
    below 1e-8 before anything is simulated.
    """
    n = grid.n_bus
    p_spec = np.zeros(n)
    q_spec = np.zeros(n)
    for dev in devices:
        p_spec[grid.bus_index(dev.bus)] += dispatch.get(dev.id, 0.0)
    for ld in grid.loads:
        i = grid.bus_index(ld.bus)
        p_spec[i] -= ld.p
        q_spec[i] -= ld.q
    sol = solve_powerflow(grid, p_spec, q_spec, tol=pf_tol)

    alloc = _allocate_injections(grid, devices, dispatch, sol)
    system = build_system(grid, devices, formulation, powerflow=sol)
    reg = system.registry

    z0 = np.zeros(reg.n_newton)
    for slot in reg.slots:
        dev = slot.device
        i = grid.bus_index(dev.bus)
        p_dev, q_dev = alloc[dev.id]
        x0, y0 = dev.initialize(sol.v_mag[i], sol.theta[i], p_dev, q_dev)
        z0[slot.x_offset:slot.x_offset + dev.n_states] = x0
        for j in range(dev.n_algs):
            if slot.alg_newton[j] >= 0:
                z0[reg.n_x + slot.alg_newton[j]] = y0[j]
            else:
                system.frozen[slot.alg_frozen[j]] = y0[j]
    ye = np.column_stack([sol.v_mag, sol.theta]).ravel()
    z0[reg.ye_offset:] = ye

    res = np.max(np.abs(system.residual(z0, None)))
    if res > 1e-8:
        raise InitializationError(
            f"assembled equilibrium residual {res:.2e} exceeds 1e-8")
    return system, z0, sol


# ---------------------------------------------------------------------------
# event application


def apply_event(system, event, z):
    """Mutate the system per one disturbance; Y is rebuilt as needed.

    The caller re-solves the algebraic subsystem afterwards (states held
    fixed), so trajectories stay continuous in x across the instant.
    """
    grid = system.grid
    kind = event.kind
    if kind in ("line_trip", "line_reconnect"):
        br = grid.branch_by_id(event.target)
        want = "in_service" if kind == "line_trip" else "tripped"
        if br.status != want:
            raise EventError(
                f"{kind} on branch {br.id}: status is {br.status!r}")
        br.status = "tripped" if kind == "line_trip" else "in_service"
        system.refresh_ybus()
    elif kind == "bus_fault_apply":
        i = grid.bus_index(event.target)
        for sh in grid.shunts:
            if sh.tag == "fault" and sh.bus == event.target:
                raise EventError(f"bus {event.target} already faulted")
        rf = float(event.params.get("r_f", 0.0))
        xf = float(event.params.get("x_f", DEFAULT_FAULT_XF))
        y = 1.0 / complex(rf, xf)
        grid.shunts.append(ShuntElement(event.target, g=y.real, b=y.imag,
                                        tag="fault"))
        system.refresh_ybus()
    elif kind == "bus_fault_clear":
        hits = [sh for sh in grid.shunts
                if sh.tag == "fault" and sh.bus == event.target]
        if not hits:
            raise EventError(f"no fault to clear at bus {event.target}")
        for sh in hits:
            grid.shunts.remove(sh)
        system.refresh_ybus()
    elif kind == "generator_trip":
        if not system.active.get(event.target, False):
            raise EventError(f"device {event.target} is not active")
        if system.n_active_sources() <= 1:
            raise EventError(
                f"tripping {event.target} would leave no active source")
        system.deactivate_device(event.target, z)
    else:
        raise EventError(f"unknown event kind {kind!r}")


def _event_schedule(events, h, t_end):
    """Map events onto step indices; misaligned times are rejected."""
    sched = {}
    for ev in events:
        steps = ev.t / h
        idx = int(round(steps))
        if abs(steps - idx) > 1e-9 * max(1.0, abs(steps)) or idx < 1:
            raise CaseValidationError(
                f"event at t={ev.t} does not coincide with the step grid "
                f"h={h} (rejected, not snapped)")
        if ev.t >= t_end:
            raise CaseValidationError(f"event at t={ev.t} is beyond t_end")
        sched.setdefault(idx, []).append(
            lambda system, z, _ev=ev: apply_event(system, _ev, z))
    return sched


# ---------------------------------------------------------------------------
# end-to-end execution


def run_scenario(scenario, base_config=None):
    """Execute one scenario: parse, initialize, simulate, report."""
    grid, devices, dispatch = parse_case(scenario.case)
    config = scenario.config(base_config)
    system, z0, _ = initialize(grid, devices, dispatch, scenario.formulation)
    sched = _event_schedule(scenario.events, config.h, scenario.t_end)
    times, samples, stats, wall = run_simulation(system, z0, config,
                                                 scenario.t_end, sched)
    reg = system.registry
    traj = Trajectory(times, reg.full_names(), samples, reg.state_mask_full())
    report = RunReport(formulation=scenario.formulation.label, h=config.h,
                       steps=stats, wall_time_s=wall,
                       trajectory_digest=traj.digest())
    return traj, report
