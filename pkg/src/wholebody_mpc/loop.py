"""Receding-horizon loop: vertical plan, whole-body plan, contact planning.

Each cycle plans over ``N`` steps from the current world state, applies the
first jerk and joint rates, and propagates the world kinematically (the CoM
triple integrator is authoritative; the torso follows it rigidly and the
arms integrate their joint rates).

Contact timing in the unknown-force mode:

* a contact is requested when the slack needed beyond the shift of vertical
  acceleration exceeds the threshold somewhere in the horizon (or, below
  the threshold, when the plan without any slack is infeasible);
* the free hand then travels to the selected candidate, and the plan is
  re-solved with the slack pinned to zero contact force until the hand
  arrives (``engage_time``);
* while engaged the force is re-planned every cycle for that candidate;
* the contact is released as soon as the contact-free plan is feasible
  and no step of the horizon asks for slack.
"""

from __future__ import annotations

import logging
import math
import time as _time
from dataclasses import dataclass, field, replace

import numpy as np

from .contact import (
    ContactDecision,
    contact_demand,
    friction_check,
    solve_contact_selection,
)
from .errors import (
    ContactInfeasibleError,
    CycleError,
    InfeasibleTaskError,
    ModelError,
    PlanningError,
)
from .kinematics import JointState, forward_kinematics
from .preview import AxisState, PreviewParams, build_preview_matrices, propagate_axis
from .qp import DEFAULT_MAX_ITER, DEFAULT_TOL
from .scenario import Scenario
from .vertical import VerticalTask, solve_stage1
from .wholebody import (
    DEFAULT_DELTA_THRESHOLD,
    KinematicRefs,
    Stage2Weights,
    SupportSchedule,
    build_stage2_known,
    build_stage2_unknown,
    detect_contact_need,
    solve_stage2,
)
from .zmp import ExternalContact, delta_zmp, zmp_full, zmp_lipm

log = logging.getLogger(__name__)

TIME_EPS = 1e-9
LOAD_ID = "load"

# Verification tolerances, one per report category.
TOLERANCES = {
    "zmp_band": 1e-6,
    "friction": 1e-9,
    "decomposition": 1e-8,
    "vertical_band": 1e-6,
    "horizontal_band": 1e-6,
    "joint_limits": 1e-9,
}


@dataclass(frozen=True)
class CycleConfig:
    horizon: PreviewParams
    control_dt: float | None = None
    delta_threshold: float = DEFAULT_DELTA_THRESHOLD
    reach_duration: float = 0.4
    weights: Stage2Weights = field(default_factory=Stage2Weights)
    centering: bool = False
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        dt = self.horizon.dt if self.control_dt is None else float(self.control_dt)
        if not dt > 0:
            raise ValueError("control_dt must be positive")
        # The first planned step is what gets executed, so the replan period
        # has to coincide with the sampling period of the horizon.
        if abs(dt - self.horizon.dt) > TIME_EPS:
            raise ValueError("control_dt must equal the horizon sampling period")
        if self.reach_duration < dt - TIME_EPS:
            raise ValueError("reach_duration must be at least one control period")
        if not self.delta_threshold > 0:
            raise ValueError("delta_threshold must be positive")
        object.__setattr__(self, "control_dt", dt)

    @classmethod
    def from_scenario(cls, scenario: Scenario, centering: bool = False) -> "CycleConfig":
        hz = scenario.horizon
        return cls(hz.preview, None, hz.delta_threshold, hz.reach_duration, hz.weights, centering)


@dataclass(frozen=True)
class ActiveContact:
    """A selected candidate and the free hand assigned to it."""

    candidate_id: str
    arm: str
    select_time: float
    engage_time: float
    start_hand: np.ndarray
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def engaged(self, t: float) -> bool:
        return t >= self.engage_time - TIME_EPS


@dataclass(frozen=True)
class WorldState:
    com: tuple
    joint_state: JointState
    time: float = 0.0
    active_contact: ActiveContact | None = None

    def com_arrays(self):
        pos = np.array([a.position for a in self.com])
        vel = np.array([a.velocity for a in self.com])
        acc = np.array([a.acceleration for a in self.com])
        return pos, vel, acc

    @classmethod
    def initial(cls, scenario: Scenario) -> "WorldState":
        axes = tuple(AxisState(float(p), float(v), 0.0)
                     for p, v in zip(scenario.initial_com, scenario.initial_com_velocity))
        return cls(axes, scenario.initial_joint_state(), 0.0, None)


@dataclass(frozen=True)
class ContactEvent:
    time: float
    kind: str  # "select", "engage", "release", "cancel"
    contact_id: str
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CycleRecord:
    """State reached at ``time`` after applying the cycle's first inputs."""

    time: float
    com: np.ndarray
    com_vel: np.ndarray
    com_acc: np.ndarray
    jerk: np.ndarray
    zmp: np.ndarray
    zmp_lower: np.ndarray
    zmp_upper: np.ndarray
    delta_z: np.ndarray
    force: np.ndarray
    contact_id: str
    arm_angles: np.ndarray
    qdot: np.ndarray = None
    events: tuple = ()
    decision: ContactDecision | None = None
    need_index: int | None = None
    planned_heights: np.ndarray = None
    height_band: tuple = None
    wall_time: float = 0.0


@dataclass
class SimTrace:
    scenario_name: str
    n_joints: int
    records: list = field(default_factory=list)

    def append(self, record: CycleRecord) -> None:
        if self.records and record.time <= self.records[-1].time:
            raise ValueError("trace times must increase")
        self.records.append(record)

    @property
    def events(self) -> list:
        return [e for r in self.records for e in r.events]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class CycleInputs:
    jerk: np.ndarray
    qdot: np.ndarray
    force: np.ndarray
    contact_id: str


def _min_jerk(start, goal, s: float) -> np.ndarray:
    s = min(max(s, 0.0), 1.0)
    blend = 10 * s ** 3 - 15 * s ** 4 + 6 * s ** 5
    return start + blend * (goal - start)


def _free_arm(scenario: Scenario, torso, point) -> str:
    robot = scenario.robot
    names = [a.name for a in robot.arms if a.name not in scenario.hand_reference] or robot.arm_names
    dists = [np.linalg.norm(torso + robot.arms[robot.arm_index(n)].mount - point) for n in names]
    return names[int(np.argmin(dists))]


def _load_contact(scenario: Scenario, t: float) -> tuple[ExternalContact, str]:
    load = scenario.external_load
    if load is None or not load.attached(t):
        return ExternalContact.none(), ""
    force = np.array([0.0, 0.0, -load.mass * scenario.robot.gravity])
    return ExternalContact(force, load.position.at(t)), LOAD_ID


def _apply_disturbances(world: WorldState, scenario: Scenario, dt: float, rng) -> WorldState:
    com = list(world.com)
    hit = False
    for d in scenario.disturbances:
        if world.time - TIME_EPS <= d.time < world.time + dt - TIME_EPS:
            if d.delta_velocity is not None:
                dv = d.delta_velocity
            else:
                dv = np.zeros(3)
                dv[:2] = rng.normal(0.0, d.sigma, 2)
            for k in range(3):
                a = com[k]
                com[k] = AxisState(a.position, a.velocity + float(dv[k]), a.acceleration)
            hit = True
    return replace(world, com=tuple(com)) if hit else world


class _Cycle:
    """Shared per-cycle data so the several Stage-2 variants stay consistent."""

    def __init__(self, world, scenario, config):
        self.world, self.scenario, self.config = world, scenario, config
        self.robot = scenario.robot
        self.params = scenario.params
        self.matrices = build_preview_matrices(config.horizon)
        N, T = config.horizon.steps, config.horizon.dt
        self.t = world.time
        self.step_times = self.t + T * np.arange(1, N + 1)
        self.hands, _ = forward_kinematics(self.robot, world.joint_state)

    def stage1(self):
        vref = self.scenario.vertical_reference(self.step_times)[:, 0]
        task = VerticalTask(vref, self.robot.reach_z, self.robot.com_floor, self.robot.com_ceiling)
        try:
            self.plan = solve_stage1(task, self.world.com[2], self.matrices, self.config.centering,
                                     self.config.tol, self.config.max_iter)
        except InfeasibleTaskError as err:
            raise CycleError("stage1", str(err), diagnostics={"step": err.step}) from None
        self.band = task.band()
        lo, up = self.scenario.support_bounds(self.step_times)
        self.schedule = SupportSchedule(lo, up)

    def kinematic_refs(self, contact: ActiveContact | None):
        dt = self.config.control_dt
        anchors = {name: series(self.step_times)[:, :2]
                   for name, series in self.scenario.hand_reference.items()}
        velocity = {}
        for name, series in self.scenario.hand_reference.items():
            if name in self.robot.arm_names:
                hand = self.hands[self.robot.arm_index(name)]
                velocity[name] = (series.at(self.t + dt) - hand) / dt
        if contact is not None:
            goal = self.scenario.candidate(contact.candidate_id).point
            span = contact.engage_time - contact.select_time
            s = (self.t + dt - contact.select_time) / span if span > 0 else 1.0
            target = _min_jerk(contact.start_hand, goal, s)
            hand = self.hands[self.robot.arm_index(contact.arm)]
            velocity[contact.arm] = (target - hand) / dt
        return KinematicRefs(self.robot.reach_xy, anchors, velocity)

    def known(self):
        contacts, ids = zip(*(_load_contact(self.scenario, float(t)) for t in self.step_times))
        try:
            qp = build_stage2_known(self.plan, self.world.com[:2], contacts, self.schedule,
                                    self.config.weights, self.kinematic_refs(None), self.robot,
                                    self.world.joint_state, self.params, self.matrices)
        except ModelError as err:
            raise CycleError("stage2", str(err)) from None
        sol = solve_stage2(qp, self.config.tol, self.config.max_iter)
        if not sol.ok:
            raise CycleError("stage2", f"whole-body QP {sol.status} with the known load")
        return sol, contacts[0], ids[0]

    def unknown(self, contact, contact_free=None):
        qp = build_stage2_unknown(self.plan, self.world.com[:2], self.schedule, self.config.weights,
                                  self.kinematic_refs(contact), self.robot, self.world.joint_state,
                                  self.params, self.matrices, contact_free)
        return solve_stage2(qp, self.config.tol, self.config.max_iter)

    def horizon_states(self, sol):
        coms = np.column_stack([sol.com_xy, self.plan.heights])
        accs = np.column_stack([sol.com_acc_xy, self.plan.accelerations])
        return coms, accs

    def need(self, sol):
        coms, accs = self.horizon_states(sol)
        demand = contact_demand(self.params, sol.delta_z, coms, accs)
        return detect_contact_need(demand, self.config.delta_threshold), demand

    def stage3(self, sol, candidates):
        coms, accs = self.horizon_states(sol)
        try:
            return solve_contact_selection(candidates, sol.delta_z, coms, accs, self.params,
                                           self.config.tol, self.config.max_iter)
        except ContactInfeasibleError as err:
            raise CycleError("stage3", str(err)) from None


def _plan_unknown(cyc: _Cycle, world: WorldState):
    """Returns (solution, decision, active contact after this cycle, events, need index)."""
    cfg, sc = cyc.config, cyc.scenario
    N, T = cfg.horizon.steps, cfg.horizon.dt
    t_next = cyc.t + cfg.control_dt
    contact = world.active_contact
    events = []
    no_slack = np.ones(N, dtype=bool)

    if contact is None:
        probe = cyc.unknown(None)
        if not probe.ok:
            raise CycleError("stage2", f"whole-body QP {probe.status}")
        idx, demand = cyc.need(probe)
        if idx is None:
            free = cyc.unknown(None, no_slack)
            if free.ok:
                return free, None, None, events, None
            # Infeasible without contact yet below the threshold: act on the first nonzero step.
            hits = np.flatnonzero(np.max(np.abs(demand), axis=1) > 0)
            idx = int(hits[0]) if hits.size else N - 1
        decision = cyc.stage3(probe, [c for c in sc.contact_candidates if c.reachable])
        cand = decision.candidate
        arm = _free_arm(sc, world.joint_state.torso_position, cand.point)
        engage = cyc.t + math.ceil(cfg.reach_duration / T - TIME_EPS) * T
        contact = ActiveContact(cand.id, arm, cyc.t, engage,
                                cyc.hands[cyc.robot.arm_index(arm)].copy())
        events.append(ContactEvent(t_next, "select", cand.id,
                                   {"need_index": idx, "engage_time": engage, "arm": arm,
                                    "evaluations": decision.evaluations}))
        need_index = idx
    else:
        need_index = None

    mask = cyc.step_times < contact.engage_time - TIME_EPS
    sol = cyc.unknown(contact, mask if mask.any() else None)
    if not sol.ok:
        raise CycleError("stage2", f"no plan holds balance until contact {contact.candidate_id} "
                                   f"engages at t = {contact.engage_time:.3f}")
    idx, _ = cyc.need(sol)
    if idx is None and not events:
        free = cyc.unknown(None, no_slack)
        if free.ok:
            kind = "release" if contact.engaged(cyc.t) else "cancel"
            events.append(ContactEvent(t_next, kind, contact.candidate_id))
            return free, None, None, events, None
    decision = cyc.stage3(sol, [sc.candidate(contact.candidate_id)])
    if contact.engaged(t_next) and not contact.engaged(cyc.t):
        events.append(ContactEvent(t_next, "engage", contact.candidate_id))
    return sol, decision, contact, events, need_index if need_index is not None else idx


def contact_free_plan(world: WorldState, scenario: Scenario, config: CycleConfig):
    """Whole-body plan from ``world`` with the slack removed: the exact ZMP of
    the robot with no external force must stay in the support region."""
    cyc = _Cycle(world, scenario, config)
    cyc.stage1()
    contacts = [ExternalContact.none()] * config.horizon.steps
    qp = build_stage2_known(cyc.plan, world.com[:2], contacts, cyc.schedule, config.weights,
                            cyc.kinematic_refs(None), cyc.robot, world.joint_state,
                            cyc.params, cyc.matrices)
    return solve_stage2(qp, config.tol, config.max_iter)


def step_cycle(world: WorldState, scenario: Scenario, config: CycleConfig, rng=None):
    """Run one control cycle; returns ``(inputs, next_world, record)``."""
    start = _time.perf_counter()
    rng = rng if rng is not None else np.random.default_rng(0)
    world = _apply_disturbances(world, scenario, config.control_dt, rng)
    cyc = _Cycle(world, scenario, config)
    cyc.stage1()
    dt = config.control_dt
    t_next = world.time + dt

    decision = None
    events = ()
    need_index = None
    contact = None
    if scenario.mode == "known_force":
        sol, ext, contact_id = cyc.known()
        force, point = ext.force, ext.point
    else:
        sol, decision, contact, events, need_index = _plan_unknown(cyc, world)
        events = tuple(events)
        force = np.zeros(3)
        point = np.zeros(3)
        contact_id = ""
        if contact is not None:
            cand = scenario.candidate(contact.candidate_id)
            point = cand.point
            if contact.engaged(t_next):
                contact_id = cand.id
                force = decision.forces[0].copy()
            contact = replace(contact, force=force)

    jerk = np.array([sol.jerks_xy[0, 0], sol.jerks_xy[0, 1], cyc.plan.jerks[0]])
    com = tuple(propagate_axis(axis, float(j), dt) for axis, j in zip(world.com, jerk))
    qdot = sol.qdot.copy()
    robot = scenario.robot
    q = np.clip(world.joint_state.arm_angles + qdot[3:] * dt, robot.joint_lower, robot.joint_upper)
    pos = np.array([a.position for a in com])
    joint_state = JointState(pos - robot.torso_offset, q, qdot[3:])
    new_world = WorldState(com, joint_state, t_next, contact)

    pos, vel, acc = new_world.com_arrays()
    ext = ExternalContact(force, point)
    try:
        zmp = zmp_full(scenario.params, pos, acc, ext)
    except ModelError as err:
        raise CycleError("propagate", str(err)) from None
    if scenario.mode == "known_force":
        dz = delta_zmp(scenario.params, pos, acc, ext)
    else:
        dz = sol.delta_z[0].copy()

    record = CycleRecord(
        time=t_next, com=pos, com_vel=vel, com_acc=acc, jerk=jerk, zmp=zmp,
        zmp_lower=cyc.schedule.zmp_lower[0].copy(), zmp_upper=cyc.schedule.zmp_upper[0].copy(),
        delta_z=dz, force=np.asarray(force, dtype=float).copy(), contact_id=contact_id,
        arm_angles=q, qdot=qdot, events=events, decision=decision, need_index=need_index,
        planned_heights=cyc.plan.heights.copy(), height_band=(cyc.band[0].copy(), cyc.band[1].copy()),
        wall_time=_time.perf_counter() - start,
    )
    for e in events:
        log.info("t=%.3f %s %s %s", e.time, e.kind, e.contact_id, e.detail or "")
    inputs = CycleInputs(jerk, qdot, record.force, contact_id)
    return inputs, new_world, record


def run_scenario(scenario: Scenario, config: CycleConfig | None = None, seed: int = 0) -> SimTrace:
    """Closed-loop run until ``scenario.duration``.

    A failing cycle raises :class:`CycleError` with ``cycle`` set and the
    partial trace under ``diagnostics["trace"]``.
    """
    config = config or CycleConfig.from_scenario(scenario)
    rng = np.random.default_rng(seed)
    world = WorldState.initial(scenario)
    trace = SimTrace(scenario.name, scenario.robot.n_joints)
    n_cycles = int(round(scenario.duration / config.control_dt))
    for k in range(n_cycles):
        try:
            _, world, record = step_cycle(world, scenario, config, rng)
        except CycleError as err:
            diag = dict(err.diagnostics, trace=trace, time=world.time)
            raise CycleError(err.stage, str(err).split("] ", 1)[-1], cycle=k, diagnostics=diag) from None
        except PlanningError as err:
            raise CycleError("cycle", str(err), cycle=k, diagnostics={"trace": trace, "time": world.time}) from None
        trace.append(record)
    return trace


@dataclass
class VerificationReport:
    maxima: dict
    tolerances: dict
    cycles: int
    engagements: int
    releases: int
    selections: int

    @property
    def violations(self) -> dict:
        return {k: v for k, v in self.maxima.items() if not v <= self.tolerances[k]}

    @property
    def passed(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "cycles": self.cycles,
            "max_violation": self.maxima,
            "tolerance": self.tolerances,
            "violations": self.violations,
            "contact_selections": self.selections,
            "contact_engagements": self.engagements,
            "contact_releases": self.releases,
        }


def contact_intervals(trace: SimTrace) -> list[tuple[str, float, float | None]]:
    """(id, first engaged record time, first record time after release) per contact episode."""
    out = []
    current, since = "", None
    for rec in trace.records:
        cid = rec.contact_id if rec.contact_id != LOAD_ID else ""
        if cid != current:
            if current:
                out.append((current, since, rec.time))
            current, since = cid, rec.time
    if current:
        out.append((current, since, None))
    return out


def verify_trace(trace: SimTrace, scenario: Scenario) -> VerificationReport:
    """Re-evaluate the logged states against the balance and kinematic constraints."""
    params = scenario.params
    robot = scenario.robot
    worst = {k: 0.0 for k in TOLERANCES}

    def bump(key, value):
        worst[key] = max(worst[key], float(value))

    for rec in trace.records:
        point = np.zeros(3)
        if rec.contact_id == LOAD_ID:
            point = scenario.external_load.position.at(rec.time)
        elif rec.contact_id:
            cand = scenario.candidate(rec.contact_id)
            point = cand.point
            bump("friction", friction_check(cand.pyramid, rec.force)[1])
        elif np.any(rec.force != 0):
            bump("friction", np.inf)
        ext = ExternalContact(rec.force, point)
        try:
            zmp = zmp_full(params, rec.com, rec.com_acc, ext)
        except ModelError:
            bump("zmp_band", np.inf)
            continue
        bump("zmp_band", np.max(np.concatenate([rec.zmp_lower - zmp, zmp - rec.zmp_upper, [0.0]])))
        lipm = zmp_lipm(rec.com[:2], rec.com_acc[:2], rec.com[2], params.gravity)
        bump("decomposition", np.max(np.abs(lipm + rec.delta_z - zmp)))

        r = scenario.vertical_reference.at(rec.time)[0]
        lo = max(r - robot.reach_z, robot.com_floor)
        hi = min(r + robot.reach_z, robot.com_ceiling)
        bump("vertical_band", max(lo - rec.com[2], rec.com[2] - hi, 0.0))
        for series in scenario.hand_reference.values():
            gap = np.abs(series.at(rec.time)[:2] - rec.com[:2]) - robot.reach_xy
            bump("horizontal_band", max(gap.max(), 0.0))
        bump("joint_limits", max(np.max(robot.joint_lower - rec.arm_angles),
                                 np.max(rec.arm_angles - robot.joint_upper), 0.0))

    episodes = contact_intervals(trace)
    events = trace.events
    selections = sum(e.kind == "select" for e in events) if events else len(episodes)
    return VerificationReport(
        maxima=worst, tolerances=dict(TOLERANCES), cycles=len(trace),
        engagements=len(episodes), releases=sum(end is not None for _, _, end in episodes),
        selections=selections,
    )
