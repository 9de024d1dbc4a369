"""Scenario files: parsing, validation, sampling helpers and serialization.

A scenario is a JSON document (schema shipped in ``scenarios/schema.json``).
Parsing runs the JSON schema first, then the semantic checks the schema
cannot express (schedule coverage, mode requirements, array sizes).  Every
failure raises :class:`ScenarioError` naming the offending key.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .contact import ContactCandidate
from .errors import ScenarioError
from .kinematics import ArmModel, JointState, RobotModel
from .preview import PreviewParams
from .wholebody import DEFAULT_DELTA_THRESHOLD, SUPPORT_MARGIN, Stage2Weights
from .zmp import GRAVITY, CentroidalParams

MODES = ("known_force", "unknown_force")
DEFAULT_REACH_DURATION = 0.4
TIME_TOL = 1e-9


@lru_cache(maxsize=1)
def load_schema() -> dict:
    text = resources.files("wholebody_mpc").joinpath("scenarios/schema.json").read_text()
    return json.loads(text)


def corpus_names() -> list[str]:
    folder = resources.files("wholebody_mpc").joinpath("scenarios")
    return sorted(p.name[:-5] for p in folder.iterdir()
                  if p.name.endswith(".json") and p.name != "schema.json")


def corpus_path(name: str) -> Path:
    """Path of a shipped scenario; ``name`` may omit the ``.json`` suffix."""
    stem = name[:-5] if name.endswith(".json") else name
    if stem not in corpus_names():
        raise FileNotFoundError(f"no shipped scenario named {name!r}")
    return Path(str(resources.files("wholebody_mpc").joinpath(f"scenarios/{stem}.json")))


@dataclass(frozen=True)
class TimeSeries:
    """Rows ``[t, v1, v2, ...]``; linear interpolation, held past both ends."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.column_stack([np.interp(t, self.times, self.values[:, k])
                               for k in range(self.values.shape[1])])
        return out

    def at(self, t: float) -> np.ndarray:
        return self(t)[0]

    def rows(self) -> list:
        return np.column_stack([self.times, self.values]).tolist()


@dataclass(frozen=True)
class SupportPhase:
    start: float
    end: float
    x: tuple
    y: tuple


@dataclass(frozen=True)
class ExternalLoad:
    """A carried object: weight applied at ``position(t)`` while attached."""

    mass: float
    attach_time: float
    position: TimeSeries
    release_time: float | None = None

    def attached(self, t: float) -> bool:
        if self.mass == 0 or t < self.attach_time - TIME_TOL:
            return False
        return self.release_time is None or t < self.release_time - TIME_TOL


@dataclass(frozen=True)
class Disturbance:
    time: float
    delta_velocity: np.ndarray | None = None
    sigma: float | None = None


@dataclass(frozen=True)
class HorizonSettings:
    preview: PreviewParams
    delta_threshold: float = DEFAULT_DELTA_THRESHOLD
    reach_duration: float = DEFAULT_REACH_DURATION
    weights: Stage2Weights = field(default_factory=Stage2Weights)


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    robot: RobotModel
    initial_com: np.ndarray
    initial_com_velocity: np.ndarray
    initial_arm_angles: np.ndarray
    horizon: HorizonSettings
    mode: str
    vertical_reference: TimeSeries
    hand_reference: dict
    support_schedule: tuple
    contact_candidates: tuple
    duration: float
    external_load: ExternalLoad | None = None
    disturbances: tuple = ()
    document: dict = field(default=None, repr=False)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return json.dumps(serialize_scenario(self), sort_keys=True) == \
            json.dumps(serialize_scenario(other), sort_keys=True)

    @property
    def params(self) -> CentroidalParams:
        return CentroidalParams(self.robot.total_mass, self.robot.gravity)

    def initial_joint_state(self) -> JointState:
        return JointState(self.initial_com - self.robot.torso_offset, self.initial_arm_angles)

    def support_phase(self, t: float) -> SupportPhase:
        for phase in self.support_schedule:
            if phase.start - TIME_TOL <= t < phase.end - TIME_TOL:
                return phase
        last = self.support_schedule[-1]
        if t <= last.end + TIME_TOL:
            return last
        raise ValueError(f"support schedule does not cover t = {t}")

    def support_bounds(self, times, margin: float = SUPPORT_MARGIN) -> tuple[np.ndarray, np.ndarray]:
        """ZMP rectangles at ``times`` shrunk by ``margin`` on every side, each (len, 2)."""
        lo, up = [], []
        for t in np.atleast_1d(times):
            ph = self.support_phase(float(t))
            lo.append([ph.x[0] + margin, ph.y[0] + margin])
            up.append([ph.x[1] - margin, ph.y[1] - margin])
        return np.array(lo), np.array(up)

    def candidate(self, cid: str) -> ContactCandidate:
        for c in self.contact_candidates:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def with_horizon(self, steps: int | None = None, dt: float | None = None) -> "Scenario":
        """Copy with the preview horizon overridden (revalidated)."""
        doc = copy.deepcopy(self.document)
        if steps is not None:
            doc["horizon"]["steps"] = int(steps)
        if dt is not None:
            doc["horizon"]["dt"] = float(dt)
        return parse_document(doc)


def _key(path) -> str:
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def _series(doc_rows, key: str, width: int) -> TimeSeries:
    rows = doc_rows
    for i, row in enumerate(rows):
        if len(row) != width + 1:
            raise ScenarioError(f"{key}[{i}]", f"expected {width + 1} numbers [t, ...], got {len(row)}")
    arr = np.array(rows, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(key, "values must be finite")
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise ScenarioError(key, "sample times must be strictly increasing")
    return TimeSeries(arr[:, 0], arr[:, 1:])


def _wrap(key: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, KeyError) as err:
        raise ScenarioError(key, str(err)) from None


def _parse_robot(doc: dict):
    arms = []
    for i, arm in enumerate(doc["arms"]):
        arms.append(_wrap(f"robot.arms[{i}]", ArmModel, arm["name"], arm["mount"], arm["axes"],
                          arm["link_lengths"], arm.get("link_direction")))
    n = sum(a.dof for a in arms)
    for key in ("joint_lower", "joint_upper"):
        if len(doc[key]) not in (1, n):
            raise ScenarioError(f"robot.{key}", f"expected {n} entries (one per arm joint)")
    robot = _wrap("robot", RobotModel,
                  total_mass=doc["mass"], arms=tuple(arms),
                  joint_lower=doc["joint_lower"], joint_upper=doc["joint_upper"],
                  joint_vel_limit=doc["joint_vel_limit"], reach_xy=doc["reach_xy"],
                  reach_z=doc["reach_z"], com_floor=doc["com_floor"], com_ceiling=doc["com_ceiling"],
                  torso_offset=doc.get("torso_offset"), gravity=doc.get("gravity", GRAVITY))
    init = doc["initial"]
    q = np.array(init["arm_angles"], dtype=float)
    if q.shape != (n,):
        raise ScenarioError("robot.initial.arm_angles", f"expected {n} angles, got {q.shape[0]}")
    if np.any(q < robot.joint_lower) or np.any(q > robot.joint_upper):
        raise ScenarioError("robot.initial.arm_angles", "initial angles violate the joint limits")
    com = np.array(init["com"], dtype=float)
    if not robot.com_floor <= com[2] <= robot.com_ceiling:
        raise ScenarioError("robot.initial.com", "initial CoM height outside [com_floor, com_ceiling]")
    vel = np.array(init.get("com_velocity", [0.0, 0.0, 0.0]), dtype=float)
    return robot, com, vel, q


def parse_document(doc: dict) -> Scenario:
    """Validate a scenario already loaded from JSON."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ScenarioError(_key(err.absolute_path), err.message)
    doc = copy.deepcopy(doc)

    robot, com, vel, q = _parse_robot(doc["robot"])

    hz = doc["horizon"]
    weights = _wrap("horizon.weights", Stage2Weights, **hz.get("weights", {}))
    horizon = HorizonSettings(
        PreviewParams(hz["steps"], hz["dt"]),
        hz.get("delta_threshold", DEFAULT_DELTA_THRESHOLD),
        hz.get("reach_duration", DEFAULT_REACH_DURATION),
        weights,
    )
    if horizon.reach_duration < horizon.preview.dt - TIME_TOL:
        raise ScenarioError("horizon.reach_duration", "must be at least one control period")

    duration = float(doc["duration"])
    mode = doc["mode"]
    vertical = _series(doc["vertical_reference"], "vertical_reference", 1)
    hands = {name: _series(rows, f"hand_reference.{name}", 3)
             for name, rows in doc["hand_reference"].items()}

    phases = []
    for i, ph in enumerate(doc["support_schedule"]):
        key = f"support_schedule[{i}]"
        if not ph["end"] > ph["start"]:
            raise ScenarioError(key, "end must follow start")
        for axis in ("x", "y"):
            lo, hi = ph[axis]
            if not hi - lo > 2 * SUPPORT_MARGIN:
                raise ScenarioError(f"{key}.{axis}", f"support interval narrower than twice the {SUPPORT_MARGIN} m margin")
        phases.append(SupportPhase(float(ph["start"]), float(ph["end"]), tuple(ph["x"]), tuple(ph["y"])))
    if phases[0].start > TIME_TOL:
        raise ScenarioError("support_schedule[0].start", "schedule must start at t = 0")
    for i in range(1, len(phases)):
        if phases[i].start < phases[i - 1].start:
            raise ScenarioError(f"support_schedule[{i}]", "phases must be in time order")
        if phases[i].start > phases[i - 1].end + TIME_TOL:
            raise ScenarioError(f"support_schedule[{i}]", f"gap after t = {phases[i - 1].end}")
    needed = duration + horizon.preview.steps * horizon.preview.dt
    if phases[-1].end < needed - TIME_TOL:
        raise ScenarioError("support_schedule", f"schedule must cover [0, {needed:g}] (duration + N*T)")

    candidates = []
    seen = set()
    for i, c in enumerate(doc["contact_candidates"]):
        key = f"contact_candidates[{i}]"
        if c["id"] in seen:
            raise ScenarioError(f"{key}.id", f"duplicate candidate id {c['id']!r}")
        seen.add(c["id"])
        candidates.append(_wrap(key, ContactCandidate, c["id"], c["point"], c["normal"], c["mu"],
                                c.get("weight", 0.0), c.get("reachable", True)))

    load = None
    if "external_load" in doc:
        ld = doc["external_load"]
        load = ExternalLoad(float(ld["mass"]), float(ld["attach_time"]),
                            _series(ld["position"], "external_load.position", 3),
                            ld.get("release_time"))
        if np.any(load.position.values[:, 2] <= 0):
            raise ScenarioError("external_load.position", "load must stay above the feet plane")
    if mode == "known_force" and load is None:
        raise ScenarioError("external_load", "known_force mode requires an external_load entry")
    if mode == "unknown_force" and not any(c.reachable for c in candidates):
        raise ScenarioError("contact_candidates", "unknown_force mode requires at least one reachable candidate")

    disturbances = []
    for i, d in enumerate(doc.get("disturbances", [])):
        if ("delta_velocity" in d) == ("sigma" in d):
            raise ScenarioError(f"disturbances[{i}]", "give exactly one of delta_velocity or sigma")
        dv = np.array(d["delta_velocity"], dtype=float) if "delta_velocity" in d else None
        disturbances.append(Disturbance(float(d["time"]), dv, d.get("sigma")))

    return Scenario(
        name=doc["name"], robot=robot, initial_com=com, initial_com_velocity=vel,
        initial_arm_angles=q, horizon=horizon, mode=mode, vertical_reference=vertical,
        hand_reference=hands, support_schedule=tuple(phases),
        contact_candidates=tuple(candidates), duration=duration, external_load=load,
        disturbances=tuple(disturbances), document=doc,
    )


def parse_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ScenarioError("<root>", f"{path}: invalid JSON ({err})") from None
    return parse_document(doc)


def serialize_scenario(scenario: Scenario) -> dict:
    """JSON-ready document built from the parsed fields."""
    r = scenario.robot
    doc = {
        "name": scenario.name,
        "robot": {
            "mass": r.total_mass,
            "gravity": r.gravity,
            "torso_offset": r.torso_offset.tolist(),
            "arms": [{"name": a.name, "mount": a.mount.tolist(), "axes": a.axes.tolist(),
                      "link_lengths": a.link_lengths.tolist(),
                      "link_direction": a.link_direction.tolist()} for a in r.arms],
            "joint_lower": r.joint_lower.tolist(),
            "joint_upper": r.joint_upper.tolist(),
            "joint_vel_limit": float(r.joint_vel_limit[0]) if np.all(r.joint_vel_limit == r.joint_vel_limit[0])
            else r.joint_vel_limit.tolist(),
            "reach_xy": r.reach_xy, "reach_z": r.reach_z,
            "com_floor": r.com_floor, "com_ceiling": r.com_ceiling,
            "initial": {"com": scenario.initial_com.tolist(),
                        "com_velocity": scenario.initial_com_velocity.tolist(),
                        "arm_angles": scenario.initial_arm_angles.tolist()},
        },
        "horizon": {
            "steps": scenario.horizon.preview.steps,
            "dt": scenario.horizon.preview.dt,
            "delta_threshold": scenario.horizon.delta_threshold,
            "reach_duration": scenario.horizon.reach_duration,
            "weights": {k: getattr(scenario.horizon.weights, k)
                        for k in ("jerk", "delta", "qdot", "com_track", "hand_track")},
        },
        "mode": scenario.mode,
        "vertical_reference": scenario.vertical_reference.rows(),
        "hand_reference": {k: v.rows() for k, v in scenario.hand_reference.items()},
        "support_schedule": [{"start": p.start, "end": p.end, "x": list(p.x), "y": list(p.y)}
                             for p in scenario.support_schedule],
        "contact_candidates": [{"id": c.id, "point": c.point.tolist(), "normal": c.normal.tolist(),
                                "mu": c.mu, "weight": c.weight, "reachable": c.reachable}
                               for c in scenario.contact_candidates],
        "duration": scenario.duration,
    }
    if scenario.external_load is not None:
        ld = scenario.external_load
        doc["external_load"] = {"mass": ld.mass, "attach_time": ld.attach_time,
                                "position": ld.position.rows()}
        if ld.release_time is not None:
            doc["external_load"]["release_time"] = ld.release_time
    if scenario.disturbances:
        doc["disturbances"] = [
            {"time": d.time, "delta_velocity": d.delta_velocity.tolist()} if d.delta_velocity is not None
            else {"time": d.time, "sigma": d.sigma}
            for d in scenario.disturbances
        ]
    return doc


def write_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(serialize_scenario(scenario), indent=2) + "\n")
