"""Deterministic kinematic arena: a crane robot, two objects, sensors and rewards."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from cranelang import language as lang
from cranelang.env import geometry as geo
from cranelang.env.success import (
    ACTIONS, StepPredicates, SuccessEvent, apply_action_constraints, evaluate_success,
)

ARENA_HALF = 10.0          # 20 m x 20 m square centred on the origin
BODY_HALF = 1.0            # body is a 2 m cube
BODY_HEIGHT = 2.0
WHEEL_BASE = 2.0
WHEEL_MAX = 10.0           # m/s
YAW_RANGE = (-30.0, 30.0)  # degrees
PITCH_RANGE = (0.0, 90.0)
JOINT_VEL_MAX = 90.0       # deg/s for both joints
N_SUBSTEPS = 10
DT = 0.025                 # per substep
MAX_STEPS = 30

SHOULDER_HEIGHT = 1.0
ARM_LENGTH = 4.0
ARM_SPHERES = (1.35, 2.0, 2.65, 3.3)   # distances along the arm
ARM_SPHERE_RADIUS = 0.35
HAND_RADIUS = 0.5
CAMERA_OFFSET = (BODY_HALF, 0.0, 1.8)  # body frame: front face
FOV_DEG = 90.0
FAR_PLANE = 30.0
CONTACT_TOL = 1e-3
SPAWN_MARGIN = 1.0
MIN_SEPARATION = 4.0

N_TOUCH = 16
BACKGROUND = (0.0, 0.0, 0.0)
ROBOT_COLOR = (0.5, 0.5, 0.5)
COLOR_RGB = {
    "red": (1.0, 0.0, 0.0), "green": (0.0, 1.0, 0.0), "blue": (0.0, 0.0, 1.0),
    "cyan": (0.0, 1.0, 1.0), "magenta": (1.0, 0.0, 1.0), "yellow": (1.0, 1.0, 0.0),
}

_VEL_LIMITS = np.array([WHEEL_MAX, WHEEL_MAX, JOINT_VEL_MAX, JOINT_VEL_MAX])


class EnvError(RuntimeError):
    pass


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = float(a)
    if -np.pi < a <= np.pi:
        return a
    a = float(np.mod(a + np.pi, 2 * np.pi) - np.pi)
    return np.pi if a == -np.pi else a


@dataclass
class RobotState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(2))
    heading: float = 0.0
    wheel_vel_left: float = 0.0
    wheel_vel_right: float = 0.0
    yaw_angle: float = 0.0
    pitch_angle: float = 0.0
    yaw_vel: float = 0.0
    pitch_vel: float = 0.0

    @property
    def velocities(self) -> np.ndarray:
        return np.array([self.wheel_vel_left, self.wheel_vel_right, self.yaw_vel, self.pitch_vel])


@dataclass
class ObjectInstance:
    shape: str
    color: str
    position: np.ndarray

    @property
    def height(self) -> float:
        return geo.shape_height(self.shape)


@dataclass
class ObservationBundle:
    vision: np.ndarray          # (V, V, 4)
    touch: np.ndarray           # (16,)
    proprioception: np.ndarray  # (4,)
    command_voice: np.ndarray   # (3, 18)
    feedback_voice: np.ndarray  # (1, 18) silence or (3, 18)


@dataclass
class ArenaState:
    robot: RobotState
    objects: list[ObjectInstance]
    command: lang.Sentence
    step_index: int = 0
    streaks: np.ndarray = field(default_factory=lambda: np.zeros((2, len(ACTIONS)), dtype=int))
    touch: np.ndarray = field(default_factory=lambda: np.zeros(N_TOUCH))
    feedback: SuccessEvent | None = None
    done: bool = False
    seed: int = 0
    vision_size: int = 16

    def copy(self) -> "ArenaState":
        return copy.deepcopy(self)

    @property
    def target(self) -> ObjectInstance:
        return self.objects[0]


@dataclass
class StepResult:
    state: ArenaState
    observation: ObservationBundle
    reward: float
    done: bool
    events: list[SuccessEvent]
    predicates: StepPredicates


# robot body parts

def arm_direction(robot: RobotState) -> np.ndarray:
    """Unit arm vector: pitch 0 points straight up, 90 points forward."""
    p = np.radians(robot.pitch_angle)
    a = robot.heading + np.radians(robot.yaw_angle)
    return np.array([np.sin(p) * np.cos(a), np.sin(p) * np.sin(a), np.cos(p)])


def shoulder(robot: RobotState) -> np.ndarray:
    return np.array([robot.position[0], robot.position[1], SHOULDER_HEIGHT])


def hand_center(robot: RobotState) -> np.ndarray:
    return shoulder(robot) + ARM_LENGTH * arm_direction(robot)


def arm_sphere_centers(robot: RobotState) -> list[np.ndarray]:
    base, d = shoulder(robot), arm_direction(robot)
    return [base + s * d for s in ARM_SPHERES]


# reset

def reset(seed: int, command: lang.Sentence | str, scale="full", vision_size: int = 16):
    """New episode: robot and two objects (target + distinct distractor) at random positions."""
    state = spawn(seed, command, scale, vision_size)
    return state, observe(state)


def spawn(seed: int, command: lang.Sentence | str, scale="full", vision_size: int = 16) -> ArenaState:
    scale = lang.get_scale(scale)
    if isinstance(command, str):
        command = lang.Sentence.parse(command)
    scale.validate(command)
    rng = np.random.default_rng(seed)

    others = [(c, s) for c in scale.colors for s in scale.shapes
              if (c, s) != (command.adjective, command.noun)]
    if not others:
        raise EnvError(f"scale {scale.name!r} has no distractor candidates")
    dc, ds = others[int(rng.integers(len(others)))]

    lim = ARENA_HALF - SPAWN_MARGIN
    points: list[np.ndarray] = []
    while len(points) < 3:
        p = rng.uniform(-lim, lim, size=2)
        if all(np.hypot(*(p - q)) >= MIN_SEPARATION for q in points):
            points.append(p)
    heading = wrap_angle(rng.uniform(-np.pi, np.pi))

    robot = RobotState(position=points[0], heading=heading)
    objects = [
        ObjectInstance(lang.TOKENS[command.noun], lang.TOKENS[command.adjective], points[1]),
        ObjectInstance(lang.TOKENS[ds], lang.TOKENS[dc], points[2]),
    ]
    return ArenaState(robot=robot, objects=objects, command=command, seed=seed,
                      vision_size=vision_size)


# sensors

def _camera_rays(size: int) -> np.ndarray:
    """Unit ray directions in the body frame (forward, left, up), row-major from the top-left."""
    half = np.tan(np.radians(FOV_DEG) / 2)
    u = (2 * (np.arange(size) + 0.5) / size - 1) * half
    left = -u[None, :].repeat(size, 0)
    up = -u[:, None].repeat(size, 1)
    d = np.stack([np.ones_like(left), left, up], axis=-1).reshape(-1, 3)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


_RAY_CACHE: dict[int, np.ndarray] = {}


def render_vision(state: ArenaState, size: int | None = None) -> np.ndarray:
    """Ray-cast RGB + normalised distance image; floor and sky are background at the far plane."""
    size = size or state.vision_size
    if size not in _RAY_CACHE:
        _RAY_CACHE[size] = _camera_rays(size)
    local = _RAY_CACHE[size]
    r = state.robot
    c, s = np.cos(r.heading), np.sin(r.heading)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    dirs = local @ rot.T
    off = np.array(CAMERA_OFFSET)
    origin = np.array([r.position[0], r.position[1], 0.0]) + rot @ off

    n = dirs.shape[0]
    depth = np.full(n, np.inf)
    rgb = np.tile(np.array(BACKGROUND), (n, 1))
    surfaces = [(geo.ray_object(origin, dirs, o.shape, o.position), COLOR_RGB[o.color])
                for o in state.objects]
    for center, rad in [(hand_center(r), HAND_RADIUS)] + [(p, ARM_SPHERE_RADIUS) for p in arm_sphere_centers(r)]:
        surfaces.append((geo.ray_sphere(origin, dirs, center, rad), ROBOT_COLOR))
    for t, color in surfaces:
        hit = (t < depth) & (t <= FAR_PLANE)
        depth = np.where(hit, t, depth)
        rgb[hit] = color
    dist = np.minimum(depth, FAR_PLANE) / FAR_PLANE
    img = np.concatenate([rgb, dist[:, None]], axis=1).reshape(size, size, 4)
    return img.astype(np.float32)


def sense_touch(state: ArenaState) -> np.ndarray:
    return state.touch.astype(np.float32).copy()


def normalize_proprioception(robot: RobotState) -> np.ndarray:
    lo = np.array([YAW_RANGE[0], PITCH_RANGE[0], -JOINT_VEL_MAX, -JOINT_VEL_MAX])
    hi = np.array([YAW_RANGE[1], PITCH_RANGE[1], JOINT_VEL_MAX, JOINT_VEL_MAX])
    raw = np.array([robot.yaw_angle, robot.pitch_angle, robot.yaw_vel, robot.pitch_vel])
    return (raw - lo) / (hi - lo)


def denormalize_proprioception(values) -> np.ndarray:
    lo = np.array([YAW_RANGE[0], PITCH_RANGE[0], -JOINT_VEL_MAX, -JOINT_VEL_MAX])
    hi = np.array([YAW_RANGE[1], PITCH_RANGE[1], JOINT_VEL_MAX, JOINT_VEL_MAX])
    return lo + np.asarray(values, dtype=float) * (hi - lo)


def sense_proprioception(state: ArenaState) -> np.ndarray:
    return normalize_proprioception(state.robot).astype(np.float32)


def observe(state: ArenaState) -> ObservationBundle:
    return ObservationBundle(
        vision=render_vision(state),
        touch=sense_touch(state),
        proprioception=sense_proprioception(state),
        command_voice=lang.encode_sentence(state.command),
        feedback_voice=lang.feedback_sentence(state.feedback),
    )


# contacts and pushing

def _body_patch(q: np.ndarray) -> int:
    """Body patches 0-7: front-left, front-right, right-front, right-back,
    back-right, back-left, left-back, left-front."""
    x, y = q
    if abs(x) >= abs(y):
        if x >= 0:
            return 0 if y >= 0 else 1
        return 4 if y < 0 else 5
    if y < 0:
        return 2 if x >= 0 else 3
    return 6 if x < 0 else 7


def _hand_patch(robot: RobotState, direction: np.ndarray) -> int:
    """Hand patches 12-15 by contact azimuth relative to the arm: front, left, back, right."""
    a = robot.heading + np.radians(robot.yaw_angle)
    rel = wrap_angle(np.arctan2(direction[1], direction[0]) - a)
    quadrant = int(np.floor((rel + np.pi / 4) / (np.pi / 2))) % 4
    return 12 + quadrant


def _robot_parts(robot: RobotState):
    """(kind, index, center, radius) for every spherical part; the hand is last."""
    base, d = shoulder(robot), arm_direction(robot)
    parts = [("arm", i, base + s * d, ARM_SPHERE_RADIUS) for i, s in enumerate(ARM_SPHERES)]
    parts.append(("hand", 0, base + ARM_LENGTH * d, HAND_RADIUS))
    return parts


def _clamp_object(obj: ObjectInstance) -> None:
    lim = ARENA_HALF - geo._OUTER_RADIUS[obj.shape]
    obj.position = np.clip(obj.position, -lim, lim)


def resolve_pushes(state: ArenaState, parts=None) -> list[float]:
    """Translate each overlapped object by the minimal horizontal vector; returns per-object displacement."""
    moved = []
    r = state.robot
    parts = parts or _robot_parts(r)
    for obj in state.objects:
        total = 0.0
        depth, normal = geo.box_penetration(obj.shape, obj.position, r.position, r.heading,
                                            BODY_HALF, BODY_HEIGHT)
        if depth > 0:
            obj.position = obj.position + depth * normal
            total += depth
        for _, _, center, rad in parts:
            depth, normal = geo.sphere_penetration(obj.shape, obj.position, center, rad)
            if depth > 0:
                obj.position = obj.position + depth * normal
                total += depth
        _clamp_object(obj)
        moved.append(total)
    return moved


def contacts(state: ArenaState, parts=None):
    """Per-object contact flags: (patches touched, any contact, hand contact)."""
    r = state.robot
    parts = parts or _robot_parts(r)
    out = []
    for obj in state.objects:
        patches = set()
        depth, _ = geo.box_penetration(obj.shape, obj.position, r.position, r.heading,
                                       BODY_HALF, BODY_HEIGHT)
        if depth >= -CONTACT_TOL:
            patches.add(_body_patch(geo.box_contact_point(obj.position, r.position, r.heading, BODY_HALF)))
        hand = False
        for kind, i, center, rad in parts:
            depth, direction = geo.sphere_penetration(obj.shape, obj.position, center, rad)
            if depth >= -CONTACT_TOL:
                if kind == "arm":
                    patches.add(8 + i)
                else:
                    hand = True
                    patches.add(_hand_patch(r, direction))
        out.append((patches, bool(patches), hand))
    return out


def integrate_substep(robot: RobotState, vel: np.ndarray, dt: float = DT) -> None:
    """One explicit Euler substep of the differential drive and arm joints."""
    vl, vr, yv, pv = vel
    v = 0.5 * (vl + vr)
    w = (vr - vl) / WHEEL_BASE
    th = robot.heading
    lim = ARENA_HALF - BODY_HALF
    x = robot.position[0] + v * np.cos(th) * dt
    y = robot.position[1] + v * np.sin(th) * dt
    robot.position = np.clip(np.array([x, y]), -lim, lim)
    robot.heading = wrap_angle(th + w * dt)
    robot.wheel_vel_left, robot.wheel_vel_right = float(vl), float(vr)
    robot.yaw_vel, robot.pitch_vel = float(yv), float(pv)
    robot.yaw_angle = float(np.clip(robot.yaw_angle + yv * dt, *YAW_RANGE))
    robot.pitch_angle = float(np.clip(robot.pitch_angle + pv * dt, *PITCH_RANGE))


def facing_deviation(robot: RobotState, obj: ObjectInstance) -> float:
    d = obj.position - robot.position
    return abs(np.degrees(wrap_angle(np.arctan2(d[1], d[0]) - robot.heading)))


def step(state: ArenaState, motor_command, preferred: lang.Sentence | None = None) -> StepResult:
    """Advance one 0.25 s step; the input state is not modified."""
    if state.done or state.step_index >= MAX_STEPS:
        raise EnvError("step() called on a finished episode")
    state = state.copy()
    cmd = np.clip(np.asarray(motor_command, dtype=float).reshape(4), -1.0, 1.0)
    target = cmd * _VEL_LIMITS
    r = state.robot
    v0 = r.velocities
    heading0 = r.heading
    start = [o.position.copy() for o in state.objects]

    touch_counts = np.zeros(N_TOUCH)
    any_contact = [False, False]
    top_contact = [False, False]
    max_wheel = 0.0
    for k in range(1, N_SUBSTEPS + 1):
        vel = v0 + (target - v0) * (k / N_SUBSTEPS)
        integrate_substep(r, vel)
        max_wheel = max(max_wheel, abs(vel[0]), abs(vel[1]))
        parts = _robot_parts(r)
        resolve_pushes(state, parts)
        hand_z = parts[-1][2][2]
        touched = set()
        for j, (patches, anyc, hand) in enumerate(contacts(state, parts)):
            touched |= patches
            any_contact[j] |= anyc
            top_contact[j] |= hand and hand_z >= 3.75
        for p in touched:
            touch_counts[p] += 1
    state.touch = touch_counts / N_SUBSTEPS

    fwd = np.array([np.cos(heading0), np.sin(heading0)])
    left = np.array([-fwd[1], fwd[0]])
    disp = [o.position - p0 for o, p0 in zip(state.objects, start)]
    preds = StepPredicates(
        distance=[float(np.hypot(*(o.position - r.position))) for o in state.objects],
        deviation=[facing_deviation(r, o) for o in state.objects],
        contact=any_contact,
        hand_top_contact=top_contact,
        push_forward=[float(d @ fwd) for d in disp],
        push_left=[float(d @ left) for d in disp],
        max_wheel_speed=max_wheel,
    )
    state.step_index += 1
    candidates, state.streaks = evaluate_success(preds, state.streaks, state.objects, state.step_index)
    event = apply_action_constraints(candidates, preferred=preferred or state.command)
    events = [event] if event is not None else []
    state.feedback = event
    reward = 0.0
    if event is not None and event.matches(state.command):
        reward = 1.0
        state.done = True
    if state.step_index >= MAX_STEPS:
        state.done = True
    return StepResult(state, observe(state), reward, state.done, events, preds)


# trace export

def trace_record(result: StepResult) -> dict:
    r = result.state.robot
    return {
        "step": result.state.step_index,
        "pose": [float(r.position[0]), float(r.position[1]), float(r.heading)],
        "angles": [r.yaw_angle, r.pitch_angle],
        "objects": [[float(o.position[0]), float(o.position[1])] for o in result.state.objects],
        "events": [e.to_dict() for e in result.events],
        "reward": result.reward,
    }


def write_trace(results: Iterable[StepResult], path) -> None:
    with open(path, "w") as fh:
        for res in results:
            fh.write(json.dumps(trace_record(res), sort_keys=True) + "\n")
