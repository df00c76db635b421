"""Kinematic differential-drive navigation worlds.

World coordinates are metres with the origin at the centre of the square
arena, x to the right and y up; yaw is measured counter-clockwise from +x.
The robot is a disc. Every action runs 50 integration sub-steps of 0.01 s
and collisions are checked after each sub-step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import yaml

ROBOT_RADIUS = 0.18
FORWARD_SPEED = 0.4  # m/s -> 0.2 m per action
TURN_RATE = math.pi / 3  # rad/s -> 30 degrees per action
DT = 0.01
SUBSTEPS = 50
MAX_EPISODE_STEPS = 200

REWARD_GOAL = 10.0
REWARD_COLLISION = -1.0
REWARD_TOWARD = 0.1
REWARD_AWAY = -0.2

BUILTIN_NAMES = ("env3x3", "env4x4", "env5x5")


class Action(enum.IntEnum):
    FORWARD = 0
    LEFT = 1
    RIGHT = 2


N_ACTIONS = len(Action)


class Event(str, enum.Enum):
    GOAL = "goal"
    COLLISION = "collision"
    STEP_TOWARD = "step_toward"
    STEP_AWAY = "step_away"
    TIMEOUT = "timeout"


def normalize_yaw(yaw: float) -> float:
    """Wrap into (-pi, pi]."""
    return math.pi - (math.pi - yaw) % (2.0 * math.pi)


class Pose(NamedTuple):
    x: float
    y: float
    yaw: float

    def features(self) -> np.ndarray:
        return np.array([self.x, self.y, self.yaw])


class Rect(NamedTuple):
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def distance(self, x: float, y: float) -> float:
        dx = max(self.min_x - x, 0.0, x - self.max_x)
        dy = max(self.min_y - y, 0.0, y - self.max_y)
        return math.hypot(dx, dy)


@dataclass(frozen=True)
class Goal:
    x: float
    y: float
    radius: float

    def distance(self, pose: Pose) -> float:
        return math.hypot(pose.x - self.x, pose.y - self.y)


@dataclass(frozen=True)
class WorldSpec:
    name: str
    extent: float
    start: Pose
    goal: Goal
    success_threshold: float
    walls: tuple[Rect, ...] = ()
    obstacles: tuple[Rect, ...] = ()
    robot_radius: float = ROBOT_RADIUS

    def __post_init__(self):
        object.__setattr__(self, "start", Pose(*(float(v) for v in self.start)))
        object.__setattr__(self, "walls", tuple(Rect(*map(float, r)) for r in self.walls))
        object.__setattr__(self, "obstacles", tuple(Rect(*map(float, r)) for r in self.obstacles))

    @property
    def half(self) -> float:
        return self.extent / 2.0

    def validate(self) -> list[str]:
        """Problems with the geometry; empty when the world is usable."""
        problems = []
        if self.extent <= 0:
            problems.append("extent must be positive")
        for r in self.walls + self.obstacles:
            if r.min_x >= r.max_x or r.min_y >= r.max_y:
                problems.append(f"degenerate rectangle {tuple(r)}")
        if collision_check(self.start, self):
            problems.append("start pose collides with the boundary or an obstacle")
        gx, gy = self.goal.x, self.goal.y
        if abs(gx) >= self.half or abs(gy) >= self.half:
            problems.append("goal centre lies outside the boundary")
        if any(r.distance(gx, gy) == 0.0 for r in self.obstacles):
            problems.append("goal centre lies inside an obstacle")
        if self.goal.radius <= 0:
            problems.append("goal radius must be positive")
        return problems


class StepResult(NamedTuple):
    pose: Pose
    reward: float
    terminal: bool
    event: Event

    @property
    def next_state(self) -> np.ndarray:
        return self.pose.features()


def reset(world: WorldSpec) -> Pose:
    return world.start


def collision_check(pose: Pose, world: WorldSpec) -> bool:
    """True when the robot disc overlaps a wall or obstacle or leaves the arena.

    Touching at exactly one radius is not a collision.
    """
    r = world.robot_radius
    h = world.half
    if pose.x - r < -h or pose.x + r > h or pose.y - r < -h or pose.y + r > h:
        return True
    for rect in world.walls:
        if rect.distance(pose.x, pose.y) < r:
            return True
    for rect in world.obstacles:
        if rect.distance(pose.x, pose.y) < r:
            return True
    return False


def _wheel_command(action: Action) -> tuple[float, float]:
    if action is Action.FORWARD:
        return FORWARD_SPEED, 0.0
    if action is Action.LEFT:
        return 0.0, TURN_RATE
    return 0.0, -TURN_RATE


def _substeps(pose: Pose, action: Action):
    v, omega = _wheel_command(action)
    x, y, yaw = pose
    for _ in range(SUBSTEPS):
        if v != 0.0:
            x += v * math.cos(yaw) * DT
            y += v * math.sin(yaw) * DT
        if omega != 0.0:
            yaw = normalize_yaw(yaw + omega * DT)
        yield Pose(x, y, yaw)


def integrate_drive(pose: Pose, action, world: WorldSpec | None = None) -> Pose:
    """Pose after one action, ignoring collisions."""
    action = Action(action)
    end = pose
    for end in _substeps(pose, action):
        pass
    return end


def _first_collision(world: WorldSpec, pose: Pose, action: Action):
    """Integrate one action; returns (last safe pose, collided)."""
    v, omega = _wheel_command(action)
    x, y, yaw = pose
    if v == 0.0:
        # pure rotation leaves the disc where it is
        for _ in range(SUBSTEPS):
            yaw = normalize_yaw(yaw + omega * DT)
        return Pose(x, y, yaw), False
    r = world.robot_radius
    lo, hi = -world.half + r, world.half - r
    rects = world.walls + world.obstacles
    dx = v * math.cos(yaw) * DT
    dy = v * math.sin(yaw) * DT
    for _ in range(SUBSTEPS):
        nx, ny = x + dx, y + dy
        if nx < lo or nx > hi or ny < lo or ny > hi:
            return Pose(x, y, yaw), True
        for rect in rects:
            if rect.distance(nx, ny) < r:
                return Pose(x, y, yaw), True
        x, y = nx, ny
    return Pose(x, y, yaw), False


def step(world: WorldSpec, pose: Pose, action, step_index: int) -> StepResult:
    """Advance one action. ``step_index`` is this action's 1-based position in the episode."""
    if not 1 <= step_index <= MAX_EPISODE_STEPS:
        raise RuntimeError(
            f"step {step_index} outside an active episode (limit {MAX_EPISODE_STEPS})"
        )
    end, collided = _first_collision(world, pose, Action(action))
    if collided:
        return StepResult(end, REWARD_COLLISION, True, Event.COLLISION)
    d_end = world.goal.distance(end)
    if d_end < world.goal.radius:
        return StepResult(end, REWARD_GOAL, True, Event.GOAL)
    if d_end < world.goal.distance(pose):
        reward, event = REWARD_TOWARD, Event.STEP_TOWARD
    else:
        reward, event = REWARD_AWAY, Event.STEP_AWAY
    if step_index == MAX_EPISODE_STEPS:
        return StepResult(end, reward, True, Event.TIMEOUT)
    return StepResult(end, reward, False, event)


def rollout(world: WorldSpec, actions: Sequence[int]) -> tuple[float, list[StepResult]]:
    """Replay a fixed action sequence from the start pose until it ends."""
    pose = reset(world)
    total = 0.0
    results = []
    for i, a in enumerate(actions, start=1):
        res = step(world, pose, a, i)
        results.append(res)
        total += res.reward
        pose = res.pose
        if res.terminal:
            break
    return total, results


def shortest_path(world: WorldSpec, max_depth: int = 120, resolution: float = 0.05) -> list[int] | None:
    """Breadth-first search for a short collision-free action sequence to the goal.

    Poses are merged on a ``resolution`` grid (and exact yaw bins), keeping
    the highest-return representative, so the result is near-optimal in
    length rather than provably optimal. Among paths of the minimal length
    found, the one with the highest total reward is returned.
    """
    yaw_bins = round(2 * math.pi / (TURN_RATE * DT * SUBSTEPS))

    def key(p: Pose):
        return (
            round(p.x / resolution),
            round(p.y / resolution),
            round(p.yaw / (2 * math.pi) * yaw_bins) % yaw_bins,
        )

    start = reset(world)
    frontier = {key(start): (0.0, start, ())}
    seen = {key(start)}
    for depth in range(1, max_depth + 1):
        nxt: dict = {}
        finished = []
        for ret, pose, path in frontier.values():
            for a in Action:
                res = step(world, pose, a, depth)
                if res.event is Event.COLLISION:
                    continue
                new_ret = ret + res.reward
                new_path = path + (int(a),)
                if res.event is Event.GOAL:
                    finished.append((new_ret, new_path))
                    continue
                k = key(res.pose)
                if k in seen and k not in nxt:
                    continue
                if k not in nxt or nxt[k][0] < new_ret:
                    nxt[k] = (new_ret, res.pose, new_path)
        if finished:
            finished.sort(key=lambda t: (-t[0], t[1]))
            return list(finished[0][1])
        seen.update(nxt)
        frontier = nxt
        if not frontier:
            return None
    return None


def _rects(items) -> tuple[Rect, ...]:
    out = []
    for r in items or ():
        if isinstance(r, dict):
            r = (r["min_x"], r["min_y"], r["max_x"], r["max_y"])
        if len(r) != 4:
            raise ValueError(f"rectangle needs 4 numbers (min_x, min_y, max_x, max_y), got {r!r}")
        out.append(Rect(*map(float, r)))
    return tuple(out)


def world_from_dict(data: dict, name: str | None = None) -> WorldSpec:
    required = ("extent", "start", "goal", "success_threshold")
    missing = [k for k in required if k not in data]
    if missing:
        raise ValueError(f"world file missing keys: {', '.join(missing)}")
    start = data["start"]
    if isinstance(start, dict):
        start = (start["x"], start["y"], start.get("yaw", 0.0))
    goal = data["goal"]
    if isinstance(goal, dict):
        goal = (goal["x"], goal["y"], goal["radius"])
    return WorldSpec(
        name=str(data.get("name", name or "world")),
        extent=float(data["extent"]),
        start=Pose(float(start[0]), float(start[1]), normalize_yaw(float(start[2]))),
        goal=Goal(*(float(v) for v in goal)),
        success_threshold=float(data["success_threshold"]),
        walls=_rects(data.get("walls")),
        obstacles=_rects(data.get("obstacles")),
        robot_radius=float(data.get("robot_radius", ROBOT_RADIUS)),
    )


def world_to_dict(world: WorldSpec) -> dict:
    return {
        "name": world.name,
        "extent": world.extent,
        "start": {"x": world.start.x, "y": world.start.y, "yaw": world.start.yaw},
        "goal": {"x": world.goal.x, "y": world.goal.y, "radius": world.goal.radius},
        "success_threshold": world.success_threshold,
        "robot_radius": world.robot_radius,
        "walls": [list(r) for r in world.walls],
        "obstacles": [list(r) for r in world.obstacles],
    }


def load_world(path_or_name: str | Path) -> WorldSpec:
    """Load a bundled world by name or a world file from disk."""
    text_name = str(path_or_name)
    if text_name in BUILTIN_NAMES:
        text = resources.files("qnav").joinpath("worlds", f"{text_name}.yaml").read_text()
        source = text_name
    else:
        path = Path(path_or_name)
        text = path.read_text()
        source = str(path)
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ValueError(f"{source}: world file must be a mapping")
    world = world_from_dict(data, name=Path(source).stem)
    problems = world.validate()
    if problems:
        raise ValueError(f"{source}: " + "; ".join(problems))
    return world


def builtin_worlds() -> dict[str, WorldSpec]:
    return {name: load_world(name) for name in BUILTIN_NAMES}
