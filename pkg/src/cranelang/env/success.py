"""Per-step goal predicates, streak counting and action prioritization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIONS = ("watch", "be_near", "touch_the_top", "push_forward", "push_left", "push_right")
REQUIRED_STREAK = {"watch": 6, "be_near": 5, "touch_the_top": 3,
                   "push_forward": 3, "push_left": 3, "push_right": 3}
PUSHES = ("push_forward", "push_left", "push_right")

FACING_DEG = 15.0
WATCH_BAND = (6.0, 10.0)
NEAR_LIMIT = 6.0
TOP_HEIGHT = 3.75
PUSH_FORWARD_MIN = 0.1
PUSH_SIDE_MIN = 0.2
SIDE_WHEEL_LIMIT = 5.0


@dataclass(frozen=True)
class SuccessEvent:
    action: str
    color: str
    shape: str
    step: int = 0
    object_index: int = 0
    pushed: float = 0.0

    def matches(self, sentence) -> bool:
        return (self.action, self.color, self.shape) == (sentence.action, sentence.color, sentence.shape)

    def to_dict(self) -> dict:
        return {"action": self.action, "color": self.color, "shape": self.shape,
                "step": self.step, "object": self.object_index}


@dataclass
class StepPredicates:
    """Geometric facts about one step, one entry per object."""

    distance: list[float]
    deviation: list[float]          # degrees between heading and the object
    contact: list[bool]             # any robot part touched the object during the step
    hand_top_contact: list[bool]    # hand touched it with the hand centre >= 3.75 m
    push_forward: list[float]       # object displacement along the start-of-step heading
    push_left: list[float]          # ... and to the robot's left
    max_wheel_speed: float


def step_conditions(p: StepPredicates, j: int) -> dict[str, bool]:
    facing = p.deviation[j] < FACING_DEG
    d = p.distance[j]
    slow = p.max_wheel_speed < SIDE_WHEEL_LIMIT
    return {
        # watching from 6+ m cannot involve contact; the check keeps the categories exclusive
        "watch": facing and WATCH_BAND[0] < d < WATCH_BAND[1] and not p.contact[j],
        "be_near": facing and d < NEAR_LIMIT and not p.contact[j],
        "touch_the_top": p.hand_top_contact[j],
        "push_forward": p.push_forward[j] > PUSH_FORWARD_MIN,
        "push_left": p.push_left[j] > PUSH_SIDE_MIN and slow,
        "push_right": -p.push_left[j] > PUSH_SIDE_MIN and slow,
    }


def pushed_distance(p: StepPredicates, j: int, action: str) -> float:
    if action == "push_forward":
        return p.push_forward[j]
    if action == "push_left":
        return p.push_left[j]
    if action == "push_right":
        return -p.push_left[j]
    return 0.0


def evaluate_success(p: StepPredicates, streaks: np.ndarray, objects, step: int):
    """Update streak counters and list every (object, action) whose streak is long enough.

    Returns ``(candidates, new_streaks)``; a counter resets to zero whenever its
    per-step condition fails.
    """
    streaks = np.array(streaks, copy=True)
    candidates = []
    for j, obj in enumerate(objects):
        cond = step_conditions(p, j)
        for k, action in enumerate(ACTIONS):
            streaks[j, k] = streaks[j, k] + 1 if cond[action] else 0
            if streaks[j, k] >= REQUIRED_STREAK[action]:
                candidates.append(SuccessEvent(action, obj.color, obj.shape, step, j,
                                               pushed_distance(p, j, action)))
    return candidates, streaks


def apply_action_constraints(candidates, preferred=None) -> SuccessEvent | None:
    """Reduce the candidate events of one step to at most one.

    Touch the Top rejects every push; among pushes only the greatest pushed
    distance survives. Remaining ties (e.g. events on both objects) go to the
    ``preferred`` sentence if present, else to the lowest action, then object index.
    """
    cands = list(candidates)
    if not cands:
        return None
    if any(c.action == "touch_the_top" for c in cands):
        cands = [c for c in cands if c.action not in PUSHES]
    pushes = [c for c in cands if c.action in PUSHES]
    if pushes:
        best = max(c.pushed for c in pushes)
        cands = [c for c in cands if c.action not in PUSHES or c.pushed == best]
    if preferred is not None:
        for c in cands:
            if c.matches(preferred):
                return c
    cands.sort(key=lambda c: (ACTIONS.index(c.action), c.object_index))
    return cands[0]
