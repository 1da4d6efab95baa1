import numpy as np
import pytest

from cranelang import language as lang
from cranelang.env import arena
from cranelang.env.arena import ArenaState, ObjectInstance, RobotState
from cranelang.env.success import (
    REQUIRED_STREAK, StepPredicates, SuccessEvent, apply_action_constraints, evaluate_success,
    step_conditions,
)

OBJECTS = [ObjectInstance("pillar", "red", np.zeros(2)), ObjectInstance("cone", "blue", np.ones(2))]
FAR = dict(distance=15.0, deviation=90.0, contact=False, top=False, fwd=0.0, left=0.0)


def preds(wheel=0.0, **kw):
    """Predicates with object 0 set from kwargs and object 1 idle."""
    a = {**FAR, **kw}
    b = FAR
    return StepPredicates(
        distance=[a["distance"], b["distance"]], deviation=[a["deviation"], b["deviation"]],
        contact=[a["contact"], b["contact"]], hand_top_contact=[a["top"], b["top"]],
        push_forward=[a["fwd"], b["fwd"]], push_left=[a["left"], b["left"]], max_wheel_speed=wheel,
    )


def run_steps(seq):
    streaks = np.zeros((2, 6), dtype=int)
    events = []
    for t, p in enumerate(seq, start=1):
        cands, streaks = evaluate_success(p, streaks, OBJECTS, t)
        ev = apply_action_constraints(cands)
        events.append(ev)
    return events, streaks


# per-step threshold boundaries, both sides

@pytest.mark.parametrize("kw,action,expected", [
    (dict(distance=8.0, deviation=14.99), "watch", True),
    (dict(distance=8.0, deviation=15.0), "watch", False),
    (dict(distance=8.0, deviation=16.0), "watch", False),
    (dict(distance=6.001, deviation=0.0), "watch", True),
    (dict(distance=6.0, deviation=0.0), "watch", False),
    (dict(distance=9.999, deviation=0.0), "watch", True),
    (dict(distance=10.0, deviation=0.0), "watch", False),
    (dict(distance=5.999, deviation=0.0), "be_near", True),
    (dict(distance=6.0, deviation=0.0), "be_near", False),
    (dict(distance=3.0, deviation=14.9), "be_near", True),
    (dict(distance=3.0, deviation=15.1), "be_near", False),
    (dict(distance=3.0, deviation=0.0, contact=True), "be_near", False),
    (dict(top=True), "touch_the_top", True),
    (dict(top=False, contact=True), "touch_the_top", False),
    (dict(fwd=0.1001), "push_forward", True),
    (dict(fwd=0.1), "push_forward", False),
    (dict(fwd=0.0999), "push_forward", False),
    (dict(left=0.2001), "push_left", True),
    (dict(left=0.2), "push_left", False),
    (dict(left=0.1999), "push_left", False),
    (dict(left=-0.2001), "push_right", True),
    (dict(left=-0.2), "push_right", False),
    (dict(left=0.2001), "push_right", False),
])
def test_step_condition_boundaries(kw, action, expected):
    assert step_conditions(preds(**kw), 0)[action] is expected


@pytest.mark.parametrize("wheel,expected", [(4.999, True), (5.0, False), (5.001, False)])
@pytest.mark.parametrize("action,left", [("push_left", 0.5), ("push_right", -0.5)])
def test_side_push_wheel_gate(wheel, expected, action, left):
    assert step_conditions(preds(wheel=wheel, left=left), 0)[action] is expected


def test_forward_push_has_no_wheel_gate():
    assert step_conditions(preds(wheel=9.0, fwd=0.5), 0)["push_forward"]


# streak lengths 6/5/3/3/3/3

STEP_FOR = {
    "watch": dict(distance=8.0, deviation=10.0),
    "be_near": dict(distance=4.0, deviation=5.0),
    "touch_the_top": dict(top=True, contact=True, distance=4.0, deviation=40.0),
    "push_forward": dict(fwd=0.3, contact=True, distance=4.0, deviation=40.0),
    "push_left": dict(left=0.3, contact=True, distance=4.0, deviation=40.0),
    "push_right": dict(left=-0.3, contact=True, distance=4.0, deviation=40.0),
}


@pytest.mark.parametrize("action", list(STEP_FOR))
def test_event_exactly_at_required_streak(action):
    n = REQUIRED_STREAK[action]
    events, _ = run_steps([preds(**STEP_FOR[action])] * n)
    assert all(e is None for e in events[:-1])
    assert events[-1] is not None and events[-1].action == action
    assert (events[-1].color, events[-1].shape) == ("red", "pillar")


def test_required_streaks_match_definitions():
    assert [REQUIRED_STREAK[a] for a in STEP_FOR] == [6, 5, 3, 3, 3, 3]


@pytest.mark.parametrize("action", list(STEP_FOR))
def test_streak_reset_one_short(action):
    # n-1 qualifying, 1 failing, n-1 qualifying -> never an event
    n = REQUIRED_STREAK[action]
    good, bad = preds(**STEP_FOR[action]), preds()
    events, _ = run_steps([good] * (n - 1) + [bad] + [good] * (n - 1))
    assert all(e is None for e in events)


def test_watch_six_steps_at_8m_10deg():
    events, _ = run_steps([preds(distance=8.0, deviation=10.0)] * 6)
    assert events[5] == SuccessEvent("watch", "red", "pillar", 6, 0, 0.0)
    assert all(e is None for e in events[:5])


def test_watch_16deg_never_fires():
    for d in (6.5, 8.0, 9.5):
        events, _ = run_steps([preds(distance=d, deviation=16.0)] * 12)
        assert all(e is None for e in events)


def test_watch_streak_reset():
    # 5 qualifying, 1 failing, 5 more -> no event; streak-counter oracle
    good, bad = preds(distance=8.0, deviation=10.0), preds(distance=8.0, deviation=20.0)
    seq = [good] * 5 + [bad] + [good] * 5
    events, streaks = run_steps(seq)
    assert all(e is None for e in events)
    count = 0
    for p in seq:
        count = count + 1 if p.deviation[0] < 15 else 0
    assert streaks[0, 0] == count == 5


def test_streak_counters_reset_on_failure_invariant():
    rng = np.random.default_rng(0)
    streaks = np.zeros((2, 6), dtype=int)
    for t in range(200):
        p = preds(distance=rng.uniform(2, 12), deviation=rng.uniform(0, 30), fwd=rng.uniform(0, 0.2),
                  left=rng.uniform(-0.4, 0.4), top=bool(rng.integers(2)), contact=bool(rng.integers(2)),
                  wheel=rng.uniform(0, 10))
        cond = step_conditions(p, 0)
        _, new = evaluate_success(p, streaks, OBJECTS, t)
        for k, a in enumerate(STEP_FOR):
            assert new[0, k] == (streaks[0, k] + 1 if cond[a] else 0)
        streaks = new


# prioritization

def ev(action, pushed=0.0, obj=0, color="red", shape="pillar"):
    return SuccessEvent(action, color, shape, 1, obj, pushed)


def test_touch_top_suppresses_pushes():
    out = apply_action_constraints([ev("touch_the_top"), ev("push_forward", 0.5)])
    assert out.action == "touch_the_top"
    for p in ("push_left", "push_right"):
        assert apply_action_constraints([ev(p, 0.9), ev("touch_the_top")]).action == "touch_the_top"


def test_greatest_distance_pushed_wins():
    assert apply_action_constraints([ev("push_forward", 0.3), ev("push_left", 0.25)]).action == "push_forward"
    assert apply_action_constraints([ev("push_forward", 0.25), ev("push_left", 0.3)]).action == "push_left"
    assert apply_action_constraints([ev("push_right", 0.4), ev("push_forward", 0.39)]).action == "push_right"


def test_empty_candidates():
    assert apply_action_constraints([]) is None


def test_preferred_sentence_breaks_cross_object_ties():
    a = ev("watch", obj=1, color="blue", shape="cone")
    b = ev("be_near", obj=0)
    assert apply_action_constraints([a, b]).action == "watch"
    pref = lang.Sentence.parse("be_near red pillar")
    assert apply_action_constraints([a, b], preferred=pref) == b


def test_at_most_one_event_per_step_in_rollouts():
    rng = np.random.default_rng(3)
    for seed in range(10):
        s, _ = arena.reset(seed, "push_left red pillar")
        for _ in range(30):
            res = arena.step(s, rng.uniform(-1, 1, 4))
            assert len(res.events) <= 1
            s = res.state
            if res.done:
                break


# scripted trajectories through the full simulator

def scene(robot, target, command, other=(-8.0, -8.0)):
    return ArenaState(robot=robot, objects=[target, ObjectInstance("cone", "blue", np.array(other))],
                      command=lang.Sentence.parse(command))


def rollout(state, commands):
    results = []
    for c in commands:
        res = arena.step(state, c)
        results.append(res)
        state = res.state
        if res.done:
            break
    return results


def test_scripted_watch():
    res = rollout(scene(RobotState(), ObjectInstance("pillar", "red", np.array([8.0, 0.0])),
                        "watch red pillar"), [np.zeros(4)] * 10)
    assert len(res) == 6 and res[-1].reward == 1.0 and res[-1].events[0].action == "watch"


def test_scripted_watch_outside_band_fails():
    res = rollout(scene(RobotState(), ObjectInstance("pillar", "red", np.array([5.5, 0.0])),
                        "watch red pillar"), [np.zeros(4)] * 10)
    assert all(r.reward == 0 for r in res)
    assert any(r.events and r.events[0].action == "be_near" for r in res)


def test_scripted_watch_off_axis_fails():
    # 16 degrees off the heading
    ang = np.radians(16.0)
    res = rollout(scene(RobotState(), ObjectInstance("pillar", "red", 8.0 * np.array([np.cos(ang), np.sin(ang)])),
                        "watch red pillar"), [np.zeros(4)] * 10)
    assert all(r.reward == 0 and not r.events for r in res)


def test_scripted_be_near():
    res = rollout(scene(RobotState(), ObjectInstance("pole", "red", np.array([4.0, 0.0])),
                        "be_near red pole"), [np.zeros(4)] * 10)
    assert len(res) == 5 and res[-1].reward == 1.0


def test_scripted_touch_the_top():
    res = rollout(scene(RobotState(), ObjectInstance("pillar", "red", np.array([3.6, 0.0])),
                        "touch_the_top red pillar"), [[0, 0, 0, 0.9]] * 2 + [np.zeros(4)] * 6)
    assert res[-1].reward == 1.0 and res[-1].events[0].action == "touch_the_top"
    # hand centre at or above 3.75 m when it fired
    assert arena.hand_center(res[-1].state.robot)[2] >= 3.75


def test_scripted_low_hand_is_not_touch_the_top():
    # arm horizontal: hand centre at 1 m, contact without the height requirement
    res = rollout(scene(RobotState(pitch_angle=90.0), ObjectInstance("pillar", "red", np.array([5.4, 0.0])),
                        "touch_the_top red pillar"), [np.zeros(4)] * 8)
    assert any(r.predicates.contact[0] for r in res)
    assert all(r.reward == 0 for r in res)


def test_scripted_push_forward():
    res = rollout(scene(RobotState(), ObjectInstance("pillar", "red", np.array([3.0, 0.0])),
                        "push_forward red pillar"), [[0.3, 0.3, 0, 0]] * 8)
    assert res[-1].reward == 1.0 and res[-1].events[0].action == "push_forward"


@pytest.mark.parametrize("side", ["left", "right"])
def test_scripted_side_push(side):
    sign = 1.0 if side == "left" else -1.0
    robot = RobotState(pitch_angle=90.0, yaw_angle=-30.0 * sign)
    target = ObjectInstance("pole", "red", np.array([3.5, -1.2 * sign]))
    res = rollout(scene(robot, target, f"push_{side} red pole"), [[-0.3 * sign, 0.3 * sign, 0.5 * sign, 0]] * 6)
    assert res[-1].reward == 1.0 and res[-1].events[0].action == f"push_{side}"


def test_scripted_side_push_fast_wheels_rejected():
    # same sweep with a wheel at 6 m/s -> no side push event
    robot = RobotState(pitch_angle=90.0, yaw_angle=-30.0)
    target = ObjectInstance("pole", "red", np.array([3.5, -1.2]))
    res = rollout(scene(robot, target, "push_left red pole"), [[-0.6, 0.6, 0.5, 0]] * 6)
    assert all(not (r.events and r.events[0].action == "push_left") for r in res)


def test_watch_never_cooccurs_with_contact_event():
    rng = np.random.default_rng(8)
    for seed in range(30):
        s, _ = arena.reset(seed, "watch red pillar")
        for _ in range(30):
            res = arena.step(s, rng.uniform(-1, 1, 4))
            for j in range(2):
                cond = step_conditions(res.predicates, j)
                if cond["watch"] or cond["be_near"]:
                    assert not res.predicates.contact[j]
            s = res.state
            if res.done:
                break


def test_reward_only_for_commanded_triple():
    # watch the distractor: event emitted as feedback, no reward
    s = ArenaState(robot=RobotState(),
                   objects=[ObjectInstance("pillar", "red", np.array([-8.0, 0.0])),
                            ObjectInstance("cone", "blue", np.array([8.0, 0.0]))],
                   command=lang.Sentence.parse("watch red pillar"))
    res = rollout(s, [np.zeros(4)] * 8)
    fired = [r for r in res if r.events]
    assert fired and all(r.reward == 0.0 for r in res)
    assert fired[0].events[0].color == "blue"
    np.testing.assert_array_equal(fired[0].observation.feedback_voice,
                                  lang.encode_sentence(lang.Sentence.parse("watch blue cone")))
