from cranelang.env.arena import (
    ArenaState, EnvError, ObjectInstance, ObservationBundle, RobotState, StepResult,
    observe, render_vision, reset, spawn, sense_proprioception, sense_touch, step, write_trace,
)
from cranelang.env.success import (
    ACTIONS, StepPredicates, SuccessEvent, apply_action_constraints, evaluate_success,
)
