"""Online optimal path control for broadcast-commanded agent swarms."""

__version__ = "0.1.0"

from .scenario import (
    ScenarioParams, ScenarioState, AgentState, RadarMissileState, TargetState,
    ScenarioError, load_scenario, save_scenario, random_scenario,
    interposed_scenario, advance_entities,
)
from .cost import CostBreakdown, objective, smoothed_penalty, f_max_bound
from .assignment import (
    AssignmentTable, LabeledBipartiteGraph, duplicate_targets, build_graph,
    solve_assignment, solve_for_state, maybe_reassign,
)
from .surrogate import (
    SurrogateNet, SurrogateDataset, TrainingReport, generate_dataset, train,
    forward, input_gradient, zero_pad, weight_bound, save_weights, load_weights,
    zero_net, identity_net,
)
from .controller import (
    ControllerConfig, ControlStep, negative_gradient, clamp_heading,
    step_agent, step_agent_estimated, check_capture,
)
from .convergence import (
    ConvergenceCertificate, DescentReport, compute_epsilon, certify,
    monitor_descent,
)
from .simulator import (
    SimulationTrace, BroadcastFrame, run, inject_loss, compare_modes,
    incursion_counts, write_trace, write_summary, summarize,
)
