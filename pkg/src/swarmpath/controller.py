"""Per-tick steering: surrogate gradient descent under kinematic limits.

Each agent moves a fixed distance v_max*dt per tick. The desired direction
is the negative gradient of the smooth objective (surrogate penalty plus
half squared target distance, plus the exact range-budget ramp the net
cannot see); if that direction would exceed the per-tick heading budget the
agent turns by exactly psi_max toward it, with the turn sense decided by
the cross product of current velocity and desired direction.

The raw-baseline mode drops the penalty gradient entirely: the original
penalty is piecewise constant, so its honest numerical gradient is zero
almost everywhere and the baseline reduces to pure target attraction.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import surrogate
from .scenario import ScenarioParams, ScenarioState, AgentState

MODE_SURROGATE = "surrogate"
MODE_BASELINE = "baseline"


@dataclass(frozen=True)
class ControllerConfig:
    mode: str = MODE_SURROGATE
    case: int = 1
    capture_radius: float | None = None   # default: one tick of travel
    psi_max: float | None = None          # default: from maneuverability limits
    resync_period: int = 0                # Case II: 0 disables state resync
    sensor_radius: float | None = None    # Case II proximity detection

    def resolved(self, params: ScenarioParams) -> "ControllerConfig":
        cfg = self
        if cfg.capture_radius is None:
            cfg = replace(cfg, capture_radius=params.step_length)
        if cfg.psi_max is None:
            cfg = replace(cfg, psi_max=params.psi_max)
        if cfg.sensor_radius is None:
            cfg = replace(cfg, sensor_radius=params.safe_distance)
        cfg.validate(params)
        return cfg

    def validate(self, params: ScenarioParams):
        if self.mode not in (MODE_SURROGATE, MODE_BASELINE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.case not in (1, 2):
            raise ValueError(f"case must be 1 or 2, got {self.case}")
        if self.capture_radius is not None and \
                self.capture_radius < params.step_length - 1e-12:
            raise ValueError(
                f"capture_radius {self.capture_radius} < step length "
                f"{params.step_length}; agents would overshoot forever")
        if self.resync_period < 0:
            raise ValueError("resync_period must be >= 0")


@dataclass(frozen=True)
class ControlStep:
    """One agent's decision for one tick."""

    agent_id: int
    d: np.ndarray            # raw negative gradient
    d_hat: np.ndarray        # after the heading clamp (pre-normalization)
    d_tilde: np.ndarray      # unit direction actually flown
    kappa: float
    displacement: np.ndarray
    clamp_applied: bool
    zero_direction: bool


def control_input(state: ScenarioState) -> np.ndarray:
    """Flattened agent+threat coordinates with lost slots zero-padded."""
    n = state.params.n_agents
    x = np.empty(state.params.input_dim)
    lost = []
    for agent in state.agents:
        x[2 * agent.id] = agent.x
        x[2 * agent.id + 1] = agent.y
        if not agent.active:
            lost.append(agent.id)
    for o in state.radar_missiles:
        x[2 * n + 2 * o.id] = o.x
        x[2 * n + 2 * o.id + 1] = o.y
    return surrogate.zero_pad(x, lost) if lost else x


def _range_ramp_gradient(agent, tgt, params):
    """Gradient of the exact smoothed range-budget term w.r.t. agent position."""
    eta = params.smoothing_width
    dx = agent.x - tgt.x
    dy = agent.y - tgt.y
    dist = math.hypot(dx, dy)
    s = agent.path_length + dist
    if dist <= 0.0 or not (params.max_range - eta < s < params.max_range + eta):
        return 0.0, 0.0
    coef = params.k_l / (2.0 * eta) / dist
    return coef * dx, coef * dy


def negative_gradient(net, state: ScenarioState, assignment, agent_id: int,
                      mode: str = MODE_SURROGATE) -> np.ndarray:
    """Steering vector d for one agent: -(penalty gradient) - (position - target)."""
    agent = state.agents[agent_id]
    if not agent.active:
        raise ValueError(f"agent {agent_id} is not active")
    if agent_id not in assignment:
        raise ValueError(f"agent {agent_id} has no assigned target")
    tgt = state.targets[assignment[agent_id]]
    dx = -(agent.x - tgt.x)
    dy = -(agent.y - tgt.y)
    if mode == MODE_SURROGATE:
        grad = surrogate.input_gradient(net, control_input(state))
        gx, gy = _range_ramp_gradient(agent, tgt, state.params)
        dx -= grad[2 * agent_id] + gx
        dy -= grad[2 * agent_id + 1] + gy
    return np.array([dx, dy])


def clamp_heading(velocity, d, psi_max):
    """Unit direction within psi_max of the current velocity.

    Returns (d_tilde, d_hat, clamp_applied, zero_direction). A zero desired
    direction keeps the current heading and is flagged; the cross-product
    sign picks the turn sense, with ties (exactly opposed vectors) going
    clockwise.
    """
    vx, vy = float(velocity[0]), float(velocity[1])
    dx, dy = float(d[0]), float(d[1])
    v_norm = math.hypot(vx, vy)
    d_norm = math.hypot(dx, dy)
    if d_norm == 0.0:
        if v_norm == 0.0:
            raise ValueError("both velocity and direction are zero")
        unit = np.array([vx / v_norm, vy / v_norm])
        return unit, unit * v_norm, False, True
    if v_norm == 0.0:
        unit = np.array([dx / d_norm, dy / d_norm])
        return unit, np.array([dx, dy]), False, False

    cos_angle = (vx * dx + vy * dy) / (v_norm * d_norm)
    angle = math.acos(min(1.0, max(-1.0, cos_angle)))
    if angle <= psi_max:
        return np.array([dx / d_norm, dy / d_norm]), np.array([dx, dy]), False, False

    cross = vx * dy - dx * vy
    c, s = math.cos(psi_max), math.sin(psi_max)
    if cross > 0.0:       # desired direction lies counterclockwise
        hx = vx * c - vy * s
        hy = vx * s + vy * c
    else:
        hx = vx * c + vy * s
        hy = -vx * s + vy * c
    d_hat = np.array([hx, hy])
    return d_hat / v_norm, d_hat, True, False


def step_agent(state: ScenarioState, net, assignment, agent_id: int,
               config: ControllerConfig) -> ControlStep:
    """Decision for one agent from one snapshot; does not mutate the state."""
    agent = state.agents[agent_id]
    d = negative_gradient(net, state, assignment, agent_id, mode=config.mode)
    heading_vec = (agent.vx, agent.vy)
    if agent.speed == 0.0:
        heading_vec = (math.cos(agent.heading), math.sin(agent.heading))
    d_tilde, d_hat, clamped, zero_dir = clamp_heading(heading_vec, d, config.psi_max)
    kappa = state.params.step_length
    return ControlStep(agent_id=agent_id, d=d, d_hat=d_hat, d_tilde=d_tilde,
                       kappa=kappa, displacement=kappa * d_tilde,
                       clamp_applied=clamped, zero_direction=zero_dir)


def step_agent_estimated(est_state: ScenarioState, net, assignment, agent_id: int,
                         config: ControllerConfig) -> ControlStep:
    """Dead-reckoned variant: identical arithmetic on estimated coordinates.

    est_state carries the command center's agent position estimates in place
    of true positions; velocities, headings and path lengths dead-reckon
    identically in both recursions so they are shared. Proximity handling in
    this case comes from onboard detection against true neighbor distance,
    which the simulator reports as events; the steering recursion itself is
    unchanged so that a zero initial estimate error reproduces the known-
    position trajectories exactly.
    """
    return step_agent(est_state, net, assignment, agent_id, config)


def apply_step(agent: AgentState, step: ControlStep, params: ScenarioParams) -> AgentState:
    """Advance one agent by its decided displacement at full speed."""
    ux, uy = float(step.d_tilde[0]), float(step.d_tilde[1])
    return replace(
        agent,
        x=agent.x + step.kappa * ux,
        y=agent.y + step.kappa * uy,
        vx=params.v_max * ux,
        vy=params.v_max * uy,
        heading=math.atan2(uy, ux),
        path_length=agent.path_length + step.kappa)


def check_capture(state: ScenarioState, assignment, capture_radius: float):
    """(agent, target) pairs within the capture radius, boundary inclusive."""
    captures = []
    targets = {t.id: t for t in state.targets}
    for agent in state.agents:
        if not agent.active or agent.id not in assignment:
            continue
        tgt = targets[assignment[agent.id]]
        if not tgt.alive:
            continue
        if math.hypot(agent.x - tgt.x, agent.y - tgt.y) <= capture_radius:
            captures.append((agent.id, tgt.id))
    return captures
