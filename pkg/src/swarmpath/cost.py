"""Objective evaluation: distance cost, penalty terms, and their smoothed form.

The raw objective sums, per active agent, half the squared distance to the
assigned target (f1), hard-indicator penalties for radar/missile proximity
(f2), agent-agent proximity (f3), and a range-budget overrun flag (f4).
The smoothed variant replaces every 0-1 indicator with a linear ramp of
half-width eta around its threshold; it feeds the surrogate's training
labels and equals the raw penalty wherever nothing sits within eta of a
threshold.

Self-proximity is excluded from f3 (a constant N*k_c offset carries no
information), and dead or withdrawn agents contribute no terms at all.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .scenario import ScenarioParams, ScenarioState, AgentState


@dataclass(frozen=True)
class CostBreakdown:
    """Per-agent cost components and totals for one snapshot."""

    agent_ids: tuple
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    f4: np.ndarray
    alpha_counts: np.ndarray   # radar hits per agent
    beta_counts: np.ndarray    # missile hits per agent
    gamma_counts: np.ndarray   # proximity pairs per agent
    eta_flags: np.ndarray      # range-budget overrun per agent

    @property
    def H(self):
        return float(self.f1.sum() + self.f2.sum() + self.f3.sum() + self.f4.sum())

    @property
    def F(self):
        return float(self.f2.sum() + self.f3.sum() + self.f4.sum())


def f_max_bound(params: ScenarioParams) -> float:
    """A-priori upper bound on the (smoothed or raw) penalty sum."""
    n, m = params.n_agents, params.n_radar_missiles
    return n * (m * (params.k_d + params.k_a) + n * params.k_c + params.k_l)


def distance_cost(agent: AgentState, target_pos) -> float:
    """f1 = half the squared agent-target distance."""
    dx = agent.x - target_pos[0]
    dy = agent.y - target_pos[1]
    return 0.5 * (dx * dx + dy * dy)


def threat_penalty(agent: AgentState, threats, params: ScenarioParams) -> float:
    """f2 = k_d * (radar hits) + k_a * (missile hits), thresholds inclusive."""
    total = 0.0
    for o in threats:
        d = math.hypot(agent.x - o.x, agent.y - o.y)
        if d <= params.radar_radius:
            total += params.k_d
        if d <= params.missile_radius:
            total += params.k_a
    return total


def collision_penalty(agent: AgentState, others, params: ScenarioParams) -> float:
    """f3 = k_c * (number of other active agents within D_safe)."""
    count = 0
    for other in others:
        if other.id == agent.id or not other.active:
            continue
        if math.hypot(agent.x - other.x, agent.y - other.y) <= params.safe_distance:
            count += 1
    return params.k_c * count


def range_penalty(agent: AgentState, target_pos, params: ScenarioParams) -> float:
    """f4 = k_l once covered distance plus remaining leg exceeds the budget."""
    d = math.hypot(agent.x - target_pos[0], agent.y - target_pos[1])
    return params.k_l if agent.path_length + d > params.max_range else 0.0


def objective(state: ScenarioState, assignment) -> CostBreakdown:
    """Full breakdown over active agents; `assignment` maps agent id -> target id."""
    p = state.params
    targets = {t.id: t for t in state.targets}
    active = state.active_agents()
    ids, f1, f2, f3, f4 = [], [], [], [], []
    alpha, beta, gamma, eta_fl = [], [], [], []
    for agent in active:
        if agent.id not in assignment:
            raise ValueError(f"active agent {agent.id} has no assigned target")
        tgt = targets[assignment[agent.id]]
        d_t = math.hypot(agent.x - tgt.x, agent.y - tgt.y)

        a_hits = b_hits = 0
        for o in state.radar_missiles:
            d = math.hypot(agent.x - o.x, agent.y - o.y)
            if d <= p.radar_radius:
                a_hits += 1
            if d <= p.missile_radius:
                b_hits += 1
        g_hits = 0
        for other in active:
            if other.id == agent.id:
                continue
            if math.hypot(agent.x - other.x, agent.y - other.y) <= p.safe_distance:
                g_hits += 1
        over = agent.path_length + d_t > p.max_range

        ids.append(agent.id)
        f1.append(0.5 * d_t * d_t)
        f2.append(p.k_d * a_hits + p.k_a * b_hits)
        f3.append(p.k_c * g_hits)
        f4.append(p.k_l if over else 0.0)
        alpha.append(a_hits)
        beta.append(b_hits)
        gamma.append(g_hits)
        eta_fl.append(over)

    return CostBreakdown(
        agent_ids=tuple(ids),
        f1=np.array(f1), f2=np.array(f2), f3=np.array(f3), f4=np.array(f4),
        alpha_counts=np.array(alpha, int), beta_counts=np.array(beta, int),
        gamma_counts=np.array(gamma, int), eta_flags=np.array(eta_fl, bool))


def smoothed_penalty_batch(xu, xo, path_len, target_dist, active, params):
    """Smoothed penalty for S stacked coordinate layouts (the labeling kernel)."""
    return _kernels.smoothed_labels(
        xu, xo, path_len, target_dist, active,
        params.radar_radius, params.missile_radius, params.safe_distance,
        params.max_range, params.k_d, params.k_a, params.k_c, params.k_l,
        params.smoothing_width)


def smoothed_penalty(state: ScenarioState, assignment, params=None) -> float:
    """Smoothed penalty of one snapshot under the given assignment."""
    p = params or state.params
    targets = {t.id: t for t in state.targets}
    n = p.n_agents
    xu = np.zeros((1, 2 * n))
    path_len = np.zeros((1, n))
    target_dist = np.zeros((1, n))
    active = np.zeros(n, bool)
    for agent in state.agents:
        i = agent.id
        xu[0, 2 * i] = agent.x
        xu[0, 2 * i + 1] = agent.y
        if not agent.active:
            continue
        active[i] = True
        tgt = targets[assignment[agent.id]]
        path_len[0, i] = agent.path_length
        target_dist[0, i] = math.hypot(agent.x - tgt.x, agent.y - tgt.y)
    xo = state.threat_position_array().reshape(1, -1)
    return float(smoothed_penalty_batch(xu, xo, path_len, target_dist, active, p)[0])
