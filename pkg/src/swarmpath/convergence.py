"""Finite-time arrival certificates and runtime descent monitoring.

Working in per-tick units (one tick = dt seconds, so the speed cap becomes
v = v_max*dt km/tick and the target speed bound delta = target_max_speed*dt),
a trained surrogate with gradient bound b admits a guaranteed per-tick
decrease of the squared target distance of at least epsilon whenever

    v > sqrt(2)*delta,   b < (v^2 - 2*delta^2) / (2*sqrt(2)*v),

with epsilon given by compute_epsilon below. Every agent then arrives within
(initial distance)^2 / epsilon ticks, provided the heading clamp never has
to fire. The monitor replays a recorded trace against exactly that
inequality, skipping only steps the guarantee does not cover (clamped turns,
zero-gradient holds) and counting what it skipped.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import assignment as assignment_mod
from . import surrogate
from .scenario import ScenarioState


@dataclass(frozen=True)
class ConvergenceCertificate:
    b: float                      # gradient bound (raw units per km)
    delta: float                  # target speed per tick (km/tick)
    v_step: float                 # agent speed per tick (km/tick)
    epsilon: float                # guaranteed squared-distance decrease
    b_limit: float                # open upper endpoint for b
    speed_ok: bool                # v > sqrt(2)*delta
    b_ok: bool                    # b < b_limit
    epsilon_ok: bool              # epsilon finite and > 0
    agent_ids: tuple
    initial_distances: tuple      # km, to the initially assigned targets
    step_bounds: tuple            # ticks, ceil(D^2/epsilon); empty if not certified

    @property
    def all_met(self):
        return self.speed_ok and self.b_ok and self.epsilon_ok

    def to_dict(self):
        return {
            "b": self.b, "delta": self.delta, "v_step": self.v_step,
            "epsilon": self.epsilon, "b_limit": self.b_limit,
            "conditions_met": {"speed": self.speed_ok, "gradient_bound": self.b_ok,
                               "epsilon_positive": self.epsilon_ok},
            "all_met": self.all_met,
            "agents": [
                {"id": a, "initial_distance": d,
                 "step_bound": (self.step_bounds[i] if self.step_bounds else None)}
                for i, (a, d) in enumerate(zip(self.agent_ids, self.initial_distances))
            ],
        }


def compute_epsilon(v_max: float, delta: float, b: float) -> float:
    """Guaranteed per-tick squared-distance decrease; NaN outside the sqrt domain."""
    if v_max <= 0:
        raise ValueError("v_max must be positive")
    if delta < 0 or b < 0:
        raise ValueError("delta and b must be non-negative")
    inner = 1.0 - 2.0 * math.sqrt(2.0) * b / v_max
    if inner < 0.0:
        return math.nan
    value = ((1.0 - 2.0 * math.sqrt(inner) - 2.0 * math.sqrt(2.0) * delta / v_max)
             * v_max * v_max
             + delta * delta + 2.0 * math.sqrt(2.0) * v_max * delta
             + 4.0 * v_max * b)
    return -value


def certify(net, state: ScenarioState, table=None) -> ConvergenceCertificate:
    """Certificate for a scenario under a given net (b from the weight bound).

    Needs the scenario state, not just its parameters: the per-agent arrival
    bounds are driven by the initial assigned-target distances.
    """
    p = state.params
    v = p.step_length
    delta = p.target_max_speed * p.dt
    b = surrogate.weight_bound(net)

    speed_ok = v > math.sqrt(2.0) * delta
    b_limit = (v * v - 2.0 * delta * delta) / (2.0 * math.sqrt(2.0) * v)
    b_ok = b < b_limit
    eps = compute_epsilon(v, delta, b)
    eps_ok = math.isfinite(eps) and eps > 0.0

    if table is None and state.alive_targets() and state.active_agents():
        table = assignment_mod.solve_for_state(state, tick=state.tick)
    ids, dists = [], []
    if table is not None:
        targets = {t.id: t for t in state.targets}
        for agent in state.active_agents():
            if agent.id not in table:
                continue
            tgt = targets[table[agent.id]]
            ids.append(agent.id)
            dists.append(math.hypot(agent.x - tgt.x, agent.y - tgt.y))

    certified = speed_ok and b_ok and eps_ok
    bounds = tuple(int(math.ceil(d * d / eps)) for d in dists) if certified else ()
    return ConvergenceCertificate(
        b=b, delta=delta, v_step=v, epsilon=eps, b_limit=b_limit,
        speed_ok=speed_ok, b_ok=b_ok, epsilon_ok=eps_ok,
        agent_ids=tuple(ids), initial_distances=tuple(dists), step_bounds=bounds)


@dataclass(frozen=True)
class DescentViolation:
    tick: int                 # tick the offending step moved into
    agent_id: int
    decrease: float
    required: float


@dataclass(frozen=True)
class ArrivalCheck:
    agent_id: int
    arrival_tick: int
    chain_start: int          # first tick of the uninterrupted same-target chain
    start_distance: float
    bound_ticks: float        # D(chain start)^2 / epsilon
    ok: bool


@dataclass(frozen=True)
class DescentReport:
    epsilon: float
    tolerance: float
    monitored_steps: int
    skipped_clamped: int
    skipped_zero_direction: int
    skipped_unassigned: int
    violations: tuple
    arrivals: tuple

    @property
    def ok(self):
        return not self.violations and all(a.ok for a in self.arrivals)

    def to_dict(self):
        return {
            "epsilon": self.epsilon, "tolerance": self.tolerance,
            "monitored_steps": self.monitored_steps,
            "skipped": {"clamped": self.skipped_clamped,
                        "zero_direction": self.skipped_zero_direction,
                        "unassigned": self.skipped_unassigned},
            "violations": [vars(v) for v in self.violations],
            "arrivals": [vars(a) for a in self.arrivals],
            "ok": self.ok,
        }


def monitor_descent(trace, certificate: ConvergenceCertificate) -> DescentReport:
    """Check every covered step of a trace against the certified decrease.

    A step into tick k+1 is covered when the agent actually stepped (alive,
    not yet captured), had an assigned target, and neither the heading clamp
    nor a zero-direction hold fired; the guarantee further only speaks about
    steps starting outside one tick of travel. Arrival bounds are checked
    per agent from the start of its last uninterrupted same-target chain
    (equal to tick 0 when the assignment never changed).
    """
    if not certificate.all_met:
        raise ValueError("certificate conditions not met; nothing to monitor")
    eps = certificate.epsilon
    v = certificate.v_step
    tol = 1e-9 * v * v

    n = trace.n_agents
    ticks = trace.ticks
    monitored = 0
    clamped = zero_dir = unassigned = 0
    violations = []

    def target_dist(k, i, tid):
        dx = trace.agent_x[k, i] - trace.target_x[k, tid]
        dy = trace.agent_y[k, i] - trace.target_y[k, tid]
        return math.hypot(dx, dy)

    for i in range(n):
        for k in range(ticks):
            if not trace.alive[k, i] or trace.captured[k, i]:
                continue
            if not trace.alive[k + 1, i]:
                continue
            tid = trace.assigned[k + 1, i]
            if tid < 0:
                unassigned += 1
                continue
            if trace.clamp[k + 1, i]:
                clamped += 1
                continue
            if trace.zero_direction[k + 1, i]:
                zero_dir += 1
                continue
            d_before = target_dist(k, i, tid)
            if d_before <= v:
                continue
            monitored += 1
            decrease = target_dist(k + 1, i, tid) ** 2 - d_before ** 2
            if decrease > -eps + tol:
                violations.append(DescentViolation(
                    tick=k + 1, agent_id=i, decrease=decrease, required=-eps + tol))

    arrivals = []
    for i, k_star in sorted(trace.arrival_ticks.items()):
        tid = trace.assigned[k_star, i]
        start = k_star
        while start > 0 and trace.assigned[start, i] == tid:
            start -= 1
        if trace.assigned[start, i] != tid:
            start += 1
        chain_start = max(start - 1, 0)   # chain measures from the prior snapshot
        d0 = target_dist(chain_start, i, tid)
        bound = d0 * d0 / eps
        arrivals.append(ArrivalCheck(
            agent_id=i, arrival_tick=k_star, chain_start=chain_start,
            start_distance=d0, bound_ticks=bound,
            ok=(k_star - chain_start) < bound))

    return DescentReport(
        epsilon=eps, tolerance=tol, monitored_steps=monitored,
        skipped_clamped=clamped, skipped_zero_direction=zero_dir,
        skipped_unassigned=unassigned,
        violations=tuple(violations), arrivals=tuple(arrivals))
