"""Receding-horizon simulation loop, trace recording, and mode comparison.

Each iteration advances the world one tick: threats/targets take their
random-walk step, scheduled agent losses land, the command center re-solves
the assignment if due, a broadcast frame is formed, every active agent
steers from the frame alone, positions update synchronously, and captures
are checked post-move. In Case II the frame carries dead-reckoned agent
positions owned by the command-center model; true positions never leak into
the frame outside explicit resync events.

Trace files are line-delimited JSON with one record per tick after a single
header line; identical (scenario, weights, seed) runs write identical bytes.
Wall-clock per-tick compute times are volatile by nature and therefore live
in the run summary, not in the trace records.
"""

import json
import math
import time
from dataclasses import dataclass, replace, field

import numpy as np

from . import _kernels
from . import assignment as assignment_mod
from . import controller
from . import convergence
from . import cost
from . import surrogate as surrogate_mod
from .scenario import ScenarioState, advance_entities

TRACE_SCHEMA_VERSION = 1
DEFAULT_TICK_LIMIT = 100_000


@dataclass(frozen=True)
class BroadcastFrame:
    """Everything the center transmits for one tick; the agents' sole input."""

    tick: int
    agent_xy: np.ndarray       # (N, 2); estimated in Case II
    lost: np.ndarray           # (N,) agents flagged out of the problem
    target_xy: np.ndarray
    target_alive: np.ndarray
    threat_xy: np.ndarray
    table: assignment_mod.AssignmentTable


@dataclass
class SimulationTrace:
    """Tick-indexed history arrays plus run-level outcomes."""

    params: object
    seed: int
    mode: str
    case: int
    n_agents: int
    n_targets: int
    n_threats: int
    agent_x: np.ndarray
    agent_y: np.ndarray
    psi: np.ndarray
    path_len: np.ndarray
    alive: np.ndarray
    captured: np.ndarray
    clamp: np.ndarray
    zero_direction: np.ndarray
    assigned: np.ndarray
    target_x: np.ndarray
    target_y: np.ndarray
    target_alive: np.ndarray
    threat_x: np.ndarray
    threat_y: np.ndarray
    H: np.ndarray
    F_star: np.ndarray
    events: list
    arrival_ticks: dict
    compute_ns: list
    completed: bool

    @property
    def ticks(self):
        return len(self.H) - 1


class _Recorder:
    def __init__(self, params):
        self.rows = {k: [] for k in
                     ("ax", "ay", "psi", "plen", "alive", "captured", "clamp",
                      "zdir", "assigned", "tx", "ty", "talive", "ox", "oy",
                      "H", "Fs")}
        self.events = []
        self.compute_ns = []
        self.arrival_ticks = {}

    def add(self, state, table, steps, h_value, f_value, events):
        r = self.rows
        n = state.params.n_agents
        clamp = np.zeros(n, bool)
        zdir = np.zeros(n, bool)
        for s in steps:
            clamp[s.agent_id] = s.clamp_applied
            zdir[s.agent_id] = s.zero_direction
        assigned = np.full(n, -1, int)
        if table is not None:
            for aid, tid in table.mapping.items():
                assigned[aid] = tid
        r["ax"].append([a.x for a in state.agents])
        r["ay"].append([a.y for a in state.agents])
        r["psi"].append([a.heading for a in state.agents])
        r["plen"].append([a.path_length for a in state.agents])
        r["alive"].append([a.alive for a in state.agents])
        r["captured"].append([a.captured for a in state.agents])
        r["clamp"].append(clamp)
        r["zdir"].append(zdir)
        r["assigned"].append(assigned)
        r["tx"].append([t.x for t in state.targets])
        r["ty"].append([t.y for t in state.targets])
        r["talive"].append([t.alive for t in state.targets])
        r["ox"].append([o.x for o in state.radar_missiles])
        r["oy"].append([o.y for o in state.radar_missiles])
        r["H"].append(h_value)
        r["Fs"].append(f_value)
        for ev in events:
            self.events.append((state.tick, ev))

    def finish(self, params, seed, mode, case, completed):
        r = self.rows
        m = params.n_radar_missiles
        return SimulationTrace(
            params=params, seed=seed, mode=mode, case=case,
            n_agents=params.n_agents, n_targets=params.n_targets, n_threats=m,
            agent_x=np.array(r["ax"]), agent_y=np.array(r["ay"]),
            psi=np.array(r["psi"]), path_len=np.array(r["plen"]),
            alive=np.array(r["alive"], bool), captured=np.array(r["captured"], bool),
            clamp=np.array(r["clamp"], bool), zero_direction=np.array(r["zdir"], bool),
            assigned=np.array(r["assigned"], int),
            target_x=np.array(r["tx"]), target_y=np.array(r["ty"]),
            target_alive=np.array(r["talive"], bool),
            threat_x=np.array(r["ox"]).reshape(len(r["H"]), m),
            threat_y=np.array(r["oy"]).reshape(len(r["H"]), m),
            H=np.array(r["H"]), F_star=np.array(r["Fs"]),
            events=self.events, arrival_ticks=self.arrival_ticks,
            compute_ns=self.compute_ns, completed=completed)


def inject_loss(state: ScenarioState, agent_id: int):
    """Mark an agent dead; returns (state, applied). Dead agents stay dead."""
    agent = state.agents[agent_id]
    if not agent.alive:
        return state, False
    agents = list(state.agents)
    agents[agent_id] = replace(agent, alive=False, vx=0.0, vy=0.0)
    return replace(state, agents=tuple(agents)), True


def _surrogate_value(net, control_state, table):
    """Net output plus the exact smoothed range-budget terms."""
    x = controller.control_input(control_state)
    value = surrogate_mod.forward(net, x)
    p = control_state.params
    eta = p.smoothing_width
    targets = {t.id: t for t in control_state.targets}
    for agent in control_state.active_agents():
        if table is None or agent.id not in table:
            continue
        tgt = targets[table[agent.id]]
        s = agent.path_length + math.hypot(agent.x - tgt.x, agent.y - tgt.y)
        ramp = min(1.0, max(0.0, (s - (p.max_range - eta)) / (2.0 * eta)))
        value += p.k_l * ramp
    return value


def _frame(control_state: ScenarioState, table) -> BroadcastFrame:
    return BroadcastFrame(
        tick=control_state.tick,
        agent_xy=control_state.agent_position_array(),
        lost=np.array([not a.active for a in control_state.agents], bool),
        target_xy=control_state.target_position_array(),
        target_alive=np.array([t.alive for t in control_state.targets], bool),
        threat_xy=control_state.threat_position_array(),
        table=table)


def run(initial: ScenarioState, net, config: controller.ControllerConfig,
        seed: int, max_ticks: int | None = None, loss_schedule=None,
        initial_estimate_offset=None) -> SimulationTrace:
    """Simulate until every real target is reached or the tick budget runs out.

    Fully deterministic for fixed inputs. `loss_schedule` maps tick -> agent
    ids to kill at that tick; `initial_estimate_offset` (N, 2) seeds Case II
    dead reckoning with a known error.
    """
    p = initial.params
    if net.input_dim != p.input_dim:
        raise ValueError(
            f"net input_dim {net.input_dim} != scenario 2N+2M = {p.input_dim}")
    config = config.resolved(p)
    loss_schedule = {int(k): list(v) for k, v in (loss_schedule or {}).items()}

    if max_ticks is None:
        cert = convergence.certify(net, initial)
        if cert.all_met and cert.step_bounds:
            max_ticks = 10 * int(sum(cert.step_bounds))
        else:
            max_ticks = DEFAULT_TICK_LIMIT

    _kernels.warmup()
    rng = np.random.default_rng(seed)
    state = initial if initial.tick == 0 else replace(initial, tick=0)

    est_agents = None
    if config.case == 2:
        offset = np.zeros((p.n_agents, 2)) if initial_estimate_offset is None \
            else np.asarray(initial_estimate_offset, float)
        est_agents = tuple(replace(a, x=a.x + offset[a.id, 0], y=a.y + offset[a.id, 1])
                           for a in state.agents)

    def control_state_of(st):
        if config.case == 2:
            return replace(st, agents=est_agents)
        return st

    rec = _Recorder(p)
    ctrl = control_state_of(state)
    table = None
    if ctrl.alive_targets() and ctrl.active_agents():
        table = assignment_mod.maybe_reassign(ctrl, None, p.assignment_period)
    h0, f0 = _evaluate(state, ctrl, net, table)
    rec.add(state, table, (), h0, f0, [{"type": "assign"}] if table else [])

    completed = False
    while True:
        if not any(t.alive for t in state.targets):
            completed = True
            break
        if not any(a.active for a in state.agents):
            break
        if state.tick >= max_ticks:
            break

        t_start = time.perf_counter_ns()
        new_tick = state.tick + 1
        events = []

        state = advance_entities(state, rng)
        state = replace(state, tick=new_tick)

        for aid in loss_schedule.get(new_tick, ()):
            state, applied = inject_loss(state, aid)
            events.append({"type": "loss", "agent": aid, "applied": applied})
            if applied and config.case == 2:
                est_agents = tuple(
                    replace(e, alive=False, vx=0.0, vy=0.0) if e.id == aid else e
                    for e in est_agents)

        if config.case == 2:
            est_agents = tuple(replace(e, captured=a.captured, alive=a.alive)
                               for e, a in zip(est_agents, state.agents))
            if config.resync_period > 0 and new_tick % config.resync_period == 0:
                est_agents = tuple(replace(e, x=a.x, y=a.y)
                                   for e, a in zip(est_agents, state.agents))
                events.append({"type": "resync"})

        ctrl = control_state_of(state)
        new_table = assignment_mod.maybe_reassign(ctrl, table, p.assignment_period)
        if new_table is not table:
            events.append({"type": "assign"})
        table = new_table
        frame = _frame(ctrl, table)
        if config.case == 2:
            # one-way contract: frame content must come from the estimate store
            assert ctrl.agents is est_agents

        steps = [controller.step_agent(ctrl, net, table, a.id, config)
                 for a in ctrl.agents if a.active]

        agents = list(state.agents)
        for s in steps:
            agents[s.agent_id] = controller.apply_step(agents[s.agent_id], s, p)
        state = replace(state, agents=tuple(agents))
        if config.case == 2:
            est_list = list(est_agents)
            for s in steps:
                est_list[s.agent_id] = controller.apply_step(est_list[s.agent_id], s, p)
            est_agents = tuple(est_list)
            for i, a in enumerate(state.agents):
                if not a.active:
                    continue
                for j, b_ in enumerate(state.agents):
                    if j <= i or not b_.active:
                        continue
                    if math.hypot(a.x - b_.x, a.y - b_.y) <= config.sensor_radius:
                        events.append({"type": "detection", "agents": [i, j]})

        ctrl = control_state_of(state)
        captures = controller.check_capture(ctrl, table, config.capture_radius)
        if captures:
            agents = list(state.agents)
            targets = list(state.targets)
            for aid, tid in captures:
                agents[aid] = replace(agents[aid], captured=True)
                targets[tid] = replace(targets[tid], alive=False)
                rec.arrival_ticks[aid] = new_tick
                events.append({"type": "capture", "agent": aid, "target": tid})
            state = replace(state, agents=tuple(agents), targets=tuple(targets))
            if config.case == 2:
                est_agents = tuple(replace(e, captured=a.captured)
                                   for e, a in zip(est_agents, state.agents))
            ctrl = control_state_of(state)

        h_val, f_val = _evaluate(state, ctrl, net, table)
        rec.compute_ns.append(time.perf_counter_ns() - t_start)
        rec.add(state, table, steps, h_val, f_val, events)

    return rec.finish(p, seed, config.mode, config.case, completed)


def _evaluate(state, control_state, net, table):
    """True-world objective H and the controller-view surrogate value."""
    if table is None:
        return 0.0, 0.0
    mapping = table.mapping
    active = [a for a in state.agents if a.active]
    if not all(a.id in mapping for a in active):
        return 0.0, 0.0
    breakdown = cost.objective(state, mapping)
    return breakdown.H, _surrogate_value(net, control_state, table)


# ---------------------------------------------------------------------------
# Incursions and mode comparison
# ---------------------------------------------------------------------------

def incursion_counts(trace: SimulationTrace):
    """Per-agent counts of snapshots spent inside radar / missile range."""
    n, m = trace.n_agents, trace.n_threats
    radar = np.zeros(n, int)
    missile = np.zeros(n, int)
    if m == 0:
        return radar, missile
    p = trace.params
    for k in range(trace.ticks + 1):
        dx = trace.agent_x[k][:, None] - trace.threat_x[k][None, :]
        dy = trace.agent_y[k][:, None] - trace.threat_y[k][None, :]
        d = np.hypot(dx, dy)
        active = trace.alive[k] & ~trace.captured[k]
        radar += active & (d.min(axis=1) <= p.radar_radius)
        missile += active & (d.min(axis=1) <= p.missile_radius)
    return radar, missile


@dataclass(frozen=True)
class ModeStats:
    radar_ticks: int
    missile_ticks: int
    per_agent_radar: tuple
    captures: int
    completed: bool
    ticks: int
    mean_path_length: float


@dataclass(frozen=True)
class CompareRow:
    seed: int
    surrogate: ModeStats
    baseline: ModeStats
    trajectory_divergence: float


def _mode_stats(trace: SimulationTrace) -> ModeStats:
    radar, missile = incursion_counts(trace)
    final_len = trace.path_len[-1]
    return ModeStats(
        radar_ticks=int(radar.sum()), missile_ticks=int(missile.sum()),
        per_agent_radar=tuple(int(x) for x in radar),
        captures=len(trace.arrival_ticks), completed=trace.completed,
        ticks=trace.ticks, mean_path_length=float(final_len.mean()))


def compare_modes(base: ScenarioState, net, seeds, max_ticks=20_000,
                  interpose=True) -> list:
    """Run surrogate vs raw-baseline steering on seeded static scenarios.

    Entities are frozen for the comparison (a dynamic scenario is stilled).
    With `interpose`, each seed lays threats across the agent-target lanes;
    otherwise the base scenario itself is rerun per seed.
    """
    from .scenario import interposed_scenario

    frozen = replace(base.params, target_max_speed=0.0, threat_max_speed=0.0)
    rows = []
    for seed in seeds:
        if interpose:
            scen = interposed_scenario(frozen, seed)
        else:
            scen = replace(base, params=frozen)
        traces = {}
        for mode in (controller.MODE_SURROGATE, controller.MODE_BASELINE):
            cfg = controller.ControllerConfig(mode=mode, case=1)
            traces[mode] = run(scen, net, cfg, seed=seed, max_ticks=max_ticks)
        common = min(traces[m].ticks for m in traces) + 1
        sur, base_t = traces[controller.MODE_SURROGATE], traces[controller.MODE_BASELINE]
        dx = sur.agent_x[:common] - base_t.agent_x[:common]
        dy = sur.agent_y[:common] - base_t.agent_y[:common]
        div = float(np.hypot(dx, dy).max()) if common else 0.0
        rows.append(CompareRow(
            seed=seed, surrogate=_mode_stats(sur), baseline=_mode_stats(base_t),
            trajectory_divergence=div))
    return rows


# ---------------------------------------------------------------------------
# Trace and summary files
# ---------------------------------------------------------------------------

def write_trace(trace: SimulationTrace, path, manifest: str = ""):
    """Line-delimited JSON: one header line, then one record per tick."""
    events_by_tick = {}
    for tick, ev in trace.events:
        events_by_tick.setdefault(tick, []).append(ev)
    with open(path, "w") as fh:
        header = {"type": "header", "schema": TRACE_SCHEMA_VERSION,
                  "manifest": manifest, "seed": trace.seed, "mode": trace.mode,
                  "case": trace.case, "n_agents": trace.n_agents,
                  "n_targets": trace.n_targets, "n_threats": trace.n_threats,
                  "completed": trace.completed,
                  "agent_fields": ["x", "y", "psi", "L", "alive", "captured", "clamp"]}
        fh.write(json.dumps(header) + "\n")
        for k in range(trace.ticks + 1):
            rec = {
                "tick": k,
                "agents": [[trace.agent_x[k, i], trace.agent_y[k, i],
                            trace.psi[k, i], trace.path_len[k, i],
                            bool(trace.alive[k, i]), bool(trace.captured[k, i]),
                            bool(trace.clamp[k, i])]
                           for i in range(trace.n_agents)],
                "targets": [[trace.target_x[k, j], trace.target_y[k, j],
                             bool(trace.target_alive[k, j])]
                            for j in range(trace.n_targets)],
                "threats": [[trace.threat_x[k, j], trace.threat_y[k, j]]
                            for j in range(trace.n_threats)],
                "H": trace.H[k],
                "F_star": trace.F_star[k],
                "events": events_by_tick.get(k, []),
            }
            fh.write(json.dumps(rec) + "\n")


def summarize(trace: SimulationTrace, certificate=None):
    radar, missile = incursion_counts(trace)
    ns = np.array(trace.compute_ns, float)
    return {
        "completed": trace.completed,
        "ticks": trace.ticks,
        "seed": trace.seed,
        "mode": trace.mode,
        "case": trace.case,
        "arrival_ticks": {str(k): v for k, v in sorted(trace.arrival_ticks.items())},
        "captures": len(trace.arrival_ticks),
        "incursions": {"radar_ticks": int(radar.sum()),
                       "missile_ticks": int(missile.sum()),
                       "per_agent_radar": [int(x) for x in radar]},
        "clamped_steps": int(trace.clamp.sum()),
        "certificate": certificate.to_dict() if certificate is not None else None,
        "timing": {
            "mean_ms": float(ns.mean() / 1e6) if len(ns) else 0.0,
            "max_ms": float(ns.max() / 1e6) if len(ns) else 0.0,
            "per_tick_ns": [int(x) for x in ns],
        },
    }


def write_summary(trace: SimulationTrace, path, certificate=None, manifest: str = ""):
    doc = summarize(trace, certificate)
    doc["manifest"] = manifest
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
