"""World model: parameters, entity states, scenario files, and entity motion.

All geometry is in km, time in seconds, speeds in km/s. Mixed units from
typical mission sheets (m/s speeds, g in m/s^2) are normalized at the edges:
gravity is stored in m/s^2 and converted where the heading-rate limit is
derived. States are frozen dataclasses; every mutation returns a new
snapshot, so snapshots can be shared freely across threads.
"""

import json
import math
from dataclasses import dataclass, replace, asdict

import numpy as np


class ScenarioError(ValueError):
    """Raised for malformed scenario files or violated parameter invariants."""


@dataclass(frozen=True)
class ScenarioParams:
    """Static problem parameters for one scenario."""

    region_half_extent: float = 100.0   # region square is [0, 2*half_extent]^2
    n_agents: int = 10
    n_radar_missiles: int = 4
    n_targets: int = 5
    radar_radius: float = 10.0          # R_d
    missile_radius: float = 5.0         # R_a
    safe_distance: float = 0.1          # D_safe
    v_max: float = 0.06                 # km/s
    n_max: float = 10.0                 # lateral overload bound, in g units
    gravity: float = 9.8                # m/s^2
    max_range: float = 500.0            # L_bar, km
    k_d: float = 1e5
    k_a: float = 1e5
    k_c: float = 1e4
    k_l: float = 1e4
    dt: float = 5.0                     # seconds per tick
    target_max_speed: float = 0.01      # delta, km/s
    threat_max_speed: float | None = None  # defaults to target_max_speed
    smoothing_width: float = 0.2        # eta, km
    assignment_period: int = 5          # ticks between scheduled re-solves
    assignment_scale: float = 1.0       # lambda in the edge weights

    def __post_init__(self):
        self.validate()

    def validate(self):
        checks = [
            (self.radar_radius > self.missile_radius, "R_d > R_a violated"),
            (self.missile_radius > 0, "R_a > 0 violated"),
            (self.k_d > 0, "k_d > 0 violated"),
            (self.k_a >= self.k_d, "k_a >= k_d violated"),
            (self.k_c > 0, "k_c > 0 violated"),
            (self.k_l > 0, "k_l > 0 violated"),
            (self.n_targets <= self.n_agents, "K ≤ N violated"),
            (self.n_agents > 0, "N > 0 violated"),
            (self.n_targets > 0, "K > 0 violated"),
            (self.n_radar_missiles >= 0, "M ≥ 0 violated"),
            (self.v_max > 0, "v_max > 0 violated"),
            (self.dt > 0, "dt > 0 violated"),
            (self.smoothing_width > 0, "eta > 0 violated"),
            (self.max_range > 0, "L_bar > 0 violated"),
            (self.assignment_period >= 1, "assignment_period ≥ 1 violated"),
            (self.region_half_extent > 0, "region_half_extent > 0 violated"),
            (self.target_max_speed >= 0, "target_max_speed ≥ 0 violated"),
            (self.gravity > 0, "gravity > 0 violated"),
            (self.n_max > 0, "n_max > 0 violated"),
            (self.threat_max_speed is None or self.threat_max_speed >= 0,
             "threat_max_speed ≥ 0 violated"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ScenarioError(msg)

    @property
    def region_side(self):
        return 2.0 * self.region_half_extent

    @property
    def step_length(self):
        """Per-tick travel distance kappa = v_max * dt (km)."""
        return self.v_max * self.dt

    @property
    def psi_max(self):
        """Max heading change per tick: n_max * g * dt / v_max (radians)."""
        return self.n_max * (self.gravity / 1000.0) * self.dt / self.v_max

    @property
    def threat_speed(self):
        ts = self.threat_max_speed
        return self.target_max_speed if ts is None else ts

    @property
    def input_dim(self):
        """Width of the flattened agent+threat coordinate vector."""
        return 2 * self.n_agents + 2 * self.n_radar_missiles


@dataclass(frozen=True)
class AgentState:
    id: int
    x: float
    y: float
    vx: float
    vy: float
    heading: float
    path_length: float = 0.0
    alive: bool = True
    captured: bool = False

    @property
    def active(self):
        return self.alive and not self.captured

    @property
    def position(self):
        return (self.x, self.y)

    @property
    def speed(self):
        return math.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class RadarMissileState:
    id: int
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0

    @property
    def position(self):
        return (self.x, self.y)


@dataclass(frozen=True)
class TargetState:
    id: int
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0
    alive: bool = True

    @property
    def position(self):
        return (self.x, self.y)


@dataclass(frozen=True)
class ScenarioState:
    """Full world snapshot at one tick."""

    tick: int
    params: ScenarioParams
    agents: tuple
    radar_missiles: tuple
    targets: tuple
    rng_seed: int = 0

    def __post_init__(self):
        p = self.params
        if len(self.agents) != p.n_agents:
            raise ScenarioError(
                f"agent list length {len(self.agents)} != N={p.n_agents}")
        if len(self.radar_missiles) != p.n_radar_missiles:
            raise ScenarioError(
                f"radar-missile list length {len(self.radar_missiles)} != M={p.n_radar_missiles}")
        if len(self.targets) != p.n_targets:
            raise ScenarioError(
                f"target list length {len(self.targets)} != K={p.n_targets}")
        for ent in (*self.agents, *self.radar_missiles, *self.targets):
            if not (math.isfinite(ent.x) and math.isfinite(ent.y)):
                raise ScenarioError(f"non-finite position on {ent}")

    def active_agents(self):
        return [a for a in self.agents if a.active]

    def alive_targets(self):
        return [t for t in self.targets if t.alive]

    def agent_position_array(self):
        """(N, 2) true agent positions (dead agents keep their last fix)."""
        return np.array([[a.x, a.y] for a in self.agents], float)

    def threat_position_array(self):
        return np.array([[o.x, o.y] for o in self.radar_missiles], float).reshape(-1, 2)

    def target_position_array(self):
        return np.array([[t.x, t.y] for t in self.targets], float).reshape(-1, 2)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _agent_from_heading(i, x, y, heading, v):
    return AgentState(id=i, x=x, y=y,
                      vx=v * math.cos(heading), vy=v * math.sin(heading),
                      heading=heading)


def random_scenario(params: ScenarioParams, seed: int) -> ScenarioState:
    """Uniform layout over the region; agents start at v_max with random headings."""
    params.validate()
    rng = np.random.default_rng(seed)
    side = params.region_side
    pos_a = rng.uniform(0.0, side, (params.n_agents, 2))
    pos_o = rng.uniform(0.0, side, (params.n_radar_missiles, 2))
    pos_t = rng.uniform(0.0, side, (params.n_targets, 2))
    headings = rng.uniform(0.0, 2.0 * math.pi, params.n_agents)
    agents = tuple(_agent_from_heading(i, pos_a[i, 0], pos_a[i, 1],
                                       headings[i], params.v_max)
                   for i in range(params.n_agents))
    threats = tuple(RadarMissileState(j, pos_o[j, 0], pos_o[j, 1])
                    for j in range(params.n_radar_missiles))
    targets = tuple(TargetState(k, pos_t[k, 0], pos_t[k, 1])
                    for k in range(params.n_targets))
    return ScenarioState(tick=0, params=params, agents=agents,
                         radar_missiles=threats, targets=targets, rng_seed=seed)


def interposed_scenario(params: ScenarioParams, seed: int) -> ScenarioState:
    """Static layout with threats sitting on the agent-target corridor.

    Agents line up near the left edge, targets near the right edge, and each
    threat is dropped partway along a straight agent-target line (with some
    lateral jitter), far enough from both endpoints that nobody starts inside
    a radar circle. Used for the surrogate-vs-raw-gradient contrast runs.
    """
    params.validate()
    rng = np.random.default_rng(seed)
    side = params.region_side
    margin = min(0.08 * side, 0.45 * side)
    n, m, k = params.n_agents, params.n_radar_missiles, params.n_targets

    ya = np.sort(rng.uniform(0.15 * side, 0.85 * side, n))
    agents_xy = np.column_stack([rng.uniform(margin * 0.5, margin, n), ya])
    yt = np.sort(rng.uniform(0.15 * side, 0.85 * side, k))
    targets_xy = np.column_stack([rng.uniform(side - margin, side - margin * 0.5, k), yt])

    threat_xy = np.empty((m, 2))
    lane = rng.choice(n, size=m, replace=(m > n))
    clearance = params.radar_radius + 2.0 * params.smoothing_width + 2.0
    for j in range(m):
        a = agents_xy[lane[j]]
        t = targets_xy[lane[j] % k]
        frac = rng.uniform(0.35, 0.65)
        point = a + frac * (t - a)
        point[1] += rng.uniform(-0.02 * side, 0.02 * side)
        point[0] = min(max(point[0], clearance + margin), side - clearance - margin)
        threat_xy[j] = point

    agents = tuple(_agent_from_heading(i, agents_xy[i, 0], agents_xy[i, 1],
                                       0.0, params.v_max) for i in range(n))
    threats = tuple(RadarMissileState(j, threat_xy[j, 0], threat_xy[j, 1])
                    for j in range(m))
    targets = tuple(TargetState(i, targets_xy[i, 0], targets_xy[i, 1])
                    for i in range(k))
    return ScenarioState(tick=0, params=params, agents=agents,
                         radar_missiles=threats, targets=targets, rng_seed=seed)


# ---------------------------------------------------------------------------
# Scenario files (JSON)
# ---------------------------------------------------------------------------

_PARAM_KEYS = set(ScenarioParams.__dataclass_fields__)
_ENTITY_KEYS = {"x", "y", "vx", "vy"}
_TOP_KEYS = {"params", "agents", "targets", "radar_missiles", "seed"}


def _check_keys(obj, allowed, where):
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioError(f"unknown key(s) {sorted(unknown)} in {where}")


def load_scenario(path) -> ScenarioState:
    """Parse and validate a scenario file; raises ScenarioError on any defect."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"malformed scenario file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"scenario file {path}: top level must be an object")
    _check_keys(doc, _TOP_KEYS, "scenario file")
    for key in _TOP_KEYS:
        if key not in doc:
            raise ScenarioError(f"scenario file missing key '{key}'")
    _check_keys(doc["params"], _PARAM_KEYS, "params")
    try:
        params = ScenarioParams(**doc["params"])
    except TypeError as exc:
        raise ScenarioError(f"bad params: {exc}") from exc

    def entities(key, cls):
        out = []
        for idx, ent in enumerate(doc[key]):
            _check_keys(ent, _ENTITY_KEYS, f"{key}[{idx}]")
            missing = _ENTITY_KEYS - set(ent)
            if missing:
                raise ScenarioError(f"{key}[{idx}] missing {sorted(missing)}")
            out.append(cls(id=idx, **{k: float(ent[k]) for k in ("x", "y", "vx", "vy")}))
        return out

    agents = []
    for idx, ent in enumerate(doc["agents"]):
        _check_keys(ent, _ENTITY_KEYS, f"agents[{idx}]")
        x, y = float(ent["x"]), float(ent["y"])
        vx, vy = float(ent["vx"]), float(ent["vy"])
        speed = math.hypot(vx, vy)
        if speed > params.v_max * (1.0 + 1e-9) + 1e-12:
            raise ScenarioError(
                f"agents[{idx}] speed {speed} exceeds v_max {params.v_max}")
        heading = math.atan2(vy, vx) if speed > 0 else 0.0
        agents.append(AgentState(id=idx, x=x, y=y, vx=vx, vy=vy, heading=heading))
    threats = entities("radar_missiles", RadarMissileState)
    targets = entities("targets", TargetState)

    state = ScenarioState(tick=0, params=params, agents=tuple(agents),
                          radar_missiles=tuple(threats), targets=tuple(targets),
                          rng_seed=int(doc["seed"]))
    return state


def save_scenario(state: ScenarioState, path):
    """Inverse of load_scenario; float round-trip is exact (repr-based JSON)."""
    doc = {
        "params": asdict(state.params),
        "agents": [{"x": a.x, "y": a.y, "vx": a.vx, "vy": a.vy} for a in state.agents],
        "targets": [{"x": t.x, "y": t.y, "vx": t.vx, "vy": t.vy} for t in state.targets],
        "radar_missiles": [{"x": o.x, "y": o.y, "vx": o.vx, "vy": o.vy}
                           for o in state.radar_missiles],
        "seed": state.rng_seed,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Entity motion
# ---------------------------------------------------------------------------

def _reflect_into(v, lo, hi):
    # fold the value back into [lo, hi]; steps are small so this rarely loops
    while v < lo or v > hi:
        if v < lo:
            v = 2.0 * lo - v
        else:
            v = 2.0 * hi - v
    return v


def advance_entities(state: ScenarioState, rng: np.random.Generator) -> ScenarioState:
    """Random-walk step for alive targets and all threats; agents untouched.

    Each mover is displaced by exactly speed*dt in a uniformly random
    direction, reflecting off the region boundary (reflection never
    lengthens the realized displacement). Draw order is fixed (targets by
    index, then threats by index) so a shared generator stays reproducible.
    """
    p = state.params
    side = p.region_side
    dt = p.dt

    def walk(x, y, step):
        ang = rng.uniform(0.0, 2.0 * math.pi)
        nx = _reflect_into(x + step * math.cos(ang), 0.0, side)
        ny = _reflect_into(y + step * math.sin(ang), 0.0, side)
        return nx, ny

    targets = []
    t_step = p.target_max_speed * dt
    for t in state.targets:
        if not t.alive or t_step == 0.0:
            targets.append(t)
            continue
        nx, ny = walk(t.x, t.y, t_step)
        targets.append(replace(t, x=nx, y=ny, vx=(nx - t.x) / dt, vy=(ny - t.y) / dt))

    threats = []
    o_step = p.threat_speed * dt
    for o in state.radar_missiles:
        if o_step == 0.0:
            threats.append(o)
            continue
        nx, ny = walk(o.x, o.y, o_step)
        threats.append(replace(o, x=nx, y=ny, vx=(nx - o.x) / dt, vy=(ny - o.y) / dt))

    return replace(state, targets=tuple(targets), radar_missiles=tuple(threats))
