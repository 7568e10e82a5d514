"""Target assignment: virtual duplication plus a weighted Hungarian solve.

Targets are copied cyclically until the bipartite problem is square, edge
weights are lambda over the agent-target distance (closer is heavier), and
a maximum-weight perfect matching is found via vertex labels and augmenting
paths. The matching plus final labels form a Kuhn-Munkres certificate:
labels stay feasible and matched edges are tight.

Note on the labeling convention: maximization requires l(i)+l(j) >= w(i,j)
with l(i) initialized to the row maximum; the equality subgraph and slack
minimization then behave as expected.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .scenario import ScenarioState

COINCIDENT_DISTANCE = 1e-9   # distances below this are capped (weight ceiling)


@dataclass(frozen=True)
class LabeledBipartiteGraph:
    """Square weighted bipartite instance with vertex labels."""

    agent_ids: tuple          # row index -> agent id
    slot_target_ids: tuple    # column index -> real target id (virtual_of)
    weights: np.ndarray       # (n, n) edge weights
    labels_left: np.ndarray
    labels_right: np.ndarray

    @property
    def size(self):
        return len(self.agent_ids)


@dataclass(frozen=True)
class AssignmentTable:
    """agent id -> real target id, with the context it was solved in."""

    mapping: dict
    tick: int
    total_weight: float
    agent_ids: tuple          # active agents at solve time (sorted)
    target_ids: tuple         # alive targets at solve time (sorted)

    def __contains__(self, agent_id):
        return agent_id in self.mapping

    def __getitem__(self, agent_id):
        return self.mapping[agent_id]


def duplicate_targets(n_slots: int, alive_targets) -> tuple:
    """Cycle alive target ids until there are n_slots of them.

    Rebuilding the cyclic list after an agent loss is equivalent to deleting
    the newest copy of the most-duplicated target, so no duplication state
    needs to be carried between solves.
    """
    ids = [t.id for t in alive_targets]
    if not ids:
        raise ValueError("cannot duplicate an empty target set")
    if n_slots < len(ids):
        # more targets than agents: coverage is impossible, take a prefix
        return tuple(ids[:n_slots])
    return tuple(ids[i % len(ids)] for i in range(n_slots))


def build_graph(state: ScenarioState, slots, lam: float) -> LabeledBipartiteGraph:
    """Complete bipartite graph of active agents vs target slots."""
    agents = state.active_agents()
    targets = {t.id: t for t in state.targets}
    n = len(agents)
    if n != len(slots):
        raise ValueError(f"{n} agents vs {len(slots)} slots; graph must be square")
    w = np.empty((n, n))
    for r, agent in enumerate(agents):
        for c, tid in enumerate(slots):
            t = targets[tid]
            d = np.hypot(agent.x - t.x, agent.y - t.y)
            w[r, c] = lam / max(d, COINCIDENT_DISTANCE)
    return LabeledBipartiteGraph(
        agent_ids=tuple(a.id for a in agents),
        slot_target_ids=tuple(slots),
        weights=w,
        labels_left=w.max(axis=1) if n else np.empty(0),
        labels_right=np.zeros(n))


def solve_assignment(graph: LabeledBipartiteGraph, tick: int = 0) -> AssignmentTable:
    """Maximum-weight perfect matching; deterministic under index-order ties."""
    n = graph.size
    w = graph.weights
    if w.shape != (n, n):
        raise ValueError(f"non-square weight matrix {w.shape}")
    row_to_col, _, _ = _kernels.km_match(w)
    mapping = {graph.agent_ids[r]: graph.slot_target_ids[row_to_col[r]]
               for r in range(n)}
    total = float(sum(w[r, row_to_col[r]] for r in range(n)))
    return AssignmentTable(
        mapping=mapping, tick=tick, total_weight=total,
        agent_ids=tuple(sorted(graph.agent_ids)),
        target_ids=tuple(sorted(set(graph.slot_target_ids))))


def solve_for_state(state: ScenarioState, tick: int = 0) -> AssignmentTable:
    """duplicate_targets -> build_graph -> solve_assignment in one call."""
    agents = state.active_agents()
    slots = duplicate_targets(len(agents), state.alive_targets())
    graph = build_graph(state, slots, state.params.assignment_scale)
    return solve_assignment(graph, tick=tick)


def maybe_reassign(state: ScenarioState, table, period: int) -> AssignmentTable:
    """Re-solve on schedule or when the set of live participants changed."""
    tick = state.tick
    agents_now = tuple(sorted(a.id for a in state.active_agents()))
    targets_now = tuple(sorted(t.id for t in state.alive_targets()))
    due = (
        table is None
        or tick == 0
        or tick % period == 0
        or agents_now != table.agent_ids
        or targets_now != table.target_ids
    )
    if not due:
        return table
    return solve_for_state(state, tick=tick)
