"""Token-to-node assignment solvers for the slow-fading selection problem.

Every token must activate between 1 and K nodes chosen from its feasible
subsets, each node serves at most its capacity, and the objective is the sum
of per-node energies. Because helper energy is discretely convex in load,
the problem decomposes into unit slots priced by marginal costs: an optimal
assignment occupies a prefix of slots on each node. The K = 1 case is a
min-cost flow solved by successive shortest augmenting paths; the general
case is a dynamic program over the node load vector. A brute-force
enumerator backs both as a test oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .cost import MarginalCostTable
from .error_budget import ExpertMapping, LayerTrace, feasible_mappings

__all__ = [
    "TokenInfeasibleError",
    "FeasibleOption",
    "SelectionPlan",
    "build_feasible_sets",
    "solve_single_token",
    "solve_ssap_k1",
    "solve_dp",
    "brute_force",
    "DEFAULT_STATE_CAP",
]

DEFAULT_STATE_CAP = 20_000_000


class TokenInfeasibleError(Exception):
    """No admissible node subset exists for a token under the current budget."""

    def __init__(self, token: int, reason: str = "token infeasible under budget"):
        self.token = token
        super().__init__(f"token {token}: {reason}")


@dataclass(frozen=True)
class FeasibleOption:
    """One admissible choice for a token: a node subset, the cheapest
    substitution map realizing it, and that map's deviation bound."""

    nodes: tuple[int, ...]
    mapping: ExpertMapping
    bound: float


@dataclass
class SelectionPlan:
    """Solved assignment for one layer."""

    token_nodes: list[tuple[int, ...]]
    token_mappings: list[ExpertMapping]
    token_bounds: list[float]
    loads: dict[int, int]
    objective_j: float

    @property
    def num_tokens(self) -> int:
        return len(self.token_nodes)

    def assignment(self, token: int, node: int) -> int:
        """Binary selection indicator x_{m,v}."""
        return 1 if node in self.token_nodes[token] else 0


def build_feasible_sets(
    trace: LayerTrace,
    tables: Mapping[int, MarginalCostTable],
    eta: float,
) -> list[list[FeasibleOption]]:
    """Enumerate each token's admissible node subsets of size 1..K.

    Only nodes that can serve at least one token within the deadline are
    candidates. A subset survives when some substitution map onto it meets
    the deviation budget. Subsets come out in canonical order (size, then
    node ids). Raises TokenInfeasibleError when a token has no options.
    """
    candidates = sorted(v for v, t in tables.items() if t.d_max >= 1)
    k = trace.top_k
    per_token: list[list[FeasibleOption]] = []
    for m in range(trace.num_tokens):
        options: list[FeasibleOption] = []
        for size in range(1, k + 1):
            for subset in combinations(candidates, size):
                hit = feasible_mappings(trace, m, subset, eta)
                if hit is not None:
                    mapping, bound = hit
                    options.append(FeasibleOption(subset, mapping, bound))
        if not options:
            raise TokenInfeasibleError(m)
        per_token.append(options)
    return per_token


def _objective(tables: Mapping[int, MarginalCostTable], loads: Mapping[int, int]) -> float:
    """Exact plan energy: sum of per-node load energies in node-id order."""
    return float(sum(tables[v].energies[loads.get(v, 0)] for v in sorted(tables)))


def _plan_from_choices(
    choices: Sequence[FeasibleOption],
    tables: Mapping[int, MarginalCostTable],
) -> SelectionPlan:
    loads: dict[int, int] = {}
    for opt in choices:
        for v in opt.nodes:
            loads[v] = loads.get(v, 0) + 1
    return SelectionPlan(
        token_nodes=[opt.nodes for opt in choices],
        token_mappings=[opt.mapping for opt in choices],
        token_bounds=[opt.bound for opt in choices],
        loads=loads,
        objective_j=_objective(tables, loads),
    )


def solve_single_token(
    options: Sequence[FeasibleOption],
    costs: Mapping[int, float],
    tables: Mapping[int, MarginalCostTable] | None = None,
) -> SelectionPlan:
    """Decoding-phase rule: pick the subset minimizing the summed first-slot
    costs. With K = 1 this is the plain argmin over per-node costs."""
    if not options:
        raise TokenInfeasibleError(0)
    best = None
    best_cost = math.inf
    for opt in options:  # canonical order; strict < keeps the smallest subset on ties
        total = sum(costs[v] for v in opt.nodes)
        if total < best_cost:
            best, best_cost = opt, total
    loads = {v: 1 for v in best.nodes}
    objective = (
        _objective(tables, loads) if tables is not None else float(best_cost)
    )
    return SelectionPlan(
        token_nodes=[best.nodes],
        token_mappings=[best.mapping],
        token_bounds=[best.bound],
        loads=loads,
        objective_j=objective,
    )


def solve_ssap_k1(
    feasible: Sequence[Sequence[FeasibleOption]],
    tables: Mapping[int, MarginalCostTable],
) -> SelectionPlan:
    """Optimal one-node-per-token assignment via successive shortest paths.

    The residual network has a source, one node per token, one node per edge
    node, and a sink. Slot prices appear on the edge-node-to-sink arcs
    (forward: next marginal cost; reverse: refund of the last occupied
    slot), so reassignments ride zero-cost reversals while the sink arcs
    reprice the loads. Bellman-Ford handles the negative reverse arcs. One
    unit of flow is pushed per token; running out of augmenting paths means
    the instance is infeasible.
    """
    M = len(feasible)
    if M == 0:
        return SelectionPlan([], [], [], {}, 0.0)
    option_by_token_node: list[dict[int, FeasibleOption]] = []
    for m, opts in enumerate(feasible):
        by_node: dict[int, FeasibleOption] = {}
        for opt in opts:
            if len(opt.nodes) != 1:
                raise ValueError("solve_ssap_k1 requires singleton subsets (K = 1)")
            by_node[opt.nodes[0]] = opt
        option_by_token_node.append(by_node)

    node_ids = sorted({v for by in option_by_token_node for v in by})
    caps = {v: tables[v].d_max for v in node_ids}
    # Graph node numbering: source, tokens, edge nodes, sink.
    SRC = 0
    token_of = {m: 1 + m for m in range(M)}
    gnode_of = {v: 1 + M + i for i, v in enumerate(node_ids)}
    SINK = 1 + M + len(node_ids)
    n_vertices = SINK + 1

    assigned: list[int | None] = [None] * M
    loads = {v: 0 for v in node_ids}

    for _ in range(M):
        arcs: list[tuple[int, int, float]] = []
        for m in range(M):
            if assigned[m] is None:
                arcs.append((SRC, token_of[m], 0.0))
            else:
                arcs.append((token_of[m], SRC, 0.0))
        for m in range(M):
            for v in sorted(option_by_token_node[m]):
                if assigned[m] == v:
                    arcs.append((gnode_of[v], token_of[m], 0.0))
                else:
                    arcs.append((token_of[m], gnode_of[v], 0.0))
        for v in node_ids:
            if loads[v] < caps[v]:
                arcs.append((gnode_of[v], SINK, float(tables[v].costs[loads[v]])))
            if loads[v] > 0:
                arcs.append((SINK, gnode_of[v], -float(tables[v].costs[loads[v] - 1])))

        dist = [math.inf] * n_vertices
        pred: list[tuple[int, int, float] | None] = [None] * n_vertices
        dist[SRC] = 0.0
        for _round in range(n_vertices - 1):
            changed = False
            for a, b, c in arcs:
                if dist[a] + c < dist[b]:
                    dist[b] = dist[a] + c
                    pred[b] = (a, b, c)
                    changed = True
            if not changed:
                break
        if not math.isfinite(dist[SINK]):
            stuck = next(m for m in range(M) if assigned[m] is None)
            raise TokenInfeasibleError(stuck, "no augmenting path; capacity exhausted")

        path: list[tuple[int, int, float]] = []
        at = SINK
        while at != SRC:
            arc = pred[at]
            path.append(arc)
            at = arc[0]
        for a, b, _c in reversed(path):
            if 1 <= a <= M and b > M and b != SINK:
                m = a - 1
                v = node_ids[b - 1 - M]
                assigned[m] = v
            elif a > M and a != SINK and 1 <= b <= M:
                m = b - 1
                assigned[m] = None
        loads = {v: 0 for v in node_ids}
        for m in range(M):
            if assigned[m] is not None:
                loads[assigned[m]] += 1

    choices = [option_by_token_node[m][assigned[m]] for m in range(M)]
    return _plan_from_choices(choices, tables)


def solve_dp(
    feasible: Sequence[Sequence[FeasibleOption]],
    tables: Mapping[int, MarginalCostTable],
    state_cap: int = DEFAULT_STATE_CAP,
) -> SelectionPlan:
    """Optimal assignment for any K by dynamic programming over load vectors.

    States are the reachable node-load vectors, stored sparsely; token m's
    transition adds one unit on every node of a chosen subset and pays the
    corresponding marginal slot costs. Ties prefer the earlier (smaller)
    subset so the recovered plan is deterministic.
    """
    M = len(feasible)
    if M == 0:
        return SelectionPlan([], [], [], {}, 0.0)
    node_ids = sorted({v for opts in feasible for opt in opts for v in opt.nodes})
    col = {v: j for j, v in enumerate(node_ids)}
    caps = np.array([min(tables[v].d_max, M) for v in node_ids], dtype=np.int32)
    state_bound = float(np.prod(caps.astype(float) + 1.0))
    if state_bound > state_cap:
        raise ValueError(
            f"load-vector state space ({state_bound:.2e}) exceeds the cap "
            f"({state_cap}); use the K=1 flow solver or a smaller instance"
        )
    marg = {v: np.asarray(tables[v].costs, dtype=float) for v in node_ids}
    V = len(node_ids)

    states = np.zeros((1, V), dtype=np.int32)
    cost = np.zeros(1)
    trail: list[tuple[np.ndarray, np.ndarray]] = []  # (parent_row, option_idx) per stage

    for m in range(M):
        parts_states, parts_cost, parts_parent, parts_opt = [], [], [], []
        for oi, opt in enumerate(feasible[m]):
            cols = np.array([col[v] for v in opt.nodes], dtype=int)
            ok = np.all(states[:, cols] < caps[cols], axis=1)
            if not ok.any():
                continue
            sub = states[ok]
            delta = np.zeros(len(sub))
            for v in opt.nodes:
                delta += marg[v][sub[:, col[v]]]
            new = sub.copy()
            new[:, cols] += 1
            parts_states.append(new)
            parts_cost.append(cost[ok] + delta)
            parts_parent.append(np.flatnonzero(ok))
            parts_opt.append(np.full(len(sub), oi, dtype=np.int32))
        if not parts_states:
            raise TokenInfeasibleError(m, "no capacity-feasible subset left")
        S = np.concatenate(parts_states)
        C = np.concatenate(parts_cost)
        P = np.concatenate(parts_parent)
        O = np.concatenate(parts_opt)
        # Keep the cheapest entry per state; ties resolved by option then
        # parent order. lexsort treats its last key as primary, so state
        # columns go last (column 0 most significant).
        keys = (P, O, C) + tuple(S[:, j] for j in range(V - 1, -1, -1))
        order = np.lexsort(keys)
        S, C, P, O = S[order], C[order], P[order], O[order]
        keep = np.ones(len(S), dtype=bool)
        if len(S) > 1:
            keep[1:] = np.any(S[1:] != S[:-1], axis=1)
        states, cost = S[keep], C[keep]
        trail.append((P[keep], O[keep]))

    best_rows = np.flatnonzero(cost == cost.min())
    row = int(best_rows[0])  # states are lexsorted, so this is the smallest state
    chosen_rev: list[FeasibleOption] = []
    for m in range(M - 1, -1, -1):
        parent, opt_idx = trail[m]
        chosen_rev.append(feasible[m][int(opt_idx[row])])
        row = int(parent[row])
    choices = list(reversed(chosen_rev))
    return _plan_from_choices(choices, tables)


def brute_force(
    feasible: Sequence[Sequence[FeasibleOption]],
    tables: Mapping[int, MarginalCostTable],
    max_candidates: int = 10**6,
    return_count: bool = False,
):
    """Exhaustive minimum over all per-token subset choices (test oracle).

    Only capacity violations prune the tree, so every complete feasible
    assignment is visited and counted. Ties prefer the lexicographically
    smaller sequence of subsets.
    """
    M = len(feasible)
    size = 1
    for opts in feasible:
        size *= len(opts)
        if size > max_candidates:
            raise ValueError(f"instance too large for brute force (> {max_candidates})")
    node_ids = sorted(tables)
    caps = {v: min(tables[v].d_max, M) for v in node_ids}
    loads = {v: 0 for v in node_ids}
    visited = 0
    best_key: tuple[float, tuple[tuple[int, ...], ...]] | None = None
    best_choices: list[FeasibleOption] | None = None
    stack: list[FeasibleOption] = []

    def recurse(m: int) -> None:
        nonlocal visited, best_key, best_choices
        if m == M:
            visited += 1
            obj = _objective(tables, loads)
            key = (obj, tuple(opt.nodes for opt in stack))
            if best_key is None or key < best_key:
                best_key = key
                best_choices = list(stack)
            return
        for opt in feasible[m]:
            if any(loads[v] >= caps[v] for v in opt.nodes):
                continue
            for v in opt.nodes:
                loads[v] += 1
            stack.append(opt)
            recurse(m + 1)
            stack.pop()
            for v in opt.nodes:
                loads[v] -= 1

    recurse(0)
    if best_choices is None:
        if M == 0:
            plan = SelectionPlan([], [], [], {}, 0.0)
            return (plan, visited) if return_count else plan
        raise TokenInfeasibleError(0, "no feasible complete assignment")
    plan = _plan_from_choices(best_choices, tables)
    return (plan, visited) if return_count else plan
