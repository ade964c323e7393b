"""Similarity-aware accuracy machinery.

Replacing an expert whose output vector is u with one whose output is v
changes the layer output by ``g * ||u - v||``, and the law of cosines turns
``||u - v||`` into a function of the two norms and their cosine similarity.
Skipping is the special case of a zero substitute. These per-token bounds
accumulate across layers through the experts' Lipschitz constants, which is
what lets a final-output deviation budget be translated into a per-layer
allowance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "SKIP",
    "LayerTrace",
    "ModelConstants",
    "BudgetSpec",
    "ExpertMapping",
    "pair_deviation",
    "token_deviation_bound",
    "accumulated_bound",
    "layer_budget",
    "feasible_mappings",
]

SKIP = -1


@dataclass
class LayerTrace:
    """Realized per-token statistics of one MoE layer.

    top_sets : (M, K) expert ids ranked by gating score
    gating   : (M, K) scores over each token's top set, rows sum to 1
    norms    : (M, N) output norm of every expert for every token
    cosines  : (M, N, N) pairwise output cosine similarity per token
    """

    layer_id: int
    top_sets: np.ndarray
    gating: np.ndarray
    norms: np.ndarray
    cosines: np.ndarray

    def __post_init__(self):
        self.top_sets = np.asarray(self.top_sets, dtype=int)
        self.gating = np.asarray(self.gating, dtype=float)
        self.norms = np.asarray(self.norms, dtype=float)
        self.cosines = np.asarray(self.cosines, dtype=float)
        m, k = self.top_sets.shape
        n = self.norms.shape[1]
        if self.gating.shape != (m, k):
            raise ValueError("gating shape must match top_sets")
        if self.norms.shape != (m, n) or self.cosines.shape != (m, n, n):
            raise ValueError("norms/cosines shapes inconsistent")
        if np.any(self.norms < 0):
            raise ValueError("output norms must be nonnegative")
        if np.any(np.abs(self.gating.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("gating scores must sum to 1 per token")
        if np.any(self.gating < 0):
            raise ValueError("gating scores must be nonnegative")
        if np.any(self.top_sets < 0) or np.any(self.top_sets >= n):
            raise ValueError("top set contains an unknown expert id")
        for row in self.top_sets:
            if len(set(row.tolist())) != k:
                raise ValueError("top set entries must be distinct")
        if not np.allclose(self.cosines, self.cosines.transpose(0, 2, 1), atol=1e-9):
            raise ValueError("cosine matrices must be symmetric")
        diag = self.cosines[:, np.arange(n), np.arange(n)]
        if not np.allclose(diag, 1.0, atol=1e-9):
            raise ValueError("cosine matrices must have unit diagonal")
        if np.any(self.cosines < -1.0 - 1e-9) or np.any(self.cosines > 1.0 + 1e-9):
            raise ValueError("cosine values must lie in [-1, 1]")

    @property
    def num_tokens(self) -> int:
        return self.top_sets.shape[0]

    @property
    def num_experts(self) -> int:
        return self.norms.shape[1]

    @property
    def top_k(self) -> int:
        return self.top_sets.shape[1]

    def norm_ratio(self, token: int, i: int, j: int) -> float:
        """Output-norm ratio ||FFN_j|| / ||FFN_i|| for one token."""
        return float(self.norms[token, j] / self.norms[token, i])


@dataclass(frozen=True)
class ModelConstants:
    """Per-layer output bound and Lipschitz ceiling of the expert stacks."""

    b_max: np.ndarray          # length L, uniform output-norm bound per layer
    lipschitz_max: np.ndarray  # length L, largest expert Lipschitz constant per layer

    def __post_init__(self):
        object.__setattr__(self, "b_max", np.asarray(self.b_max, dtype=float))
        object.__setattr__(self, "lipschitz_max", np.asarray(self.lipschitz_max, dtype=float))
        if self.b_max.shape != self.lipschitz_max.shape or self.b_max.ndim != 1:
            raise ValueError("b_max and lipschitz_max must be 1-d and equal length")
        if np.any(self.b_max <= 0) or np.any(self.lipschitz_max <= 0):
            raise ValueError("model constants must be positive")

    @property
    def num_layers(self) -> int:
        return len(self.b_max)


@dataclass(frozen=True)
class BudgetSpec:
    """Final-output deviation budget and its per-layer split.

    ``theta_alloc`` must be nonnegative and sum to ``theta``. ``kappa``
    optionally caps the accumulated deviation after each intermediate layer;
    +inf disables a cap.
    """

    theta: float
    theta_alloc: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta_alloc", np.asarray(self.theta_alloc, dtype=float))
        object.__setattr__(self, "kappa", np.asarray(self.kappa, dtype=float))
        if self.theta_alloc.ndim != 1 or self.kappa.shape != self.theta_alloc.shape:
            raise ValueError("theta_alloc and kappa must be 1-d and equal length")
        if np.any(self.theta_alloc < 0):
            raise ValueError("per-layer allocations must be nonnegative")
        if abs(self.theta_alloc.sum() - self.theta) > 1e-9 * max(1.0, abs(self.theta)):
            raise ValueError("allocations must sum to theta")

    @classmethod
    def uniform(cls, theta: float, num_layers: int, kappa: Sequence[float] | None = None) -> "BudgetSpec":
        alloc = np.full(num_layers, theta / num_layers)
        if kappa is None:
            kappa = np.full(num_layers, np.inf)
        return cls(theta=theta, theta_alloc=alloc, kappa=np.asarray(kappa, dtype=float))


@dataclass(frozen=True)
class ExpertMapping:
    """Per-token substitution map, aligned with the token's ranked top set.

    ``targets[k]`` is the expert actually executed in place of the k-th top
    expert, or SKIP. Non-skip targets are distinct and there are at most K
    of them.
    """

    targets: tuple[int, ...]

    def __post_init__(self):
        active = [t for t in self.targets if t != SKIP]
        if len(set(active)) != len(active):
            raise ValueError("a target expert may be used at most once")

    @classmethod
    def identity(cls, top_set: Iterable[int]) -> "ExpertMapping":
        return cls(tuple(int(i) for i in top_set))

    @property
    def active_targets(self) -> tuple[int, ...]:
        return tuple(t for t in self.targets if t != SKIP)

    def describe(self, top_set: Iterable[int]) -> str:
        """Human/CSV form like ``2:2;5:skip``."""
        parts = []
        for src, dst in zip(top_set, self.targets):
            parts.append(f"{int(src)}:{'skip' if dst == SKIP else int(dst)}")
        return ";".join(parts)


def pair_deviation(trace: LayerTrace, token: int, expert: int, target: int) -> float:
    """Deviation contribution of executing ``target`` instead of ``expert``.

    Returns ||FFN_expert|| for a skip, zero for the identity, and the
    law-of-cosines distance between the two output vectors otherwise.
    """
    if not 0 <= expert < trace.num_experts:
        raise ValueError(f"unknown expert id {expert}")
    if expert not in trace.top_sets[token]:
        raise ValueError(f"expert {expert} is not in token {token}'s top set")
    ni = float(trace.norms[token, expert])
    if target == SKIP:
        return ni
    if not 0 <= target < trace.num_experts:
        raise ValueError(f"unknown target expert id {target}")
    if target == expert:
        return 0.0
    nt = float(trace.norms[token, target])
    cos = float(trace.cosines[token, expert, target])
    # ni * sqrt(1 + rho^2 - 2 rho cos) with rho = nt/ni, written so a zero
    # norm cannot divide by zero and rounding cannot go negative.
    return math.sqrt(max(ni * ni + nt * nt - 2.0 * ni * nt * cos, 0.0))


def token_deviation_bound(trace: LayerTrace, token: int, mapping: ExpertMapping) -> float:
    """Gating-weighted deviation bound of one token under ``mapping``."""
    top = trace.top_sets[token]
    if len(mapping.targets) != len(top):
        raise ValueError("mapping length must match the top set")
    total = 0.0
    for g, src, dst in zip(trace.gating[token], top, mapping.targets):
        total += float(g) * pair_deviation(trace, token, int(src), int(dst))
    return total


def accumulated_bound(
    constants: ModelConstants, per_layer_delta: Sequence[float], upto: int
) -> float:
    """Worst-case output deviation after the first ``upto`` layers.

    Each layer contributes twice its output bound plus its own selection
    deviation, amplified by the Lipschitz constants of every later layer:

        sum_{r=1..upto} (2 * B_r + delta_r) * prod_{t=r+1..upto} beta_t
    """
    if not 0 <= upto <= constants.num_layers:
        raise ValueError("upto out of range")
    if len(per_layer_delta) < upto:
        raise ValueError("need a deviation for every included layer")
    total = 0.0
    for r in range(upto):
        amplify = 1.0
        for t in range(r + 1, upto):
            amplify *= constants.lipschitz_max[t]
        total += (2.0 * constants.b_max[r] + float(per_layer_delta[r])) * amplify
    return total


def layer_budget(
    constants: ModelConstants,
    budget: BudgetSpec,
    realized_delta: Sequence[float],
    layer: int,
) -> float:
    """Largest tolerable selection deviation at ``layer`` (0-based).

    Two ceilings apply: the intermediate cap on the deviation accumulated
    through this layer (given the earlier layers' realized deviations), and
    this layer's share of the final budget deflated by the amplification of
    all later layers. The result may be negative, meaning nothing beyond the
    exact top-K mapping is admissible.
    """
    L = constants.num_layers
    if not 0 <= layer < L:
        raise ValueError("layer out of range")
    if len(realized_delta) < layer:
        raise ValueError("need realized deviations for all earlier layers")

    carried = 0.0
    for r in range(layer):
        amplify = 1.0
        for t in range(r + 1, layer + 1):
            amplify *= constants.lipschitz_max[t]
        carried += (2.0 * constants.b_max[r] + float(realized_delta[r])) * amplify
    kappa_branch = budget.kappa[layer] - 2.0 * constants.b_max[layer] - carried

    tail = 1.0
    for t in range(layer + 1, L):
        tail *= constants.lipschitz_max[t]
    theta_branch = budget.theta_alloc[layer] / tail - 2.0 * constants.b_max[layer]

    return float(min(kappa_branch, theta_branch))


def feasible_mappings(
    trace: LayerTrace,
    token: int,
    candidate_nodes: Iterable[int],
    eta: float,
) -> tuple[ExpertMapping, float] | None:
    """Cheapest admissible substitution of the token's top set onto ``candidate_nodes``.

    Every candidate node must execute exactly one top expert (node ids and
    expert ids coincide); top experts not matched to a node are skipped. The
    mapping minimizing the deviation bound is returned with its bound, or
    None when even the best exceeds the budget. A zero-deviation mapping is
    always admissible, so a negative budget degenerates to exact top-K.
    """
    nodes = tuple(sorted(set(int(v) for v in candidate_nodes)))
    k = trace.top_k
    if not 1 <= len(nodes) <= k:
        raise ValueError("candidate subset size must lie in [1, K]")
    top = trace.top_sets[token]
    gating = trace.gating[token]

    best_bound = math.inf
    best_targets: tuple[int, ...] | None = None
    for positions in permutations(range(k), len(nodes)):
        targets = [SKIP] * k
        for node, pos in zip(nodes, positions):
            targets[pos] = node
        bound = 0.0
        for g, src, dst in zip(gating, top, targets):
            bound += float(g) * pair_deviation(trace, token, int(src), int(dst))
        key = (bound, tuple(targets))
        if best_targets is None or key < (best_bound, best_targets):
            best_bound, best_targets = key

    if best_bound <= max(eta, 0.0):
        return ExpertMapping(best_targets), best_bound
    return None
