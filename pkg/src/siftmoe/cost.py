"""Per-layer latency and energy accounting for local computing and
offloaded expert execution, plus the marginal-cost tables that drive the
assignment solvers.

Node 0 is always the user; every other node is a helper reachable over a
wireless link. Loads are token counts. Helper energy is the minimum uplink
transmission energy when the uplink window is stretched to fill the layer
deadline, which makes it a discretely convex function of the load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import LinkParams, downlink_rate, uplink_energy

__all__ = [
    "NodeParams",
    "ModelParams",
    "MarginalCostTable",
    "BUDGET_EPS_S",
    "local_energy",
    "local_latency",
    "helper_time_budget",
    "helper_load_feasible",
    "helper_energy",
    "max_load",
    "marginal_costs",
    "table_from_energy",
]

# Uplink windows at or below this floor count as infeasible; it keeps the
# energy formula away from a division by a vanishing duration.
BUDGET_EPS_S = 1e-9

USER_NODE_ID = 0


@dataclass(frozen=True)
class NodeParams:
    """One edge node: the user (node 0) or a helper."""

    node_id: int
    compute_flops: float          # expert compute capability [FLOP/s]
    load_latency_s: float = 0.0   # expert weight-loading latency [s]
    load_power_w: float = 0.0     # loading power, user only [W]
    compute_power_w: float = 0.0  # compute power, user only [W]
    link: LinkParams | None = None  # wireless link, helpers only

    def __post_init__(self):
        if self.node_id < 0:
            raise ValueError("node_id must be nonnegative")
        if self.compute_flops <= 0:
            raise ValueError("compute_flops must be positive")
        if self.load_latency_s < 0:
            raise ValueError("load_latency_s must be nonnegative")
        if self.is_user:
            if self.link is not None:
                raise ValueError("the user node has no wireless link")
        else:
            if self.link is None:
                raise ValueError("helper nodes require link parameters")

    @property
    def is_user(self) -> bool:
        return self.node_id == USER_NODE_ID

    @classmethod
    def user(
        cls,
        compute_flops: float,
        load_latency_s: float,
        load_power_w: float,
        compute_power_w: float,
    ) -> "NodeParams":
        return cls(
            node_id=USER_NODE_ID,
            compute_flops=compute_flops,
            load_latency_s=load_latency_s,
            load_power_w=load_power_w,
            compute_power_w=compute_power_w,
        )

    @classmethod
    def helper(
        cls,
        node_id: int,
        compute_flops: float,
        link: LinkParams,
        load_latency_s: float = 0.0,
    ) -> "NodeParams":
        if node_id == USER_NODE_ID:
            raise ValueError("helper ids start at 1")
        return cls(
            node_id=node_id,
            compute_flops=compute_flops,
            load_latency_s=load_latency_s,
            link=link,
        )


@dataclass(frozen=True)
class ModelParams:
    """Static model constants shared by every layer."""

    hidden_bits: float        # payload per token per direction [bits]
    flops_per_token: float    # expert workload per token [FLOPs]
    num_layers: int
    num_experts: int          # equals the number of edge nodes
    top_k: int
    layer_deadline_s: float   # per-layer latency limit [s]

    def __post_init__(self):
        if min(self.hidden_bits, self.flops_per_token, self.layer_deadline_s) <= 0:
            raise ValueError("model constants must be positive")
        if self.num_layers < 1 or self.num_experts < 1:
            raise ValueError("num_layers and num_experts must be >= 1")
        if not (1 <= self.top_k <= self.num_experts):
            raise ValueError("top_k must lie in [1, num_experts]")


def local_energy(node: NodeParams, model: ModelParams, d_ue: int) -> float:
    """User-side energy for processing ``d_ue`` tokens locally [J].

    A one-off load term is charged whenever at least one token runs locally,
    plus a linear compute term.
    """
    _require_user(node)
    if d_ue < 0:
        raise ValueError("token count must be nonnegative")
    if d_ue == 0:
        return 0.0
    compute_s = d_ue * model.flops_per_token / node.compute_flops
    return node.load_power_w * node.load_latency_s + node.compute_power_w * compute_s


def local_latency(node: NodeParams, model: ModelParams, d_ue: int) -> float:
    """User-side latency for ``d_ue`` local tokens [s]."""
    _require_user(node)
    if d_ue < 0:
        raise ValueError("token count must be nonnegative")
    if d_ue == 0:
        return 0.0
    return node.load_latency_s + d_ue * model.flops_per_token / node.compute_flops


def helper_time_budget(
    node: NodeParams, model: ModelParams, fading_dl: float, d: int
) -> float:
    """Uplink window left after compute and downlink for ``d`` tokens [s].

    Returns T - d * (phi/C_n + b/R_dl). A nonpositive value signals that the
    load does not fit the deadline; callers must check.
    """
    _require_helper(node)
    if d < 1:
        raise ValueError("helper_time_budget requires d >= 1")
    rate_dl = downlink_rate(node.link, fading_dl)
    per_token = model.flops_per_token / node.compute_flops + model.hidden_bits / rate_dl
    return model.layer_deadline_s - d * per_token


def helper_load_feasible(
    node: NodeParams, model: ModelParams, fading_dl: float, d: int
) -> bool:
    """True when ``d`` tokens leave a usable uplink window.

    The window must exceed the epsilon floor and still cover the helper's
    expert-loading latency, which runs in parallel with the uplink.
    """
    budget = helper_time_budget(node, model, fading_dl, d)
    return budget > BUDGET_EPS_S and node.load_latency_s <= budget


def helper_energy(
    node: NodeParams,
    model: ModelParams,
    fading_ul: float,
    fading_dl: float,
    d: int,
) -> float:
    """Minimum uplink energy for sending ``d`` tokens to this helper [J].

    The uplink stretches over the full residual window, so the helper's
    total latency equals the deadline exactly whenever it is active.
    """
    _require_helper(node)
    if d < 0:
        raise ValueError("token count must be nonnegative")
    if d == 0:
        return 0.0
    if not helper_load_feasible(node, model, fading_dl, d):
        raise ValueError(f"load {d} exceeds latency capacity of node {node.node_id}")
    budget = helper_time_budget(node, model, fading_dl, d)
    return uplink_energy(node.link, fading_ul, d * model.hidden_bits, budget)


def max_load(node: NodeParams, model: ModelParams, fading_dl: float | None = None) -> int:
    """Largest token load the node can serve inside the deadline."""
    if node.is_user:
        if model.layer_deadline_s < node.load_latency_s:
            return 0
        per_token = model.flops_per_token / node.compute_flops
        d = int((model.layer_deadline_s - node.load_latency_s) / per_token)
        # Guard the closed form against float rounding on either side.
        while d >= 1 and local_latency(node, model, d) > model.layer_deadline_s:
            d -= 1
        while local_latency(node, model, d + 1) <= model.layer_deadline_s:
            d += 1
        return max(d, 0)

    if fading_dl is None:
        raise ValueError("helper max_load requires the downlink fading")
    rate_dl = downlink_rate(node.link, fading_dl)
    per_token = model.flops_per_token / node.compute_flops + model.hidden_bits / rate_dl
    d = max(int(model.layer_deadline_s / per_token) + 1, 1)
    while d >= 1 and not helper_load_feasible(node, model, fading_dl, d):
        d -= 1
    return max(d, 0)


@dataclass
class MarginalCostTable:
    """Per-node slot prices: ``costs[k]`` is the extra energy of the
    (k+1)-th token, ``energies[d]`` the exact total at load d.

    Helper tables are nondecreasing (discrete convexity of the uplink
    energy); the user table is flat after the first entry, which also
    carries the one-off loading charge.
    """

    node_id: int
    costs: np.ndarray     # length d_max
    d_max: int
    energies: np.ndarray  # length d_max + 1, energies[0] == 0

    def __post_init__(self):
        self.costs = np.asarray(self.costs, dtype=float)
        self.energies = np.asarray(self.energies, dtype=float)
        if len(self.costs) != self.d_max:
            raise ValueError("costs length must equal d_max")
        if len(self.energies) != self.d_max + 1:
            raise ValueError("energies length must equal d_max + 1")

    def energy_at(self, d: int) -> float:
        return float(self.energies[d])


def table_from_energy(
    node_id: int, energy_of_load: Callable[[int], float], d_max: int
) -> MarginalCostTable:
    """Build a marginal table from any exact load-to-energy function."""
    energies = np.array([energy_of_load(d) for d in range(d_max + 1)])
    costs = np.diff(energies) if d_max > 0 else np.empty(0)
    return MarginalCostTable(node_id=node_id, costs=costs, d_max=d_max, energies=energies)


def marginal_costs(
    node: NodeParams,
    model: ModelParams,
    fading_ul: float | None = None,
    fading_dl: float | None = None,
    d_cap: int | None = None,
) -> MarginalCostTable:
    """Marginal-cost table for one node under the given fading draw.

    ``d_cap`` truncates the table (loads can never exceed the token count),
    which keeps table construction cheap when the latency limit alone would
    allow enormous loads.
    """
    d_max = max_load(node, model, fading_dl)
    if d_cap is not None:
        d_max = min(d_max, d_cap)
    if node.is_user:
        return table_from_energy(node.node_id, lambda d: local_energy(node, model, d), d_max)
    if fading_ul is None or fading_dl is None:
        raise ValueError("helper tables require uplink and downlink fading")
    return table_from_energy(
        node.node_id,
        lambda d: helper_energy(node, model, fading_ul, fading_dl, d),
        d_max,
    )


def _require_user(node: NodeParams) -> None:
    if not node.is_user:
        raise ValueError("operation applies to the user node only")


def _require_helper(node: NodeParams) -> None:
    if node.is_user:
        raise ValueError("operation applies to helper nodes only")
