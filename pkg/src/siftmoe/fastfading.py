"""Fast-fading layer: slot-level adaptive bit allocation and the
deterministic surrogate energy used for expert selection.

Within a layer the uplink window is cut into equal slots whose gains vary
independently. Selection cannot depend on gains that have not been observed
yet, so it runs on a surrogate that replaces the random channel with its
inverse-mean. Transmission then follows a causal policy: each slot sends the
closed-form optimum given the observed gain and the inverse means of the
remaining slots, with the final slot flushing whatever is left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import FadingModel, LinkParams, expected_inverse_fading, uplink_energy
from .cost import ModelParams, NodeParams, helper_energy, helper_time_budget, helper_load_feasible

__all__ = [
    "SlotPlan",
    "slot_schedule",
    "surrogate_energy",
    "optimal_bits_slot",
    "run_policy",
    "expected_policy_energy",
    "uniform_baseline",
]


@dataclass
class SlotPlan:
    """Realized slot-by-slot transmission record for one helper."""

    helper_id: int
    slot_length_s: float
    bits_per_slot: np.ndarray
    fadings: np.ndarray
    energy_per_slot_j: np.ndarray

    def __post_init__(self):
        self.bits_per_slot = np.asarray(self.bits_per_slot, dtype=float)
        self.fadings = np.asarray(self.fadings, dtype=float)
        self.energy_per_slot_j = np.asarray(self.energy_per_slot_j, dtype=float)
        if not (len(self.bits_per_slot) == len(self.fadings) == len(self.energy_per_slot_j)):
            raise ValueError("slot arrays must have equal length")
        if np.any(self.bits_per_slot < 0):
            raise ValueError("per-slot bits must be nonnegative")

    @property
    def num_slots(self) -> int:
        return len(self.bits_per_slot)

    @property
    def total_bits(self) -> float:
        return float(self.bits_per_slot.sum())

    @property
    def total_energy_j(self) -> float:
        return float(self.energy_per_slot_j.sum())

    def check_total(self, total_bits: float, rel: float = 1e-6) -> None:
        if abs(self.total_bits - total_bits) > rel * max(1.0, abs(total_bits)):
            raise ValueError("per-slot bits do not sum to the payload")


def slot_schedule(budget_s: float, tau_s: float) -> tuple[int, float]:
    """Cut an uplink window into ceil(budget/tau) equal slots.

    The nominal slot length only sets the count; the actual slots share the
    window evenly so that their total equals the window exactly and the
    per-slot energy formula stays consistent with the single-shot one.
    """
    if budget_s <= 0 or tau_s <= 0:
        raise ValueError("budget and slot length must be positive")
    num_slots = max(int(math.ceil(budget_s / tau_s - 1e-12)), 1)
    return num_slots, budget_s / num_slots


def surrogate_energy(
    node: NodeParams, model: ModelParams, fading: FadingModel, d: int
) -> float:
    """Deterministic stand-in for the expected fast-fading uplink energy [J].

    The random inverse channel is replaced by E[1/h]; the uplink window is
    the residual budget computed at the fading model's mean gain. The result
    upper-bounds the optimal adaptive policy's expected energy because it
    corresponds to the best channel-oblivious allocation.
    """
    if d < 0:
        raise ValueError("token count must be nonnegative")
    if d == 0:
        return 0.0
    if fading.is_deterministic:
        return helper_energy(node, model, fading.value, fading.value, d)
    if not helper_load_feasible(node, model, fading.mean_value, d):
        raise ValueError(f"load {d} exceeds latency capacity of node {node.node_id}")
    budget = helper_time_budget(node, model, fading.mean_value, d)
    unit_gain_energy = uplink_energy(node.link, 1.0, d * model.hidden_bits, budget)
    return expected_inverse_fading(fading) * unit_gain_energy


def optimal_bits_slot(
    a: float,
    beta_remaining: float,
    h_now: float,
    future_inv_means,
    clamp: bool = True,
) -> float:
    """Closed-form optimal bits for the current slot.

    With R slots left (this one plus the future ones) the minimizer of the
    current cost plus the expected cost-to-go is

        gamma* = (a * beta + sum_j log2(h_now * E[1/h_j])) / (R * a),

    which reduces to an even split when the channel is constant. Deep fades
    can push the raw value negative; by default it is clamped into
    [0, beta_remaining] since bits cannot be negative or exceed the backlog.
    """
    if h_now <= 0:
        raise ValueError("fading must be positive")
    future = np.atleast_1d(np.asarray(future_inv_means, dtype=float))
    remaining = len(future) + 1
    log_sum = float(np.sum(np.log2(h_now * future))) if len(future) else 0.0
    gamma = (a * beta_remaining + log_sum) / (remaining * a)
    if clamp:
        gamma = min(max(gamma, 0.0), beta_remaining)
    return gamma


def run_policy(
    link: LinkParams,
    slot_length_s: float,
    fadings,
    total_bits: float,
    inv_mean,
    helper_id: int = 0,
    clamp: bool = True,
) -> SlotPlan:
    """Apply the adaptive allocation causally against a realized gain stream.

    The final slot always transmits the entire backlog, so the plan is
    feasible by construction. Per-slot energy uses the single-shot energy
    formula over one slot length.
    """
    fadings = np.asarray(fadings, dtype=float)
    q = len(fadings)
    if q < 1:
        raise ValueError("need at least one slot")
    if total_bits < 0:
        raise ValueError("total_bits must be nonnegative")
    inv = np.broadcast_to(np.asarray(inv_mean, dtype=float), (q,))
    a = 1.0 / (link.bandwidth_hz * slot_length_s)

    bits = np.zeros(q)
    energy = np.zeros(q)
    backlog = float(total_bits)
    for t in range(q):
        if t == q - 1:
            gamma = backlog
        else:
            gamma = optimal_bits_slot(a, backlog, float(fadings[t]), inv[t + 1 :], clamp=clamp)
        bits[t] = gamma
        energy[t] = uplink_energy(link, float(fadings[t]), gamma, slot_length_s)
        backlog -= gamma
    return SlotPlan(
        helper_id=helper_id,
        slot_length_s=slot_length_s,
        bits_per_slot=bits,
        fadings=fadings,
        energy_per_slot_j=energy,
    )


def expected_policy_energy(
    c: float,
    a: float,
    num_slots: int,
    h_first: float,
    inv_means,
    total_bits: float,
) -> float:
    """Expected energy of the optimal policy, given the first slot's gain [J].

    Telescoping the backward recursion over Q slots gives

        c * [ Q * 2^(a*bits/Q) * ((1/h_1) * prod_t E[1/h_t])^(1/Q)
              - (1/h_1 + sum_t E[1/h_t]) ]

    with products and sums over the Q-1 future slots. Q = 1 collapses to the
    single-shot energy at the observed gain.
    """
    if num_slots < 1:
        raise ValueError("need at least one slot")
    if h_first <= 0:
        raise ValueError("fading must be positive")
    inv = np.atleast_1d(np.asarray(inv_means, dtype=float))
    if len(inv) == 1 and num_slots > 2:
        inv = np.full(num_slots - 1, float(inv[0]))
    if num_slots == 1:
        return c * (2.0 ** (a * total_bits) - 1.0) / h_first
    if len(inv) != num_slots - 1:
        raise ValueError("need an inverse mean per future slot")
    q = num_slots
    prod = (1.0 / h_first) * float(np.prod(inv))
    tail = (1.0 / h_first) + float(np.sum(inv))
    return c * (q * 2.0 ** (a * total_bits / q) * prod ** (1.0 / q) - tail)


def uniform_baseline(
    link: LinkParams,
    slot_length_s: float,
    fadings,
    total_bits: float,
    helper_id: int = 0,
) -> SlotPlan:
    """Channel-oblivious baseline: the same bit count in every slot."""
    fadings = np.asarray(fadings, dtype=float)
    q = len(fadings)
    if q < 1:
        raise ValueError("need at least one slot")
    bits = np.full(q, total_bits / q)
    energy = np.array(
        [uplink_energy(link, float(h), float(g), slot_length_s) for h, g in zip(fadings, bits)]
    )
    return SlotPlan(
        helper_id=helper_id,
        slot_length_s=slot_length_s,
        bits_per_slot=bits,
        fadings=fadings,
        energy_per_slot_j=energy,
    )
