"""Experiment harness: channel draws, baseline schemes, the full selection
pipeline, parameter sweeps, plan validation, and CSV emission.

Schemes share fading draws within a trial (common random numbers), so
per-trial comparisons between them are paired. Reports are deterministic for
a fixed scenario and seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .channel import ChannelDraw, FadingModel, expected_inverse_fading, sample_fading, uplink_energy
from .cost import (
    BUDGET_EPS_S,
    MarginalCostTable,
    NodeParams,
    helper_energy,
    helper_load_feasible,
    helper_time_budget,
    local_energy,
    local_latency,
    marginal_costs,
    max_load,
    table_from_energy,
)
from .error_budget import SKIP, ExpertMapping, token_deviation_bound
from .fastfading import run_policy, slot_schedule, surrogate_energy, uniform_baseline
from .scenario import FAST, SLOW, Scenario
from .selection import (
    FeasibleOption,
    SelectionPlan,
    TokenInfeasibleError,
    build_feasible_sets,
    solve_dp,
    solve_single_token,
    solve_ssap_k1,
)
from .traces import generate_traces

__all__ = [
    "ReportRow",
    "PlanRow",
    "SlotRow",
    "SiftMoeResult",
    "draw_channel",
    "run_topk",
    "run_siftmoe",
    "run_all",
    "sweep",
    "summarize",
    "validate_plan",
    "write_report_csv",
    "write_plan_csv",
    "write_slots_csv",
    "SCHEME_SIFTMOE",
    "SCHEME_SIFTMOE_DYNAMIC",
    "SCHEME_SIFTMOE_UNIFORM",
    "SCHEME_IDEAL",
    "SCHEME_PRACTICAL",
    "topk_assignment",
]

SCHEME_SIFTMOE = "siftmoe"
SCHEME_SIFTMOE_DYNAMIC = "siftmoe_dynamic"
SCHEME_SIFTMOE_UNIFORM = "siftmoe_uniform"
SCHEME_IDEAL = "ideal_topk"
SCHEME_PRACTICAL = "practical_topk"

SWEEP_AXES = ("bandwidth", "deadline", "error_budget")


@dataclass
class ReportRow:
    scheme: str
    sweep_value: float
    trial: int
    layer: int
    energy_j: float
    latency_s: float
    missed_tokens: int
    mean_bound: float


@dataclass
class PlanRow:
    trial: int
    layer: int
    token: int
    nodes: str
    mapping: str
    bound: float
    energy_j: float


@dataclass
class SlotRow:
    trial: int
    layer: int
    helper: int
    slot: int
    gamma_bits: float
    fading: float
    energy_j: float


@dataclass
class SiftMoeResult:
    rows: list[ReportRow]
    plan_rows: list[PlanRow]
    slot_rows: list[SlotRow]
    plans: dict[tuple[int, int], SelectionPlan]
    infeasible_layers: list[tuple[int, int, int]]  # (trial, layer, token)


def draw_channel(scenario: Scenario, trial: int, include_slots: bool | None = None) -> ChannelDraw:
    """Fading realizations for one trial.

    Each (trial, layer) owns a seed stream with one child per helper; the
    slow per-layer gain is the first draw of that child, and the fast slot
    stream replays the same child, so slow and fast runs on one seed see
    consistent randomness.
    """
    if include_slots is None:
        include_slots = scenario.regime == FAST
    model = scenario.fading
    draw = ChannelDraw()
    if include_slots:
        if scenario.slot_length_s is None:
            raise ValueError("slot draws require a slot length")
        max_slots = max(
            int(math.ceil(scenario.model.layer_deadline_s / scenario.slot_length_s)), 1
        )
    for layer in range(scenario.model.num_layers):
        ss = np.random.SeedSequence([model.rng_seed, trial, layer])
        children = ss.spawn(len(scenario.helpers))
        layer_gains: dict[int, float] = {}
        layer_slots: dict[int, np.ndarray] = {}
        for node, child in zip(scenario.helpers, children):
            layer_gains[node.node_id] = float(
                sample_fading(model, 1, np.random.default_rng(child))[0]
            )
            if include_slots:
                layer_slots[node.node_id] = sample_fading(
                    model, max_slots, np.random.default_rng(child)
                )
        draw.per_layer[layer] = layer_gains
        if include_slots:
            draw.per_slot[layer] = layer_slots
    return draw


def _downlink_fading(scenario: Scenario, draw: ChannelDraw, layer: int, node_id: int) -> float:
    """Downlink gain used for time budgets: the realized layer gain under
    slow fading, the fading model's mean under fast fading."""
    if scenario.regime == SLOW:
        return draw.per_layer[layer][node_id]
    return scenario.fading.mean_value


def _layer_tables(
    scenario: Scenario, draw: ChannelDraw, layer: int, num_tokens: int
) -> dict[int, MarginalCostTable]:
    """Marginal-cost tables for every node, capped at the token count."""
    tables: dict[int, MarginalCostTable] = {}
    for node in scenario.nodes:
        if node.is_user:
            tables[node.node_id] = marginal_costs(node, scenario.model, d_cap=num_tokens)
        elif scenario.regime == SLOW:
            h = draw.per_layer[layer][node.node_id]
            tables[node.node_id] = marginal_costs(
                node, scenario.model, fading_ul=h, fading_dl=h, d_cap=num_tokens
            )
        else:
            d_max = min(max_load(node, scenario.model, scenario.fading.mean_value), num_tokens)
            tables[node.node_id] = table_from_energy(
                node.node_id,
                lambda d, _node=node: surrogate_energy(_node, scenario.model, scenario.fading, d),
                d_max,
            )
    return tables


# ---------------------------------------------------------------------------
# Top-K baselines
# ---------------------------------------------------------------------------


def _deliverable_load(
    scenario: Scenario, node: NodeParams, fading_dl: float, demanded: int
) -> int:
    """Largest load a helper can actually serve: within the deadline and
    with the required uplink power below the configured ceiling."""
    d = min(demanded, max_load(node, scenario.model, fading_dl))
    while d >= 1:
        budget = helper_time_budget(node, scenario.model, fading_dl, d)
        bits = d * scenario.model.hidden_bits
        power = uplink_energy(node.link, fading_dl, bits, budget) / budget
        if power <= scenario.tx_power_user_max_w:
            return d
        d -= 1
    return 0


def _topk_layer(
    scenario: Scenario,
    trace,
    layer: int,
    draw: ChannelDraw,
    ideal: bool,
) -> tuple[float, float, int, float]:
    """Energy, latency, missed tokens, and mean skip bound of one layer
    under score-based routing. Ideal and practical share the transmission
    energy accounting; they differ in whether undelivered outputs count."""
    model = scenario.model
    m_tokens = trace.num_tokens
    by_node: dict[int, list[tuple[int, int]]] = {}
    for m in range(m_tokens):
        for pos, expert in enumerate(trace.top_sets[m]):
            by_node.setdefault(int(expert), []).append((m, pos))

    energy = 0.0
    missed_pairs: list[tuple[int, int]] = []
    helper_active = False
    user_latency = 0.0
    for node in scenario.nodes:
        jobs = sorted(by_node.get(node.node_id, []))
        demanded = len(jobs)
        if demanded == 0:
            continue
        if node.is_user:
            cap = max_load(node, model)
            delivered = min(demanded, cap)
            energy += local_energy(node, model, delivered)
            user_latency = local_latency(node, model, delivered)
            missed_pairs.extend(jobs[delivered:])
        else:
            helper_active = True
            h_dl = _downlink_fading(scenario, draw, layer, node.node_id)
            h_ul = (
                draw.per_layer[layer][node.node_id]
                if scenario.regime == SLOW
                else scenario.fading.mean_value
            )
            delivered = _deliverable_load(scenario, node, h_dl, demanded)
            if delivered == demanded:
                if scenario.regime == SLOW:
                    energy += helper_energy(node, model, h_ul, h_dl, delivered)
                else:
                    budget = helper_time_budget(node, model, h_dl, delivered)
                    num_slots, slot_len = slot_schedule(budget, scenario.slot_length_s)
                    fadings = draw.per_slot[layer][node.node_id][:num_slots]
                    plan = uniform_baseline(
                        node.link,
                        slot_len,
                        fadings,
                        delivered * model.hidden_bits,
                        helper_id=node.node_id,
                    )
                    energy += plan.total_energy_j
            else:
                # Delivery truncated: transmit at the power ceiling for the
                # window the deliverable load leaves open.
                if delivered >= 1:
                    budget = helper_time_budget(node, model, h_dl, delivered)
                    energy += scenario.tx_power_user_max_w * budget
                missed_pairs.extend(jobs[delivered:])

    latency = model.layer_deadline_s if helper_active else user_latency
    if ideal:
        return energy, latency, 0, 0.0
    bound_total = 0.0
    for m, pos in missed_pairs:
        g = float(trace.gating[m][pos])
        expert = int(trace.top_sets[m][pos])
        bound_total += g * float(trace.norms[m, expert])
    return energy, latency, len(missed_pairs), bound_total / m_tokens


def run_topk(
    scenario: Scenario,
    traces,
    ideal: bool,
    sweep_value: float = math.nan,
) -> list[ReportRow]:
    """Score-based routing baseline over all trials and layers."""
    scheme = SCHEME_IDEAL if ideal else SCHEME_PRACTICAL
    rows = []
    for trial in range(scenario.trials):
        draw = draw_channel(scenario, trial)
        for layer, trace in enumerate(traces):
            energy, latency, missed, mean_bound = _topk_layer(
                scenario, trace, layer, draw, ideal
            )
            rows.append(
                ReportRow(scheme, sweep_value, trial, layer, energy, latency, missed, mean_bound)
            )
    return rows


def topk_assignment(trace) -> list[tuple[int, ...]]:
    """Node subsets activated by score-based routing (sorted per token)."""
    return [tuple(sorted(int(e) for e in trace.top_sets[m])) for m in range(trace.num_tokens)]


# ---------------------------------------------------------------------------
# SiftMoE
# ---------------------------------------------------------------------------


def _token_energy_shares(plan: SelectionPlan, tables: Mapping[int, MarginalCostTable]) -> list[float]:
    """Attribute the layer objective to tokens through their marginal slots.

    Tokens assigned to a node occupy its slots in token order, so each token
    pays the marginal cost of the slots it occupies; the shares sum to the
    marginal-cost objective."""
    rank: dict[int, int] = {}
    shares = []
    for m in range(plan.num_tokens):
        share = 0.0
        for v in plan.token_nodes[m]:
            r = rank.get(v, 0)
            share += float(tables[v].costs[r])
            rank[v] = r + 1
        shares.append(share)
    return shares


def _solve_layer(
    feasible: Sequence[Sequence[FeasibleOption]],
    tables: Mapping[int, MarginalCostTable],
    top_k: int,
) -> SelectionPlan:
    if len(feasible) == 1:
        first_costs = {v: float(t.costs[0]) for v, t in tables.items() if t.d_max >= 1}
        return solve_single_token(feasible[0], first_costs, tables)
    if top_k == 1:
        return solve_ssap_k1(feasible, tables)
    return solve_dp(feasible, tables)


def run_siftmoe(
    scenario: Scenario,
    traces,
    sweep_value: float = math.nan,
) -> SiftMoeResult:
    """Channel- and similarity-aware selection over all trials and layers.

    Slow fading reports the plan objective directly. Fast fading keeps the
    surrogate-based plan but reports the realized transmission energy of the
    adaptive policy (scheme ``siftmoe_dynamic``) and of the uniform
    allocation (``siftmoe_uniform``) on the same slot fadings. A token with
    no admissible subset aborts that layer instance; the event is counted
    and the layer's energy reported as NaN.
    """
    model = scenario.model
    fast = scenario.regime == FAST
    rows: list[ReportRow] = []
    plan_rows: list[PlanRow] = []
    slot_rows: list[SlotRow] = []
    plans: dict[tuple[int, int], SelectionPlan] = {}
    infeasible: list[tuple[int, int, int]] = []

    for trial in range(scenario.trials):
        draw = draw_channel(scenario, trial)
        realized_deltas: list[float] = []
        for layer, trace in enumerate(traces):
            m_tokens = trace.num_tokens
            eta = scenario.eta_for_layer(layer, realized_deltas)
            tables = _layer_tables(scenario, draw, layer, m_tokens)
            try:
                feasible = build_feasible_sets(trace, tables, eta)
                plan = _solve_layer(feasible, tables, trace.top_k)
            except TokenInfeasibleError as err:
                infeasible.append((trial, layer, err.token))
                realized_deltas.append(0.0)
                schemes = (
                    (SCHEME_SIFTMOE_DYNAMIC, SCHEME_SIFTMOE_UNIFORM) if fast else (SCHEME_SIFTMOE,)
                )
                for scheme in schemes:
                    rows.append(
                        ReportRow(
                            scheme, sweep_value, trial, layer,
                            math.nan, math.nan, m_tokens, math.nan,
                        )
                    )
                continue

            plans[(trial, layer)] = plan
            realized_deltas.append(max(plan.token_bounds, default=0.0))
            mean_bound = float(np.mean(plan.token_bounds)) if plan.token_bounds else 0.0
            helper_loads = {v: d for v, d in plan.loads.items() if v != 0 and d > 0}
            user_load = plan.loads.get(0, 0)
            latency = (
                model.layer_deadline_s
                if helper_loads
                else local_latency(scenario.user, model, user_load)
            )

            shares = _token_energy_shares(plan, tables)
            for m in range(m_tokens):
                plan_rows.append(
                    PlanRow(
                        trial=trial,
                        layer=layer,
                        token=m,
                        nodes=";".join(str(v) for v in plan.token_nodes[m]),
                        mapping=plan.token_mappings[m].describe(trace.top_sets[m]),
                        bound=plan.token_bounds[m],
                        energy_j=shares[m],
                    )
                )

            if not fast:
                rows.append(
                    ReportRow(
                        SCHEME_SIFTMOE, sweep_value, trial, layer,
                        plan.objective_j, latency, 0, mean_bound,
                    )
                )
                continue

            local_part = float(tables[0].energies[user_load]) if 0 in tables else 0.0
            dynamic_energy = local_part
            uniform_energy = local_part
            inv_mean = expected_inverse_fading(scenario.fading)
            helpers_by_id = {n.node_id: n for n in scenario.helpers}
            for v, load in sorted(helper_loads.items()):
                node = helpers_by_id[v]
                budget = helper_time_budget(node, model, scenario.fading.mean_value, load)
                num_slots, slot_len = slot_schedule(budget, scenario.slot_length_s)
                fadings = draw.per_slot[layer][v][:num_slots]
                bits = load * model.hidden_bits
                dyn = run_policy(node.link, slot_len, fadings, bits, inv_mean, helper_id=v)
                uni = uniform_baseline(node.link, slot_len, fadings, bits, helper_id=v)
                dynamic_energy += dyn.total_energy_j
                uniform_energy += uni.total_energy_j
                for t in range(dyn.num_slots):
                    slot_rows.append(
                        SlotRow(
                            trial, layer, v, t,
                            float(dyn.bits_per_slot[t]),
                            float(dyn.fadings[t]),
                            float(dyn.energy_per_slot_j[t]),
                        )
                    )
            rows.append(
                ReportRow(
                    SCHEME_SIFTMOE_DYNAMIC, sweep_value, trial, layer,
                    dynamic_energy, latency, 0, mean_bound,
                )
            )
            rows.append(
                ReportRow(
                    SCHEME_SIFTMOE_UNIFORM, sweep_value, trial, layer,
                    uniform_energy, latency, 0, mean_bound,
                )
            )

    return SiftMoeResult(rows, plan_rows, slot_rows, plans, infeasible)


def run_all(scenario: Scenario, traces, sweep_value: float = math.nan) -> tuple[list[ReportRow], SiftMoeResult]:
    """All schemes on common fading draws."""
    result = run_siftmoe(scenario, traces, sweep_value)
    rows = list(result.rows)
    rows.extend(run_topk(scenario, traces, ideal=True, sweep_value=sweep_value))
    rows.extend(run_topk(scenario, traces, ideal=False, sweep_value=sweep_value))
    return rows, result


def sweep(scenario: Scenario, traces, axis: str, grid: Sequence[float]) -> list[ReportRow]:
    """Re-run every scheme per grid point on identical fading seeds.

    ``bandwidth`` values are Hz applied to every helper link, ``deadline``
    values are seconds, ``error_budget`` values replace the per-layer cap.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    rows: list[ReportRow] = []
    for value in grid:
        if axis == "bandwidth":
            point = scenario.with_bandwidth(float(value))
        elif axis == "deadline":
            point = scenario.with_deadline(float(value))
        else:
            point = scenario.with_layer_cap(float(value))
        point_rows, _ = run_all(point, traces, sweep_value=float(value))
        rows.extend(point_rows)
    return rows


def summarize(rows: Iterable[ReportRow], tokens_per_layer: int) -> dict[str, dict[str, float]]:
    """Per-scheme aggregates: mean energy per token, mean latency,
    infeasible-token rate, and mean deviation bound."""
    by_scheme: dict[str, list[ReportRow]] = {}
    for row in rows:
        by_scheme.setdefault(row.scheme, []).append(row)
    out: dict[str, dict[str, float]] = {}
    for scheme, items in sorted(by_scheme.items()):
        energies = np.array([r.energy_j for r in items])
        latencies = np.array([r.latency_s for r in items])
        bounds = np.array([r.mean_bound for r in items])
        missed = sum(r.missed_tokens for r in items)
        out[scheme] = {
            "mean_energy_per_token_j": float(np.nanmean(energies)) / tokens_per_layer,
            "mean_latency_s": float(np.nanmean(latencies)),
            "infeasible_token_rate": missed / (len(items) * tokens_per_layer),
            "mean_bound": float(np.nanmean(bounds)) if len(bounds) else 0.0,
        }
    return out


# ---------------------------------------------------------------------------
# Independent plan validation
# ---------------------------------------------------------------------------


def validate_plan(
    scenario: Scenario,
    traces,
    plans: Mapping[int, SelectionPlan],
    trial: int = 0,
) -> list[str]:
    """Check solver output against the constraints from scratch.

    Latency windows, budgets, deviation bounds, cardinality, and the
    objective are all recomputed directly from the formulas rather than
    through the solver helpers. Returns a list of violations (empty = ok).
    """
    model = scenario.model
    draw = draw_channel(scenario, trial)
    violations: list[str] = []
    realized_deltas: list[float] = []
    nodes_by_id = {n.node_id: n for n in scenario.nodes}

    for layer in sorted(plans):
        plan = plans[layer]
        trace = traces[layer]
        m_tokens = trace.num_tokens
        eta = scenario.eta_for_layer(layer, realized_deltas)
        eta_eff = max(eta, 0.0)
        if plan.num_tokens != m_tokens:
            violations.append(f"layer {layer}: plan covers {plan.num_tokens} of {m_tokens} tokens")
            continue

        ipen = f"layer {layer}"
        counted: dict[int, int] = {}
        for m in range(m_tokens):
            subset = plan.token_nodes[m]
            if not 1 <= len(subset) <= trace.top_k:
                violations.append(f"{ipen} token {m}: subset size {len(subset)} outside [1, K]")
            if len(set(subset)) != len(subset):
                violations.append(f"{ipen} token {m}: repeated node in subset")
            for v in subset:
                if v not in nodes_by_id:
                    violations.append(f"{ipen} token {m}: unknown node {v}")
                counted[v] = counted.get(v, 0) + 1
            mapping = plan.token_mappings[m]
            active = sorted(mapping.active_targets)
            if active != sorted(subset):
                violations.append(f"{ipen} token {m}: mapping targets do not cover the subset")
            bound = 0.0
            for g, src, dst in zip(trace.gating[m], trace.top_sets[m], mapping.targets):
                if dst == SKIP:
                    dev = float(trace.norms[m, int(src)])
                elif int(dst) == int(src):
                    dev = 0.0
                else:
                    ni = float(trace.norms[m, int(src)])
                    nt = float(trace.norms[m, int(dst)])
                    cos = float(trace.cosines[m, int(src), int(dst)])
                    dev = math.sqrt(max(ni * ni + nt * nt - 2.0 * ni * nt * cos, 0.0))
                bound += float(g) * dev
            if abs(bound - plan.token_bounds[m]) > 1e-9 * max(1.0, abs(bound)):
                violations.append(f"{ipen} token {m}: stored bound differs from recomputation")
            if bound > eta_eff + 1e-12:
                violations.append(f"{ipen} token {m}: deviation bound {bound:.6g} exceeds budget {eta_eff:.6g}")

        for v, d in plan.loads.items():
            if counted.get(v, 0) != d:
                violations.append(f"{ipen}: load of node {v} is {counted.get(v, 0)}, plan says {d}")
        for v, d in counted.items():
            if plan.loads.get(v, 0) != d:
                violations.append(f"{ipen}: node {v} missing from plan loads")

        recomputed = 0.0
        for v in sorted(nodes_by_id):
            node = nodes_by_id[v]
            d = plan.loads.get(v, 0)
            if node.is_user:
                if d > 0:
                    lat = node.load_latency_s + d * model.flops_per_token / node.compute_flops
                    if lat > model.layer_deadline_s + 1e-12:
                        violations.append(f"{ipen}: user latency {lat:.6g} over deadline")
                    recomputed += (
                        node.load_power_w * node.load_latency_s
                        + node.compute_power_w * d * model.flops_per_token / node.compute_flops
                    )
                continue
            if d == 0:
                continue
            link = node.link
            h_dl = (
                draw.per_layer[layer][v]
                if scenario.regime == SLOW
                else scenario.fading.mean_value
            )
            snr_dl = (
                link.tx_power_helper_w * link.path_gain * link.antenna_gain_dl * h_dl
                / (link.noise_psd_w_per_hz * link.bandwidth_hz)
            )
            rate_dl = link.bandwidth_hz * math.log2(1.0 + snr_dl)
            budget = model.layer_deadline_s - d * (
                model.flops_per_token / node.compute_flops + model.hidden_bits / rate_dl
            )
            if budget <= BUDGET_EPS_S or node.load_latency_s > budget:
                violations.append(f"{ipen}: node {v} load {d} breaks the latency window")
                continue
            spectral = d * model.hidden_bits / (link.bandwidth_hz * budget)
            base = (
                (2.0 ** spectral - 1.0)
                * link.noise_psd_w_per_hz
                * link.bandwidth_hz
                * budget
                / (link.path_gain * link.antenna_gain_ul)
            )
            if scenario.regime == SLOW:
                recomputed += base / draw.per_layer[layer][v]
            else:
                fading = scenario.fading
                if fading.is_deterministic:
                    recomputed += base / fading.value
                else:
                    inv_mean = 1.0 / (fading.scale * (fading.shape - 1.0))
                    recomputed += inv_mean * base

        if abs(recomputed - plan.objective_j) > 1e-9 * max(1.0, abs(recomputed)):
            violations.append(
                f"{ipen}: objective {plan.objective_j:.9g} J differs from recomputed {recomputed:.9g} J"
            )
        realized_deltas.append(max(plan.token_bounds, default=0.0))
    return violations


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def write_report_csv(rows: Sequence[ReportRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["scheme", "sweep_value", "trial", "layer", "energy_j", "latency_s", "missed_tokens", "mean_bound"]
        )
        for r in rows:
            writer.writerow(
                [r.scheme, _fmt(r.sweep_value), r.trial, r.layer, _fmt(r.energy_j), _fmt(r.latency_s), r.missed_tokens, _fmt(r.mean_bound)]
            )


def write_plan_csv(rows: Sequence[PlanRow], path: str | Path, trial: int | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "token", "nodes", "mapping", "bound", "energy_j"])
        for r in rows:
            if trial is not None and r.trial != trial:
                continue
            writer.writerow([r.layer, r.token, r.nodes, r.mapping, _fmt(r.bound), _fmt(r.energy_j)])


def write_slots_csv(rows: Sequence[SlotRow], path: str | Path, trial: int | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "helper", "slot", "gamma_bits", "fading", "energy_j"])
        for r in rows:
            if trial is not None and r.trial != trial:
                continue
            writer.writerow([r.layer, r.helper, r.slot, _fmt(r.gamma_bits), _fmt(r.fading), _fmt(r.energy_j)])
