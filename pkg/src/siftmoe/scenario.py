"""Scenario assembly: node topology, model constants, budgets, fading, and
the INI config surface.

All dBm/MHz values are converted to W/Hz here, at ingestion; the rest of the
package never sees decibels. Two presets mirror common desk-scale setups: a
top-1 switch-style model on 1 MHz links with a 0.7 s layer deadline, and a
top-2 Mixtral-style model on 2 MHz links with a 74 ms deadline.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import FadingModel, LinkParams
from .cost import ModelParams, NodeParams
from .error_budget import BudgetSpec, ModelConstants
from .traces import TraceGenSpec

__all__ = [
    "Scenario",
    "dbm_to_w",
    "preset",
    "load_config",
    "default_config_text",
    "PRESET_NAMES",
]

SLOW = "slow"
FAST = "fast"
PRESET_NAMES = ("switch8", "mixtral")


def dbm_to_w(dbm: float) -> float:
    """Convert dBm to Watts."""
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class Scenario:
    """Everything a run needs besides the traces themselves."""

    nodes: tuple[NodeParams, ...]
    model: ModelParams
    constants: ModelConstants
    fading: FadingModel
    trace_spec: TraceGenSpec
    regime: str = SLOW
    slot_length_s: float | None = None
    trials: int = 100
    seed: int = 0
    budget: BudgetSpec | None = None       # final-output budget mode
    layer_caps: np.ndarray | None = None   # direct per-layer cap mode
    tx_power_user_max_w: float = 10.0      # power ceiling for the baseline schemes

    def __post_init__(self):
        ids = [n.node_id for n in self.nodes]
        if sorted(ids) != list(range(len(ids))):
            raise ValueError("node ids must be 0..N-1")
        if sum(1 for n in self.nodes if n.is_user) != 1:
            raise ValueError("exactly one node must be the user (id 0)")
        if self.model.num_experts != len(self.nodes):
            raise ValueError("one expert per node: num_experts must equal node count")
        if self.regime not in (SLOW, FAST):
            raise ValueError("regime must be 'slow' or 'fast'")
        if self.regime == FAST and (self.slot_length_s is None or self.slot_length_s <= 0):
            raise ValueError("fast fading requires a positive slot length")
        if (self.budget is None) == (self.layer_caps is None):
            raise ValueError("specify exactly one of budget or layer_caps")
        if self.layer_caps is not None:
            object.__setattr__(self, "layer_caps", np.asarray(self.layer_caps, dtype=float))
            if len(self.layer_caps) != self.model.num_layers:
                raise ValueError("need one cap per layer")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    @property
    def user(self) -> NodeParams:
        return next(n for n in self.nodes if n.is_user)

    @property
    def helpers(self) -> tuple[NodeParams, ...]:
        return tuple(n for n in self.nodes if not n.is_user)

    def eta_for_layer(self, layer: int, realized_deltas) -> float:
        """Per-layer deviation allowance: the direct cap, or the budget rule."""
        from .error_budget import layer_budget

        if self.layer_caps is not None:
            return float(self.layer_caps[layer])
        return layer_budget(self.constants, self.budget, realized_deltas, layer)

    def with_bandwidth(self, bandwidth_hz: float) -> "Scenario":
        nodes = tuple(
            n if n.is_user else replace(n, link=replace(n.link, bandwidth_hz=bandwidth_hz))
            for n in self.nodes
        )
        return replace(self, nodes=nodes)

    def with_deadline(self, deadline_s: float) -> "Scenario":
        return replace(self, model=replace(self.model, layer_deadline_s=deadline_s))

    def with_layer_cap(self, cap: float) -> "Scenario":
        if self.layer_caps is None:
            raise ValueError("scenario is not in direct-cap mode")
        return replace(self, layer_caps=np.full(self.model.num_layers, float(cap)))


def _build_nodes(
    num_helpers: int,
    distances_m,
    bandwidth_hz: float,
    noise_psd: float,
    tx_power_helper_w: float,
    path_loss_exp: float,
    antenna_gain: float,
    user_flops: float,
    user_load_s: float,
    user_load_w: float,
    user_cp_w: float,
    helper_flops: float,
    helper_load_s: float,
) -> tuple[NodeParams, ...]:
    nodes = [
        NodeParams.user(
            compute_flops=user_flops,
            load_latency_s=user_load_s,
            load_power_w=user_load_w,
            compute_power_w=user_cp_w,
        )
    ]
    for i in range(num_helpers):
        link = LinkParams(
            distance_m=float(distances_m[i]),
            path_loss_exp=path_loss_exp,
            antenna_gain_ul=antenna_gain,
            antenna_gain_dl=antenna_gain,
            bandwidth_hz=bandwidth_hz,
            noise_psd_w_per_hz=noise_psd,
            tx_power_helper_w=tx_power_helper_w,
        )
        nodes.append(
            NodeParams.helper(
                node_id=i + 1,
                compute_flops=helper_flops,
                link=link,
                load_latency_s=helper_load_s,
            )
        )
    return tuple(nodes)


def preset(name: str, seed: int = 0, trials: int = 100, regime: str = SLOW) -> Scenario:
    """Named desk-scale scenarios with 8 nodes and Gamma(2) unit-mean fading."""
    if name not in PRESET_NAMES:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    num_helpers = 7
    rng = np.random.default_rng(seed)
    distances = rng.uniform(30.0, 150.0, size=num_helpers)
    noise_psd = dbm_to_w(-174.0)  # per Hz
    helper_power = dbm_to_w(38.0)

    if name == "switch8":
        model = ModelParams(
            hidden_bits=768 * 16,
            flops_per_token=9.4e6,
            num_layers=2,
            num_experts=8,
            top_k=1,
            layer_deadline_s=0.7,
        )
        bandwidth = 1e6
        caps_value = 200.0
        trace_spec = TraceGenSpec(
            tokens=8,
            gating_concentration=1.2,
            norm_lo=40.0,
            norm_hi=160.0,
            cosine_base=0.75,
            cosine_jitter=0.2,
            seed=seed,
        )
        constants = ModelConstants(
            b_max=np.full(model.num_layers, 160.0),
            lipschitz_max=np.full(model.num_layers, 1.0),
        )
        user = dict(user_flops=2.0e13, user_load_s=0.02, user_load_w=30.0, user_cp_w=60.0)
        helper = dict(helper_flops=8.0e13, helper_load_s=0.005)
    else:  # mixtral
        model = ModelParams(
            hidden_bits=4096 * 16,
            flops_per_token=3.5e8,
            num_layers=2,
            num_experts=8,
            top_k=2,
            layer_deadline_s=0.074,
        )
        bandwidth = 2e6
        caps_value = 1.5
        trace_spec = TraceGenSpec(
            tokens=4,
            gating_concentration=1.5,
            norm_lo=0.4,
            norm_hi=1.6,
            cosine_base=0.8,
            cosine_jitter=0.15,
            seed=seed,
        )
        constants = ModelConstants(
            b_max=np.full(model.num_layers, 1.6),
            lipschitz_max=np.full(model.num_layers, 1.0),
        )
        user = dict(user_flops=1.0e13, user_load_s=0.01, user_load_w=40.0, user_cp_w=80.0)
        helper = dict(helper_flops=8.0e13, helper_load_s=0.002)

    nodes = _build_nodes(
        num_helpers=num_helpers,
        distances_m=distances,
        bandwidth_hz=bandwidth,
        noise_psd=noise_psd,
        tx_power_helper_w=helper_power,
        path_loss_exp=4.0,
        antenna_gain=1.0,
        **user,
        **helper,
    )
    return Scenario(
        nodes=nodes,
        model=model,
        constants=constants,
        fading=FadingModel.gamma(shape=2.0, mean=1.0, rng_seed=seed),
        trace_spec=trace_spec,
        regime=regime,
        slot_length_s=model.layer_deadline_s / 10.0 if regime == FAST else None,
        trials=trials,
        seed=seed,
        layer_caps=np.full(model.num_layers, caps_value),
    )


def default_config_text(name: str = "switch8") -> str:
    """INI text reproducing a preset; the starting point for custom configs."""
    scn = preset(name)
    model = scn.model
    link = scn.helpers[0].link
    user = scn.user
    helper = scn.helpers[0]
    distances = ",".join(f"{h.link.distance_m:.6g}" for h in scn.helpers)
    caps = ",".join(f"{c:.6g}" for c in scn.layer_caps)
    ts = scn.trace_spec
    return f"""[scenario]
seed = {scn.seed}
trials = {scn.trials}
regime = {scn.regime}
slot_length_s = {model.layer_deadline_s / 10.0:.6g}
tx_power_user_max_dbm = 40

[model]
num_layers = {model.num_layers}
num_experts = {model.num_experts}
top_k = {model.top_k}
hidden_bits = {model.hidden_bits:.6g}
flops_per_token = {model.flops_per_token:.6g}
layer_deadline_s = {model.layer_deadline_s:.6g}

[channel]
bandwidth_mhz = {link.bandwidth_hz / 1e6:.6g}
noise_psd_dbm_hz = -174
tx_power_helper_dbm = 38
path_loss_exp = {link.path_loss_exp:.6g}
antenna_gain = {link.antenna_gain_ul:.6g}
distances_m = {distances}
fading = gamma
gamma_shape = 2
gamma_mean = 1

[user]
compute_flops = {user.compute_flops:.6g}
load_latency_s = {user.load_latency_s:.6g}
load_power_w = {user.load_power_w:.6g}
compute_power_w = {user.compute_power_w:.6g}

[helpers]
compute_flops = {helper.compute_flops:.6g}
load_latency_s = {helper.load_latency_s:.6g}

[budget]
mode = direct_cap
per_layer_cap = {caps}

[traces]
tokens = {ts.tokens}
gating_concentration = {ts.gating_concentration:.6g}
norm_lo = {ts.norm_lo:.6g}
norm_hi = {ts.norm_hi:.6g}
cosine_base = {ts.cosine_base:.6g}
cosine_jitter = {ts.cosine_jitter:.6g}
"""


def load_config(path_or_text: str | Path) -> Scenario:
    """Parse an INI scenario description into a Scenario.

    Physical quantities carry explicit unit suffixes (_mhz, _dbm, _s, _m)
    and are converted to SI on the spot.
    """
    parser = configparser.ConfigParser()
    text = None
    if isinstance(path_or_text, Path) or (
        isinstance(path_or_text, str) and "\n" not in path_or_text
    ):
        with open(path_or_text) as fh:
            text = fh.read()
    else:
        text = str(path_or_text)
    parser.read_file(io.StringIO(text))

    sc = parser["scenario"]
    md = parser["model"]
    ch = parser["channel"]
    us = parser["user"]
    hp = parser["helpers"]
    bd = parser["budget"]
    tr = parser["traces"]

    model = ModelParams(
        hidden_bits=md.getfloat("hidden_bits"),
        flops_per_token=md.getfloat("flops_per_token"),
        num_layers=md.getint("num_layers"),
        num_experts=md.getint("num_experts"),
        top_k=md.getint("top_k"),
        layer_deadline_s=md.getfloat("layer_deadline_s"),
    )
    num_helpers = model.num_experts - 1
    seed = sc.getint("seed", 0)

    if ch.get("distances_m", "").strip():
        distances = [float(x) for x in ch["distances_m"].split(",")]
        if len(distances) != num_helpers:
            raise ValueError("distances_m must list one distance per helper")
    else:
        max_d = ch.getfloat("max_distance_m", 150.0)
        distances = np.random.default_rng(seed).uniform(0.2 * max_d, max_d, num_helpers)

    kind = ch.get("fading", "gamma").strip().lower()
    if kind == "gamma":
        fading = FadingModel.gamma(
            shape=ch.getfloat("gamma_shape", 2.0),
            mean=ch.getfloat("gamma_mean", 1.0),
            rng_seed=seed,
        )
    elif kind == "deterministic":
        fading = FadingModel.deterministic(ch.getfloat("det_value", 1.0), rng_seed=seed)
    else:
        raise ValueError(f"unknown fading kind {kind!r}")

    nodes = _build_nodes(
        num_helpers=num_helpers,
        distances_m=distances,
        bandwidth_hz=ch.getfloat("bandwidth_mhz") * 1e6,
        noise_psd=dbm_to_w(ch.getfloat("noise_psd_dbm_hz")),
        tx_power_helper_w=dbm_to_w(ch.getfloat("tx_power_helper_dbm")),
        path_loss_exp=ch.getfloat("path_loss_exp", 4.0),
        antenna_gain=ch.getfloat("antenna_gain", 1.0),
        user_flops=us.getfloat("compute_flops"),
        user_load_s=us.getfloat("load_latency_s"),
        user_load_w=us.getfloat("load_power_w"),
        user_cp_w=us.getfloat("compute_power_w"),
        helper_flops=hp.getfloat("compute_flops"),
        helper_load_s=hp.getfloat("load_latency_s"),
    )

    mode = bd.get("mode", "direct_cap").strip()
    layer_caps = None
    budget = None
    if mode == "direct_cap":
        raw = [float(x) for x in bd["per_layer_cap"].split(",")]
        if len(raw) == 1:
            raw = raw * model.num_layers
        layer_caps = np.asarray(raw)
    elif mode == "corollary":
        theta = bd.getfloat("theta")
        if bd.get("theta_alloc", "").strip():
            alloc = np.array([float(x) for x in bd["theta_alloc"].split(",")])
            kappa = np.full(model.num_layers, np.inf)
            if bd.get("kappa", "").strip():
                kappa = np.array([float(x) for x in bd["kappa"].split(",")])
            budget = BudgetSpec(theta=theta, theta_alloc=alloc, kappa=kappa)
        else:
            budget = BudgetSpec.uniform(theta, model.num_layers)
    else:
        raise ValueError(f"unknown budget mode {mode!r}")

    if bd.get("b_max", "").strip():
        b_max = np.array([float(x) for x in bd["b_max"].split(",")])
        lip = np.array([float(x) for x in bd["lipschitz_max"].split(",")])
    else:
        b_max = np.full(model.num_layers, 1.0)
        lip = np.full(model.num_layers, 1.0)
    constants = ModelConstants(b_max=b_max, lipschitz_max=lip)

    trace_spec = TraceGenSpec(
        tokens=tr.getint("tokens"),
        gating_concentration=tr.getfloat("gating_concentration", 1.0),
        norm_lo=tr.getfloat("norm_lo", 0.5),
        norm_hi=tr.getfloat("norm_hi", 2.0),
        cosine_base=tr.getfloat("cosine_base", 0.6),
        cosine_jitter=tr.getfloat("cosine_jitter", 0.2),
        seed=seed,
    )

    regime = sc.get("regime", SLOW).strip()
    return Scenario(
        nodes=nodes,
        model=model,
        constants=constants,
        fading=fading,
        trace_spec=trace_spec,
        regime=regime,
        slot_length_s=sc.getfloat("slot_length_s", fallback=None),
        trials=sc.getint("trials", 100),
        seed=seed,
        budget=budget,
        layer_caps=layer_caps,
        tx_power_user_max_w=dbm_to_w(sc.getfloat("tx_power_user_max_dbm", 40.0)),
    )
