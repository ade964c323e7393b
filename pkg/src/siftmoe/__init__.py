"""Energy-aware expert selection and adaptive transmission for wireless
distributed mixture-of-experts inference."""

from .channel import (
    ChannelDraw,
    FadingModel,
    LinkParams,
    downlink_rate,
    expected_inverse_fading,
    sample_fading,
    uplink_energy,
    uplink_rate,
)
from .cost import (
    MarginalCostTable,
    ModelParams,
    NodeParams,
    helper_energy,
    helper_time_budget,
    local_energy,
    local_latency,
    marginal_costs,
    max_load,
)
from .error_budget import (
    SKIP,
    BudgetSpec,
    ExpertMapping,
    LayerTrace,
    ModelConstants,
    accumulated_bound,
    feasible_mappings,
    layer_budget,
    pair_deviation,
    token_deviation_bound,
)
from .fastfading import (
    SlotPlan,
    expected_policy_energy,
    optimal_bits_slot,
    run_policy,
    slot_schedule,
    surrogate_energy,
    uniform_baseline,
)
from .harness import (
    run_all,
    run_siftmoe,
    run_topk,
    summarize,
    sweep,
    validate_plan,
)
from .scenario import Scenario, load_config, preset
from .selection import (
    FeasibleOption,
    SelectionPlan,
    TokenInfeasibleError,
    brute_force,
    build_feasible_sets,
    solve_dp,
    solve_single_token,
    solve_ssap_k1,
)
from .traces import TraceGenSpec, generate_traces, load_traces, save_traces, trace_from_outputs

__version__ = "0.1.0"
