"""Independent reference implementations used as test oracles.

Nothing here may call back into the solver paths it is meant to check;
everything is computed from first principles (enumeration, grids,
quadrature, plain recursions).
"""

from __future__ import annotations

import math
from itertools import combinations, permutations

import numpy as np
from scipy import stats

from siftmoe.cost import MarginalCostTable
from siftmoe.error_budget import SKIP, ExpertMapping
from siftmoe.selection import FeasibleOption


# ---------------------------------------------------------------------------
# Mapping enumeration
# ---------------------------------------------------------------------------


def enumerate_mappings(k: int, nodes: tuple[int, ...]):
    """All substitution maps sending the K top slots onto ``nodes`` exactly,
    remaining slots skipped."""
    for positions in permutations(range(k), len(nodes)):
        targets = [SKIP] * k
        for node, pos in zip(nodes, positions):
            targets[pos] = node
        yield tuple(targets)


def best_mapping_brute(trace, token: int, nodes: tuple[int, ...]):
    """Exhaustive minimum deviation bound over all admissible maps."""
    k = trace.top_k
    top = trace.top_sets[token]
    gating = trace.gating[token]
    best = None
    for targets in enumerate_mappings(k, nodes):
        bound = 0.0
        for g, src, dst in zip(gating, top, targets):
            src = int(src)
            if dst == SKIP:
                dev = float(trace.norms[token, src])
            elif dst == src:
                dev = 0.0
            else:
                ni = float(trace.norms[token, src])
                nt = float(trace.norms[token, dst])
                cos = float(trace.cosines[token, src, dst])
                dev = math.sqrt(max(ni * ni + nt * nt - 2 * ni * nt * cos, 0.0))
            bound += float(g) * dev
        key = (bound, targets)
        if best is None or key < best:
            best = key
    return best  # (bound, targets)


# ---------------------------------------------------------------------------
# Random solver instances
# ---------------------------------------------------------------------------


def random_tables(rng: np.random.Generator, num_nodes: int, max_load: int) -> dict[int, MarginalCostTable]:
    """Random convex marginal tables (nondecreasing positive marginals)."""
    tables = {}
    for v in range(num_nodes):
        d_max = int(rng.integers(0, max_load + 1))
        marginals = np.sort(rng.uniform(0.05, 3.0, d_max))
        energies = np.concatenate([[0.0], np.cumsum(marginals)])
        tables[v] = MarginalCostTable(node_id=v, costs=marginals, d_max=d_max, energies=energies)
    return tables


def random_instance(
    rng: np.random.Generator,
    num_tokens: int,
    num_nodes: int,
    top_k: int,
    keep_prob: float = 0.6,
    max_product: int = 20000,
):
    """Random (feasible sets, tables) pair with a bounded brute-force space.

    Returns None when the draw has a token with no options or too large an
    enumeration space; callers redraw.
    """
    tables = random_tables(rng, num_nodes, num_tokens + 1)
    candidates = [v for v in range(num_nodes) if tables[v].d_max >= 1]
    if not candidates:
        return None
    feasible = []
    product = 1
    for _ in range(num_tokens):
        options = []
        for size in range(1, top_k + 1):
            for subset in combinations(candidates, size):
                if rng.random() < keep_prob:
                    targets = tuple(list(subset) + [SKIP] * (top_k - len(subset)))
                    options.append(
                        FeasibleOption(subset, ExpertMapping(targets), float(rng.uniform(0, 1)))
                    )
        if not options:
            return None
        product *= len(options)
        if product > max_product:
            return None
        feasible.append(options)
    return feasible, tables


# ---------------------------------------------------------------------------
# Grid dynamic program for the fast-fading inner problem
# ---------------------------------------------------------------------------


def _lower_envelope_expectation(slopes, intercepts, w_sorted, w_prefix):
    """E_w[min_j (slope_j * w + intercept_j)] over the empirical points.

    The minimum over lines is the lower envelope; as w grows the active
    slope decreases, so lines are inserted in decreasing-slope order with
    the classic intersection test, and each segment integrates against the
    sorted sample with prefix sums. Exactly equals the naive per-sample
    minimum, in O((L + segments) log n) instead of O(L n).
    """
    slopes = np.asarray(slopes, dtype=float)
    intercepts = np.asarray(intercepts, dtype=float)
    order = np.lexsort((intercepts, -slopes))
    ms, qs = slopes[order], intercepts[order]
    keep = np.ones(len(ms), dtype=bool)
    keep[1:] = ms[1:] != ms[:-1]
    ms, qs = ms[keep], qs[keep]

    hull: list[tuple[float, float, float]] = []  # (slope, intercept, left_x)
    for m, q in zip(ms, qs):
        while hull:
            m0, q0, x0 = hull[-1]
            x = (q - q0) / (m0 - m)
            if x <= x0:
                hull.pop()
            else:
                hull.append((m, q, x))
                break
        else:
            hull.append((m, q, -math.inf))

    n = len(w_sorted)
    total = 0.0
    for i, (m, q, left) in enumerate(hull):
        right = hull[i + 1][2] if i + 1 < len(hull) else math.inf
        lo = np.searchsorted(w_sorted, left, side="left")
        hi = np.searchsorted(w_sorted, right, side="left")
        if hi > lo:
            total += m * (w_prefix[hi] - w_prefix[lo]) + q * (hi - lo)
    return total / n


def gamma_stratified_samples(shape: float, scale: float, count: int) -> np.ndarray:
    """Inverse-CDF midpoint samples; deterministic and low-variance."""
    u = (np.arange(count) + 0.5) / count
    return stats.gamma.ppf(u, shape, scale=scale)


def grid_dp_expected_energy(
    c: float,
    a: float,
    num_slots: int,
    h_first: float,
    total_bits: float,
    gamma_shape: float = 2.0,
    gamma_mean: float = 1.0,
    grid_points: int = 1000,
    samples: int = 10**5,
) -> float:
    """True causal DP value on a bit grid, conditioned on the first gain.

    Backward value iteration: the terminal stage transmits the backlog at
    the realized gain; earlier stages minimize current cost plus expected
    cost-to-go, with the expectation over the per-slot gain taken across
    ``samples`` stratified draws.
    """
    scale = gamma_mean / gamma_shape
    h_samples = gamma_stratified_samples(gamma_shape, scale, samples)
    w = np.sort(c / h_samples)
    w_prefix = np.concatenate([[0.0], np.cumsum(w)])
    inv_mean_hat = float(np.mean(1.0 / h_samples))

    grid = np.linspace(0.0, total_bits, grid_points)
    e = 2.0 ** (a * grid) - 1.0
    ubar = c * e * inv_mean_hat  # expected terminal cost on the grid
    for _stage in range(num_slots - 1, 1, -1):
        new = np.empty(grid_points)
        for i in range(grid_points):
            new[i] = _lower_envelope_expectation(e[: i + 1], ubar[i::-1], w, w_prefix)
        ubar = new
    vals = (c / h_first) * e + ubar[::-1]
    return float(vals.min())
