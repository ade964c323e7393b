"""Synthetic layer-trace generation and the line-delimited trace file format.

Real gating scores, output norms, and pairwise output similarities come from
running an actual MoE model; this module fabricates statistically plausible
stand-ins so the selection machinery can be exercised and swept at desk
scale. Traces can also be built from explicit expert output vectors, which
is how the bound-soundness tests obtain ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .error_budget import LayerTrace

__all__ = [
    "TraceGenSpec",
    "generate_traces",
    "trace_from_outputs",
    "save_traces",
    "load_traces",
]


@dataclass(frozen=True)
class TraceGenSpec:
    """Knobs for the synthetic trace generator."""

    tokens: int
    gating_concentration: float = 1.0  # Dirichlet concentration of top-K scores
    norm_lo: float = 0.5
    norm_hi: float = 2.0
    cosine_base: float = 0.6           # mean off-diagonal similarity
    cosine_jitter: float = 0.2         # uniform spread around the base
    seed: int = 0

    def __post_init__(self):
        if self.tokens < 1:
            raise ValueError("tokens must be >= 1")
        if self.gating_concentration <= 0:
            raise ValueError("gating_concentration must be positive")
        if self.norm_lo < 0 or self.norm_hi < self.norm_lo:
            raise ValueError("norm range must satisfy 0 <= lo <= hi")
        if self.cosine_jitter < 0:
            raise ValueError("cosine_jitter must be nonnegative")


def generate_traces(
    spec: TraceGenSpec, num_layers: int, num_experts: int, top_k: int
) -> list[LayerTrace]:
    """Draw reproducible synthetic traces for every layer.

    Top sets are uniform K-subsets with Dirichlet gating sorted to mimic
    rank order; similarities are symmetric with unit diagonal, clipped to
    [-1, 1].
    """
    rng = np.random.default_rng(spec.seed)
    m, n, k = spec.tokens, num_experts, top_k
    traces = []
    for layer in range(num_layers):
        top_sets = np.zeros((m, k), dtype=int)
        gating = np.zeros((m, k))
        for t in range(m):
            top_sets[t] = rng.choice(n, size=k, replace=False)
            scores = rng.dirichlet(np.full(k, spec.gating_concentration))
            gating[t] = np.sort(scores)[::-1]
        norms = rng.uniform(spec.norm_lo, spec.norm_hi, size=(m, n))
        cosines = np.empty((m, n, n))
        for t in range(m):
            upper = spec.cosine_base + spec.cosine_jitter * rng.uniform(-1.0, 1.0, size=(n, n))
            sym = np.triu(upper, 1)
            mat = sym + sym.T
            np.fill_diagonal(mat, 1.0)
            cosines[t] = np.clip(mat, -1.0, 1.0)
        traces.append(
            LayerTrace(layer_id=layer, top_sets=top_sets, gating=gating, norms=norms, cosines=cosines)
        )
    return traces


def trace_from_outputs(
    layer_id: int, top_sets: np.ndarray, gating: np.ndarray, outputs: np.ndarray
) -> LayerTrace:
    """Build a trace from explicit expert output vectors of shape (M, N, dim)."""
    outputs = np.asarray(outputs, dtype=float)
    m, n, _ = outputs.shape
    norms = np.linalg.norm(outputs, axis=2)
    cosines = np.empty((m, n, n))
    for t in range(m):
        dots = outputs[t] @ outputs[t].T
        denom = np.outer(norms[t], norms[t])
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)
        np.fill_diagonal(c, 1.0)
        cosines[t] = np.clip(c, -1.0, 1.0)
    return LayerTrace(
        layer_id=layer_id, top_sets=top_sets, gating=gating, norms=norms, cosines=cosines
    )


def save_traces(traces: list[LayerTrace], path: str | Path) -> None:
    """Write one JSON record per (layer, token): top set, gating scores,
    per-expert output norms, and that token's cosine rows."""
    with open(path, "w") as fh:
        for trace in traces:
            for t in range(trace.num_tokens):
                record = {
                    "layer": trace.layer_id,
                    "token": t,
                    "top_set": trace.top_sets[t].tolist(),
                    "gating": trace.gating[t].tolist(),
                    "norms": trace.norms[t].tolist(),
                    "cosine": trace.cosines[t].tolist(),
                }
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_traces(path: str | Path) -> list[LayerTrace]:
    by_layer: dict[int, list[dict]] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            by_layer.setdefault(record["layer"], []).append(record)
    traces = []
    for layer in sorted(by_layer):
        records = sorted(by_layer[layer], key=lambda r: r["token"])
        top_sets = np.array([r["top_set"] for r in records], dtype=int)
        gating = np.array([r["gating"] for r in records])
        norms = np.array([r["norms"] for r in records])
        cosines = np.array([r["cosine"] for r in records])
        traces.append(
            LayerTrace(layer_id=layer, top_sets=top_sets, gating=gating, norms=norms, cosines=cosines)
        )
    return traces
