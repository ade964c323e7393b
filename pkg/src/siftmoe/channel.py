"""Wireless link primitives: path loss, small-scale fading, Shannon rates,
and uplink transmission energy.

Everything here works in SI units (W, W/Hz, Hz, s, m, bits). dBm and dB
values are converted once at the configuration boundary and never appear
inside these formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LinkParams",
    "FadingModel",
    "ChannelDraw",
    "sample_fading",
    "expected_inverse_fading",
    "uplink_rate",
    "downlink_rate",
    "uplink_energy",
]

DETERMINISTIC = "deterministic"
GAMMA = "gamma"


@dataclass(frozen=True)
class LinkParams:
    """Static parameters of one user-helper link."""

    distance_m: float            # user-helper distance [m]
    path_loss_exp: float         # path-loss exponent (>= 2)
    antenna_gain_ul: float       # uplink antenna factor (linear)
    antenna_gain_dl: float       # downlink antenna factor (linear)
    bandwidth_hz: float          # bandwidth allocated to this link [Hz]
    noise_psd_w_per_hz: float    # noise power spectral density [W/Hz]
    tx_power_helper_w: float     # helper transmit power on the downlink [W]

    def __post_init__(self):
        for name in (
            "distance_m",
            "path_loss_exp",
            "antenna_gain_ul",
            "antenna_gain_dl",
            "bandwidth_hz",
            "noise_psd_w_per_hz",
            "tx_power_helper_w",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"LinkParams.{name} must be strictly positive")
        if self.path_loss_exp < 2:
            raise ValueError("path_loss_exp must be >= 2")

    @property
    def path_gain(self) -> float:
        """Large-scale gain d^(-alpha), dimensionless."""
        return self.distance_m ** -self.path_loss_exp

    @property
    def noise_power_w(self) -> float:
        """Thermal noise power over the link bandwidth [W]."""
        return self.noise_psd_w_per_hz * self.bandwidth_hz


@dataclass(frozen=True)
class FadingModel:
    """Small-scale fading distribution for the power gain h.

    Two kinds are supported: a degenerate constant (``deterministic``) and a
    shape-scale Gamma distribution (``gamma``) parameterized by its shape and
    mean. Gamma shapes <= 1 are rejected because the inverse moment E[1/h]
    diverges there and every downstream expectation-based formula would be
    meaningless.
    """

    kind: str
    value: float = 1.0   # constant gain (deterministic kind)
    shape: float = 2.0   # Gamma shape k
    mean: float = 1.0    # Gamma mean (scale theta = mean / shape)
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in (DETERMINISTIC, GAMMA):
            raise ValueError(f"unknown fading kind {self.kind!r}")
        if self.kind == DETERMINISTIC and self.value <= 0:
            raise ValueError("deterministic fading value must be positive")
        if self.kind == GAMMA:
            if self.mean <= 0:
                raise ValueError("gamma fading mean must be positive")
            if self.shape <= 1:
                raise ValueError(
                    "gamma shape must exceed 1: divergent inverse moment"
                )

    @classmethod
    def deterministic(cls, value: float, rng_seed: int = 0) -> "FadingModel":
        return cls(kind=DETERMINISTIC, value=value, rng_seed=rng_seed)

    @classmethod
    def gamma(cls, shape: float, mean: float = 1.0, rng_seed: int = 0) -> "FadingModel":
        return cls(kind=GAMMA, shape=shape, mean=mean, rng_seed=rng_seed)

    @property
    def is_deterministic(self) -> bool:
        return self.kind == DETERMINISTIC

    @property
    def mean_value(self) -> float:
        """E[h]: the constant itself, or the Gamma mean."""
        return self.value if self.is_deterministic else self.mean

    @property
    def scale(self) -> float:
        """Gamma scale theta = mean / shape."""
        if self.is_deterministic:
            raise ValueError("scale undefined for deterministic fading")
        return self.mean / self.shape


def sample_fading(
    model: FadingModel, count: int, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Draw ``count`` i.i.d. fading power gains.

    With no generator supplied, a fresh one is seeded from the model's
    ``rng_seed``, which makes the draw bit-reproducible. Callers that need
    several independent streams (one per trial/layer) pass their own
    generators.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if model.is_deterministic:
        return np.full(count, model.value, dtype=float)
    if rng is None:
        rng = np.random.default_rng(model.rng_seed)
    return rng.gamma(shape=model.shape, scale=model.scale, size=count)


def expected_inverse_fading(model: FadingModel) -> float:
    """Closed-form E[1/h].

    Deterministic(v) gives 1/v. For Gamma(k, theta) the inverse moment is
    1 / (theta * (k - 1)), finite only for k > 1 (enforced at construction).
    """
    if model.is_deterministic:
        return 1.0 / model.value
    return 1.0 / (model.scale * (model.shape - 1.0))


def uplink_rate(link: LinkParams, tx_power_w: float, fading: float) -> float:
    """Achievable uplink rate B * log2(1 + p * d^-a * G_ul * h / (N0 * B)) [bit/s]."""
    if tx_power_w < 0:
        raise ValueError("tx_power_w must be nonnegative")
    if fading <= 0:
        raise ValueError("fading must be positive")
    snr = tx_power_w * link.path_gain * link.antenna_gain_ul * fading / link.noise_power_w
    return link.bandwidth_hz * math.log2(1.0 + snr)


def downlink_rate(link: LinkParams, fading: float) -> float:
    """Achievable downlink rate with the helper's fixed transmit power [bit/s]."""
    if fading <= 0:
        raise ValueError("fading must be positive")
    snr = (
        link.tx_power_helper_w
        * link.path_gain
        * link.antenna_gain_dl
        * fading
        / link.noise_power_w
    )
    return link.bandwidth_hz * math.log2(1.0 + snr)


def uplink_energy(
    link: LinkParams, fading: float, bits: float, duration_s: float
) -> float:
    """Minimum uplink energy to push ``bits`` through in ``duration_s`` [J].

    Inverting the rate formula for the required power gives

        E = (2^(bits / (B * t)) - 1) * N0 * B * t / (d^-a * G_ul * h),

    which is strictly convex and increasing in ``bits`` and non-increasing
    in ``duration_s``.
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    if fading <= 0:
        raise ValueError("fading must be positive")
    if bits < 0:
        raise ValueError("bits must be nonnegative")
    if bits == 0:
        return 0.0
    spectral_load = bits / (link.bandwidth_hz * duration_s)
    try:
        growth = 2.0 ** spectral_load - 1.0
    except OverflowError:
        return math.inf
    numer = growth * link.noise_psd_w_per_hz * link.bandwidth_hz * duration_s
    return numer / (link.path_gain * link.antenna_gain_ul * fading)


@dataclass
class ChannelDraw:
    """One trial's fading realizations.

    ``per_layer`` holds a single gain per (layer, helper) and drives the
    slow-fading path; ``per_slot`` holds a gain sequence per (layer, helper)
    and drives the fast-fading path. Both may be populated so that the two
    regimes can be compared on identical randomness.
    """

    per_layer: dict[int, dict[int, float]] = field(default_factory=dict)
    per_slot: dict[int, dict[int, np.ndarray]] = field(default_factory=dict)

    def validate(self, min_slots: int = 1) -> None:
        for layer, gains in self.per_layer.items():
            for helper, h in gains.items():
                if h <= 0:
                    raise ValueError(f"nonpositive fading at layer {layer}, helper {helper}")
        for layer, streams in self.per_slot.items():
            for helper, hs in streams.items():
                if len(hs) < min_slots:
                    raise ValueError(
                        f"slot stream too short at layer {layer}, helper {helper}"
                    )
                if np.any(np.asarray(hs) <= 0):
                    raise ValueError(f"nonpositive slot fading at layer {layer}, helper {helper}")
