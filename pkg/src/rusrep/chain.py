"""Entanglement-distribution rate model for a multiple-memory repeater chain.

A chain of total length L is split into 2**n elementary segments.  Segment
entanglement succeeds with probability P_S per T0 = L0/c attempt, swaps at
the nodes succeed with probability P_succ each, and in the many-memory limit
the delivered rate per logical memory is P_S * P_succ**n / (2L/c).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .analytics import p_succ_branching


def ps_model(segment_km: float, attenuation_km: float, prefactor: float = 0.1) -> float:
    """Source success probability over one segment: prefactor * exp(-L0/Latt)."""
    if segment_km <= 0 or attenuation_km <= 0:
        raise ValueError("segment and attenuation lengths must be positive")
    return prefactor * math.exp(-segment_km / attenuation_km)


@dataclass(frozen=True)
class ChainConfig:
    """Geometry and physics of one repeater-chain operating point.

    Attributes:
        total_km: end-to-end distance L.
        nesting: nesting level n, with segments of length L / 2**n.
        p_swap: Bell-measurement success probability, identical at all levels.
        attenuation_km: channel attenuation length.
        speed_km_s: channel light speed.
        source_prefactor: dimensionless factor in the segment success model.
    """

    total_km: float
    nesting: int
    p_swap: float
    attenuation_km: float = 25.0
    speed_km_s: float = 2e5
    source_prefactor: float = 0.1

    def __post_init__(self):
        if self.total_km <= 0:
            raise ValueError("total distance must be positive")
        if self.nesting < 0 or int(self.nesting) != self.nesting:
            raise ValueError("nesting level must be a nonnegative integer")
        if not 0.0 < self.p_swap <= 1.0:
            raise ValueError("swap success probability must be in (0, 1]")
        if self.speed_km_s <= 0:
            raise ValueError("channel light speed must be positive")

    @property
    def segment_km(self) -> float:
        return self.total_km / 2 ** self.nesting

    @property
    def p_source(self) -> float:
        return ps_model(self.segment_km, self.attenuation_km, self.source_prefactor)

    @property
    def t0_s(self) -> float:
        """Duration of one entangling attempt over a segment."""
        return self.segment_km / self.speed_km_s


def entanglement_rate(config: ChainConfig) -> float:
    """Delivered entangled pairs per second per logical memory."""
    round_trip_s = 2.0 * config.total_km / config.speed_km_s
    return config.p_source * config.p_swap ** config.nesting / round_trip_s


VARIANT_PATTERN = re.compile(r"^N(\d+|inf)$")


def variant_p_succ(variant: str, eta: float) -> float:
    """Swap success probability for a chain variant token.

    Tokens: "non-rus" for the conventional single-shot measurement
    (eta^2/2), or "N<depth>" / "Ninf" for the repeat-until-success scheme
    with that branching depth.
    """
    if variant == "non-rus":
        return 0.5 * eta * eta
    m = VARIANT_PATTERN.match(variant)
    if not m:
        raise ValueError(f"unknown chain variant {variant!r}; use non-rus, N<k>, or Ninf")
    depth = math.inf if m.group(1) == "inf" else int(m.group(1))
    return p_succ_branching(eta, depth)


def optimize_nesting(
    total_km: float,
    p_swap: float,
    attenuation_km: float = 25.0,
    speed_km_s: float = 2e5,
    source_prefactor: float = 0.1,
    n_max: int = 12,
) -> tuple[int, float]:
    """Best nesting level and its rate; ties break toward fewer levels."""
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    best = (0, -math.inf)
    for n in range(n_max + 1):
        rate = entanglement_rate(
            ChainConfig(total_km, n, p_swap, attenuation_km, speed_km_s, source_prefactor)
        )
        if rate > best[1]:
            best = (n, rate)
    return best


@dataclass(frozen=True)
class SweepRow:
    total_km: float
    variant: str
    n_opt: int
    rate_per_s: float


def sweep_distance(
    distances_km: list[float],
    variants: list[str],
    eta: float = 0.93,
    attenuation_km: float = 25.0,
    speed_km_s: float = 2e5,
    source_prefactor: float = 0.1,
    n_max: int = 12,
) -> list[SweepRow]:
    """Optimized rate for every (distance, variant) pair."""
    if not distances_km or not variants:
        raise ValueError("need at least one distance and one variant")
    rows = []
    for variant in variants:
        p_swap = variant_p_succ(variant, eta)
        for total_km in distances_km:
            n_opt, rate = optimize_nesting(
                total_km, p_swap, attenuation_km, speed_km_s, source_prefactor, n_max
            )
            rows.append(SweepRow(total_km, variant, n_opt, rate))
    return rows
