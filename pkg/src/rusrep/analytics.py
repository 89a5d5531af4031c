"""Closed-form success, error, and fidelity formulas for the swap schemes.

These are the printed formulas, kept verbatim for figure reproduction and
for comparison against the exact evaluator in :mod:`rusrep.protocol`.  Where
the published closed forms disagree with the recursions they were derived
from (the modified, error-accepting scheme), both values are exposed so the
discrepancy is visible data rather than silently patched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def _check_eta_mu(eta: float, mu: float):
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    if not -1e-12 <= mu <= eta + 1e-12:
        raise ValueError(f"mu must satisfy 0 <= mu <= eta, got mu={mu}, eta={eta}")


@dataclass(frozen=True)
class AnalyticProbs:
    """Single-round outcome probabilities of the photon-pair measurement.

    ``p11``: both photons registered at two different detectors.
    ``p20``: both registered at one detector (declared two-photon event).
    ``p10_1``: one click, both photons were headed to the same detector.
    ``p10_2``: one click, photons were headed to different detectors.
    ``p00``: no clicks.
    """

    p11: float
    p20: float
    p10_1: float
    p10_2: float
    p00: float

    @property
    def p10(self) -> float:
        return self.p10_1 + self.p10_2

    @property
    def total(self) -> float:
        return self.p11 + self.p20 + self.p10_1 + self.p10_2 + self.p00

    def as_dict(self) -> dict[str, float]:
        return {
            "P11": self.p11,
            "P20": self.p20,
            "P10_1": self.p10_1,
            "P10_2": self.p10_2,
            "P00": self.p00,
        }


def outcome_probs(eta: float, mu: float) -> AnalyticProbs:
    """Outcome probabilities for detection efficiency eta and resolution mu.

    P11 = eta^2/2, P20 = eta*mu/2, P10(1) = eta(1-mu)/2 + (1-eta)eta/2,
    P10(2) = eta(1-eta), P00 = (1-eta)^2; they sum to one.
    """
    _check_eta_mu(eta, mu)
    probs = AnalyticProbs(
        p11=0.5 * eta * eta,
        p20=0.5 * eta * mu,
        p10_1=0.5 * eta * (1.0 - mu) + 0.5 * (1.0 - eta) * eta,
        p10_2=eta * (1.0 - eta),
        p00=(1.0 - eta) ** 2,
    )
    if abs(probs.total - 1.0) > 1e-12:
        raise AssertionError(f"outcome probabilities sum to {probs.total}, not 1")
    return probs


def p_succ_basic(eta: float, mu: float) -> float:
    """Success probability of the basic repeat-until-success swap.

    Repeating on declared two-photon events gives
    P_succ = P11 / (1 - P20) = eta^2 / (2 - eta*mu).
    """
    _check_eta_mu(eta, mu)
    return eta * eta / (2.0 - eta * mu)


@dataclass(frozen=True)
class ModifiedMetrics:
    """Published metrics of the error-accepting threshold-detector scheme.

    ``p_succ``, ``p_error`` and ``fidelity`` are the printed closed forms
    eta/(4-3 eta), 2(1-eta)/(4-3 eta) and eta/(2-eta).  The two recursion
    fields are what the defining recursions actually evaluate to at mu = 0:
    P11/(1-P10) and P11/(1-P10(1)).  They agree with the printed forms only
    at eta = 1; both are reported so nothing is silently reconciled.
    """

    p_succ: float
    p_error: float
    fidelity: float
    p_succ_recursion: float
    fidelity_recursion: float

    def as_dict(self) -> dict[str, float]:
        return {
            "p_succ_printed": self.p_succ,
            "p_error_printed": self.p_error,
            "fidelity_printed": self.fidelity,
            "p_succ_recursion": self.p_succ_recursion,
            "fidelity_recursion": self.fidelity_recursion,
        }


def modified_metrics(eta: float) -> ModifiedMetrics:
    """Printed and literal-recursion metrics for the modified scheme."""
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must be in (0, 1] for the modified scheme, got {eta}")
    return ModifiedMetrics(
        p_succ=eta / (4.0 - 3.0 * eta),
        p_error=2.0 * (1.0 - eta) / (4.0 - 3.0 * eta),
        fidelity=eta / (2.0 - eta),
        p_succ_recursion=eta * eta / (2.0 - 4.0 * eta + 3.0 * eta * eta),
        fidelity_recursion=eta * eta / (2.0 - 2.0 * eta + eta * eta),
    )


def branching_mu(eta: float, depth: int | float) -> float:
    """Effective resolution of a depth-N splitter tree of threshold detectors."""
    if depth == math.inf:
        return eta
    if depth < 0 or int(depth) != depth:
        raise ValueError(f"branching depth must be a nonnegative integer or inf, got {depth}")
    return eta * (1.0 - 0.5 ** depth)


def p_succ_branching(eta: float, depth: int | float) -> float:
    """Swap success probability with depth-N branching (N = math.inf allowed)."""
    return p_succ_basic(eta, branching_mu(eta, depth))


def threshold_eta(depth: int | float) -> float | None:
    """Smallest efficiency where the branching scheme beats 1/2.

    Closed form sqrt(2 / (3 - 2**-N)); ``None`` for N = 0, where the success
    probability is capped at 1/2 and no threshold below one exists.
    """
    if depth == 0:
        return None
    if depth != math.inf and (depth < 1 or int(depth) != depth):
        raise ValueError(f"branching depth must be >= 1 or inf, got {depth}")
    half_pow = 0.0 if depth == math.inf else 0.5 ** depth
    return math.sqrt(2.0 / (3.0 - half_pow))
