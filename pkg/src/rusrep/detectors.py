"""Detector models: efficiency plus two-photon resolution behaviour.

Every detector is characterised by its efficiency ``eta`` and a resolution
parameter ``mu``: when two photons arrive at the same detector, ``eta * mu``
is the probability that both are registered (a declared two-photon event).
Threshold detectors have ``mu = 0``, number-resolving ones ``mu = eta``, and
a balanced splitter tree of depth ``N`` over threshold detectors behaves
like ``mu = eta * (1 - 2**-N)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_KINDS = ("threshold", "resolving", "tree", "mu")


@dataclass(frozen=True)
class DetectorModel:
    """Efficiency/resolution description of a photodetector.

    Attributes:
        eta: overall detection efficiency in [0, 1] (includes coupling loss).
        kind: one of "threshold", "resolving", "tree", "mu".
        depth: splitter-tree depth for kind="tree" (int >= 0 or math.inf).
        mu_value: explicit resolution parameter for kind="mu".
    """

    eta: float
    kind: str = "threshold"
    depth: int | float | None = None
    mu_value: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"detector efficiency must be in [0, 1], got {self.eta}")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if self.kind == "tree":
            if self.depth is None or (self.depth != math.inf and (self.depth < 0 or int(self.depth) != self.depth)):
                raise ValueError("tree detectors need an integer depth >= 0 (or math.inf)")
        if self.kind == "mu":
            if self.mu_value is None or not 0.0 <= self.mu_value <= self.eta + 1e-12:
                raise ValueError("abstract resolution mu must satisfy 0 <= mu <= eta")

    @classmethod
    def threshold(cls, eta: float) -> DetectorModel:
        return cls(eta, "threshold")

    @classmethod
    def resolving(cls, eta: float) -> DetectorModel:
        return cls(eta, "resolving")

    @classmethod
    def tree(cls, eta: float, depth: int | float) -> DetectorModel:
        return cls(eta, "tree", depth=depth)

    @classmethod
    def mu(cls, eta: float, mu: float) -> DetectorModel:
        return cls(eta, "mu", mu_value=mu)

    @property
    def resolution(self) -> float:
        """Effective ``mu`` for this detector kind."""
        if self.kind == "threshold":
            return 0.0
        if self.kind == "resolving":
            return self.eta
        if self.kind == "tree":
            if self.depth == math.inf:
                return self.eta
            return self.eta * (1.0 - 0.5 ** self.depth)
        return float(self.mu_value)

    def count_channel(self, arrived: int) -> tuple[tuple[int, float], ...]:
        """Distribution of registered counts given ``arrived`` photons.

        Returns ``((registered, probability), ...)``.  For one photon the
        detector clicks with probability eta.  For two photons the declared
        two-photon probability is ``eta * mu``; exactly one click happens with
        probability ``eta * (2 - eta - mu)`` and no click with ``(1 - eta)**2``.
        """
        eta = self.eta
        if arrived == 0:
            return ((0, 1.0),)
        if arrived == 1:
            return ((1, eta), (0, 1.0 - eta))
        if arrived == 2:
            mu = self.resolution
            return (
                (2, eta * mu),
                (1, eta * (2.0 - eta - mu)),
                (0, (1.0 - eta) ** 2),
            )
        raise ValueError(f"more than two photons at one detector: {arrived}")
