"""Optical benches for the photon-pair Bell measurement and its variants.

The core bench interferes the two photons on a 50-50 beam splitter and sorts
the outputs by polarization onto four detectors D1..D4 (D1/D3 see vertical,
D2/D4 horizontal light).  Prepending the two polarization rotations turns it
into a measurement in a basis that is mutually unbiased with respect to the
H/V product basis; replacing every detector with a balanced splitter tree of
depth N adds partial photon-number resolution out of threshold detectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .detectors import DetectorModel
from .states import (
    ClickPattern,
    EnsembleMember,
    HybridState,
    Mode,
    ModeTransform,
    StateOrEnsemble,
    WeightedEnsemble,
    apply_mode_transform,
    measure_photons,
)

TOP_IDS = ("D1", "D2", "D3", "D4")

INPUT_A = (("a", "H"), ("a", "V"))
INPUT_B = (("b", "H"), ("b", "V"))
INPUT_MODES: tuple[Mode, ...] = INPUT_A + INPUT_B

_BS = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)

# After the beam splitter, arm "a" carries the (1+2) superposition and arm
# "b" the (1-2) one; the polarizing splitters then route V light of arm a to
# D1, H to D2, and likewise V/H of arm b to D3/D4.
_TOP_MODE = {"D1": ("a", "V"), "D2": ("a", "H"), "D3": ("b", "V"), "D4": ("b", "H")}


@dataclass(frozen=True)
class SwapOutcome:
    """Classified result of one measurement round.

    ``kind`` is one of "chi1".."chi4" (the four projection outcomes), or
    "single" / "none" for the ambiguous lossy cases.  ``detector`` names the
    top-level detector for single clicks.
    """

    kind: str
    detector: str | None = None

    def __str__(self):
        return f"single@{self.detector}" if self.kind == "single" else self.kind


CHI1 = SwapOutcome("chi1")
CHI2 = SwapOutcome("chi2")
CHI3 = SwapOutcome("chi3")
CHI4 = SwapOutcome("chi4")
NO_CLICK = SwapOutcome("none")

_OUTCOME_ORDER = {"chi1": 0, "chi2": 1, "chi3": 2, "chi4": 3, "single": 4, "none": 5}


def outcome_sort_key(outcome: SwapOutcome) -> tuple:
    return (_OUTCOME_ORDER[outcome.kind], outcome.detector or "")


@dataclass(frozen=True, eq=False)
class Bench:
    """A fixed optical circuit ending in an array of leaf detectors.

    Attributes:
        transforms: mode transforms applied in order.
        detector_map: leaf detector id -> the single mode it watches.
        leaf_to_top: aggregation of leaf detectors into D1..D4.
        depth: splitter-tree depth (0 means leaves are D1..D4 themselves).
        modes: every mode the bench touches, including tree leaves.
    """

    transforms: tuple[ModeTransform, ...]
    detector_map: dict[str, tuple[Mode, ...]]
    leaf_to_top: dict[str, str]
    depth: int
    modes: tuple[Mode, ...]

    @property
    def input_modes(self) -> tuple[Mode, ...]:
        return INPUT_MODES


def mub_rotations() -> tuple[ModeTransform, ModeTransform]:
    """Polarization rotations applied to the two photons before the bench.

    Their inverses map H to (H+V)/sqrt2 and V to i**(j-1) (H-V)/sqrt2 for
    photon j in {1, 2}, which makes the four distinguishable bench outcomes
    mutually unbiased with respect to the H/V product basis.
    """
    r1 = ModeTransform(INPUT_A, _BS)  # Hadamard on the (H, V) pair of photon a
    r2 = ModeTransform(INPUT_B, np.array([[1, 1], [-1j, 1j]], dtype=complex) / math.sqrt(2))
    return r1, r2


def _bs_transforms() -> tuple[ModeTransform, ModeTransform]:
    # the spatial beam splitter acts identically on both polarizations
    return (
        ModeTransform((("a", "H"), ("b", "H")), _BS),
        ModeTransform((("a", "V"), ("b", "V")), _BS),
    )


def _splitter_tree(source: Mode, leaves: list[Mode], out: list[ModeTransform]):
    # balanced binary tree; leaves[0] is the source mode itself
    if len(leaves) == 1:
        return
    half = len(leaves) // 2
    right = leaves[half]
    out.append(ModeTransform((source, right), _BS))
    _splitter_tree(source, leaves[:half], out)
    _splitter_tree(right, leaves[half:], out)


@lru_cache(maxsize=None)
def build_bsm_bench() -> Bench:
    """The four-detector photon-pair bench without the basis rotations.

    A 50-50 beam splitter on the two spatial inputs, then per-arm polarizing
    splitters routing V to D1 (arm a) / D3 (arm b) and H to D2 / D4.  The
    polarizing splitters are pure routing, so they are realized here by the
    detector assignment rather than by explicit transforms.
    """
    detector_map = {d: (m,) for d, m in _TOP_MODE.items()}
    return Bench(
        transforms=_bs_transforms(),
        detector_map=detector_map,
        leaf_to_top={d: d for d in TOP_IDS},
        depth=0,
        modes=INPUT_MODES,
    )


@lru_cache(maxsize=None)
def build_mub_bench(depth: int = 0) -> Bench:
    """Rotations + bench, with every detector expanded into a splitter tree.

    ``depth`` N >= 0 gives 4 * 2**N leaf detectors; N = 0 reproduces the
    plain four-detector bench.  The splitters are exact 50-50 and lossless;
    all inefficiency lives in the detector model at the leaves.
    """
    if depth < 0 or int(depth) != depth:
        raise ValueError(f"tree depth must be a nonnegative integer, got {depth}")
    depth = int(depth)
    transforms: list[ModeTransform] = list(mub_rotations()) + list(_bs_transforms())
    detector_map: dict[str, tuple[Mode, ...]] = {}
    leaf_to_top: dict[str, str] = {}
    modes: list[Mode] = list(INPUT_MODES)
    if depth == 0:
        for d, m in _TOP_MODE.items():
            detector_map[d] = (m,)
            leaf_to_top[d] = d
    else:
        n_leaves = 2 ** depth
        for top in TOP_IDS:
            source = _TOP_MODE[top]
            pol = source[1]
            leaves = [source] + [(f"{top}#{i}", pol) for i in range(1, n_leaves)]
            modes.extend(leaves[1:])
            _splitter_tree(source, leaves, transforms)
            for i, leaf_mode in enumerate(leaves):
                leaf_id = f"{top}.{i}"
                detector_map[leaf_id] = (leaf_mode,)
                leaf_to_top[leaf_id] = top
    return Bench(
        transforms=tuple(transforms),
        detector_map=detector_map,
        leaf_to_top=leaf_to_top,
        depth=depth,
        modes=tuple(modes),
    )


def classify_clicks(pattern: ClickPattern, bench: Bench) -> SwapOutcome:
    """Map a registered click pattern to its measurement outcome.

    Two registered photons at different top-level detectors identify the two
    entangling outcomes (D1&D2 or D3&D4 -> chi3; D1&D4 or D2&D3 -> chi4); two
    registered photons within one top-level detector identify the product
    outcomes (D2/D4 -> chi1, D1/D3 -> chi2).  One registered photon is a bare
    single click; none is a no-click.
    """
    top_counts: dict[str, int] = {}
    for leaf, count in zip(pattern.detector_ids, pattern.counts):
        if count:
            top = bench.leaf_to_top[leaf]
            top_counts[top] = top_counts.get(top, 0) + count
    total = sum(top_counts.values())
    if total == 0:
        return NO_CLICK
    if total == 1:
        return SwapOutcome("single", next(iter(top_counts)))
    if total > 2:
        raise ValueError(f"click pattern with {total} registered photons is impossible here")
    tops = sorted(top_counts)
    if len(tops) == 1:
        return CHI1 if tops[0] in ("D2", "D4") else CHI2
    pair = frozenset(tops)
    if pair in (frozenset(("D1", "D2")), frozenset(("D3", "D4"))):
        return CHI3
    if pair in (frozenset(("D1", "D4")), frozenset(("D2", "D3"))):
        return CHI4
    raise ValueError(f"click pattern {pattern!r} is not producible by this bench")


def push_through(state: HybridState, bench: Bench) -> HybridState:
    """Extend the state with the bench's modes and apply all transforms."""
    st = state.with_modes(bench.modes)
    inputs = set(bench.input_modes)
    for _mem, occ in st.amplitudes:
        for mode, n in zip(st.mode_labels, occ):
            if n and mode not in inputs:
                raise ValueError(f"input photons must sit on the bench inputs, found {mode}")
    out = st
    for t in bench.transforms:
        out = apply_mode_transform(out, t)
    return out


def arrived_distribution(
    state: StateOrEnsemble, bench: Bench
) -> list[tuple[ClickPattern, float, WeightedEnsemble]]:
    """Exact photon-arrival statistics at the leaf detectors (no loss).

    Equivalent to measuring with perfect number-resolving detectors; useful
    because detector inefficiency acts classically on these counts, so one
    arrival distribution serves every efficiency value.
    """
    if isinstance(state, HybridState):
        pushed: StateOrEnsemble = push_through(state, bench)
    else:
        pushed = WeightedEnsemble(
            tuple(EnsembleMember(m.weight, push_through(m.state, bench), m.label)
                  for m in state.members)
        )
    return measure_photons(pushed, bench.detector_map, DetectorModel.resolving(1.0))


def detect_and_classify(
    arrived: list[tuple[ClickPattern, float, WeightedEnsemble]],
    bench: Bench,
    detector: DetectorModel,
) -> list[tuple[SwapOutcome, float, WeightedEnsemble]]:
    """Apply a detector model to exact arrival counts and classify."""
    from itertools import product as _product

    probs: dict[SwapOutcome, float] = {}
    members: dict[SwapOutcome, list[EnsembleMember]] = {}
    for pattern, p_arr, cond in arrived:
        channels = [detector.count_channel(k) for k in pattern.counts]
        for combo in _product(*channels):
            p_reg = 1.0
            for _, q in combo:
                p_reg *= q
            if p_reg <= 0.0:
                continue
            registered = ClickPattern(pattern.detector_ids, tuple(r for r, _ in combo))
            outcome = classify_clicks(registered, bench)
            p = p_arr * p_reg
            probs[outcome] = probs.get(outcome, 0.0) + p
            members.setdefault(outcome, []).extend(
                EnsembleMember(p * m.weight, m.state) for m in cond.members
            )
    results = []
    for outcome in sorted(probs, key=outcome_sort_key):
        p = probs[outcome]
        if p <= 1e-28:
            continue
        cond = WeightedEnsemble(
            tuple(EnsembleMember(m.weight / p, m.state) for m in members[outcome])
        ).merged()
        results.append((outcome, p, cond))
    return results


def simulate_bench(
    state: StateOrEnsemble, bench: Bench, detector: DetectorModel
) -> list[tuple[SwapOutcome, float, WeightedEnsemble]]:
    """Run a state through the bench and classify every detection outcome.

    Returns ``(outcome, probability, conditional memory ensemble)`` rows in a
    fixed order; probabilities sum to the input weight.
    """
    return detect_and_classify(arrived_distribution(state, bench), bench, detector)
