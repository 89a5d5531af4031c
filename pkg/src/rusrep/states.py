"""Exact state engine for hybrid memory-qubit / few-photon systems.

States are sparse amplitude maps over a basis ``(memory bits, mode
occupations)`` where the photonic part is restricted to at most
``max_photons`` excitations in total (two for every circuit in this
package).  All operations are pure: they take a state and return a new one.
Mixtures arising from loss or measurement are kept as weighted ensembles of
pure states, which is exact for the branching channels used here.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Mapping, NamedTuple, Sequence, Union

import numpy as np

from .detectors import DetectorModel

PRUNE_TOL = 1e-14       # amplitudes below this magnitude are dropped
NORM_TOL = 1e-10        # allowed norm drift after a public operation
MATCH_TOL = 1e-9        # 1 - fidelity threshold for up-to-phase equality
UNITARY_TOL = 1e-12     # entrywise tolerance for U^dag U = I checks

Mode = tuple[str, str]                          # (spatial path, "H" or "V")
BasisKey = tuple[tuple[int, ...], tuple[int, ...]]

# Common single-qubit matrices, used for gates and frame corrections.
ID2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
PHASE_S = np.array([[1, 0], [0, 1j]], dtype=complex)


def _check_unitary(matrix: np.ndarray, what: str = "matrix") -> np.ndarray:
    m = np.asarray(matrix, dtype=complex)
    if m.shape != (2, 2):
        raise ValueError(f"{what} must be 2x2, got shape {m.shape}")
    dev = np.abs(m.conj().T @ m - np.eye(2)).max()
    if dev > UNITARY_TOL:
        raise ValueError(f"{what} is not unitary (deviation {dev:.2e})")
    return m


@dataclass(frozen=True)
class ModeTransform:
    """A 2x2 unitary acting on the creation operators of two modes.

    Column convention: the image of mode ``modes[k]`` is column ``k``, i.e.
    a single photon in ``modes[0]`` maps to ``matrix[0,0]|modes[0]> +
    matrix[1,0]|modes[1]>``.
    """

    modes: tuple[Mode, Mode]
    matrix: np.ndarray

    def __post_init__(self):
        if len(self.modes) != 2 or self.modes[0] == self.modes[1]:
            raise ValueError("a mode transform needs two distinct target modes")
        object.__setattr__(self, "matrix", _check_unitary(self.matrix, "mode transform"))


@dataclass(frozen=True, eq=False)
class HybridState:
    """Pure state of memory qubits plus up to ``max_photons`` photons.

    Attributes:
        memory_labels: ordered qubit identifiers, e.g. ("A", "A'", "B", "B'").
        mode_labels: ordered photonic modes as (path, polarization) pairs.
        amplitudes: map (memory bits, occupation vector) -> complex amplitude.
        max_photons: cap on the total occupation of any basis key.
    """

    memory_labels: tuple[str, ...]
    mode_labels: tuple[Mode, ...]
    amplitudes: dict[BasisKey, complex]
    max_photons: int = 2

    def __post_init__(self):
        if len(set(self.memory_labels)) != len(self.memory_labels):
            raise ValueError("duplicate memory labels")
        if len(set(self.mode_labels)) != len(self.mode_labels):
            raise ValueError("duplicate mode labels")
        pruned: dict[BasisKey, complex] = {}
        n_mem, n_mode = len(self.memory_labels), len(self.mode_labels)
        for (mem, occ), amp in self.amplitudes.items():
            if len(mem) != n_mem or len(occ) != n_mode:
                raise ValueError("basis key does not match the registers")
            n_phot = sum(occ)
            if n_phot > self.max_photons:
                raise ValueError(
                    f"occupation {occ} exceeds max_photons={self.max_photons}"
                )
            if any(n < 0 for n in occ) or any(b not in (0, 1) for b in mem):
                raise ValueError(f"invalid basis key {(mem, occ)}")
            if abs(amp) >= PRUNE_TOL:
                pruned[(tuple(mem), tuple(occ))] = complex(amp)
        object.__setattr__(self, "amplitudes", pruned)

    @property
    def norm_sq(self) -> float:
        return sum(abs(a) ** 2 for a in self.amplitudes.values())

    def memory_index(self, label: str) -> int:
        try:
            return self.memory_labels.index(label)
        except ValueError:
            raise KeyError(f"unknown memory qubit {label!r}") from None

    def mode_index(self, mode: Mode) -> int:
        try:
            return self.mode_labels.index(mode)
        except ValueError:
            raise KeyError(f"unknown mode {mode!r}") from None

    def renormalized(self) -> HybridState:
        n = math.sqrt(self.norm_sq)
        if n < PRUNE_TOL:
            raise ValueError("cannot normalize a zero state")
        return HybridState(
            self.memory_labels,
            self.mode_labels,
            {k: a / n for k, a in self.amplitudes.items()},
            self.max_photons,
        )

    def with_modes(self, modes: Sequence[Mode]) -> HybridState:
        """Extend the photonic register with new vacuum modes."""
        extra = tuple(m for m in modes if m not in self.mode_labels)
        if not extra:
            return self
        pad = (0,) * len(extra)
        return HybridState(
            self.memory_labels,
            self.mode_labels + extra,
            {(mem, occ + pad): a for (mem, occ), a in self.amplitudes.items()},
            self.max_photons,
        )

    def memory_only(self) -> HybridState:
        """Drop the photonic register; requires every key to be photon-free."""
        amps: dict[BasisKey, complex] = {}
        for (mem, occ), a in self.amplitudes.items():
            if any(occ):
                raise ValueError("cannot drop photonic register: photons present")
            amps[(mem, ())] = amps.get((mem, ()), 0.0) + a
        return HybridState(self.memory_labels, (), amps, self.max_photons)

    def __repr__(self):
        terms = ", ".join(
            f"{mem}{occ}: {amp:.4g}" for (mem, occ), amp in sorted(self.amplitudes.items())
        )
        return f"HybridState[{terms}]"


class EnsembleMember(NamedTuple):
    weight: float
    state: HybridState
    label: object = None


@dataclass(frozen=True, eq=False)
class WeightedEnsemble:
    """Statistical mixture of pure states.

    Weights are probabilities; their sum may be below one when the ensemble
    represents a conditional branch of some larger process.
    """

    members: tuple[EnsembleMember, ...]

    def __post_init__(self):
        if any(m.weight < -1e-12 for m in self.members):
            raise ValueError("ensemble weights must be nonnegative")
        if self.total_weight > 1.0 + NORM_TOL:
            raise ValueError("ensemble weights sum above one")

    @property
    def total_weight(self) -> float:
        return sum(m.weight for m in self.members)

    def normalized(self) -> WeightedEnsemble:
        t = self.total_weight
        if t <= 0.0:
            raise ValueError("cannot normalize an empty ensemble")
        return WeightedEnsemble(
            tuple(EnsembleMember(m.weight / t, m.state, m.label) for m in self.members)
        )

    def merged(self, tol: float = MATCH_TOL) -> WeightedEnsemble:
        """Combine members whose states agree up to a global phase."""
        out: list[EnsembleMember] = []
        for m in self.members:
            if m.weight < 1e-15:
                continue
            for i, kept in enumerate(out):
                if states_equal(kept.state, m.state, tol):
                    out[i] = EnsembleMember(kept.weight + m.weight, kept.state, kept.label)
                    break
            else:
                out.append(m)
        return WeightedEnsemble(tuple(out))


StateOrEnsemble = Union[HybridState, WeightedEnsemble]


def _as_ensemble(state: StateOrEnsemble) -> WeightedEnsemble:
    if isinstance(state, HybridState):
        return WeightedEnsemble((EnsembleMember(1.0, state),))
    return state


def overlap(a: HybridState, b: HybridState) -> complex:
    """Inner product <a|b>; registers must match."""
    if a.memory_labels != b.memory_labels or a.mode_labels != b.mode_labels:
        raise ValueError("states live on different registers")
    small, big = (a, b) if len(a.amplitudes) <= len(b.amplitudes) else (b, a)
    acc = 0.0 + 0.0j
    for key, amp in small.amplitudes.items():
        other = big.amplitudes.get(key)
        if other is not None:
            if small is a:
                acc += amp.conjugate() * other
            else:
                acc += other.conjugate() * amp
    return acc


def fidelity(a: HybridState, b: HybridState) -> float:
    """|<a|b>|^2 for normalized inputs; insensitive to global phase."""
    return abs(overlap(a, b)) ** 2


def states_equal(a: HybridState, b: HybridState, tol: float = MATCH_TOL) -> bool:
    if a.memory_labels != b.memory_labels or a.mode_labels != b.mode_labels:
        return False
    return fidelity(a, b) >= 1.0 - tol


def ensemble_fidelity(ensemble: StateOrEnsemble, target: HybridState) -> float:
    """Weighted fidelity of a (normalized) ensemble against a pure target."""
    ens = _as_ensemble(ensemble)
    return sum(m.weight * fidelity(m.state, target) for m in ens.members)


def make_state(
    memory_labels: Sequence[str],
    mode_labels: Sequence[Mode],
    terms: Mapping[tuple[Sequence[int] | str, Sequence[int]], complex],
    max_photons: int = 2,
) -> HybridState:
    """Build a normalized state from basis kets with complex coefficients.

    ``terms`` maps ``(memory bits, occupation vector)`` to a coefficient; the
    memory part may be given as a bit string like "0101".  The result is
    normalized, so only relative coefficients matter.
    """
    amps: dict[BasisKey, complex] = {}
    for (mem, occ), coeff in terms.items():
        bits = tuple(int(b) for b in mem)
        occupation = tuple(int(n) for n in occ)
        key = (bits, occupation)
        amps[key] = amps.get(key, 0.0) + complex(coeff)
    state = HybridState(tuple(memory_labels), tuple(mode_labels), amps, max_photons)
    return state.renormalized()


def apply_mode_transform(state: HybridState, transform: ModeTransform) -> HybridState:
    """Apply a two-mode unitary, lifted to the <=2-photon occupation space."""
    i1 = state.mode_index(transform.modes[0])
    i2 = state.mode_index(transform.modes[1])
    a, b = transform.matrix[0, 0], transform.matrix[0, 1]
    c, d = transform.matrix[1, 0], transform.matrix[1, 1]
    sq2 = math.sqrt(2.0)
    # images of the (n1, n2) occupation of the two target modes
    table = {
        (0, 0): (((0, 0), 1.0),),
        (1, 0): (((1, 0), a), ((0, 1), c)),
        (0, 1): (((1, 0), b), ((0, 1), d)),
        (2, 0): (((2, 0), a * a), ((1, 1), sq2 * a * c), ((0, 2), c * c)),
        (0, 2): (((2, 0), b * b), ((1, 1), sq2 * b * d), ((0, 2), d * d)),
        (1, 1): (((2, 0), sq2 * a * b), ((1, 1), a * d + b * c), ((0, 2), sq2 * c * d)),
    }
    out: dict[BasisKey, complex] = {}
    for (mem, occ), amp in state.amplitudes.items():
        pair = (occ[i1], occ[i2])
        for (m1, m2), coeff in table[pair]:
            new_occ = list(occ)
            new_occ[i1], new_occ[i2] = m1, m2
            key = (mem, tuple(new_occ))
            out[key] = out.get(key, 0.0) + amp * coeff
    new = HybridState(state.memory_labels, state.mode_labels, out, state.max_photons)
    if abs(new.norm_sq - state.norm_sq) > NORM_TOL:
        raise AssertionError("mode transform failed to preserve the norm")
    return new


def apply_qubit_gate(state: HybridState, qubit: str, matrix: np.ndarray) -> HybridState:
    """Apply a single-qubit unitary to one memory qubit."""
    m = _check_unitary(matrix, "qubit gate")
    idx = state.memory_index(qubit)
    out: dict[BasisKey, complex] = {}
    for (mem, occ), amp in state.amplitudes.items():
        bit = mem[idx]
        for new_bit in (0, 1):
            coeff = m[new_bit, bit]
            if coeff == 0:
                continue
            new_mem = mem[:idx] + (new_bit,) + mem[idx + 1:]
            key = (new_mem, occ)
            out[key] = out.get(key, 0.0) + amp * coeff
    new = HybridState(state.memory_labels, state.mode_labels, out, state.max_photons)
    if abs(new.norm_sq - state.norm_sq) > NORM_TOL:
        raise AssertionError("qubit gate failed to preserve the norm")
    return new


def measure_qubit(
    state: HybridState, qubit: str, basis: np.ndarray
) -> list[tuple[int, float, HybridState]]:
    """Projective measurement of one memory qubit in an orthonormal basis.

    ``basis[k]`` is the k-th outcome vector expressed in the computational
    basis.  Returns ``(outcome, probability, post-state)`` triples; the
    measured qubit is removed from the register of the post-states.
    """
    bas = _check_unitary(basis, "measurement basis")
    idx = state.memory_index(qubit)
    results = []
    for outcome in (0, 1):
        v0, v1 = bas[outcome, 0].conjugate(), bas[outcome, 1].conjugate()
        amps: dict[BasisKey, complex] = {}
        for (mem, occ), amp in state.amplitudes.items():
            coeff = v0 if mem[idx] == 0 else v1
            if coeff == 0:
                continue
            new_mem = mem[:idx] + mem[idx + 1:]
            key = (new_mem, occ)
            amps[key] = amps.get(key, 0.0) + amp * coeff
        reduced = HybridState(
            state.memory_labels[:idx] + state.memory_labels[idx + 1:],
            state.mode_labels,
            amps,
            state.max_photons,
        )
        prob = reduced.norm_sq
        if prob > 1e-28:
            results.append((outcome, prob, reduced.renormalized()))
    return results


PLUS_MINUS_BASIS = HADAMARD  # rows are <0 + 1| and <0 - 1| up to normalization


def loss_channel(state: HybridState, mode: Mode, eta: float) -> WeightedEnsemble:
    """Photon loss on one mode, as an ensemble over the number of lost photons.

    Models a virtual beam splitter of transmissivity ``eta`` in front of the
    mode: each photon independently survives with probability ``eta``.  The
    environment is traced out; what remains of its record is the branch label
    (the number of photons lost), so each branch is itself pure.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmissivity must be in [0, 1], got {eta}")
    idx = state.mode_index(mode)
    branch_amps: dict[int, dict[BasisKey, complex]] = {}
    for (mem, occ), amp in state.amplitudes.items():
        n = occ[idx]
        for lost in range(n + 1):
            kept = n - lost
            factor = math.sqrt(math.comb(n, lost) * eta ** kept * (1.0 - eta) ** lost)
            if factor == 0.0:
                continue
            new_occ = occ[:idx] + (kept,) + occ[idx + 1:]
            amps = branch_amps.setdefault(lost, {})
            key = (mem, new_occ)
            amps[key] = amps.get(key, 0.0) + amp * factor
    members = []
    for lost in sorted(branch_amps):
        branch = HybridState(state.memory_labels, state.mode_labels,
                             branch_amps[lost], state.max_photons)
        weight = branch.norm_sq
        if weight > 1e-28:
            members.append(EnsembleMember(weight, branch.renormalized(), lost))
    return WeightedEnsemble(tuple(members))


@dataclass(frozen=True)
class ClickPattern:
    """Registered photon counts, one entry per detector id."""

    detector_ids: tuple[str, ...]
    counts: tuple[int, ...]

    def as_dict(self) -> dict[str, int]:
        return dict(zip(self.detector_ids, self.counts))

    @property
    def total(self) -> int:
        return sum(self.counts)

    def __repr__(self):
        clicks = {d: c for d, c in zip(self.detector_ids, self.counts) if c}
        return f"ClickPattern({clicks})" if clicks else "ClickPattern(no clicks)"


def _projective_counts(
    state: StateOrEnsemble, detector_map: Mapping[str, Sequence[Mode]]
) -> list[tuple[tuple[int, ...], float, HybridState]]:
    """Exact per-detector photon-count statistics, before any detection loss.

    Distinct occupation vectors are separate (decohered) entries even when
    they aggregate to the same counts, since each mode feeds its own physical
    detector.  Each entry carries the conditional memory-only state.
    """
    ens = _as_ensemble(state)
    if not detector_map:
        raise ValueError("empty detector map")
    det_index = {d: i for i, d in enumerate(detector_map)}
    entries: dict[tuple[tuple[int, ...], tuple[int, ...], int], tuple[float, HybridState]] = {}
    for mi, member in enumerate(ens.members):
        st = member.state
        mode_to_det: dict[int, int] = {}
        for d, modes in detector_map.items():
            for m in modes:
                mode_to_det[st.mode_index(m)] = det_index[d]
        vecs: dict[tuple[int, ...], dict[tuple[int, ...], complex]] = {}
        for (mem, occ), amp in st.amplitudes.items():
            for i, n in enumerate(occ):
                if n and i not in mode_to_det:
                    raise ValueError(
                        f"mode {st.mode_labels[i]!r} carries photons but no detector"
                    )
            vecs.setdefault(occ, {})
            vecs[occ][mem] = vecs[occ].get(mem, 0.0) + amp
        for occ, memvec in vecs.items():
            p = member.weight * sum(abs(a) ** 2 for a in memvec.values())
            if p <= 1e-28:
                continue
            counts = [0] * len(det_index)
            for i, n in enumerate(occ):
                if n:
                    counts[mode_to_det[i]] += n
            mem_state = HybridState(
                st.memory_labels, (), {(m, ()): a for m, a in memvec.items()}, st.max_photons
            ).renormalized()
            # distinct occupations and distinct input members both decohere
            entries[(tuple(counts), occ, mi)] = (p, mem_state)
    return [(key[0], p, mem_state) for key, (p, mem_state) in sorted(entries.items())]


def measure_photons(
    state: StateOrEnsemble,
    detector_map: Mapping[str, Sequence[Mode]],
    detector: DetectorModel,
) -> list[tuple[ClickPattern, float, WeightedEnsemble]]:
    """Measure all photons with an array of detectors.

    Applies the detector's loss/resolution channel at every detector and
    returns one entry per registered click pattern: its probability and the
    conditional memory-only ensemble (photonic registers are consumed).
    Pattern probabilities sum to the input weight (one for a normalized
    state).
    """
    det_ids = tuple(detector_map)
    arrived = _projective_counts(state, detector_map)
    probs: dict[tuple[int, ...], float] = {}
    members: dict[tuple[int, ...], list[EnsembleMember]] = {}
    for counts, p_arr, mem_state in arrived:
        channels = [detector.count_channel(k) for k in counts]
        for combo in product(*channels):
            registered = tuple(r for r, _ in combo)
            p_reg = 1.0
            for _, q in combo:
                p_reg *= q
            if p_reg <= 0.0:
                continue
            p = p_arr * p_reg
            probs[registered] = probs.get(registered, 0.0) + p
            members.setdefault(registered, []).append(EnsembleMember(p, mem_state))
    results = []
    for registered in sorted(probs):
        p = probs[registered]
        if p <= 1e-28:
            continue
        cond = WeightedEnsemble(
            tuple(EnsembleMember(m.weight / p, m.state) for m in members[registered])
        ).merged()
        results.append((ClickPattern(det_ids, registered), p, cond))
    return results
