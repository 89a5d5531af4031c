"""Repeat-until-success entanglement-swapping state machines.

A middle node holds qubits A' and B', each entangled with a remote partner
(A and B).  Every round it entangles A' and B' with fresh photons, measures
the photon pair on the rotated bench, and acts on the outcome:

* an entangling outcome (chi3/chi4) completes the swap: A' and B' are read
  out in the |0> +- |1> basis and a correction from a fixed lookup table
  brings the A-B state to the canonical Bell state |01> + |10>;
* a product outcome (chi1/chi2) leaves the remote entanglement intact, so
  after undoing the imprinted phases the round is simply repeated;
* ambiguous outcomes (a lone click, or none) abort in the basic variant.
  The modified variant instead treats lone clicks as repeats, trading some
  final-state fidelity for success probability; the branching variant adds
  splitter trees so threshold detectors regain two-photon resolution.

Round dynamics are memoized per distinct live memory state, which turns the
protocol into a small absorbing Markov chain.  The chain is solved exactly
(:func:`exact_markov_eval`) and sampled (:func:`run_protocol`,
:func:`mc_estimate`); the sampler walks a flattened table via the kernels in
:mod:`rusrep._kernels`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from . import _kernels
from .bench import Bench, SwapOutcome, build_mub_bench, simulate_bench
from .detectors import DetectorModel
from .states import (
    HADAMARD,
    ID2,
    MATCH_TOL,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    PHASE_S,
    PLUS_MINUS_BASIS,
    HybridState,
    Mode,
    WeightedEnsemble,
    apply_qubit_gate,
    fidelity,
    make_state,
    measure_qubit,
    states_equal,
)

MEMORY_LABELS = ("A", "A'", "B", "B'")
PHOTON_MODES_A: tuple[Mode, Mode] = (("a", "H"), ("a", "V"))
PHOTON_MODES_B: tuple[Mode, Mode] = (("b", "H"), ("b", "V"))

# Diagonal phases imprinted on (A', B') by each photon-pair outcome, indexed
# over the computational basis |00>, |01>, |10>, |11>.
SWAP_PHASES = {
    1: (1, 1, 1, 1),
    2: (1, -1, -1, 1),
    3: (-1, -1j, 1j, 1),
    4: (1, -1j, 1j, -1),
}

_CHI_INDEX = {"chi1": 1, "chi2": 2, "chi3": 3, "chi4": 4}


class NonConvergenceError(RuntimeError):
    """The live-state set failed to close within the configured cap."""


def initial_pairs_state() -> HybridState:
    """Both memory pairs in (|01> + |10>)/sqrt2, no photons yet."""
    terms = {}
    for a_bits in ((0, 1), (1, 0)):
        for b_bits in ((0, 1), (1, 0)):
            terms[(a_bits + b_bits, ())] = 1.0
    return make_state(MEMORY_LABELS, (), terms)


@lru_cache(maxsize=1)
def bell_target() -> HybridState:
    """The canonical Bell state (|01> + |10>)/sqrt2 on qubits A and B."""
    return make_state(("A", "B"), (), {((0, 1), ()): 1.0, ((1, 0), ()): 1.0})


def double_encode(state: HybridState, qubit: str, modes: tuple[Mode, Mode]) -> HybridState:
    """Entangle one memory qubit with a fresh photon's polarization.

    ``modes`` is the (H, V) mode pair of the new photon; a memory |1> emits
    a horizontally polarized photon, |0> a vertical one, so
    alpha|0> + beta|1> becomes alpha|0,V> + beta|1,H>.
    """
    h_mode, v_mode = modes
    st = state.with_modes([h_mode, v_mode])
    ih, iv = st.mode_index(h_mode), st.mode_index(v_mode)
    iq = st.memory_index(qubit)
    out = {}
    for (mem, occ), amp in st.amplitudes.items():
        if occ[ih] or occ[iv]:
            raise ValueError(f"photon modes {modes} must start in vacuum")
        target = ih if mem[iq] else iv
        new_occ = occ[:target] + (1,) + occ[target + 1:]
        out[(mem, new_occ)] = amp
    return HybridState(st.memory_labels, st.mode_labels, out, st.max_photons)


def apply_swap_unitary(index: int, state: HybridState) -> HybridState:
    """Apply the diagonal two-qubit phase pattern of outcome ``index`` to A', B'."""
    if index not in SWAP_PHASES:
        raise ValueError(f"swap unitary index must be 1..4, got {index}")
    phases = SWAP_PHASES[index]
    ia, ib = state.memory_index("A'"), state.memory_index("B'")
    out = {
        (mem, occ): amp * phases[2 * mem[ia] + mem[ib]]
        for (mem, occ), amp in state.amplitudes.items()
    }
    return HybridState(state.memory_labels, state.mode_labels, out, state.max_photons)


def _frame_restore(state: HybridState, outcome_kind: str) -> HybridState:
    # chi2 imprints Z on both node qubits; chi1 is the identity
    if outcome_kind == "chi1":
        return state
    st = apply_qubit_gate(state, "A'", PAULI_Z)
    return apply_qubit_gate(st, "B'", PAULI_Z)


# --- single-qubit Clifford group, for the post-measurement corrections -----

def _phase_canonical(matrix: np.ndarray) -> tuple:
    flat = matrix.reshape(-1)
    for z in flat:
        if abs(z) > 0.3:
            fixed = matrix * (z.conjugate() / abs(z))
            return tuple(np.round(fixed.reshape(-1), 9).tolist())
    raise AssertionError("degenerate matrix")


@lru_cache(maxsize=1)
def _cliffords() -> tuple[tuple[str, np.ndarray], ...]:
    """The 24 single-qubit Cliffords, named by a shortest generator word."""
    gens = [("X", PAULI_X), ("Y", PAULI_Y), ("Z", PAULI_Z), ("S", PHASE_S), ("H", HADAMARD)]
    found: dict[tuple, tuple[str, np.ndarray]] = {_phase_canonical(ID2): ("I", ID2)}
    frontier = [("I", ID2)]
    while frontier:
        nxt = []
        for name, mat in frontier:
            for gname, gmat in gens:
                new = gmat @ mat
                key = _phase_canonical(new)
                if key not in found:
                    word = gname if name == "I" else gname + name
                    found[key] = (word, new)
                    nxt.append((word, new))
        frontier = nxt
    out = tuple(found.values())
    assert len(out) == 24, f"expected 24 Cliffords, got {len(out)}"
    return out


class NodeBranch(NamedTuple):
    """One readout branch of the node measurement."""

    results: tuple[int, int]        # 0 = "+", 1 = "-" for A' and B'
    prob: float
    state: HybridState              # corrected A-B state
    bell_fidelity: float
    frame: tuple[str, str]          # correction labels applied to A and B


@lru_cache(maxsize=1)
def correction_table() -> dict[tuple[str, int, int], tuple[str, np.ndarray, str, np.ndarray]]:
    """Corrections mapping every entangling readout branch onto |01> + |10>.

    Found once by exhaustive search over single-qubit Clifford pairs on the
    lossless branches.  (Pauli pairs do not suffice: the conditional states
    carry relative phases of i between two Bell components.)
    """
    table = {}
    target = bell_target()
    psi_in = initial_pairs_state()
    for kind in ("chi3", "chi4"):
        mem = apply_swap_unitary(_CHI_INDEX[kind], psi_in)
        for s, _ps, after_a in measure_qubit(mem, "A'", PLUS_MINUS_BASIS):
            for t, _pt, ab in measure_qubit(after_a, "B'", PLUS_MINUS_BASIS):
                hit = None
                for name_a, mat_a in _cliffords():
                    cand_a = apply_qubit_gate(ab, "A", mat_a)
                    for name_b, mat_b in _cliffords():
                        cand = apply_qubit_gate(cand_a, "B", mat_b)
                        if fidelity(cand, target) >= 1.0 - 1e-12:
                            hit = (name_a, mat_a, name_b, mat_b)
                            break
                    if hit:
                        break
                if hit is None:
                    raise AssertionError(f"no Clifford correction for {kind}, ({s},{t})")
                table[(kind, s, t)] = hit
    return table


def node_measure_and_correct(state: HybridState, outcome: SwapOutcome) -> list[NodeBranch]:
    """Read out A' and B' in the |0> +- |1> basis and correct the A-B state.

    Only the entangling outcomes chi3/chi4 leave A and B entangled, so the
    call is rejected for anything else.  All four readout branches are
    returned with their probabilities, the corrected two-qubit state, and
    its fidelity to the canonical Bell target.
    """
    if outcome.kind not in ("chi3", "chi4"):
        raise ValueError(f"outcome {outcome} does not complete the swap")
    st = state.memory_only() if state.mode_labels else state
    table = correction_table()
    branches = []
    for s, p_a, after_a in measure_qubit(st, "A'", PLUS_MINUS_BASIS):
        for t, p_b, ab in measure_qubit(after_a, "B'", PLUS_MINUS_BASIS):
            name_a, mat_a, name_b, mat_b = table[(outcome.kind, s, t)]
            corrected = apply_qubit_gate(apply_qubit_gate(ab, "A", mat_a), "B", mat_b)
            branches.append(
                NodeBranch(
                    results=(s, t),
                    prob=p_a * p_b,
                    state=corrected,
                    bell_fidelity=fidelity(corrected, bell_target()),
                    frame=(name_a, name_b),
                )
            )
    return branches


# --- protocol variants and the memoized round engine ------------------------

@dataclass(frozen=True)
class Variant:
    """Which rule set the node follows.

    kind "basic": repeat on declared two-photon events only, abort on
    anything ambiguous.  "modified": threshold detectors, lone clicks also
    repeat (error-accepting).  "branching": basic rules on a splitter-tree
    bench of the given depth with threshold leaf detectors.
    """

    kind: str
    depth: int = 0

    def __post_init__(self):
        if self.kind not in ("basic", "modified", "branching"):
            raise ValueError(f"unknown protocol variant {self.kind!r}")
        if self.kind == "branching" and (self.depth < 0 or int(self.depth) != self.depth):
            raise ValueError("branching depth must be a nonnegative integer")

    @classmethod
    def basic(cls) -> Variant:
        return cls("basic")

    @classmethod
    def modified(cls) -> Variant:
        return cls("modified")

    @classmethod
    def branching(cls, depth: int) -> Variant:
        return cls("branching", depth)


class _SuccessEvent(NamedTuple):
    prob: float
    bell_fidelity: float
    frame: tuple[str, str]
    state: HybridState


class _RoundEval(NamedTuple):
    successes: list[_SuccessEvent]
    abort: float
    repeats: list[tuple[float, int]]   # (prob, next live-state index)


class _RoundEngine:
    """Memoizes the exact one-round dynamics per distinct live memory state."""

    def __init__(self, variant: Variant, detector: DetectorModel):
        if variant.kind == "modified" and detector.kind != "threshold":
            raise ValueError(
                "the modified (error-accepting) variant is defined for threshold "
                "detectors only; lone clicks have no repeat interpretation otherwise"
            )
        if variant.kind == "branching" and detector.kind != "threshold":
            raise ValueError("the branching variant uses threshold leaf detectors")
        self.variant = variant
        self.detector = detector
        depth = variant.depth if variant.kind == "branching" else 0
        self.bench: Bench = build_mub_bench(depth)
        self.states: list[HybridState] = [initial_pairs_state()]
        self._evals: dict[int, _RoundEval] = {}

    def state_index(self, state: HybridState) -> int:
        for i, known in enumerate(self.states):
            if states_equal(known, state, MATCH_TOL):
                return i
        self.states.append(state)
        return len(self.states) - 1

    def _repeat_interpretation(self, outcome: SwapOutcome) -> str | None:
        if outcome.kind in ("chi1", "chi2"):
            return outcome.kind
        if outcome.kind == "single" and self.variant.kind == "modified":
            # lone clicks at the H detectors look like chi1, at the V ones chi2
            return "chi1" if outcome.detector in ("D2", "D4") else "chi2"
        return None

    def evaluate(self, index: int) -> _RoundEval:
        cached = self._evals.get(index)
        if cached is not None:
            return cached
        live = self.states[index].with_modes(PHOTON_MODES_A + PHOTON_MODES_B)
        encoded = double_encode(live, "A'", PHOTON_MODES_A)
        encoded = double_encode(encoded, "B'", PHOTON_MODES_B)
        successes: list[_SuccessEvent] = []
        abort = 0.0
        repeat_acc: dict[int, float] = {}
        for outcome, p_out, cond in simulate_bench(encoded, self.bench, self.detector):
            if outcome.kind in ("chi3", "chi4"):
                for member in cond.members:
                    for branch in node_measure_and_correct(member.state, outcome):
                        successes.append(
                            _SuccessEvent(
                                p_out * member.weight * branch.prob,
                                branch.bell_fidelity,
                                branch.frame,
                                branch.state,
                            )
                        )
                continue
            repeat_as = self._repeat_interpretation(outcome)
            if repeat_as is None:
                abort += p_out
                continue
            for member in cond.members:
                restored = _frame_restore(member.state, repeat_as)
                j = self.state_index(restored)
                repeat_acc[j] = repeat_acc.get(j, 0.0) + p_out * member.weight
        total = sum(e.prob for e in successes) + abort + sum(repeat_acc.values())
        if abs(total - 1.0) > 1e-9:
            raise AssertionError(f"round probabilities sum to {total}, not 1")
        ev = _RoundEval(successes, abort, [(p, j) for j, p in sorted(repeat_acc.items())])
        self._evals[index] = ev
        return ev

    def closure(self, max_states: int = 64) -> dict[int, _RoundEval]:
        """Evaluate every live state reachable from the initial one."""
        pending = [0]
        while pending:
            i = pending.pop()
            if i in self._evals:
                continue
            ev = self.evaluate(i)
            for _p, j in ev.repeats:
                if j not in self._evals:
                    pending.append(j)
            if len(self.states) > max_states:
                raise NonConvergenceError(
                    f"live-state set exceeded {max_states} states without closing"
                )
        return self._evals


# --- results ----------------------------------------------------------------

@dataclass(frozen=True)
class ProtocolResult:
    """One sampled protocol run."""

    status: str                      # "success" or "abort"
    rounds: int
    frame: tuple[str, str] | None    # correction labels on A and B (success only)
    final_ab_state: HybridState | None
    fidelity_to_bell: float | None
    cap_reached: bool = False


@dataclass(frozen=True)
class MarkovResult:
    """Exact absorbing-chain solution of a protocol variant."""

    p_success: float
    p_abort: float
    fidelity: float | None           # Bell fidelity conditioned on success
    expected_rounds: float
    residual_mass: float
    n_states: int

    def as_dict(self) -> dict:
        return {
            "p_success": self.p_success,
            "p_abort": self.p_abort,
            "fidelity": self.fidelity,
            "expected_rounds": self.expected_rounds,
            "residual_mass": self.residual_mass,
            "n_states": self.n_states,
        }


@dataclass(frozen=True)
class McResult:
    """Monte Carlo estimates with standard errors."""

    trials: int
    seed: int
    p_success: float
    p_success_se: float
    fidelity: float | None
    fidelity_se: float | None
    expected_rounds: float
    rounds_se: float
    n_success: int
    backend: str

    def as_dict(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "p_success": self.p_success,
            "p_success_se": self.p_success_se,
            "fidelity": self.fidelity,
            "fidelity_se": self.fidelity_se,
            "expected_rounds": self.expected_rounds,
            "rounds_se": self.rounds_se,
            "n_success": self.n_success,
            "backend": self.backend,
        }


def exact_markov_eval(
    variant: Variant,
    detector: DetectorModel,
    tol: float = 1e-12,
    max_states: int = 64,
) -> MarkovResult:
    """Solve the protocol exactly as an absorbing Markov chain.

    The reachable live-state set is closed by memoized round evaluation (it
    stays tiny because every imprinted phase pattern is diagonal), then the
    expected visit counts x = (I - R^T)^-1 e0 give the absorbed masses, the
    success-conditioned Bell fidelity, and the expected number of rounds, all
    to machine precision.
    """
    engine = _RoundEngine(variant, detector)
    evals = engine.closure(max_states=max_states)
    n = len(engine.states)
    repeat = np.zeros((n, n))
    succ = np.zeros(n)
    abort = np.zeros(n)
    fid_mass = np.zeros(n)
    for i, ev in evals.items():
        for event in ev.successes:
            succ[i] += event.prob
            fid_mass[i] += event.prob * event.bell_fidelity
        abort[i] = ev.abort
        for p, j in ev.repeats:
            repeat[i, j] += p
    start = np.zeros(n)
    start[0] = 1.0
    visits = np.linalg.solve(np.eye(n) - repeat.T, start)
    p_success = float(visits @ succ)
    p_abort = float(visits @ abort)
    residual = 1.0 - (p_success + p_abort)
    if abs(residual) > 1e-9:
        raise NonConvergenceError(f"probability mass leak: residual {residual:.3e}")
    fid = float(visits @ fid_mass) / p_success if p_success > tol else None
    return MarkovResult(
        p_success=p_success,
        p_abort=p_abort,
        fidelity=fid,
        expected_rounds=float(visits.sum()),
        residual_mass=residual,
        n_states=n,
    )


def run_protocol(
    variant: Variant,
    detector: DetectorModel,
    seed: int | None = None,
    max_rounds: int = 64,
    exhaustive: bool = False,
):
    """Sample one protocol trajectory (or solve exactly with ``exhaustive``).

    Returns a :class:`ProtocolResult`, or the :class:`MarkovResult`
    distribution when ``exhaustive`` is set.  Hitting ``max_rounds`` without
    absorption counts as an abort with ``cap_reached`` set.
    """
    if exhaustive:
        return exact_markov_eval(variant, detector)
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least one")
    engine = _RoundEngine(variant, detector)
    rng = np.random.default_rng(seed)
    state = 0
    for rounds in range(1, max_rounds + 1):
        ev = engine.evaluate(state)
        u = rng.random()
        acc = 0.0
        chosen = None
        for event in ev.successes:
            acc += event.prob
            if u < acc:
                chosen = ("success", event)
                break
        if chosen is None:
            acc += ev.abort
            if u < acc:
                chosen = ("abort", None)
        if chosen is None:
            for p, j in ev.repeats:
                acc += p
                if u < acc:
                    chosen = ("repeat", j)
                    break
        if chosen is None:  # numerical dust at the top of the cumulative sum
            chosen = ("repeat", ev.repeats[-1][1]) if ev.repeats else ("abort", None)
        tag, payload = chosen
        if tag == "success":
            return ProtocolResult(
                "success", rounds, payload.frame, payload.state, payload.bell_fidelity
            )
        if tag == "abort":
            return ProtocolResult("abort", rounds, None, None, None)
        state = payload
    return ProtocolResult("abort", max_rounds, None, None, None, cap_reached=True)


def _flatten_table(engine: _RoundEngine, evals: dict[int, _RoundEval]):
    offs = np.zeros(len(engine.states), dtype=np.int64)
    n_ev = np.zeros(len(engine.states), dtype=np.int64)
    cum: list[float] = []
    kind: list[int] = []
    nxt: list[int] = []
    fid: list[float] = []
    for i in range(len(engine.states)):
        ev = evals[i]
        offs[i] = len(cum)
        running = 0.0
        entries = (
            [(2, 0, e.bell_fidelity, e.prob) for e in ev.successes]
            + [(1, 0, 0.0, ev.abort)]
            + [(0, j, 0.0, p) for p, j in ev.repeats]
        )
        for code, target, f, p in entries:
            running += p
            cum.append(running)
            kind.append(code)
            nxt.append(target)
            fid.append(f)
        if abs(running - 1.0) > 1e-9:
            raise AssertionError(f"round table for state {i} sums to {running}")
        cum[-1] = 1.0  # close the cumulative sum exactly
        n_ev[i] = len(entries)
    return (
        offs,
        n_ev,
        np.array(cum, dtype=np.float64),
        np.array(kind, dtype=np.int8),
        np.array(nxt, dtype=np.int64),
        np.array(fid, dtype=np.float64),
    )


def mc_estimate(
    variant: Variant,
    detector: DetectorModel,
    trials: int,
    seed: int,
    max_rounds: int = 64,
    backend: str | None = None,
) -> McResult:
    """Estimate protocol metrics from ``trials`` independent trajectories.

    Each trial consumes its own counter-based random stream derived from
    ``(seed, trial index)``, so results are bit-reproducible and extending
    the trial count never re-correlates earlier trials.  Round-cap hits are
    counted as aborts.
    """
    if trials < 1:
        raise ValueError("trials must be at least one")
    engine = _RoundEngine(variant, detector)
    evals = engine.closure()
    offs, n_ev, cum, kind, nxt, fid = _flatten_table(engine, evals)
    status, rounds, fidelity_arr = _kernels.mc_walk(
        seed, trials, max_rounds, offs, n_ev, cum, kind, nxt, fid, backend=backend
    )
    success = status == 1
    n_success = int(success.sum())
    p_hat = n_success / trials
    p_se = math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / trials)
    if n_success:
        fids = fidelity_arr[success]
        fid_hat = float(fids.mean())
        fid_se = float(fids.std(ddof=1) / math.sqrt(n_success)) if n_success > 1 else 0.0
    else:
        fid_hat, fid_se = None, None
    rounds_f = rounds.astype(np.float64)
    used = "numba" if (backend == "numba" or (backend is None and _kernels.numba_enabled())) else "numpy"
    return McResult(
        trials=trials,
        seed=seed,
        p_success=p_hat,
        p_success_se=p_se,
        fidelity=fid_hat,
        fidelity_se=fid_se,
        expected_rounds=float(rounds_f.mean()),
        rounds_se=float(rounds_f.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0,
        n_success=n_success,
        backend=used,
    )
