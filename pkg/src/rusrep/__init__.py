"""Simulator and analytics for repeat-until-success Bell measurements in
probabilistic quantum repeaters."""

from .analytics import (
    AnalyticProbs,
    ModifiedMetrics,
    branching_mu,
    modified_metrics,
    outcome_probs,
    p_succ_basic,
    p_succ_branching,
    threshold_eta,
)
from .bench import (
    Bench,
    SwapOutcome,
    build_bsm_bench,
    build_mub_bench,
    classify_clicks,
    mub_rotations,
    simulate_bench,
)
from .chain import (
    ChainConfig,
    SweepRow,
    entanglement_rate,
    optimize_nesting,
    ps_model,
    sweep_distance,
    variant_p_succ,
)
from .detectors import DetectorModel
from .protocol import (
    MarkovResult,
    McResult,
    NonConvergenceError,
    ProtocolResult,
    Variant,
    apply_swap_unitary,
    double_encode,
    exact_markov_eval,
    initial_pairs_state,
    mc_estimate,
    node_measure_and_correct,
    run_protocol,
)
from .states import (
    ClickPattern,
    HybridState,
    ModeTransform,
    WeightedEnsemble,
    apply_mode_transform,
    apply_qubit_gate,
    ensemble_fidelity,
    fidelity,
    loss_channel,
    make_state,
    measure_photons,
    measure_qubit,
    states_equal,
)

__version__ = "0.1.0"
