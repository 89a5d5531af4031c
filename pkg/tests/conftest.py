import pytest

from rusrep.bench import INPUT_MODES
from rusrep.protocol import (
    PHOTON_MODES_A,
    PHOTON_MODES_B,
    double_encode,
    initial_pairs_state,
)
from rusrep.states import make_state


def photon_pair(index: int):
    """The four two-photon inputs: HH, VV, and (HV +- VH)/sqrt2."""
    def occ(a_pol, b_pol):
        return tuple(1 if m in (("a", a_pol), ("b", b_pol)) else 0 for m in INPUT_MODES)

    terms = {
        1: {((), occ("H", "H")): 1.0},
        2: {((), occ("V", "V")): 1.0},
        3: {((), occ("H", "V")): 1.0, ((), occ("V", "H")): 1.0},
        4: {((), occ("H", "V")): 1.0, ((), occ("V", "H")): -1.0},
    }[index]
    return make_state((), INPUT_MODES, terms)


def encoded_pairs():
    """Both memory pairs Bell-entangled, node qubits double-encoded."""
    live = initial_pairs_state().with_modes(PHOTON_MODES_A + PHOTON_MODES_B)
    st = double_encode(live, "A'", PHOTON_MODES_A)
    return double_encode(st, "B'", PHOTON_MODES_B)


def bisect_root(fn, lo, hi, tol=1e-12, max_iter=200):
    """Plain bisection for a sign change of fn on [lo, hi]."""
    flo, fhi = fn(lo), fn(hi)
    assert flo * fhi < 0, "no sign change on the bracket"
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = fn(mid)
        if fmid == 0 or hi - lo < tol:
            return mid
        if flo * fmid < 0:
            hi = mid
        else:
            lo, flo = mid, fmid
    return 0.5 * (lo + hi)


@pytest.fixture
def psi_in():
    return initial_pairs_state()


@pytest.fixture
def psi_de():
    return encoded_pairs()
