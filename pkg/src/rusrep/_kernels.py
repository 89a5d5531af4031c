"""Monte Carlo trajectory kernels: numba-jitted with a pure-numpy twin.

The protocol's exact round analysis reduces each trajectory to a walk on a
small absorbing Markov table, so the hot loop is pure integer/float work.
The numba path walks trial by trial; the numpy path advances all live trials
one round at a time.  Both consume the same counter-based random stream
(a splitmix64-style hash of ``(seed, trial, round)``), so their outputs are
bit-identical and trial ``t`` sees the same randomness regardless of the
total trial count or backend.

Set ``RUSREP_NO_NUMBA=1`` to force the numpy path (it is also used when
numba is not importable).
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


_ENV_FLAG = "RUSREP_NO_NUMBA"

# splitmix64 finalizer constants plus two odd stream-separation increments
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_K_TRIAL = np.uint64(0x9E3779B97F4A7C15)
_K_ROUND = np.uint64(0xD1B54A32D192ED03)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def numba_enabled() -> bool:
    """True when the jitted path is importable and not disabled by env."""
    return HAVE_NUMBA and os.environ.get(_ENV_FLAG, "") not in ("1", "true", "yes")


def _mix64(z):
    # works elementwise on uint64 arrays and on uint64 scalars under numba
    z = (z ^ (z >> _S30)) * _C1
    z = (z ^ (z >> _S27)) * _C2
    return z ^ (z >> _S31)


_mix64_jit = njit(_mix64)


@njit
def _walk_trials_numba(seed, trials, max_rounds, offs, n_ev, cum, kind, nxt, fid,
                       status, rounds, fidelity):
    for t in range(trials):
        key = _mix64_jit(np.uint64(seed) + np.uint64(t) * _K_TRIAL)
        state = 0
        absorbed = False
        for r in range(1, max_rounds + 1):
            v = _mix64_jit(key + np.uint64(r) * _K_ROUND)
            u = (v >> _S11) * _INV53
            base = offs[state]
            n = n_ev[state]
            e = base + n - 1
            for k in range(n):
                if u < cum[base + k]:
                    e = base + k
                    break
            kd = kind[e]
            if kd == 0:
                state = nxt[e]
            elif kd == 1:
                status[t] = 0
                rounds[t] = r
                absorbed = True
                break
            else:
                status[t] = 1
                rounds[t] = r
                fidelity[t] = fid[e]
                absorbed = True
                break
        if not absorbed:
            status[t] = 2
            rounds[t] = max_rounds


def _walk_trials_numpy(seed, trials, max_rounds, offs, n_ev, cum, kind, nxt, fid,
                       status, rounds, fidelity):
    # unsigned wraparound is intentional; silence scalar overflow warnings
    with np.errstate(over="ignore"):
        _walk_rounds_numpy(seed, trials, max_rounds, offs, n_ev, cum, kind, nxt,
                           fid, status, rounds, fidelity)


def _walk_rounds_numpy(seed, trials, max_rounds, offs, n_ev, cum, kind, nxt, fid,
                       status, rounds, fidelity):
    keys = _mix64(np.uint64(seed) + np.arange(trials, dtype=np.uint64) * _K_TRIAL)
    state = np.zeros(trials, dtype=np.int64)
    alive = np.ones(trials, dtype=bool)
    status[:] = 2
    rounds[:] = max_rounds
    for r in range(1, max_rounds + 1):
        live = np.nonzero(alive)[0]
        if live.size == 0:
            break
        v = _mix64(keys[live] + np.uint64(r) * _K_ROUND)
        u = (v >> _S11) * _INV53
        st_live = state[live]
        for s in np.unique(st_live):
            in_s = st_live == s
            sel = live[in_s]
            lo, n = offs[s], n_ev[s]
            e = lo + np.searchsorted(cum[lo:lo + n], u[in_s], side="right")
            e = np.minimum(e, lo + n - 1)
            kd = kind[e]
            rep = kd == 0
            state[sel[rep]] = nxt[e[rep]]
            hit = sel[kd == 1]
            status[hit] = 0
            rounds[hit] = r
            alive[hit] = False
            hit = sel[kd == 2]
            status[hit] = 1
            rounds[hit] = r
            fidelity[hit] = fid[e[kd == 2]]
            alive[hit] = False


def mc_walk(seed, trials, max_rounds, offs, n_ev, cum, kind, nxt, fid,
            backend: str | None = None):
    """Sample ``trials`` protocol trajectories from a flattened round table.

    Returns ``(status, rounds, fidelity)`` arrays; status is 1 for success,
    0 for abort, 2 for hitting the round cap (treated as abort by callers).
    ``backend`` may force "numba" or "numpy"; default follows
    :func:`numba_enabled`.
    """
    if backend not in (None, "numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    use_jit = backend == "numba" or (backend is None and numba_enabled())
    status = np.zeros(trials, dtype=np.int8)
    rounds = np.zeros(trials, dtype=np.int32)
    fidelity = np.full(trials, np.nan, dtype=np.float64)
    walker = _walk_trials_numba if use_jit else _walk_trials_numpy
    walker(np.uint64(seed), trials, max_rounds,
           offs, n_ev, cum, kind, nxt, fid, status, rounds, fidelity)
    return status, rounds, fidelity
