"""Command-line front end producing deterministic CSV/JSON reports.

Subcommands: ``probs``, ``fig5``, ``fig7``, ``swap``, ``chain``, ``bench``.
Outputs are byte-stable for identical invocations: CSV numbers use 12
significant digits, JSON uses shortest round-trip floats and fixed key
order.  Parameter precedence is flags > config file (``--config``, lines of
``key = value`` with ``#`` comments) > built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import analytics, chain
from .bench import build_mub_bench, INPUT_MODES, simulate_bench
from .detectors import DetectorModel
from .protocol import (
    NonConvergenceError,
    Variant,
    apply_swap_unitary,
    double_encode,
    exact_markov_eval,
    initial_pairs_state,
    mc_estimate,
    PHOTON_MODES_A,
    PHOTON_MODES_B,
)
from .states import ensemble_fidelity, make_state

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def parse_range(text: str) -> list[float]:
    """Parse "start:stop:step" (inclusive stop) or a single number."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return [float(parts[0])]
        if len(parts) != 3:
            raise ValueError
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise UsageError(f"bad range {text!r}; expected a number or start:stop:step") from None
    if step <= 0 or stop < start:
        raise UsageError(f"bad range {text!r}; need step > 0 and stop >= start")
    values = []
    k = 0
    while True:
        v = start + k * step
        if v > stop + 1e-9 * step:
            break
        values.append(min(v, stop))
        k += 1
    return values


def parse_depth(text: str) -> int | float:
    if text.strip().lower() == "inf":
        return math.inf
    try:
        n = int(text)
    except ValueError:
        raise UsageError(f"bad branching depth {text!r}; expected an integer or 'inf'") from None
    if n < 0:
        raise UsageError("branching depth must be nonnegative")
    return n


def parse_depth_list(text: str) -> list[int | float]:
    return [parse_depth(p) for p in text.split(",") if p.strip()]


def _load_config(path: str) -> dict[str, str]:
    cfg: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected 'key = value'")
                key, value = line.split("=", 1)
                cfg[key.strip()] = value.strip()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    return cfg


def _resolve(args: argparse.Namespace, spec: dict[str, tuple]) -> dict:
    """Merge flag values, config-file values, and defaults (in that order)."""
    cfg = _load_config(args.config) if getattr(args, "config", None) else {}
    unknown = set(cfg) - set(spec)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = {}
    for name, (parser, default) in spec.items():
        flag_value = getattr(args, name.replace("-", "_"), None)
        if flag_value is not None:
            out[name] = parser(flag_value) if isinstance(flag_value, str) else flag_value
        elif name in cfg:
            out[name] = parser(cfg[name])
        else:
            out[name] = default
    return out


def _write(text: str, out_path: str | None):
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(header: str, rows: list[list[str]]) -> str:
    return "\n".join([header] + [",".join(r) for r in rows]) + "\n"


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _depth_label(depth: int | float) -> str:
    return "inf" if depth == math.inf else str(int(depth))


# --- subcommands -------------------------------------------------------------

def cmd_probs(args) -> str:
    p = _resolve(args, {
        "eta": (parse_range, parse_range("0.5:1.0:0.05")),
        "mu": (parse_range, None),
    })
    rows = []
    for eta in p["eta"]:
        mus = p["mu"] if p["mu"] is not None else [0.0, eta]
        for mu in mus:
            if mu > eta + 1e-12:
                continue  # outside the model's domain
            probs = analytics.outcome_probs(eta, min(mu, eta))
            rows.append([_fmt(eta), _fmt(mu)] + [_fmt(v) for v in probs.as_dict().values()])
    return _csv("eta,mu,P11,P20,P10_1,P10_2,P00", rows)


def cmd_fig5(args) -> str:
    p = _resolve(args, {
        "eta": (parse_range, parse_range("0.5:1.0:0.01")),
        "N": (parse_depth_list, [0, 1, 2, 3, math.inf]),
    })
    rows = []
    for depth in p["N"]:
        for eta in p["eta"]:
            rows.append([_fmt(eta), _depth_label(depth),
                         _fmt(analytics.p_succ_branching(eta, depth))])
    return _csv("eta,N,p_succ", rows)


def cmd_fig7(args) -> str:
    p = _resolve(args, {
        "L": (parse_range, parse_range("100:2500:100")),
        "variants": (lambda s: [v.strip() for v in s.split(",") if v.strip()],
                     ["non-rus", "N1", "N2", "Ninf"]),
        "eta": (float, 0.93),
        "Latt": (float, 25.0),
        "c": (float, 2e5),
        "prefactor": (float, 0.1),
        "nmax": (int, 12),
    })
    if not p["variants"]:
        raise UsageError("empty variant list")
    try:
        rows = chain.sweep_distance(p["L"], p["variants"], p["eta"],
                                    p["Latt"], p["c"], p["prefactor"], p["nmax"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return _csv(
        "L_km,variant,n_opt,rate_per_s",
        [[_fmt(r.total_km), r.variant, str(r.n_opt), _fmt(r.rate_per_s)] for r in rows],
    )


def cmd_chain(args) -> str:
    p = _resolve(args, {
        "L": (float, 1000.0),
        "variant": (str, "Ninf"),
        "eta": (float, 0.93),
        "n": (int, None),
        "Latt": (float, 25.0),
        "c": (float, 2e5),
        "prefactor": (float, 0.1),
        "nmax": (int, 12),
    })
    try:
        p_swap = chain.variant_p_succ(p["variant"], p["eta"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if p["n"] is None:
        n_opt, rate = chain.optimize_nesting(p["L"], p_swap, p["Latt"], p["c"],
                                             p["prefactor"], p["nmax"])
        optimized = True
    else:
        n_opt = p["n"]
        rate = chain.entanglement_rate(
            chain.ChainConfig(p["L"], n_opt, p_swap, p["Latt"], p["c"], p["prefactor"])
        )
        optimized = False
    cfg = chain.ChainConfig(p["L"], n_opt, p_swap, p["Latt"], p["c"], p["prefactor"])
    return _json({
        "L_km": p["L"],
        "variant": p["variant"],
        "eta": p["eta"],
        "p_swap": p_swap,
        "n": n_opt,
        "n_optimized": optimized,
        "segment_km": cfg.segment_km,
        "p_source": cfg.p_source,
        "t0_s": cfg.t0_s,
        "rate_per_s": rate,
    })


def _swap_setup(p) -> tuple[Variant, DetectorModel]:
    eta = p["eta"]
    if p["variant"] == "basic":
        kind = p["detector"] or "resolving"
        if kind == "tree":
            if p["N"] is None:
                raise UsageError("basic variant with a tree detector needs --N")
            det = DetectorModel.tree(eta, p["N"])
        elif kind == "mu":
            if p["mu"] is None:
                raise UsageError("abstract detector needs --mu")
            det = DetectorModel.mu(eta, p["mu"])
        elif kind in ("threshold", "resolving"):
            det = DetectorModel(eta, kind)
        else:
            raise UsageError(f"unknown detector kind {kind!r}")
        return Variant.basic(), det
    if p["variant"] == "modified":
        if p["detector"] not in (None, "threshold"):
            raise UsageError(
                "the modified variant is defined for threshold detectors only: "
                "a lone click cannot be reinterpreted as a repeat when the "
                "detector could have resolved two photons"
            )
        return Variant.modified(), DetectorModel.threshold(eta)
    if p["variant"] == "branching":
        if p["N"] is None or p["N"] == math.inf:
            raise UsageError("branching variant needs a finite --N")
        if p["detector"] not in (None, "threshold"):
            raise UsageError("branching uses threshold leaf detectors")
        return Variant.branching(int(p["N"])), DetectorModel.threshold(eta)
    raise UsageError(f"unknown variant {p['variant']!r}")


def cmd_swap(args) -> str:
    p = _resolve(args, {
        "variant": (str, "basic"),
        "eta": (float, 0.9),
        "mu": (float, None),
        "N": (parse_depth, None),
        "detector": (str, None),
        "trials": (int, 100000),
        "seed": (int, 1),
        "mode": (str, "both"),
        "max-rounds": (int, 64),
    })
    if p["mode"] not in ("mc", "exact", "both"):
        raise UsageError(f"mode must be mc, exact, or both, got {p['mode']!r}")
    variant, detector = _swap_setup(p)
    mu_eff = detector.resolution
    report: dict = {
        "variant": variant.kind,
        "eta": p["eta"],
        "detector": {
            "kind": detector.kind,
            "eta": detector.eta,
            "mu": mu_eff,
            "N": None if detector.depth is None else _depth_label(detector.depth),
        },
        "mode": p["mode"],
    }
    if variant.kind == "branching":
        report["detector"]["N"] = str(variant.depth)
        mu_eff = analytics.branching_mu(p["eta"], variant.depth)
        report["detector"]["mu"] = mu_eff
    probs = analytics.outcome_probs(p["eta"], mu_eff)
    closed: dict = {"outcome_probs": probs.as_dict()}
    if variant.kind == "modified":
        closed.update(analytics.modified_metrics(p["eta"]).as_dict())
    else:
        closed["p_succ"] = analytics.p_succ_basic(p["eta"], mu_eff)
    report["closed_form"] = closed
    if p["mode"] in ("exact", "both"):
        exact = exact_markov_eval(variant, detector)
        report["exact"] = exact.as_dict()
    if p["mode"] in ("mc", "both"):
        mc = mc_estimate(variant, detector, p["trials"], p["seed"],
                         max_rounds=p["max-rounds"])
        report["monte_carlo"] = mc.as_dict()
    if variant.kind == "modified":
        metrics = analytics.modified_metrics(p["eta"])
        block = {
            "printed": {"p_succ": metrics.p_succ, "fidelity": metrics.fidelity,
                        "p_error": metrics.p_error},
            "literal_recursion": {"p_succ": metrics.p_succ_recursion,
                                  "fidelity": metrics.fidelity_recursion},
        }
        if "exact" in report:
            block["oracle"] = {"p_succ": report["exact"]["p_success"],
                               "fidelity": report["exact"]["fidelity"]}
        report["discrepancy"] = block
    return _json(report)


_BENCH_INPUTS = ("psi_de", "phi1", "phi2", "phi3", "phi4")


def _bench_input(name: str):
    if name == "psi_de":
        live = initial_pairs_state().with_modes(PHOTON_MODES_A + PHOTON_MODES_B)
        st = double_encode(live, "A'", PHOTON_MODES_A)
        return double_encode(st, "B'", PHOTON_MODES_B)
    idx = int(name[-1])
    def occ(a_pol, b_pol):
        return tuple(1 if m in (("a", a_pol), ("b", b_pol)) else 0 for m in INPUT_MODES)
    terms = {
        1: {((), occ("H", "H")): 1.0},
        2: {((), occ("V", "V")): 1.0},
        3: {((), occ("H", "V")): 1.0, ((), occ("V", "H")): 1.0},
        4: {((), occ("H", "V")): 1.0, ((), occ("V", "H")): -1.0},
    }[idx]
    return make_state((), INPUT_MODES, terms)


def cmd_bench(args) -> str:
    p = _resolve(args, {
        "input": (str, "psi_de"),
        "eta": (float, 1.0),
        "N": (parse_depth, 0),
        "detector": (str, "resolving"),
        "mu": (float, None),
    })
    if p["input"] not in _BENCH_INPUTS:
        raise UsageError(f"input must be one of {', '.join(_BENCH_INPUTS)}")
    if p["N"] == math.inf:
        raise UsageError("bench simulation needs a finite tree depth")
    if p["detector"] == "mu":
        if p["mu"] is None:
            raise UsageError("abstract detector needs --mu")
        det = DetectorModel.mu(p["eta"], p["mu"])
    elif p["detector"] in ("threshold", "resolving"):
        det = DetectorModel(p["eta"], p["detector"])
    else:
        raise UsageError(f"unknown detector kind {p['detector']!r} for bench")
    bench = build_mub_bench(int(p["N"]))
    state = _bench_input(p["input"])
    rows = simulate_bench(state, bench, det)
    outcome_probs = {str(o): prob for o, prob, _ in rows}
    report = {
        "input": p["input"],
        "eta": p["eta"],
        "N": int(p["N"]),
        "detector": p["detector"],
        "outcomes": outcome_probs,
    }
    if p["input"] == "psi_de":
        psi_in = initial_pairs_state()
        fids = {}
        for o, _prob, cond in rows:
            if o.kind in ("chi1", "chi2", "chi3", "chi4"):
                target = apply_swap_unitary(int(o.kind[-1]), psi_in)
                fids[o.kind] = ensemble_fidelity(cond, target)
        report["memory_fidelities"] = fids
    return _json(report)


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rusrep",
        description="Repeat-until-success Bell-measurement and repeater-chain simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value config file (flags win)")
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"),
                        help="output format (fixed per subcommand; checked)")

    sp = sub.add_parser("probs", help="single-round outcome probability table")
    sp.add_argument("--eta", help="efficiency value or start:stop:step")
    sp.add_argument("--mu", help="resolution value or range (default: 0 and eta)")
    common(sp)

    sp = sub.add_parser("fig5", help="swap success probability vs efficiency")
    sp.add_argument("--eta", help="efficiency range")
    sp.add_argument("--N", help="comma-separated branching depths (ints or inf)")
    common(sp)

    sp = sub.add_parser("fig7", help="chain rate vs distance at optimal nesting")
    sp.add_argument("--L", help="distance range in km")
    sp.add_argument("--variants", help="comma-separated: non-rus,N1,N2,Ninf,...")
    sp.add_argument("--eta", type=float)
    sp.add_argument("--Latt", type=float, help="attenuation length (km)")
    sp.add_argument("--c", type=float, help="channel light speed (km/s)")
    sp.add_argument("--prefactor", type=float)
    sp.add_argument("--nmax", type=int)
    common(sp)

    sp = sub.add_parser("swap", help="evaluate one swap variant (closed form / exact / MC)")
    sp.add_argument("--variant", choices=("basic", "modified", "branching"))
    sp.add_argument("--eta", type=float)
    sp.add_argument("--mu", type=float)
    sp.add_argument("--N", help="branching depth (int or inf)")
    sp.add_argument("--detector", choices=("threshold", "resolving", "tree", "mu"))
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--mode", choices=("mc", "exact", "both"))
    sp.add_argument("--max-rounds", type=int, dest="max_rounds")
    common(sp)

    sp = sub.add_parser("chain", help="one chain operating point")
    sp.add_argument("--L", type=float)
    sp.add_argument("--variant")
    sp.add_argument("--eta", type=float)
    sp.add_argument("--n", type=int, help="nesting level (default: optimize)")
    sp.add_argument("--Latt", type=float)
    sp.add_argument("--c", type=float)
    sp.add_argument("--prefactor", type=float)
    sp.add_argument("--nmax", type=int)
    common(sp)

    sp = sub.add_parser("bench", help="simulate the measurement bench directly")
    sp.add_argument("--input", choices=_BENCH_INPUTS)
    sp.add_argument("--eta", type=float)
    sp.add_argument("--N", help="tree depth")
    sp.add_argument("--detector", choices=("threshold", "resolving", "mu"))
    sp.add_argument("--mu", type=float)
    common(sp)

    return parser


_COMMANDS = {
    "probs": (cmd_probs, "csv"),
    "fig5": (cmd_fig5, "csv"),
    "fig7": (cmd_fig7, "csv"),
    "swap": (cmd_swap, "json"),
    "chain": (cmd_chain, "json"),
    "bench": (cmd_bench, "json"),
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler, fmt = _COMMANDS[args.command]
    try:
        if args.format is not None and args.format != fmt:
            raise UsageError(f"subcommand {args.command} emits {fmt}, not {args.format}")
        text = handler(args)
    except (UsageError, ValueError) as exc:
        print(f"rusrep {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonConvergenceError as exc:
        print(f"rusrep {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _write(text, args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
