"""Command-line interface.

Commands: ``analyze``, ``bound``, ``simulate``, ``validate``, ``optimize`` and
``design``. Output is CSV (default) or JSON (array of row objects) on stdout
or to ``--out``. Parameters may also come from a JSON ``--config`` file whose
keys are the long flag names with dashes replaced by underscores (plus the
aliases ``lambda``, ``output`` and ``out_path``); flags win over the file.

Exit status: 0 success, 1 configuration error, 2 numerical error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import analytic as an
from .errors import ConfigurationError, NumericalError
from .mobility import StationaryDistribution, load_transition_matrix, stationary_distribution
from .model import FlowPairing, RatePair, build_topology
from .montecarlo import ClassifierMode, enumerate_exact, estimate_strategy_probs
from .relay import run_relay_simulation

DEFAULT_SEED = 42
VALIDATE_TOL = 1e-9
LIMIT_GRID = [(d, eta, 2.0) for d in (0.5, 1.0, 2.0, 5.0) for eta in (0.25, 0.5, 0.75)]

CONFIG_ALIASES = {"lambda": "lam", "output": "format", "out_path": "out"}

ANALYZE_FIELDS = ["d", "eta", "xi", "mu0", "mu1", "mu2", "delta_mu", "limit_mode"]
SIMULATE_FIELDS = ["strategy", "analytic", "empirical", "stderr", "z_score"]
VALIDATE_FIELDS = [
    "kind", "C", "N", "A", "d", "eta", "xi", "variant", "entry", "reference", "value", "abs_diff",
]
OPTIMIZE_FIELDS = [
    "objective", "d_opt", "mu_max", "stationarity_residual", "at_boundary",
    "paper_d_opt", "paper_mu_max", "note",
]
DESIGN_FIELDS = ["d", "cost", "eta_opt", "xi_opt", "utility"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def render(rows: list[dict], fields: list[str], fmt: str) -> str:
    if fmt == "json":
        clean = [{k: (float(v) if isinstance(v, np.floating) else v) for k, v in r.items()} for r in rows]
        return json.dumps(clean, indent=2, allow_nan=True) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([_fmt(row.get(f)) for f in fields])
    return buf.getvalue()


def emit(text: str, out) -> None:
    """Write atomically so a failed run never leaves a partial file."""
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# parameter helpers


def _topology(args):
    if args.width is None and args.cells is None:
        raise ConfigurationError("give --cells or --width/--height", field="C")
    if args.cells is not None and args.width is not None and args.cells != args.width * args.height:
        raise ConfigurationError("--cells disagrees with --width x --height", field="C")
    width, height = (args.width, args.height) if args.width is not None else (args.cells, 1)
    sr_spec = args.sr_cells if args.sr_cells is not None else args.A
    return build_topology(width, height, sr_spec)


def _rates(args) -> RatePair:
    if args.r2 is not None:
        return RatePair(args.r1, args.r2)
    return RatePair.from_xi(args.r1, args.xi)


def _pi(args, topology):
    if args.pi_source in (None, "uniform"):
        return StationaryDistribution.uniform(topology.C)
    P = load_transition_matrix(args.pi_source)
    if P.C != topology.C:
        raise ConfigurationError(
            f"matrix has {P.C} states but the grid has {topology.C} cells", field="pi_source"
        )
    return stationary_distribution(P)


def _variants(name):
    return list(an.Variant) if name == "all" else [an.Variant(name)]


# --------------------------------------------------------------------------
# commands


def cmd_analyze(args) -> tuple[list[dict], list[str]]:
    point = {"d": args.d, "eta": args.eta, "xi": args.xi}
    if args.sweep:
        if args.sweep_from is None or args.sweep_to is None:
            raise ConfigurationError("a sweep needs --from and --to", field="sweep")
        grid = an.sweep_values(args.sweep_from, args.sweep_to, args.steps)
    else:
        grid = [point[args.sweep or "d"]]
    rows = []
    for value in grid:
        here = dict(point)
        if args.sweep:
            here[args.sweep] = value
        params = an.LimitParams(here["d"], here["eta"], here["xi"], args.r1, args.limit_mode)
        row = dict(here, **an.limit_table(params), limit_mode=params.limit_mode.value)
        rows.append(row)
    return rows, ANALYZE_FIELDS


def cmd_bound(args):
    topology = _topology(args)
    rates = _rates(args)
    pairing = FlowPairing(args.N)
    pi = _pi(args, topology)
    uniform = args.pi_source in (None, "uniform")
    rows = []
    for variant in _variants(args.variant):
        if uniform:
            probs = an.strategy_probs_uniform(topology.C, args.N, topology.A, variant)
        else:
            probs = an.strategy_probs_general(pi, topology, pairing.n, variant)
        report = an.capacity_bound(probs, rates, topology.C, topology.A, args.N / topology.C, N=args.N)
        rows.append({**report.as_dict(), **probs.as_dict()})
    fields = ["C", "N", "A", "d", "r1", "r2", "variant", *an.P_NAMES, *an.Q_NAMES,
              "mu", "sr_contribution", "non_sr_contribution"]
    return rows, fields


def cmd_simulate(args):
    topology = _topology(args)
    rates = _rates(args)
    pairing = FlowPairing(args.N)
    pi = _pi(args, topology)
    if args.slots < 1:
        raise ConfigurationError("slots must be >= 1", field="slots")
    probs = an.strategy_probs_general(pi, topology, pairing.n, an.Variant.EVENT_CONSISTENT)
    report = an.capacity_bound(probs, rates, topology.C, topology.A, args.N / topology.C, N=args.N)
    est = estimate_strategy_probs(
        topology, pairing, pi, args.slots, args.mode, seed=args.seed, rates=rates,
        replications=args.replications, workers=args.workers,
    )
    reference = probs.as_dict()
    rows = []
    for name, e in list(est.p.items()) + list(est.q.items()):
        rows.append(_sim_row(name, reference[name], e))
    rows.append(_sim_row("bound", report.mu, est.bound))
    if args.lam > 0:
        sim = run_relay_simulation(
            topology, pairing, rates, pi=pi, lam=args.lam, a_max=args.a_max,
            slots=args.slots, seed=args.seed,
        )
        rows.append(_sim_row("delivered_rate", sim.bound, sim.delivered_rate))
    return rows, SIMULATE_FIELDS


def _sim_row(name, analytic, e):
    return {"strategy": name, "analytic": analytic, "empirical": e.mean, "stderr": e.stderr,
            "z_score": e.z_score(analytic)}


def validate_rows(max_cells: int, max_nodes: int) -> list[dict]:
    """Exhaustive enumeration against both formula variants, plus limit divergence."""
    if max_cells < 1 or max_nodes < 2:
        raise ConfigurationError("need max_cells >= 1 and max_nodes >= 2", field="max_cells")
    rows = []
    for C in range(1, max_cells + 1):
        for N in range(2, max_nodes + 1, 2):
            for A in range(C + 1):
                topology = build_topology(C, 1, A)
                exact = enumerate_exact(topology, FlowPairing(N), StationaryDistribution.uniform(C))
                truth = {**exact.p, **exact.q}
                for variant in an.Variant:
                    formula = an.strategy_probs_uniform(C, N, A, variant).as_dict()
                    for entry, ref in truth.items():
                        diff = abs(formula[entry] - ref)
                        if diff > VALIDATE_TOL:
                            rows.append({
                                "kind": "discrepancy", "C": C, "N": N, "A": A,
                                "variant": variant.value, "entry": entry,
                                "reference": ref, "value": formula[entry], "abs_diff": diff,
                            })
    for d, eta, xi in LIMIT_GRID:
        printed = an.mu2_limit(an.LimitParams(d, eta, xi, 1.0, an.LimitMode.AS_PRINTED))
        derived = an.mu2_limit(an.LimitParams(d, eta, xi, 1.0, an.LimitMode.DERIVED))
        rows.append({
            "kind": "limit_divergence", "d": d, "eta": eta, "xi": xi, "variant": "as-printed",
            "entry": "mu2", "reference": derived, "value": printed, "abs_diff": abs(printed - derived),
        })
    return rows


def cmd_validate(args):
    # check the guard up front so nothing is computed for an oversized request
    states = args.max_cells ** args.max_nodes
    if states > 10**7:
        raise ConfigurationError(
            f"C^N = {states} exceeds the enumeration guard 10^7; lower --max-cells/--max-nodes",
            field="max_cells",
        )
    rows = validate_rows(args.max_cells, args.max_nodes)
    counts = {}
    for r in rows:
        if r["kind"] == "discrepancy":
            counts[r["variant"]] = counts.get(r["variant"], 0) + 1
    for variant in an.Variant:
        print(f"{variant.value}: {counts.get(variant.value, 0)} discrepancies > {VALIDATE_TOL:g}", file=sys.stderr)
    return rows, VALIDATE_FIELDS


def cmd_optimize(args):
    opt = an.optimal_density(
        args.objective, args.d_lo, args.d_hi, args.tol, r1=args.r1, eta=args.eta, xi=args.xi,
        limit_mode=args.limit_mode,
    )
    notes = []
    row = {
        "objective": opt.objective, "d_opt": opt.d_opt, "mu_max": opt.mu_max,
        "stationarity_residual": opt.stationarity_residual, "at_boundary": opt.at_boundary,
    }
    if opt.objective == "mu1":
        row["paper_d_opt"] = an.PAPER_D_OPT_MU1
        row["paper_mu_max"] = an.PAPER_MU_MAX_MU1 * args.r1
        notes.append("published mu_max 0.1942 (per unit r1) disagrees with direct evaluation; computed value reported")
    if opt.at_boundary:
        notes.append("maximum lies on the bracket boundary; objective is monotone on [d_lo, d_hi]")
    row["note"] = "; ".join(notes)
    return [row], OPTIMIZE_FIELDS


def cmd_design(args):
    utility = an.gain_utility(args.d, args.r1, args.cost, args.limit_mode)
    best = an.utility_grid_search(utility, args.eta_steps, args.xi_max, args.xi_steps)
    return [{"d": args.d, "cost": args.cost, "eta_opt": best.eta, "xi_opt": best.xi,
             "utility": best.value}], DESIGN_FIELDS


COMMANDS = {
    "analyze": cmd_analyze,
    "bound": cmd_bound,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "optimize": cmd_optimize,
    "design": cmd_design,
}


# --------------------------------------------------------------------------
# parser


def _add_global(p, top_level):
    # defaults are applied after merging the config file
    d = None if top_level else argparse.SUPPRESS
    p.add_argument("--out", default=d, help="write output here instead of stdout")
    p.add_argument("--format", choices=["csv", "json"], default=d)
    p.add_argument("--config", default=d, help="JSON file of parameter values")
    p.add_argument("--seed", type=int, default=d, help=f"RNG seed (default {DEFAULT_SEED})")


def _add_network(p):
    p.add_argument("--cells", type=int, help="total cells C (a C x 1 grid)")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--A", type=int, help="SR size; the first A cells in row-major order")
    p.add_argument("--sr-cells", type=lambda s: [int(x) for x in s.split(",") if x], help="explicit SR cells, e.g. 0,1,5")
    p.add_argument("--N", type=int, help="even node count")
    p.add_argument("--r1", type=float)
    p.add_argument("--r2", type=float)
    p.add_argument("--xi", type=float, help="r1/r2, used when --r2 is absent")
    p.add_argument("--pi-source", help="'uniform' or a transition-matrix file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hybridcap", description=__doc__.split("\n\n")[0])
    _add_global(parser, True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="limiting capacities mu0, mu1, mu2 and the gain")
    _add_global(p, False)
    p.add_argument("--d", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--xi", type=float)
    p.add_argument("--r1", type=float)
    p.add_argument("--limit-mode", choices=[m.value for m in an.LimitMode])
    p.add_argument("--sweep", choices=["d", "eta", "xi"])
    p.add_argument("--from", dest="sweep_from", type=float)
    p.add_argument("--to", dest="sweep_to", type=float)
    p.add_argument("--steps", type=int)

    p = sub.add_parser("bound", help="finite-N capacity bound and strategy probabilities")
    _add_global(p, False)
    _add_network(p)
    p.add_argument("--variant", choices=[v.value for v in an.Variant] + ["all"])

    p = sub.add_parser("simulate", help="Monte Carlo strategy frequencies against closed forms")
    _add_global(p, False)
    _add_network(p)
    p.add_argument("--slots", type=int)
    p.add_argument("--mode", choices=[m.value for m in ClassifierMode])
    p.add_argument("--lambda", dest="lam", type=float, help="also run the relay simulation at this offered rate")
    p.add_argument("--a-max", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("validate", help="exhaustive enumeration against both formula variants")
    _add_global(p, False)
    p.add_argument("--max-cells", type=int)
    p.add_argument("--max-nodes", type=int)

    p = sub.add_parser("optimize", help="density maximising a limiting capacity")
    _add_global(p, False)
    p.add_argument("objective", nargs="?", choices=["mu1", "mu2"])
    p.add_argument("--eta", type=float)
    p.add_argument("--xi", type=float)
    p.add_argument("--r1", type=float)
    p.add_argument("--d-lo", type=float)
    p.add_argument("--d-hi", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--limit-mode", choices=[m.value for m in an.LimitMode])

    p = sub.add_parser("design", help="grid search of coverage and rate ratio for the gain utility")
    _add_global(p, False)
    p.add_argument("--d", type=float)
    p.add_argument("--r1", type=float)
    p.add_argument("--cost", type=float, help="utility is delta_mu - cost * eta")
    p.add_argument("--eta-steps", type=int)
    p.add_argument("--xi-max", type=float)
    p.add_argument("--xi-steps", type=int)
    p.add_argument("--limit-mode", choices=[m.value for m in an.LimitMode])
    return parser


DEFAULTS = {
    "out": None, "format": "csv", "seed": DEFAULT_SEED,
    "d": 1.0, "eta": 0.0, "xi": 2.0, "r1": 1.0, "r2": None, "limit_mode": "as-printed",
    "sweep": None, "sweep_from": None, "sweep_to": None, "steps": 100,
    "cells": None, "width": None, "height": 1, "A": 0, "sr_cells": None, "N": None,
    "pi_source": "uniform", "variant": "event-consistent",
    "slots": 10_000, "mode": "literal", "lam": 0.0, "a_max": 1, "replications": 1, "workers": 1,
    "max_cells": 3, "max_nodes": 6,
    "objective": "mu1", "d_lo": 0.5, "d_hi": 5.0, "tol": 1e-6,
    "cost": 0.0, "eta_steps": 20, "xi_max": 10.0, "xi_steps": 17,
}


def _merge_config(args) -> None:
    values = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read {args.config}: {exc.strerror}", field="config") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid JSON in {args.config}: {exc}", field="config") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError("config file must hold a JSON object", field="config")
        for key, value in raw.items():
            name = CONFIG_ALIASES.get(key, key)
            if name not in DEFAULTS:
                raise ConfigurationError(f"unknown key {key!r}", field="config")
            values[name] = value
    for name, default in DEFAULTS.items():
        if getattr(args, name, None) is None:
            setattr(args, name, values.get(name, default))
    if args.command in ("bound", "simulate") and args.N is None:
        raise ConfigurationError("node count is required", field="N")
    if args.format not in ("csv", "json"):
        raise ConfigurationError(f"unknown format {args.format!r}", field="format")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args)
        rows, fields = COMMANDS[args.command](args)
        emit(render(rows, fields, args.format), args.out)
    except ConfigurationError as exc:
        print(f"hybridcap: configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"hybridcap: numerical error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
