"""Command-line front end.

Subcommands ``verify``, ``search``, ``noise`` read a scenario file;
``bounds`` reads a query file. Each writes a report (text or JSON on
stdout, optionally JSON and CSV files). Exit status: 0 on a clean run
whatever the verdict, 2 for malformed input, 3 for size or budget limits,
4 when a proven bound is contradicted by a computed equilibrium.
"""

from __future__ import annotations

import argparse
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    full_cooperation_census,
    genericity_check,
    inner_maxmin,
    maxmin_upper_bound,
    monotone_threshold_probe,
    outer_maxmin,
    prop2_predicate,
    prop3_predicate,
)
from .equilibrium import (
    EquilibriumCandidate,
    RegimeWarning,
    reciprocity_violations,
    solve_n1,
    solve_n2,
    two_state_bound_violations,
    verify_all,
    zero_trust,
)
from .errors import BudgetError, CeilingError, ConvergenceError, FalsificationError, ScenarioError, UndefinedModelError
from .gridsearch import grid_search
from .noise import (
    NoisyObservationModel,
    expected_mspe_coarse,
    expected_mspe_fine,
    monte_carlo_mspe,
    preferred_partition,
)
from .partitions import MAX_CONTINGENCIES, Partition, check_merge_inequality
from .report import candidate_entry, csv_text, dumps, render_text
from .scenario import digest, load_document, parse_bounds_query, parse_scenario

__all__ = ["main", "build_parser", "run"]

EXIT_OK, EXIT_PARSE, EXIT_SIZE, EXIT_FALSIFIED, EXIT_INTERNAL = 0, 2, 3, 4, 1

VERDICT_TEXT = {"fine": "fine partition preferred", "coarse": "coarse partition preferred", "indifferent": "fine/coarse indifferent"}


def build_parser():
    parser = argparse.ArgumentParser(prog="mltrust", description="ML equilibria of the dynamic trust game")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario/query file, or a previous JSON report to replay")
        p.add_argument("--tolerance", type=float, default=None, help="verification tolerance (default 1e-9)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--csv", default=None, help="write a CSV table here")
        p.add_argument("--report", default=None, help="write the JSON report here")
        p.add_argument("--max-bell", type=int, default=None, help=f"largest contingency count to enumerate (<= {MAX_CONTINGENCIES})")
        p.add_argument("--format", choices=("text", "json"), default="text", help="stdout format")
        p.add_argument("--timing", action="store_true", help="include wall time (makes reports run-dependent)")
        return p

    common(sub.add_parser("verify", help="check MLEQ, SMLEQ and monotone MLEQ for a given strategy and partition"))
    s = common(sub.add_parser("search", help="find equilibria"))
    s.add_argument("--mode", choices=("grid", "n1", "n2"), default=None)
    s.add_argument("--grid", type=int, default=None, help="grid resolution G (default 10)")
    s.add_argument("--monotone", action="store_true", default=None, help="grid mode: search monotone MLEQ")
    common(sub.add_parser("bounds", help="max-min values, bound predicates, genericity, noise checks"))
    nz = common(sub.add_parser("noise", help="single-state noise reading of the complexity cost"))
    nz.add_argument("--samples", type=int, default=None)
    return parser


def _resolve(args, saved):
    """Explicit flags win over options stored in a replayed report, which win over defaults."""
    defaults = {"eps": 1e-9, "max_bell": MAX_CONTINGENCIES, "seed": None}
    if args.command == "search":
        defaults.update(mode="grid", grid=10, monotone=False)
    if args.command == "noise":
        defaults.update(samples=100_000)
    given = {
        "eps": args.tolerance,
        "max_bell": args.max_bell,
        "seed": args.seed,
        "mode": getattr(args, "mode", None),
        "grid": getattr(args, "grid", None),
        "monotone": getattr(args, "monotone", None),
        "samples": getattr(args, "samples", None),
    }
    casts = {"eps": float, "max_bell": int, "seed": int, "mode": str, "grid": int, "monotone": bool, "samples": int}
    opts = {}
    for key, default in defaults.items():
        val = given.get(key)
        val = val if val is not None else saved.get(key, default)
        try:
            opts[key] = None if val is None else casts[key](val)
        except (TypeError, ValueError):
            raise ScenarioError(f"bad value {val!r}", key=f"options.{key}") from None
    if opts.get("mode") not in (None, "grid", "n1", "n2"):
        raise ScenarioError(f"unknown mode {opts['mode']!r}", key="options.mode")
    if not 1 <= opts["max_bell"] <= MAX_CONTINGENCIES:
        raise ScenarioError(f"must be between 1 and {MAX_CONTINGENCIES}", key="--max-bell")
    if not opts["eps"] >= 0:
        raise ScenarioError("must be nonnegative", key="--tolerance")
    return opts


def _with_flags(cand, eps, max_count):
    return cand, verify_all(cand, eps, max_count)


def _checks(pairs, eps):
    """Proven properties every strong equilibrium must have; violations are falsifications."""
    found = []
    for idx, (cand, verdict) in enumerate(pairs, 1):
        if not verdict.is_smleq:
            continue
        for f in reciprocity_violations(cand, eps) + two_state_bound_violations(cand, eps):
            found.append(f"equilibrium {idx}: {f.condition} at {f.location} ({f.magnitude:.6g})")
        for v in full_cooperation_census(cand).violations:
            found.append(f"equilibrium {idx}: {v}")
    return found


def _order(pairs):
    return sorted(pairs, key=lambda cv: (-round(cv[0].overall_cooperation, 12), cv[0].key()))


def _equilibria_csv(pairs, n):
    header = ["rank", "origin"]
    header += [f"sigma_{k}_{h}" for k in range(n) for h in (0, 1)]
    header += ["partition"] + [f"rate_{k}" for k in range(n)]
    header += ["overall", "mleq", "smleq", "monotone_mleq", "strong_monotone_mleq"]
    rows = []
    for i, (cand, v) in enumerate(pairs, 1):
        rows.append(
            [i, cand.origin, *cand.sigma.ravel(), str(cand.partition), *cand.cooperation_rates]
            + [cand.overall_cooperation, v.is_mleq, v.is_smleq, v.is_monotone_mleq, v.is_strong_monotone_mleq]
        )
    return csv_text(header, rows)


def cmd_verify(sc, opts):
    if sc.sigma is None or sc.partition is None:
        raise ScenarioError("verify needs both sigma and partition", key="sigma" if sc.sigma is None else "partition")
    cand = EquilibriumCandidate(sc.theta, sc.sigma, sc.partition, sc.c, origin="scenario")
    _, verdict = _with_flags(cand, opts["eps"], opts["max_bell"])
    n = sc.theta.n
    b = cand.beliefs
    rows = []
    for k in range(n):
        for h in (0, 1):
            i = 2 * k + h
            rows.append([f"{k},{h}", cand.sigma[k, h], cand.p[k, h], b[k, h], cand.partition.labels[i]])
    table = csv_text(["contingency", "sigma", "p", "belief", "cell"], rows)
    falsified = _checks([(cand, verdict)], opts["eps"])
    return {"candidate": candidate_entry(cand, verdict), "optimal_partitions": verdict.optimal_partitions}, table, falsified


def cmd_search(sc, opts):
    eps, max_count, mode = opts["eps"], opts["max_bell"], opts["mode"]
    notes = []
    approximate = []
    if mode == "n1":
        if sc.theta.n != 1:
            raise ScenarioError("mode n1 needs exactly one state", key="theta")
        cands = [c for c in (solve_n1(sc.theta, sc.c, eps), zero_trust(sc.theta, sc.c)) if c is not None]
        pairs = [_with_flags(c, eps, max_count) for c in cands]
    elif mode == "n2":
        if sc.theta.n != 2:
            raise ScenarioError("mode n2 needs exactly two states", key="theta")
        lo, hi = sc.theta.states
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RegimeWarning)
            res = solve_n2(lo, hi, sc.c, eps)
        notes += [str(w.message) for w in caught if issubclass(w.category, RegimeWarning)]
        notes += [f"state {k}: {why}" for k, why in sorted(res.notes.items())]
        pairs = [_with_flags(c, eps, max_count) for c in res.candidates + [zero_trust(sc.theta, sc.c)]]
    else:
        res = grid_search(
            sc.theta, sc.c, opts["grid"], eps_indiff=sc.indiff, eps=eps, monotone=opts["monotone"], max_count=max_count
        )
        pairs = [_with_flags(c, eps, max_count) for c, _ in res.equilibria]
        approximate = [{"sigma": list(a.sigma), "partition": a.partition.tokens(), "reason": a.reason} for a in res.approximate]
        notes.append(f"{res.grid_points} grid strategies, {res.survivors} coarse survivors")
    pairs = _order(pairs)
    result = {
        "mode": mode,
        "equilibria": [candidate_entry(c, v) for c, v in pairs],
        "approximate": approximate,
        "notes": notes,
    }
    return result, _equilibria_csv(pairs, sc.theta.n), _checks(pairs, eps)


def _noise_block(sigma, v, samples, seed):
    model = NoisyObservationModel(float(sigma[0]), float(sigma[1]), v)
    p = np.array(model.p).reshape(1, 2)
    merge = check_merge_inequality(Partition.finest(2), np.reshape(sigma, (1, 2)), p, v)
    mc = {}
    for name in ("fine", "coarse"):
        est = monte_carlo_mspe(model, name, samples, seed)
        mc[name] = {"mean": est.mean, "stderr": est.stderr, "z": est.z, "within_4se": abs(est.z) <= 4}
    pref = preferred_partition(model)
    return {
        "sigma": list(sigma),
        "v": v,
        "p": list(model.p),
        "fine": expected_mspe_fine(model),
        "coarse": expected_mspe_coarse(model),
        "preferred": pref,
        "verdict": VERDICT_TEXT[pref],
        "merge_inequality_passes": merge.passes,
        "monte_carlo": mc,
        "samples": samples,
        "seed": seed,
    }


def cmd_noise(sc, opts):
    if sc.theta.n != 1:
        raise ScenarioError("the noise reading is defined for one state", key="theta")
    if sc.sigma is None:
        raise ScenarioError("required key missing", key="sigma")
    seed = opts["seed"] if opts["seed"] is not None else (sc.seed or 0)
    try:
        block = _noise_block(sc.sigma.ravel(), sc.c, opts["samples"], seed)
    except ValueError as exc:
        raise ScenarioError(str(exc), key="samples" if "samples" in str(exc) else "sigma") from None
    rows = [[k, block[k]] for k in ("v", "fine", "coarse", "preferred", "merge_inequality_passes")]
    for name in ("fine", "coarse"):
        for k in ("mean", "stderr", "z"):
            rows.append([f"mc_{name}_{k}", block["monte_carlo"][name][k]])
    return block, csv_text(["quantity", "value"], rows), []


def cmd_bounds(q, opts):
    eps, max_count = opts["eps"], opts["max_bell"]
    seed = opts["seed"] if opts["seed"] is not None else (q.seed or 0)
    result, rows, falsified = {}, [], []
    if q.maxmin:
        out = []
        for K in range(q.maxmin["k_min"], q.maxmin["k_max"] + 1):
            r = outer_maxmin(K, starts=q.maxmin["starts"], seed=seed)
            _, inner_value = inner_maxmin(r.p)
            bound = maxmin_upper_bound(K)
            row = {
                "K": K,
                "p": r.p,
                "value": r.value,
                "inner_value": inner_value,
                "bound": bound,
                "below_bound": r.value < bound,
                "spread": r.spread,
                "grad_norm": r.grad_norm,
            }
            out.append(row)
            rows += [["maxmin", f"K={K}", key, row[key]] for key in ("value", "bound", "below_bound", "spread")]
            if not row["below_bound"]:
                falsified.append(f"max-min value {r.value:.12g} not below {bound:.12g} at K={K}")
        result["maxmin"] = out
    if q.predicates:
        out = []
        for i, item in enumerate(q.predicates):
            theta = item.get("theta")
            if item["search"] and theta is not None and theta.contingency_count > max_count:
                raise CeilingError(f"predicates[{i}]: {theta.contingency_count} contingencies above {max_count}")
            fn = prop2_predicate if item["kind"] == "cost_cubed" else prop3_predicate
            verdict = fn(item["c"], item["m"], theta, search=item["search"], grid=item["grid"])
            out.append(
                {
                    "kind": item["kind"],
                    "name": verdict.name,
                    "c": item["c"],
                    "m": item["m"],
                    "holds": verdict.holds,
                    "lhs": verdict.lhs,
                    "rhs": verdict.rhs,
                    "searched": verdict.searched,
                    "counterexamples": len(verdict.counterexamples),
                }
            )
            rows += [["predicate", f"{item['kind']}[{i}]", k, out[-1][k]] for k in ("holds", "lhs", "rhs", "counterexamples")]
            for cand in verdict.counterexamples:
                falsified.append(f"{verdict.name}: SMLEQ with {cand.cooperating_states()} trusting states, sigma {cand.sigma.ravel().tolist()}")
        result["predicates"] = out
    if q.genericity:
        out = []
        for i, g in enumerate(q.genericity):
            r = genericity_check(g["theta"], g["L"])
            label = ",".join(q.raw["genericity"][i]["theta"])
            out.append({"theta": label, "L": g["L"], "generic": r.generic, "witnesses": r.witnesses})
            rows.append(["genericity", label, "generic", r.generic])
            if r.witness:
                rows.append(["genericity", label, "witness", r.witness])
        result["genericity"] = out
    if q.noise:
        out = []
        for i, z in enumerate(q.noise):
            try:
                block = _noise_block(z["sigma"], z["v"], z["samples"], seed)
            except (UndefinedModelError, ValueError) as exc:
                raise ScenarioError(str(exc), key=f"noise[{i}]") from None
            out.append(block)
            rows += [["noise", f"noise[{i}]", k, block[k]] for k in ("fine", "coarse", "preferred")]
        result["noise"] = out
    if q.probe:
        pr = q.probe
        rep = monotone_threshold_probe(pr["theta"], pr["c"], pr["maxima"], pr["grid"])
        result["probe"] = {"rows": rep.rows, "largest_found": rep.largest_found, "smallest_empty": rep.smallest_empty}
        for top, count, strong in rep.rows:
            rows += [["probe", f"max={top:.12g}", "equilibria", count], ["probe", f"max={top:.12g}", "strong", strong]]
    if q.census:
        cs = q.census
        res = grid_search(cs["theta"], cs["c"], cs["grid"], eps=eps, max_count=max_count)
        strong = [cand for cand, v in res.strong()]
        worst = 0
        for cand in strong:
            census = full_cooperation_census(cand)
            worst = max(worst, len(census.full_states))
            falsified += [f"census: {v}" for v in census.violations]
        result["census"] = {"smleq_count": len(strong), "max_full": worst}
        rows += [["census", "grid", "smleq_count", len(strong)], ["census", "grid", "max_full", worst]]
    return result, csv_text(["section", "item", "quantity", "value"], rows), falsified


COMMANDS = {"verify": cmd_verify, "search": cmd_search, "noise": cmd_noise, "bounds": cmd_bounds}


def run(args):
    """Execute a parsed command; returns ``(report, csv, exit_code)``."""
    doc = load_document(args.scenario)
    saved = {}
    if doc.get("tool") == "mltrust" and isinstance(doc.get("input"), dict):
        stored = doc["input"]
        if stored.get("command") != args.command:
            raise ScenarioError(f"report was produced by '{stored.get('command')}'", key="scenario")
        saved = stored.get("options") or {}
        doc = stored.get("scenario") or {}
        if not isinstance(doc, dict):
            raise ScenarioError("embedded input is not a mapping", key="scenario")
    opts = _resolve(args, saved)
    if args.command == "bounds":
        parsed = parse_bounds_query(doc)
    else:
        parsed = parse_scenario(doc)
        if args.tolerance is None and "eps" not in saved:
            opts["eps"] = parsed.eps
    started = time.perf_counter()
    result, table, falsified = COMMANDS[args.command](parsed, opts)
    inputs = {"command": args.command, "options": opts, "scenario": parsed.to_dict()}
    report = {
        "tool": "mltrust",
        "version": __version__,
        "input": inputs,
        "digest": digest(inputs),
        "result": result,
        "falsifications": falsified,
    }
    if args.timing:
        report["timing"] = {"seconds": time.perf_counter() - started}
    return report, table, EXIT_FALSIFIED if falsified else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report, table, code = run(args)
    except ScenarioError as exc:
        print(f"mltrust: input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (CeilingError, BudgetError) as exc:
        print(f"mltrust: size limit: {exc}", file=sys.stderr)
        return EXIT_SIZE
    except FalsificationError as exc:
        print(f"mltrust: falsified: {exc}", file=sys.stderr)
        return EXIT_FALSIFIED
    except ConvergenceError as exc:
        print(f"mltrust: numerical failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    text = dumps(report)
    if args.report:
        Path(args.report).write_text(text)
    if args.csv:
        Path(args.csv).write_text(table)
    sys.stdout.write(text if args.format == "json" else render_text(report))
    if code == EXIT_FALSIFIED:
        print("mltrust: a computed equilibrium contradicts a proven bound", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
