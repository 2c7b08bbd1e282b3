"""Report assembly: JSON documents, CSV tables and plain-text summaries.

JSON output is deterministic (sorted keys, shortest round-trip floats), so
two runs on the same input give byte-identical files. CSV numbers carry 12
significant digits.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .equilibrium import EquilibriumCandidate, Verdict

__all__ = ["jsonable", "dumps", "candidate_entry", "csv_text", "render_text", "fmt_number"]


def jsonable(obj):
    """Convert numpy containers and scalars to plain JSON types; NaN becomes null."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(report) -> str:
    return json.dumps(jsonable(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _failures(verdict: Verdict):
    return {
        concept: [{"condition": f.condition, "location": f.location, "magnitude": f.magnitude} for f in fails]
        for concept, fails in sorted(verdict.failures.items())
    }


def candidate_entry(cand: EquilibriumCandidate, verdict: Verdict) -> dict:
    return {
        "origin": cand.origin,
        "sigma": cand.sigma,
        "partition": cand.partition.tokens(),
        "p": cand.p,
        "beliefs": cand.beliefs,
        "cooperation_rates": cand.cooperation_rates,
        "overall_cooperation": cand.overall_cooperation,
        "mleq": verdict.is_mleq,
        "smleq": verdict.is_smleq,
        "monotone_mleq": verdict.is_monotone_mleq,
        "strong_monotone_mleq": verdict.is_strong_monotone_mleq,
        "v": verdict.v,
        "v_min": verdict.v_min,
        "v_min_monotone": verdict.v_min_monotone,
        "failures": _failures(verdict),
    }


def fmt_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_number(x) for x in row])
    return buf.getvalue()


def _flag(x):
    return "n/a" if x is None else ("yes" if x else "no")


def _vec(xs):
    return "(" + ", ".join(f"{float(x):.6g}" for x in np.ravel(xs)) + ")"


def _render_candidate(e, lines, indent="  "):
    lines.append(f"{indent}sigma {_vec(e['sigma'])}  partition {' | '.join('{' + ' '.join(c) + '}' for c in e['partition'])}")
    lines.append(
        f"{indent}cooperation {_vec(e['cooperation_rates'])} overall {e['overall_cooperation']:.6g}"
        f"  MLEQ {_flag(e['mleq'])}  SMLEQ {_flag(e['smleq'])}  monotone {_flag(e['monotone_mleq'])}"
        f"  strong monotone {_flag(e['strong_monotone_mleq'])}"
    )
    for concept, fails in e["failures"].items():
        for f in fails:
            lines.append(f"{indent}  [{concept}] {f['condition']} at {f['location']}: {f['magnitude']:.6g}")


def render_text(report) -> str:
    cmd = report["input"]["command"]
    res = report["result"]
    lines = [f"mltrust {report['version']} {cmd}  input {report['digest'][:16]}"]
    if cmd == "verify":
        _render_candidate(res["candidate"], lines)
    elif cmd == "search":
        lines.append(f"mode {res['mode']}: {len(res['equilibria'])} equilibria")
        for note in res.get("notes", []):
            lines.append(f"  note: {note}")
        for i, e in enumerate(res["equilibria"], 1):
            lines.append(f" {i}. {e['origin']}")
            _render_candidate(e, lines, "    ")
        if res.get("approximate"):
            lines.append(f"  {len(res['approximate'])} grid survivors did not verify exactly")
    elif cmd == "noise":
        lines.append(f"expected MSPE fine {res['fine']:.6g}  coarse {res['coarse']:.6g}  -> {res['verdict']}")
        for name in ("fine", "coarse"):
            mc = res["monte_carlo"][name]
            lines.append(f"  Monte Carlo {name}: {mc['mean']:.6g} +- {mc['stderr']:.2g} (z = {mc['z']:.2f})")
    elif cmd == "bounds":
        for row in res.get("maxmin", []):
            lines.append(
                f"max-min K={row['K']}: value {row['value']:.10g} < {row['bound']:.6g}: {_flag(row['below_bound'])}"
            )
        for row in res.get("predicates", []):
            tail = f", search found {row['counterexamples']} counterexamples" if row["searched"] else ""
            lines.append(f"{row['name']} (c={row['c']:.6g}, m={row['m']}): {_flag(row['holds'])}{tail}")
        for row in res.get("genericity", []):
            w = f" ({row['witnesses'][0]})" if row["witnesses"] else ""
            lines.append(f"genericity {row['theta']} L={row['L']}: {'generic' if row['generic'] else 'not generic'}{w}")
        for row in res.get("noise", []):
            lines.append(f"noise v={row['v']:.6g} sigma {_vec(row['sigma'])}: {row['verdict']}")
        if res.get("probe"):
            pr = res["probe"]
            for top, count, strong in pr["rows"]:
                lines.append(
                    f"monotone probe max(theta)={top:.6g}: {count} all-state trusting equilibria, {strong} strongly assigned"
                )
        if res.get("census"):
            cs = res["census"]
            lines.append(f"census over {cs['smleq_count']} SMLEQ: max full-cooperation states {cs['max_full']}")
    for chk in report.get("falsifications", []):
        lines.append(f"FALSIFIED {chk}")
    if "timing" in report:
        lines.append(f"elapsed {report['timing']['seconds']:.3f}s")
    return "\n".join(lines) + "\n"
