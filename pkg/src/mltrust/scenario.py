"""Scenario and query files.

Both are YAML documents (JSON is accepted as well, being a subset). States
may be written as decimals or as ``"num/den"`` strings; either way they are
kept exact. Contingencies are ``"k,h"`` tokens with ``k`` the 0-based state
index. Unknown keys are rejected so that typos never pass silently.

A report written by the command-line tool can be used in place of a
scenario; its embedded input is then replayed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from .errors import ScenarioError
from .partitions import Partition
from .trust_game import DEFAULT_EPS, StateSpace, format_rational

__all__ = [
    "Scenario",
    "BoundsQuery",
    "load_document",
    "parse_scenario",
    "parse_bounds_query",
    "canonical_json",
    "digest",
]

SCENARIO_KEYS = {"theta", "c", "sigma", "partition", "tolerances", "seed"}
TOLERANCE_KEYS = {"eps", "indiff"}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def load_document(path):
    """Parse a YAML/JSON file into a mapping."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}", key="scenario") from None
    try:
        # YAML 1.1 reads exponent floats such as 1e-09 as strings, so try JSON first
        doc = json.loads(text)
    except ValueError:
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"not valid YAML: {exc}", key="scenario") from None
    if not isinstance(doc, dict):
        raise ScenarioError("top level must be a mapping", key="scenario")
    return doc


def _number(x, key) -> float:
    if isinstance(x, bool) or x is None:
        raise ScenarioError(f"expected a number, got {x!r}", key=key)
    try:
        v = float(Fraction(x.strip())) if isinstance(x, str) else float(x)
    except (ValueError, ZeroDivisionError, TypeError):
        raise ScenarioError(f"expected a number, got {x!r}", key=key) from None
    if not np.isfinite(v):
        raise ScenarioError("must be finite", key=key)
    return v


def _rational(x, key) -> Fraction:
    if isinstance(x, bool) or x is None:
        raise ScenarioError(f"expected a rational, got {x!r}", key=key)
    try:
        if isinstance(x, float):
            return Fraction(repr(x))
        return Fraction(x.strip() if isinstance(x, str) else x)
    except (ValueError, ZeroDivisionError, TypeError):
        raise ScenarioError(f"expected a rational, got {x!r}", key=key) from None


def _integer(x, key) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ScenarioError(f"expected an integer, got {x!r}", key=key)
    return x


def _unknown(doc, allowed, where):
    extra = sorted(set(doc) - allowed)
    if extra:
        key = f"{where}.{extra[0]}" if where else str(extra[0])
        raise ScenarioError("unknown key", key=key)


def parse_states(raw, key="theta") -> StateSpace:
    if not isinstance(raw, (list, tuple)):
        raw = [raw]
    if not raw:
        raise ScenarioError("needs at least one state", key=key)
    states = [_rational(x, f"{key}[{i}]") for i, x in enumerate(raw)]
    for i, s in enumerate(states):
        if not 0 < s < 1:
            raise ScenarioError(f"state {format_rational(s)} is not in (0, 1)", key=f"{key}[{i}]")
    try:
        return StateSpace(states)
    except ValueError as exc:
        raise ScenarioError(str(exc), key=key) from None


def _token(tok, n, key) -> int:
    try:
        k, h = (int(part) for part in str(tok).split(","))
    except ValueError:
        raise ScenarioError(f"contingency {tok!r} is not of the form 'k,h'", key=key) from None
    if not 0 <= k < n or h not in (0, 1):
        raise ScenarioError(f"contingency {tok!r} out of range for {n} states", key=key)
    return 2 * k + h


def _parse_sigma(raw, n):
    if isinstance(raw, dict):
        sigma = np.full(2 * n, np.nan)
        for tok, val in raw.items():
            i = _token(tok, n, "sigma")
            sigma[i] = _number(val, f"sigma.{tok}")
        missing = [f"{i // 2},{i % 2}" for i in np.flatnonzero(np.isnan(sigma))]
        if missing:
            raise ScenarioError(f"missing contingencies {', '.join(missing)}", key="sigma")
    elif isinstance(raw, (list, tuple)):
        sigma = np.array([_number(v, f"sigma[{i}]") for i, v in enumerate(raw)])
        if sigma.size != 2 * n:
            raise ScenarioError(f"expected {2 * n} entries, got {sigma.size}", key="sigma")
    else:
        raise ScenarioError("expected a mapping of 'k,h' to probabilities", key="sigma")
    bad = np.flatnonzero((sigma < 0) | (sigma > 1))
    if bad.size:
        i = int(bad[0])
        raise ScenarioError("probability outside [0, 1]", key=f"sigma.{i // 2},{i % 2}")
    return sigma.reshape(n, 2)


def _parse_partition(raw, n):
    if not isinstance(raw, (list, tuple)) or not all(isinstance(c, (list, tuple)) for c in raw):
        raise ScenarioError("expected a list of cells, each a list of 'k,h' tokens", key="partition")
    cells = [[_token(t, n, "partition") for t in cell] for cell in raw]
    try:
        return Partition.from_cells(cells, 2 * n)
    except ValueError as exc:
        raise ScenarioError(str(exc), key="partition") from None


@dataclass
class Scenario:
    theta: StateSpace
    c: float
    sigma: np.ndarray | None = None
    partition: Partition | None = None
    eps: float = DEFAULT_EPS
    indiff: float | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        """Canonical mapping; parsing it back gives an equal scenario."""
        out = {"theta": [format_rational(s) for s in self.theta.states], "c": self.c}
        if self.sigma is not None:
            out["sigma"] = {f"{i // 2},{i % 2}": float(v) for i, v in enumerate(self.sigma.ravel())}
        if self.partition is not None:
            out["partition"] = self.partition.tokens()
        tol = {"eps": self.eps}
        if self.indiff is not None:
            tol["indiff"] = self.indiff
        out["tolerances"] = tol
        if self.seed is not None:
            out["seed"] = self.seed
        return out


def parse_scenario(doc: dict) -> Scenario:
    _unknown(doc, SCENARIO_KEYS, "")
    for key in ("theta", "c"):
        if key not in doc:
            raise ScenarioError("required key missing", key=key)
    theta = parse_states(doc["theta"])
    c = _number(doc["c"], "c")
    if not c > 0:
        raise ScenarioError("complexity cost must be positive", key="c")
    sc = Scenario(theta, c)
    n = theta.n
    if doc.get("sigma") is not None:
        sc.sigma = _parse_sigma(doc["sigma"], n)
    if doc.get("partition") is not None:
        sc.partition = _parse_partition(doc["partition"], n)
    tol = doc.get("tolerances") or {}
    if not isinstance(tol, dict):
        raise ScenarioError("expected a mapping", key="tolerances")
    _unknown(tol, TOLERANCE_KEYS, "tolerances")
    if "eps" in tol:
        sc.eps = _number(tol["eps"], "tolerances.eps")
    if tol.get("indiff") is not None:
        sc.indiff = _number(tol["indiff"], "tolerances.indiff")
    for key, val in (("tolerances.eps", sc.eps), ("tolerances.indiff", sc.indiff)):
        if val is not None and not val >= 0:
            raise ScenarioError("tolerance must be nonnegative", key=key)
    if doc.get("seed") is not None:
        sc.seed = _integer(doc["seed"], "seed")
    return sc


QUERY_KEYS = {"maxmin", "predicates", "genericity", "noise", "probe", "census", "seed"}
PREDICATE_KINDS = ("cost_cubed", "top_state")


@dataclass
class BoundsQuery:
    maxmin: dict | None = None
    predicates: list = field(default_factory=list)
    genericity: list = field(default_factory=list)
    noise: list = field(default_factory=list)
    probe: dict | None = None
    census: dict | None = None
    seed: int | None = None
    raw: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return self.raw


def _section(doc, key, allowed, required=()):
    if not isinstance(doc, dict):
        raise ScenarioError("expected a mapping", key=key)
    _unknown(doc, set(allowed) | set(required), key)
    for r in required:
        if r not in doc:
            raise ScenarioError("required key missing", key=f"{key}.{r}")
    return doc


def _list(doc, key):
    val = doc.get(key) or []
    if not isinstance(val, list):
        raise ScenarioError("expected a list", key=key)
    return val


def parse_bounds_query(doc: dict) -> BoundsQuery:
    """Validate a query for the bounds report and normalize its numbers.

    Sections: ``maxmin`` (``k_min``, ``k_max``, ``starts``), ``predicates``
    (``kind``, ``c``, ``m`` and optionally ``theta``, ``search``, ``grid``),
    ``genericity`` (``theta``, ``L``), ``noise`` (``sigma``, ``v``,
    ``samples``), ``probe`` (``theta``, ``c``, ``maxima``, ``grid``) and
    ``census`` (``theta``, ``c``, ``grid``).
    """
    _unknown(doc, QUERY_KEYS, "")
    q = BoundsQuery()
    canon = {}
    if doc.get("maxmin") is not None:
        mm = _section(doc["maxmin"], "maxmin", {"k_min", "k_max", "starts"})
        lo = _integer(mm.get("k_min", 2), "maxmin.k_min")
        hi = _integer(mm.get("k_max", 6), "maxmin.k_max")
        starts = _integer(mm.get("starts", 10), "maxmin.starts")
        if not 2 <= lo <= hi <= 10:
            raise ScenarioError("need 2 <= k_min <= k_max <= 10", key="maxmin")
        if starts < 1:
            raise ScenarioError("need at least one random start", key="maxmin.starts")
        q.maxmin = canon["maxmin"] = {"k_min": lo, "k_max": hi, "starts": starts}
    for i, raw in enumerate(_list(doc, "predicates")):
        key = f"predicates[{i}]"
        raw = _section(raw, key, {"theta", "search", "grid"}, ("kind", "c", "m"))
        kind = raw["kind"]
        if kind not in PREDICATE_KINDS:
            raise ScenarioError(f"kind must be one of {', '.join(PREDICATE_KINDS)}", key=f"{key}.kind")
        item = {"kind": kind, "c": _number(raw["c"], f"{key}.c"), "m": _integer(raw["m"], f"{key}.m")}
        if not item["c"] > 0 or item["m"] < 1:
            raise ScenarioError("need c > 0 and m >= 1", key=key)
        if raw.get("theta") is not None:
            item["theta"] = parse_states(raw["theta"], f"{key}.theta")
        elif kind == "top_state":
            raise ScenarioError("required key missing", key=f"{key}.theta")
        if "theta" in item and item["m"] > item["theta"].n:
            raise ScenarioError("m exceeds the number of states", key=f"{key}.m")
        item["search"] = bool(raw.get("search", False))
        item["grid"] = _integer(raw.get("grid", 10), f"{key}.grid")
        q.predicates.append(item)
    for i, raw in enumerate(_list(doc, "genericity")):
        key = f"genericity[{i}]"
        raw = _section(raw, key, {"L"}, ("theta",))
        theta = parse_states(raw["theta"], f"{key}.theta")
        L = _integer(raw.get("L", theta.n), f"{key}.L")
        if not 1 <= L <= 2 * theta.n:
            raise ScenarioError("L must be between 1 and 2n", key=f"{key}.L")
        q.genericity.append({"theta": theta, "L": L})
    for i, raw in enumerate(_list(doc, "noise")):
        key = f"noise[{i}]"
        raw = _section(raw, key, {"samples"}, ("sigma", "v"))
        sigma = _parse_sigma(raw["sigma"], 1).ravel()
        v = _number(raw["v"], f"{key}.v")
        if v < 0:
            raise ScenarioError("variance must be nonnegative", key=f"{key}.v")
        q.noise.append({"sigma": sigma, "v": v, "samples": _integer(raw.get("samples", 100_000), f"{key}.samples")})
    if doc.get("probe") is not None:
        raw = _section(doc["probe"], "probe", {"grid"}, ("theta", "c", "maxima"))
        maxima = raw["maxima"] if isinstance(raw["maxima"], list) else [raw["maxima"]]
        q.probe = {
            "theta": parse_states(raw["theta"], "probe.theta"),
            "c": _number(raw["c"], "probe.c"),
            "maxima": [_rational(x, f"probe.maxima[{i}]") for i, x in enumerate(maxima)],
            "grid": _integer(raw.get("grid", 10), "probe.grid"),
        }
    if doc.get("census") is not None:
        raw = _section(doc["census"], "census", {"grid"}, ("theta", "c"))
        q.census = {
            "theta": parse_states(raw["theta"], "census.theta"),
            "c": _number(raw["c"], "census.c"),
            "grid": _integer(raw.get("grid", 10), "census.grid"),
        }
    if doc.get("seed") is not None:
        q.seed = _integer(doc["seed"], "seed")
    q.raw = _canonical_query(q)
    return q


def _canonical_query(q: BoundsQuery) -> dict:
    def states(t):
        return [format_rational(s) for s in t.states]

    out = {}
    if q.maxmin:
        out["maxmin"] = dict(q.maxmin)
    if q.predicates:
        out["predicates"] = [
            {k: (states(v) if k == "theta" else v) for k, v in item.items()} for item in q.predicates
        ]
    if q.genericity:
        out["genericity"] = [{"theta": states(g["theta"]), "L": g["L"]} for g in q.genericity]
    if q.noise:
        out["noise"] = [{"sigma": [float(x) for x in z["sigma"]], "v": z["v"], "samples": z["samples"]} for z in q.noise]
    if q.probe:
        out["probe"] = {
            "theta": states(q.probe["theta"]),
            "c": q.probe["c"],
            "maxima": [format_rational(x) for x in q.probe["maxima"]],
            "grid": q.probe["grid"],
        }
    if q.census:
        out["census"] = {"theta": states(q.census["theta"]), "c": q.census["c"], "grid": q.census["grid"]}
    if q.seed is not None:
        out["seed"] = q.seed
    return out
