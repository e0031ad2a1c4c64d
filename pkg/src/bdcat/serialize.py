"""Deterministic serialization: JSON and CSV with 17-significant-digit
floats, so identical runs produce byte-identical output.

Decimal round-trip of the exact bits is not promised anywhere; 17
significant digits are.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .duality import BarIdentityReport, ClosureReport, DualityReport
from .errors import ValidationError
from .generators import CEMETERY, Generator
from .montecarlo import ExcursionStats, MCEstimate, StationaryEstimate
from .popgen import RelationReport
from .solvers import SolutionVector

JSON_SCHEMA = "bdcat/v1"
CSV_SCHEMA = "bdcat-csv v1"


def fmt17(x: float) -> str:
    """Decimal rendering with 17 significant digits."""
    if math.isnan(x) or math.isinf(x):
        raise ValidationError(f"cannot serialize non-finite value {x}")
    return f"{float(x):.17g}"


def _write(obj, out: list):
    if obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt17(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        first = True
        for k in sorted(obj.keys(), key=str):
            if not first:
                out.append(",")
            first = False
            out.append(json.dumps(str(k)))
            out.append(":")
            _write(obj[k], out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _write(v, out)
        out.append("]")
    elif obj is CEMETERY:
        out.append(json.dumps("delta"))
    else:
        raise ValidationError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Deterministic JSON text: sorted keys, 17-digit floats, no spaces."""
    out: list[str] = []
    _write(obj, out)
    return "".join(out)


def _state_label(s):
    return "delta" if s is CEMETERY else s


def solution_to_dict(v: SolutionVector) -> dict:
    doc = {
        "schema": JSON_SCHEMA,
        "kind": "solution",
        "name": v.name,
        "lo": v.lo,
        "values": list(v.values),
        "residual": v.residual,
    }
    if v.truncation is not None:
        doc["truncation"] = v.truncation
        doc["history"] = [[m, c] for m, c in v.history]
        if "certified" in v.meta:
            doc["certified"] = v.meta["certified"]
    return doc


def path_to_line(path) -> str:
    """One jump path as a single JSON line (for line-delimited event logs)."""
    return dumps({
        "times": list(path.times),
        "states": [_state_label(s) for s in path.states],
        "status": path.status,
    })


def solution_to_csv(v: SolutionVector) -> str:
    lines = [f"# {CSV_SCHEMA} solution {v.name}", "index,value"]
    for k, val in enumerate(v.values):
        lines.append(f"{v.lo + k},{fmt17(val)}")
    return "\n".join(lines) + "\n"


def table_to_csv(columns: dict, name: str) -> str:
    """CSV for a dict of equal-length columns (plot-ready grids)."""
    keys = list(columns.keys())
    n = len(columns[keys[0]])
    if any(len(columns[k]) != n for k in keys):
        raise ValidationError("table columns must have equal length")
    lines = [f"# {CSV_SCHEMA} table {name}", ",".join(keys)]
    for row in range(n):
        cells = []
        for k in keys:
            val = columns[k][row]
            cells.append(str(val) if isinstance(val, (int, np.integer))
                         else fmt17(val))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def generator_to_dict(gen: Generator) -> dict:
    entries = []
    for s in gen.states:
        for t, r in sorted(gen.row_items(s), key=lambda it: str(it[0])):
            if r != 0.0:
                entries.append([_state_label(s), _state_label(t), r])
    return {
        "schema": JSON_SCHEMA,
        "kind": "generator",
        "process": gen.kind,
        "states": [_state_label(s) for s in gen.states],
        "isolated": [_state_label(s) for s in gen.meta.get("isolated", ())],
        "rates": entries,
    }


def generator_to_csv(gen: Generator) -> str:
    lines = [f"# {CSV_SCHEMA} generator {gen.kind}", "source,target,rate"]
    for s in gen.states:
        for t, r in sorted(gen.row_items(s), key=lambda it: str(it[0])):
            if r != 0.0:
                lines.append(f"{_state_label(s)},{_state_label(t)},{fmt17(r)}")
    return "\n".join(lines) + "\n"


def estimate_to_dict(e: MCEstimate) -> dict:
    return {
        "schema": JSON_SCHEMA,
        "kind": "estimate",
        "label": e.label,
        "value": e.value,
        "stderr": e.stderr,
        "replicates": e.replicates,
        "seed": e.seed,
        "meta": e.meta,
    }


def stationary_estimate_to_dict(e: StationaryEstimate) -> dict:
    return {
        "schema": JSON_SCHEMA,
        "kind": "stationary_estimate",
        "states": [_state_label(s) for s in e.states],
        "values": list(e.values),
        "stderr": list(e.stderr),
        "replicates": e.replicates,
        "seed": e.seed,
    }


def _or_null(x):
    # some excursion statistics are undefined when no excursion ever completes
    return None if (isinstance(x, float) and math.isnan(x)) else x


def excursions_to_dict(e: ExcursionStats) -> dict:
    return {
        "schema": JSON_SCHEMA,
        "kind": "excursions",
        "level": e.level,
        "replicates": e.replicates,
        "seed": e.seed,
        "cn_direct": [e.cn_direct, e.cn_direct_se],
        "cn_ratio": [_or_null(e.cn_ratio), _or_null(e.cn_ratio_se)],
        "p_down": [e.p_down, e.p_down_se],
        "p_excursion": [e.p_excursion, e.p_excursion_se],
        "p_struck": [e.p_struck, e.p_struck_se],
        "mean_excursion_time": [
            _or_null(e.mean_excursion_time), _or_null(e.mean_excursion_time_se),
        ],
        "mean_total_excursion_time": [
            e.mean_total_excursion_time, _or_null(e.mean_total_excursion_time_se),
        ],
        "mean_return_low": [e.mean_return_low, _or_null(e.mean_return_low_se)],
        "mean_return_high": [e.mean_return_high, _or_null(e.mean_return_high_se)],
        "excursion_counts": {str(k): v for k, v in e.excursion_counts.items()},
    }


def duality_report_to_dict(r: DualityReport, verbose: bool = False) -> dict:
    doc = {
        "schema": JSON_SCHEMA,
        "kind": "duality_report",
        "times": list(r.times),
        "tol": r.tol,
        "n_pairs": r.n_pairs,
        "max_discrepancy": r.max_discrepancy,
        "per_time": list(r.per_time),
        "passed": r.passed,
    }
    if verbose and r.pairs:
        doc["pairs"] = [[t, x, y, d] for (t, x, y, d) in r.pairs]
    return doc


def closure_report_to_dict(r: ClosureReport) -> dict:
    return {
        "schema": JSON_SCHEMA,
        "kind": "closure_report",
        "tol": r.tol,
        "absorption_direction_error": r.absorption_direction_error,
        "tail_direction_error": r.tail_direction_error,
        "max_rel_error": r.max_rel_error,
        "passed": r.passed,
    }


def bar_report_to_dict(r: BarIdentityReport) -> dict:
    return {
        "schema": JSON_SCHEMA,
        "kind": "bar_identity_report",
        "tol": r.tol,
        "max_rel_error": r.max_rel_error,
        "passed": r.passed,
    }


def relation_report_to_dict(r: RelationReport) -> dict:
    return {
        "schema": JSON_SCHEMA,
        "kind": "relation_report",
        "label": r.label,
        "params": r.params,
        "tol": r.tol,
        "errors": r.errors,
        "max_rel_error": r.max_rel_error,
        "passed": r.passed,
    }
