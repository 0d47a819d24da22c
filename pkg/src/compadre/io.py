"""Config files, CSV tables, model archives and precision-network export."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .core import BasisMap, FitConfig, FitReport, ModelState
from .errors import InputError
from .solvers import PrecisionEstimate
from .spline_basis import KnotSet

ARCHIVE_FORMAT = "compadre-model"
ARCHIVE_VERSION = 1

_INT_KEYS = {"folds", "max_iters", "knots", "seed"}
_FLOAT_KEYS = {"tol"}
_BOOL_KEYS = {"scale_responses", "select_once"}
_LAMBDA_KEYS = {"lambda1", "lambda2", "lambda4"}
_LIST_KEYS = {"responses", "covariates"}
CONFIG_KEYS = {"mode"} | _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _LAMBDA_KEYS | _LIST_KEYS


# ---------------------------------------------------------------- config

def parse_config(text: str) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    Keys: mode, folds, max_iters, tol, knots (interior knot count), seed,
    lambda1, lambda2, lambda4 (``cv``, a number, or comma-separated numbers),
    scale_responses, select_once (true/false), responses, covariates
    (comma-separated column names).
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise InputError(f"config line {lineno}: unknown key {key!r}")
        if key in out:
            raise InputError(f"config line {lineno}: duplicate key {key!r}")
        try:
            out[key] = _convert(key, value)
        except ValueError as exc:
            raise InputError(f"config line {lineno}: {exc}") from None
    return out


def _convert(key, value):
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _BOOL_KEYS:
        low = value.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{key} must be true or false")
        return low in ("true", "1", "yes")
    if key in _LIST_KEYS:
        names = [v.strip() for v in value.split(",") if v.strip()]
        if not names:
            raise ValueError(f"{key} is empty")
        return names
    if key in _LAMBDA_KEYS:
        if value.lower() == "cv":
            return "cv"
        nums = [float(v) for v in value.split(",")]
        if any(not math.isfinite(v) or v < 0 for v in nums):
            raise ValueError(f"{key} must be nonnegative")
        return nums[0] if len(nums) == 1 else nums
    return value


def fit_config_from(options: dict) -> FitConfig:
    kwargs = {k: v for k, v in options.items() if k not in _LIST_KEYS and k != "knots"}
    if "knots" in options:
        m = options["knots"]
        if m < 1:
            raise InputError("knots must be at least 1")
        kwargs["knot_probs"] = np.arange(1, m + 1) / (m + 1)
    try:
        return FitConfig(**kwargs)
    except ValueError as exc:
        raise InputError(str(exc)) from None


# ---------------------------------------------------------------- CSV

def read_csv(path) -> tuple[list, np.ndarray]:
    """Header row plus a fully numeric body; no missing cells, unique names."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header) or any(not h for h in header):
        raise InputError(f"{path}: column names must be unique and nonempty")
    body = [r for r in rows[1:] if r]
    if not body:
        raise InputError(f"{path}: no data rows")
    data = np.empty((len(body), len(header)))
    for i, row in enumerate(body, 2):
        if len(row) != len(header):
            raise InputError(f"{path} row {i}: expected {len(header)} cells, found {len(row)}")
        for j, cell in enumerate(row):
            try:
                data[i - 2, j] = float(cell)
            except ValueError:
                raise InputError(f"{path} row {i}: non-numeric cell {cell!r}") from None
    if not np.all(np.isfinite(data)):
        raise InputError(f"{path}: missing or non-finite values")
    return header, data


def write_csv(path, header, data):
    """Write a numeric table with floats in shortest round-trip form."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.asarray(data, dtype=float):
            w.writerow([repr(float(v)) for v in row])


def write_records(path, records):
    """Write dict rows (mixed types); None becomes an empty cell."""
    records = list(records)
    fields = list(dict.fromkeys(k for r in records for k in r))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({k: _cell(r.get(k)) for k in fields})


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


# ---------------------------------------------------------------- archive

def _arr(a):
    a = np.asarray(a)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _unarr(d, dtype=float):
    return np.array(d["data"], dtype=dtype).reshape(d["shape"])


def archive_dict(report: FitReport, responses, covariates) -> dict:
    state = report.state
    return {
        "format": ARCHIVE_FORMAT,
        "version": ARCHIVE_VERSION,
        "responses": list(responses),
        "covariates": list(covariates),
        "intercepts": _arr(state.intercepts),
        "y_scale": _arr(report.y_scale),
        "beta_lin": _arr(state.beta_lin),
        "beta_nl": [_arr(b) for b in state.beta_nl],
        "precision": _arr(state.precision.precision),
        "lambda4": state.precision.lambda4,
        "lambda3": _arr(state.lambda3),
        "labels": _arr(report.labels),
        "bases": [{"center": m.center, "scale": m.scale,
                   "interior_knots": _arr(m.knots.interior_knots),
                   "boundary_knots": list(m.knots.boundary_knots),
                   "transform": _arr(m.transform), "gamma": _arr(m.gamma)} for m in report.maps],
        "tuning": report.tuning,
        "lambda4_trace": _arr(report.lambda4_trace),
        "mse_trace": _arr(report.mse_trace),
        "objective_trace": _arr(report.objective_trace),
        "converged": bool(report.converged),
    }


def save_archive(path, report: FitReport, responses, covariates):
    Path(path).write_text(json.dumps(archive_dict(report, responses, covariates), indent=1))


def load_archive(path):
    """Rebuild a prediction-ready report from an archive.

    Returns
    -------
    report : FitReport (``fitted`` is None)
    responses, covariates : lists of column names
    """
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not a JSON archive ({exc})") from None
    if d.get("format") != ARCHIVE_FORMAT:
        raise InputError(f"{path}: not a model archive")
    if d.get("version") != ARCHIVE_VERSION:
        raise InputError(f"{path}: unsupported archive version {d.get('version')}")
    try:
        maps = [BasisMap(b["center"], b["scale"],
                         KnotSet(_unarr(b["interior_knots"]), tuple(b["boundary_knots"])),
                         _unarr(b["transform"]), _unarr(b["gamma"])) for b in d["bases"]]
        state = ModelState(beta_lin=_unarr(d["beta_lin"]),
                           beta_nl=[_unarr(b) for b in d["beta_nl"]],
                           intercepts=_unarr(d["intercepts"]),
                           precision=PrecisionEstimate(_unarr(d["precision"]), d["lambda4"]),
                           lambda3=_unarr(d["lambda3"]))
        report = FitReport(state=state, labels=_unarr(d["labels"], np.int8), fitted=None,
                           mse_trace=_unarr(d["mse_trace"]),
                           objective_trace=_unarr(d["objective_trace"]), tuning=d["tuning"],
                           lambda4_trace=_unarr(d["lambda4_trace"]), converged=d["converged"],
                           maps=maps, y_scale=_unarr(d["y_scale"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed archive ({exc})") from None
    return report, d["responses"], d["covariates"]


# ---------------------------------------------------------------- networks

def network_edges(precision, names):
    """Edges ``(a, b, weight)`` for nonzero off-diagonal precision entries.

    ``weight = -P_ab / sqrt(P_aa P_bb)`` is the partial correlation; pairs
    come in row-major order of the upper triangle.
    """
    P = np.asarray(precision, dtype=float)
    edges = []
    for a in range(P.shape[0]):
        for b in range(a + 1, P.shape[0]):
            if P[a, b] != 0.0:
                edges.append((names[a], names[b], float(-P[a, b] / np.sqrt(P[a, a] * P[b, b]))))
    return edges


def network_dot(precision, names) -> str:
    """Undirected DOT graph; red edges are positive, blue negative, width tracks |weight|."""
    lines = ["graph precision {"]
    lines += [f'  "{n}";' for n in names]
    for a, b, w in network_edges(precision, names):
        color = "red" if w > 0 else "blue"
        lines.append(f'  "{a}" -- "{b}" [weight={w!r}, color={color}, '
                     f'penwidth={1.0 + 4.0 * abs(w)!r}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def network_json(precision, names) -> str:
    edges = [{"source": a, "target": b, "weight": w, "sign": "positive" if w > 0 else "negative"}
             for a, b, w in network_edges(precision, names)]
    return json.dumps({"nodes": list(names), "edges": edges}, indent=1) + "\n"
