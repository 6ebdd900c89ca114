"""File formats: MSR1 observation files and the versioned JSON documents
exchanged between CLI commands."""

from __future__ import annotations

import csv
import json
import re
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .em import EmReport
from .invariants import UNIFORM, InvariantFeatures, UniformInvariantFeatures
from .model import ObservationSet
from .solver import SolveReport, TrialBatchReport

SCHEMA = 1

_HEADER = re.compile(
    r"^MSR1\s+d=(?P<d>\d+)\s+m=(?P<m>\d+)\s+K=(?P<K>\d+)\s+sigma=(?P<sigma>\S+)\s*$"
)


class FormatError(ValueError):
    """Malformed input file; the message carries the path and line number."""


def _fmt(v: float) -> str:
    return repr(float(v))


def write_msr1(path, obs: ObservationSet) -> None:
    with open(path, "w") as fh:
        fh.write(f"MSR1 d={obs.d} m={obs.m} K={obs.K} sigma={_fmt(obs.sigma)}\n")
        for row in obs.segments:
            fh.write(",".join(_fmt(v) for v in row))
            fh.write("\n")


def read_msr1(path) -> ObservationSet:
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}:1: empty file, expected an MSR1 header")
    mt = _HEADER.match(lines[0].strip())
    if mt is None:
        raise FormatError(f"{path}:1: malformed header {lines[0]!r}; expected 'MSR1 d=<d> m=<m> K=<K> sigma=<float>'")
    d, m, K = int(mt["d"]), int(mt["m"]), int(mt["K"])
    try:
        sigma = float(mt["sigma"])
    except ValueError:
        raise FormatError(f"{path}:1: sigma {mt['sigma']!r} is not a number") from None
    if not (np.isfinite(sigma) and sigma >= 0):
        raise FormatError(f"{path}:1: sigma must be finite and >= 0")
    if not 1 <= m <= d:
        raise FormatError(f"{path}:1: need 1 <= m <= d, got m={m}, d={d}")
    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip()]
    if not body:
        raise FormatError(f"{path}: no observations")
    rows = []
    for lineno, ln in body:
        parts = ln.split(",")
        if len(parts) != m:
            raise FormatError(f"{path}:{lineno}: expected {m} values, found {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    if len(rows) != K:
        raise FormatError(f"{path}: header declares K={K} rows, found {len(rows)}")
    seg = np.array(rows)
    if not np.all(np.isfinite(seg)):
        raise FormatError(f"{path}: non-finite observation values")
    return ObservationSet(seg, d, m, sigma)


def _tolist(v):
    return v.tolist() if isinstance(v, np.ndarray) else v


def features_to_dict(f) -> dict:
    if f.kind == UNIFORM:
        return dict(schema=SCHEMA, kind=UNIFORM, d=f.d, m=f.m, sigma_used=f.sigma_used,
                    mu=float(f.mu), c=f.c.tolist(), t=f.t.tolist())
    return dict(schema=SCHEMA, kind=f.kind, d=f.d, m=f.m, sigma_used=f.sigma_used,
                mu=f.mu.tolist(), c=f.c.tolist(), t=f.t.tolist())


def features_from_dict(doc: dict, source: str = "features"):
    _check_schema(doc, source)
    try:
        if doc.get("kind") == UNIFORM:
            return UniformInvariantFeatures(float(doc["mu"]), np.array(doc["c"], float), np.array(doc["t"], float),
                                            int(doc["d"]), int(doc["m"]), float(doc.get("sigma_used", 0.0)))
        d = doc.get("d")
        return InvariantFeatures(np.array(doc["mu"], float), np.array(doc["c"], float), np.array(doc["t"], float),
                                 float(doc.get("sigma_used", 0.0)), None if d is None else int(d))
    except KeyError as exc:
        raise FormatError(f"{source}: missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from None


def _check_schema(doc: dict, source: str) -> None:
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
        raise FormatError(f"{source}: expected a JSON object with schema={SCHEMA}")


def solve_report_to_dict(r: SolveReport, mode: str) -> dict:
    out = asdict(r)
    out.update(schema=SCHEMA, mode=mode, x_hat=r.x_hat.tolist(), p_hat=r.p_hat.tolist())
    return out


def batch_report_to_dict(r: TrialBatchReport) -> dict:
    per = [{k: _tolist(v) for k, v in t.items()} for t in r.per_trial]
    return dict(schema=SCHEMA, n_trials=r.n_trials, p_rec=r.p_rec, f_bar=r.f_bar, th=r.th, per_trial=per)


def em_report_to_dict(r: EmReport) -> dict:
    out = asdict(r)
    out.update(schema=SCHEMA, x_hat=r.x_hat.tolist(), p_hat=r.p_hat.tolist())
    return out


def read_json(path) -> dict:
    path = Path(path)
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None


def write_json(path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, allow_nan=True)
        fh.write("\n")


def read_point(path) -> tuple[np.ndarray, np.ndarray | None]:
    """(x, p) from a solve/EM report (``x_hat``/``p_hat``) or a truth file (``x``/``p``)."""
    doc = read_json(path)
    _check_schema(doc, str(path))
    for kx, kp in (("x_hat", "p_hat"), ("x", "p")):
        if kx in doc:
            p = doc.get(kp)
            return np.array(doc[kx], float), None if p is None else np.array(p, float)
    raise FormatError(f"{path}: no x_hat or x field")


def write_trace_csv(path, values, column: str = "objective") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", column])
        for i, v in enumerate(values):
            w.writerow([i, repr(float(v))])
