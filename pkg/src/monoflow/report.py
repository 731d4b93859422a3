"""JSON reports and CSV traces for checks and scenarios.

Reports are rendered with sorted keys and default float repr, so identical
inputs produce byte-identical files regardless of worker-pool configuration.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .certify import certify, monotone_functional
from .dsl import LoweredCheck
from .quad import BoxQuadrature, functional_trace
from .verify import check_pointwise


def program_hash(source: str) -> str:
    return hashlib.sha256(source.encode("utf-8")).hexdigest()


@dataclass
class RunSettings:
    tol: Optional[float] = None
    grid: Optional[int] = None
    box: Optional[tuple] = None          # (lo, hi) override, all axes
    tmin: Optional[float] = None
    tmax: Optional[float] = None
    tsteps: Optional[int] = None
    threads: int = 1
    seed: int = 0


def run_check(check: LoweredCheck, source_hash: str,
              settings: RunSettings) -> dict:
    """Certify, verify pointwise, trace, and assemble the report dict.

    RuleErrors propagate to the caller (they carry the node path); this
    function only runs once a certificate exists.
    """
    o = check.options
    tol = settings.tol if settings.tol is not None else (
        float(o.tol) if o.tol is not None else 1e-7
    )
    t0 = settings.tmin if settings.tmin is not None else float(o.t0)
    t1 = settings.tmax if settings.tmax is not None else float(o.t1)
    steps = settings.tsteps if settings.tsteps is not None else o.tsteps
    box = []
    for lo, hi, count in o.box:
        lo, hi = float(lo), float(hi)
        if settings.box is not None:
            lo, hi = settings.box
        box.append((lo, hi, settings.grid if settings.grid else count))

    cert = certify(check.node)
    spec = monotone_functional(check.node, cert, weight=check.weight)

    points = check_pointwise(
        check.node, cert, (t0, t1), [(lo, hi) for lo, hi, _ in box],
        n_space=128, n_time=16, threads=settings.threads,
        offset=settings.seed, rel_tol=tol,
    )
    q = BoxQuadrature(box)
    times = np.linspace(t0, t1, steps)
    trace = functional_trace(spec, times, q, threads=settings.threads)

    points_pass = points.passed(tol)
    trace_pass = trace.direction_ok(tol)
    report = {
        "program_hash": source_hash,
        "check_name": check.name,
        "certificate": cert.to_dict(),
        "point_checks": dict(points.to_dict(), **{"pass": points_pass}),
        "trace": {
            "direction": trace.direction,
            "worst_violation": trace.worst_violation,
            "max_abs_value": trace.max_abs_value,
            "count": len(trace.values),
            "pass": trace_pass,
        },
        "weight": None if check.weight is None else check.weight.name,
        "tolerance": tol,
        "verdict": "pass" if (points_pass and trace_pass) else "violation",
    }
    return {"report": report, "trace": trace}


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, sort_keys=True, indent=2, default=_plain) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
