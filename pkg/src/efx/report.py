"""JSON report encoding, digests and curve CSV emission.

Reals are written as decimal strings with 17 significant digits, which
round-trips every IEEE double.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__

TOOLKIT = "efx"


def real(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def encode(obj: Any) -> Any:
    """Recursively convert results into JSON-ready values with string reals."""
    if hasattr(obj, "to_dict"):
        return encode(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return encode(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return real(obj)
    return obj


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def digest(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def finalize(body: dict) -> dict:
    """Stamp toolkit identity and a digest of everything else onto a report body."""
    report = {"toolkit": TOOLKIT, "version": __version__, **encode(body)}
    report["report_digest"] = digest(report)
    return report


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=True) + "\n"


def write_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(dumps(report), encoding="utf-8")


def find_curves(node: Any, prefix: str = "") -> list[tuple[str, list]]:
    """Every ``{"breakpoints": [...]}`` object in a report, with a dotted location name."""
    found = []
    if isinstance(node, dict):
        if "breakpoints" in node and isinstance(node["breakpoints"], list):
            found.append((prefix or "curve", node["breakpoints"]))
        for k, v in node.items():
            if k != "breakpoints":
                found.extend(find_curves(v, f"{prefix}.{k}" if prefix else str(k)))
    elif isinstance(node, list):
        for k, v in enumerate(node):
            found.extend(find_curves(v, f"{prefix}.{k}" if prefix else str(k)))
    return found


def curve_csv(breakpoints: list) -> str:
    lines = ["epsilon,value"]
    lines += [f"{real(float(e))},{real(float(v))}" for e, v in breakpoints]
    return "\n".join(lines) + "\n"


def emit_curves(report: dict, out_dir: str | Path) -> list[Path]:
    """Write one CSV per curve found under the report's analyses/results."""
    out_dir = Path(out_dir)
    written = []
    entries = report.get("analyses") or report.get("results") or []
    for entry in entries:
        name = entry.get("id") or f"{entry.get('suite', 'x')}-{entry.get('check', 'x')}-{entry.get('instance', 0)}"
        for loc, bps in find_curves(entry.get("result", entry.get("values", {}))):
            if not written:
                out_dir.mkdir(parents=True, exist_ok=True)
            stem = re.sub(r"[^A-Za-z0-9_.-]+", "_", f"{name}.{loc}" if loc != "curve" else name)
            path = out_dir / f"{stem}.csv"
            path.write_text(curve_csv(bps), encoding="utf-8")
            written.append(path)
    return written
