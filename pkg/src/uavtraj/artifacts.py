"""Deterministic result artifacts: number formatting, JSON, manifests.

Every float written to disk goes through fmt() so that repeated runs on
the same machine produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

TOOL_NAME = "uavtraj"
TOOL_VERSION = "0.1.0"


def fmt(x) -> str:
    """Canonical float rendering: shortest %.9g form, no negative zero."""
    v = float(x)
    if v == 0.0:
        v = 0.0  # normalize -0.0
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.9g}"


def round_floats(obj):
    """Recursively pass floats through fmt() rounding for stable JSON."""
    if isinstance(obj, float):
        return float(fmt(obj))
    if isinstance(obj, dict):
        return {k: round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


def dump_json(obj, path) -> None:
    text = json.dumps(round_floats(obj), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def manifest_dict(scenario_text: str, *, tolerances: dict,
                  warm_start_source: str | None = None,
                  extra: dict | None = None) -> dict:
    """Provenance block stamped next to every exported result set."""
    out = {
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "scenario_sha256": sha256_text(scenario_text),
        "tolerances": tolerances,
        "warm_start_source": warm_start_source,
    }
    if extra:
        out.update(extra)
    return out


def write_manifest(path, scenario_text: str, *, tolerances: dict,
                   warm_start_source: str | None = None,
                   extra: dict | None = None) -> None:
    dump_json(manifest_dict(scenario_text, tolerances=tolerances,
                            warm_start_source=warm_start_source, extra=extra),
              path)


def write_results_csv(path, header: list[str], rows) -> None:
    """Write rows of mixed ints/floats/strings with canonical float text."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for cell in row:
                if isinstance(cell, bool):
                    cells.append("true" if cell else "false")
                elif isinstance(cell, int):
                    cells.append(str(cell))
                elif isinstance(cell, float):
                    cells.append(fmt(cell))
                else:
                    cells.append(str(cell))
            fh.write(",".join(cells) + "\n")


def load_results_csv(path) -> list[dict]:
    """Read a results CSV back, converting numeric-looking cells."""
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            conv = {}
            for key, val in row.items():
                if val is None:
                    conv[key] = val
                    continue
                if val == "true":
                    conv[key] = True
                elif val == "false":
                    conv[key] = False
                else:
                    try:
                        conv[key] = int(val)
                    except ValueError:
                        try:
                            conv[key] = float(val)
                        except ValueError:
                            conv[key] = val
            out.append(conv)
    return out
