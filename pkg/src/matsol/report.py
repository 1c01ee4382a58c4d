"""Run reports: one nested dict rendered two ways.

The JSON file is the machine-readable artifact; the text file is the
human-readable one. Both are produced from the same sanitized dict and
print numbers identically (shortest round-trip float representation),
so any number quoted in the text can be grepped in the JSON.
"""

from __future__ import annotations

import json
import os
from typing import Any, List, Tuple


def sanitize(value: Any) -> Any:
    """Make a report tree JSON-safe: tuples to lists, numpy scalars to
    Python scalars, non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize(v) for v in value]
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, int):
        return int(value)
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            return str(value)
        return float(value)
    if isinstance(value, complex):
        return {"re": sanitize(value.real), "im": sanitize(value.imag)}
    tolist = getattr(value, "tolist", None)
    if callable(tolist):
        # ndarrays become nested lists; numpy scalars become Python scalars
        return sanitize(tolist())
    item = getattr(value, "item", None)
    if callable(item):
        return sanitize(item())
    return str(value)


def _scalar_text(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "null"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, int):
        return repr(v)
    return str(v)


def _render(value: Any, indent: int, lines: List[str], key: str = ""):
    pad = "  " * indent
    label = f"{pad}{key}: " if key else pad
    if isinstance(value, dict):
        if key:
            lines.append(f"{pad}{key}:")
        for k, v in value.items():
            _render(v, indent + (1 if key else 0), lines, k)
    elif isinstance(value, list):
        if all(not isinstance(v, (dict, list)) for v in value):
            body = ", ".join(_scalar_text(v) for v in value)
            lines.append(f"{label}[{body}]")
        else:
            if key:
                lines.append(f"{pad}{key}:")
            for v in value:
                _render(v, indent + 1, lines, "-")
    else:
        lines.append(f"{label}{_scalar_text(value)}")


def render_text(report: dict, title: str = "run report") -> str:
    lines = [title, "=" * len(title)]
    _render(sanitize(report), 0, lines)
    return "\n".join(lines) + "\n"


def render_json(report: dict) -> str:
    return json.dumps(sanitize(report), indent=2, allow_nan=False) + "\n"


def write_report(report: dict, out_dir: str, stem: str = "report",
                 title: str = "run report") -> Tuple[str, str]:
    """Write <stem>.json and <stem>.txt; returns the two file names."""
    jname, tname = f"{stem}.json", f"{stem}.txt"
    with open(os.path.join(out_dir, jname), "w", encoding="ascii",
              newline="\n") as fh:
        fh.write(render_json(report))
    with open(os.path.join(out_dir, tname), "w", encoding="ascii",
              newline="\n") as fh:
        fh.write(render_text(report, title=title))
    return jname, tname
