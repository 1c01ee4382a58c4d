"""Scenario documents (JSON) and named presets.

Document layout:

    {
      "d": 3,
      "solitons": [{"k": [1.0, 0.0], "B": [[...], ...]}, ...],
      "grid": {"x": [-15, 15, 601], "t": [-6, 6, 241]},
      "options": {"imaginary_weights": true, "path": "fast", "label": "..."}
    }

B entries are either bare reals or [re, im] pairs. Three error layers
stay distinct: syntax (malformed JSON, with line/column), schema (wrong
shape/type, named by key path), and validation (semantically bad
spectral data, reported by the config layer with all violations).
"""

from __future__ import annotations

import json
import math
from typing import Any, List, Optional, Tuple

import numpy as np

from .spectral import (
    GridSpec,
    Scenario,
    ScenarioValidationError,
    SolitonEntry,
    validate_scenario,
)

PRESET_NAMES = ("fig2", "fig3", "fig4", "scalar1", "scalar2")


class ScenarioSyntaxError(ValueError):
    """Malformed document text."""

    def __init__(self, message: str, line: int, column: int):
        self.line, self.column = line, column
        super().__init__(f"syntax error at line {line}, column {column}: "
                         f"{message}")


class ScenarioSchemaError(ValueError):
    """Structurally wrong document (missing/extra/ill-typed keys)."""

    def __init__(self, path: str, message: str,
                 position: Optional[Tuple[int, int]] = None):
        self.path = path
        self.line, self.column = position or (0, 0)
        at = (f" (near line {self.line}, column {self.column})"
              if position else "")
        super().__init__(f"schema error at `{path}`{at}: {message}")


def _locate(document: str, token: str) -> Optional[Tuple[int, int]]:
    """Best-effort (line, column) of a quoted key in the document."""
    idx = document.find(f'"{token}"')
    if idx < 0:
        return None
    line = document.count("\n", 0, idx) + 1
    col = idx - (document.rfind("\n", 0, idx) + 1) + 1
    return line, col


def _fail(document: str, path: str, message: str):
    token = path.split(".")[-1].split("[")[0]
    raise ScenarioSchemaError(path, message, _locate(document, token))


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _as_complex(doc: str, path: str, v: Any) -> complex:
    if (isinstance(v, list) and len(v) == 2
            and all(_is_number(u) for u in v)):
        return complex(v[0], v[1])
    _fail(doc, path, f"expected a [re, im] number pair, got {v!r}")


def _entry_value(doc: str, path: str, v: Any) -> complex:
    if _is_number(v):
        return complex(v)
    return _as_complex(doc, path, v)


def _check_keys(doc: str, path: str, obj: dict, required: Tuple[str, ...],
                optional: Tuple[str, ...] = ()):
    if not isinstance(obj, dict):
        _fail(doc, path, f"expected a mapping, got {type(obj).__name__}")
    for key in required:
        if key not in obj:
            where = key if path == "document" else f"{path}.{key}"
            _fail(doc, where, f"missing key `{key}`")
    for key in obj:
        if key not in required and key not in optional:
            _fail(doc, f"{path}.{key}" if path != "document" else key,
                  f"unknown key `{key}`")


def _axis(doc: str, path: str, v: Any) -> Tuple[float, float, int]:
    if not (isinstance(v, list) and len(v) == 3
            and _is_number(v[0]) and _is_number(v[1])):
        _fail(doc, path, f"expected [min, max, count], got {v!r}")
    count = v[2]
    if not (isinstance(count, int) and not isinstance(count, bool)):
        _fail(doc, path, f"count must be an integer, got {count!r}")
    return float(v[0]), float(v[1]), count


def parse_scenario(document: str) -> Scenario:
    """Parse and fully validate a scenario document.

    Raises ScenarioSyntaxError, ScenarioSchemaError or
    ScenarioValidationError (distinct layers)."""
    try:
        root = json.loads(document)
    except json.JSONDecodeError as e:
        raise ScenarioSyntaxError(e.msg, e.lineno, e.colno) from None

    doc = document
    _check_keys(doc, "document", root, ("d", "solitons", "grid"),
                ("options",))
    d = root["d"]
    if not (isinstance(d, int) and not isinstance(d, bool)):
        _fail(doc, "d", f"expected an integer, got {d!r}")

    sols = root["solitons"]
    if not isinstance(sols, list) or not sols:
        _fail(doc, "solitons", "expected a non-empty list")
    entries: List[SolitonEntry] = []
    for m, sol in enumerate(sols):
        spath = f"solitons[{m}]"
        _check_keys(doc, spath, sol, ("k", "B"))
        k = _as_complex(doc, f"{spath}.k", sol["k"])
        braw = sol["B"]
        if not (isinstance(braw, list)
                and all(isinstance(row, list) for row in braw)):
            _fail(doc, f"{spath}.B", "expected a list of rows")
        ncols = {len(row) for row in braw}
        if len(ncols) > 1:
            _fail(doc, f"{spath}.B", f"ragged rows (lengths {sorted(ncols)})")
        bmat = np.array(
            [[_entry_value(doc, f"{spath}.B[{i}][{j}]", v)
              for j, v in enumerate(row)] for i, row in enumerate(braw)],
            dtype=complex,
        )
        entries.append(SolitonEntry(k=k, B=bmat))

    _check_keys(doc, "grid", root["grid"], ("x", "t"))
    x_min, x_max, nx = _axis(doc, "grid.x", root["grid"]["x"])
    t_min, t_max, nt = _axis(doc, "grid.t", root["grid"]["t"])

    opts = root.get("options", {})
    _check_keys(doc, "options", opts, (),
                ("imaginary_weights", "path", "label"))
    imaginary = opts.get("imaginary_weights", False)
    if not isinstance(imaginary, bool):
        _fail(doc, "options.imaginary_weights",
              f"expected a boolean, got {imaginary!r}")
    path = opts.get("path", "fast")
    if path not in ("det", "fast"):
        _fail(doc, "options.path", f"expected 'det' or 'fast', got {path!r}")
    label = opts.get("label", "")
    if not isinstance(label, str):
        _fail(doc, "options.label", f"expected text, got {label!r}")

    scenario = Scenario(
        d=d, entries=tuple(entries),
        grid=GridSpec(x_min, x_max, nx, t_min, t_max, nt),
        label=label, imaginary_weights=imaginary, path_hint=path,
    )
    return validate_scenario(scenario)


def scenario_to_document(s: Scenario) -> str:
    """Serialize a scenario back to document text (parse round-trips)."""

    def num(v: float):
        return int(v) if float(v).is_integer() and abs(v) < 1e15 else v

    def entry(v: complex):
        if v.imag == 0.0 and not math.copysign(1.0, v.imag) < 0:
            return num(v.real)
        return [num(v.real), num(v.imag)]

    root = {
        "d": s.d,
        "solitons": [
            {
                "k": [num(complex(e.k).real), num(complex(e.k).imag)],
                "B": [[entry(complex(v)) for v in row]
                      for row in np.asarray(e.B, dtype=complex)],
            }
            for e in s.entries
        ],
        "grid": {
            "x": [num(s.grid.x_min), num(s.grid.x_max), s.grid.nx],
            "t": [num(s.grid.t_min), num(s.grid.t_max), s.grid.nt],
        },
        "options": {
            "imaginary_weights": s.imaginary_weights,
            "path": s.path_hint,
            "label": s.label,
        },
    }
    return json.dumps(root, indent=2) + "\n"


# ----------------------------------------------------------------------
# Presets
# ----------------------------------------------------------------------

def _fig_grid() -> GridSpec:
    return GridSpec(-15.0, 15.0, 601, -6.0, 6.0, 241)


def _two_soliton(d: int, b: np.ndarray, grid: GridSpec,
                 label: str) -> Scenario:
    # same weight matrix for both eigenvalues; k defaults 1 and 2
    entries = (SolitonEntry(k=1.0 + 0j, B=b.copy()),
               SolitonEntry(k=2.0 + 0j, B=b.copy()))
    return Scenario(d=d, entries=entries, grid=grid, label=label,
                    imaginary_weights=True)


def preset(name: str) -> Scenario:
    """Named example scenarios.

    fig2: d=3, diagonal weights with entries (1, 0, 1) -- the solution
          stays diagonal. fig3: all nine weight entries 1. fig4: upper
          bidiagonal weights (zero (1,3) entry, yet the (1,3) field
          entry activates). scalar1: one sech soliton. scalar2: the
          k=1 and k=2 soliton collision.

    Eigenvalues default to k1=1, k2=2; weights use the imaginary
    convention so the fields are real-valued.
    """
    if name == "fig2":
        b = np.diag([1.0, 0.0, 1.0]).astype(complex)
        s = _two_soliton(3, b, _fig_grid(), "fig2")
    elif name == "fig3":
        b = np.ones((3, 3), dtype=complex)
        s = _two_soliton(3, b, _fig_grid(), "fig3")
    elif name == "fig4":
        b = (np.eye(3) + np.diag([1.0, 1.0], k=1)).astype(complex)
        s = _two_soliton(3, b, _fig_grid(), "fig4")
    elif name == "scalar1":
        s = Scenario(
            d=1,
            entries=(SolitonEntry(k=1.0 + 0j,
                                  B=np.array([[1.0 + 0j]])),),
            grid=GridSpec(-10.0, 10.0, 401, -5.0, 5.0, 101),
            label="scalar1", imaginary_weights=True,
        )
    elif name == "scalar2":
        s = _two_soliton(1, np.array([[1.0 + 0j]]),
                         GridSpec(-15.0, 15.0, 601, -3.0, 3.0, 121),
                         "scalar2")
    else:
        raise ValueError(
            f"unknown preset {name!r}; expected one of {PRESET_NAMES}")
    return validate_scenario(s)
