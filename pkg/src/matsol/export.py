"""Flat-file export: CSV field dumps, PPM heatmaps, gnuplot scripts.

CSV schema: header `x,t,i,j,re,im`, one row per grid point per matrix
entry, ordered t-major, then x, then i, then j. Floats are printed with
17 significant digits, so re-reading reproduces every sample bit for
bit (including NaN rows for masked points and signed zeros). All
writers emit "\n" line endings and fixed byte layouts: identical
fields produce identical bytes.
"""

from __future__ import annotations

import os
from typing import Dict, Tuple

import numpy as np

from .evaluate import REASON_NONFINITE, REASON_OK, MatrixField
from .spectral import GridSpec

MASKED_RGB = (255, 0, 0)  # masked pixels render red, outside the gray ramp


def _fmt(v: float) -> str:
    return format(v, ".17g")


def write_field_csv(field: MatrixField, path: str) -> None:
    xs = field.grid.x_values()
    ts = field.grid.t_values()
    d = field.d
    lines = ["x,t,i,j,re,im"]
    for it, t in enumerate(ts):
        trep = _fmt(t)
        for ix, x in enumerate(xs):
            xrep = _fmt(x)
            cell = field.values[it, ix]
            for i in range(d):
                for j in range(d):
                    v = cell[i, j]
                    lines.append(
                        f"{xrep},{trep},{i + 1},{j + 1},"
                        f"{_fmt(v.real)},{_fmt(v.imag)}"
                    )
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


class FieldCsvError(ValueError):
    """Malformed field CSV."""


def read_field_csv(path: str) -> MatrixField:
    """Reconstruct a MatrixField from an exported CSV.

    Grid bounds come from the first/last coordinates; per-point details
    that the CSV does not carry (determinant margins) are left unknown,
    and the mask is re-derived from NaN samples.
    """
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "x,t,i,j,re,im":
            raise FieldCsvError(f"unexpected header {header!r}")
        xs: Dict[float, int] = {}
        ts: Dict[float, int] = {}
        rows = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != 6:
                raise FieldCsvError(
                    f"line {lineno}: expected 6 columns, got {len(parts)}")
            try:
                x, t = float(parts[0]), float(parts[1])
                i, j = int(parts[2]), int(parts[3])
                re_, im_ = float(parts[4]), float(parts[5])
            except ValueError as e:
                raise FieldCsvError(f"line {lineno}: {e}") from None
            xs.setdefault(x, len(xs))
            ts.setdefault(t, len(ts))
            rows.append((ts[t], xs[x], i - 1, j - 1, re_, im_))
    if not rows:
        raise FieldCsvError("no data rows")
    d = max(r[2] for r in rows) + 1
    nx, nt = len(xs), len(ts)
    values = np.full((nt, nx, d, d), np.nan, dtype=complex)
    for it, ix, i, j, re_, im_ in rows:
        values[it, ix, i, j] = complex(re_, im_)
    x_sorted = sorted(xs)
    t_sorted = sorted(ts)
    grid = GridSpec(x_sorted[0], x_sorted[-1], nx,
                    t_sorted[0], t_sorted[-1], nt)
    # rows arrive t-major ascending, so insertion order is sorted order
    mask = np.isnan(values.real).any(axis=(2, 3))
    reason = np.where(mask, REASON_NONFINITE, REASON_OK).astype(np.uint8)
    det_min = np.full((nt, nx), np.nan)
    return MatrixField(grid=grid, values=values, mask=mask,
                       det_min=det_min, reason=reason, path="csv")


# ----------------------------------------------------------------------
# PPM heatmaps
# ----------------------------------------------------------------------

def entry_scales(field: MatrixField,
                 shared: bool = False) -> Dict[Tuple[int, int],
                                               Tuple[float, float]]:
    """Per-entry (min, max) of |V_ij| over unmasked points; one shared
    range for every entry when `shared` is set."""
    mag = np.abs(field.values)
    live = ~field.mask
    scales = {}
    d = field.d
    for i in range(d):
        for j in range(d):
            vals = mag[:, :, i, j][live]
            if vals.size:
                scales[(i, j)] = (float(vals.min()), float(vals.max()))
            else:
                scales[(i, j)] = (0.0, 0.0)
    if shared:
        lo = min(s[0] for s in scales.values())
        hi = max(s[1] for s in scales.values())
        scales = {k: (lo, hi) for k in scales}
    return scales


def ppm_bytes(field: MatrixField, i: int, j: int,
              scale: Tuple[float, float]) -> bytes:
    """Binary P6 image of |V_ij|: t_max at the top row, x left to
    right, gray ramp over [scale lo, scale hi], masked points red."""
    lo, hi = scale
    mag = np.abs(field.values[:, :, i, j])[::-1]  # top row = latest t
    mask = field.mask[::-1]
    span = hi - lo
    if span <= 0:
        gray = np.zeros_like(mag)
    else:
        gray = np.clip((mag - lo) / span, 0.0, 1.0)
    g8 = np.nan_to_num(np.round(gray * 255)).astype(np.uint8)
    rgb = np.repeat(g8[:, :, None], 3, axis=2)
    rgb[mask] = MASKED_RGB
    nt, nx = mag.shape
    return b"P6\n%d %d\n255\n" % (nx, nt) + rgb.tobytes()


def write_field_ppms(field: MatrixField, out_dir: str, stem: str,
                     shared_scale: bool = False) -> Dict[str, dict]:
    """One PPM per matrix entry; returns per-file scale metadata."""
    scales = entry_scales(field, shared=shared_scale)
    meta = {}
    for (i, j), scale in sorted(scales.items()):
        name = f"{stem}_V{i + 1}{j + 1}.ppm"
        with open(os.path.join(out_dir, name), "wb") as fh:
            fh.write(ppm_bytes(field, i, j, scale))
        meta[name] = {"entry": [i + 1, j + 1], "min": scale[0],
                      "max": scale[1], "shared": shared_scale}
    return meta


# ----------------------------------------------------------------------
# Plot script (gnuplot)
# ----------------------------------------------------------------------

def plot_script(csv_name: str, d: int, stem: str) -> str:
    """gnuplot commands rendering each |V_ij| surface from the CSV.

    Convenience artifact for external plotting; selects entry (i, j)
    rows with a ternary filter and draws them as a flat colored map.
    """
    lines = [
        "# render per-entry magnitude maps from the field CSV",
        "set datafile separator ','",
        "set view map",
        "set xlabel 'x'",
        "set ylabel 't'",
        "set term pngcairo size 900,700",
    ]
    for i in range(1, d + 1):
        for j in range(1, d + 1):
            lines += [
                f"set output '{stem}_V{i}{j}.png'",
                f"set title '|V_{{{i}{j}}}|'",
                (f"splot '{csv_name}' every ::1 using "
                 f"1:2:((int($3)=={i} && int($4)=={j}) ? "
                 f"sqrt($5*$5+$6*$6) : 1/0) "
                 f"with points pt 5 ps 0.5 palette notitle"),
            ]
    lines.append("unset output")
    return "\n".join(lines) + "\n"


def write_plot_script(csv_name: str, d: int, out_dir: str,
                      stem: str) -> str:
    name = f"{stem}_plots.gnuplot"
    with open(os.path.join(out_dir, name), "w", encoding="ascii",
              newline="\n") as fh:
        fh.write(plot_script(csv_name, d, stem))
    return name
