"""Solitonic diagnostics: conserved-functional candidates, per-entry
energy partition, and peak tracking through collisions.

Which x-integral functional of a matrix field is actually conserved is
treated as an open experimental question: this module computes several
candidates (trace of V^2, Frobenius energy, plain trace) and reports
their relative drifts over time instead of asserting conservation.
Only the scalar trace-square case is a hard invariant elsewhere in the
test suite (classical result: for a scalar soliton, int v^2 dx = 2k).

Peak tracking quantifies elastic collisions: local maxima of the
Frobenius norm per time slice, with sub-grid parabolic refinement, are
fitted to straight lines in windows before and after the interaction;
speeds and heights per soliton should match across the collision.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .evaluate import MatrixField

BOUNDARY_DECAY_TOL = 1e-8
DRIFT_FLOOR = 1e-30
FUNCTIONAL_TAGS = ("trace_sq", "frobenius", "trace")


class MaskedLineError(ValueError):
    """An x-line needed for an x-integral contains masked points."""

    def __init__(self, t: float, count: int):
        self.t, self.count = t, count
        super().__init__(
            f"x-line at t={t:g} has {count} masked point(s); "
            f"x-integral functionals need fully unmasked lines"
        )


class WindowTooSmallError(ValueError):
    """Field has not decayed at the x boundary of the grid."""

    def __init__(self, boundary_norm: float, x: float):
        self.boundary_norm, self.x = boundary_norm, x
        super().__init__(
            f"window too small: boundary norm ||V|| = {boundary_norm:.3e} "
            f"at x={x:g} exceeds {BOUNDARY_DECAY_TOL:g}"
        )


@dataclass
class ConservedSeries:
    """One functional candidate evaluated per t slice."""

    tag: str
    t_values: np.ndarray
    values: np.ndarray  # complex or real, one per t

    @property
    def drift(self) -> float:
        """max |f(t) - f(t0)| / max(|f(t0)|, floor)."""
        ref = self.values[0]
        dev = float(np.abs(self.values - ref).max())
        return dev / max(abs(complex(ref)), DRIFT_FLOOR)

    def to_dict(self) -> dict:
        vals = np.asarray(self.values)
        out = {
            "tag": self.tag,
            "drift": self.drift,
            "first": _num(vals[0]),
            "last": _num(vals[-1]),
            "mean_abs": float(np.abs(vals).mean()),
        }
        return out


def _num(v) -> object:
    v = complex(v)
    if v.imag == 0.0:
        return v.real
    return {"re": v.real, "im": v.imag}


@dataclass
class EnergyPartition:
    """Per-entry energies E_ij(t) = int |V_ij(x,t)|^2 dx."""

    t_values: np.ndarray
    per_entry: np.ndarray  # (nt, d, d) real, nonnegative
    total: np.ndarray  # (nt,) Frobenius functional
    sum_consistency: float  # max relative gap between entry-sum and total

    @property
    def d(self) -> int:
        return self.per_entry.shape[1]

    def shares(self) -> np.ndarray:
        """Time-averaged fraction of total energy per entry."""
        tot = np.maximum(self.total, DRIFT_FLOOR)
        return (self.per_entry / tot[:, None, None]).mean(axis=0)

    def to_dict(self) -> dict:
        return {
            "total_first": float(self.total[0]),
            "total_last": float(self.total[-1]),
            "total_drift": float(np.abs(self.total - self.total[0]).max()
                                 / max(self.total[0], DRIFT_FLOOR)),
            "sum_consistency": self.sum_consistency,
            "shares": [[float(s) for s in row] for row in self.shares()],
        }


@dataclass
class SolitonFit:
    """Least-squares line through one soliton's peak positions inside a
    time window."""

    speed: float
    height: float  # median peak height over the window
    n_samples: int

    def to_dict(self) -> dict:
        return {"speed": self.speed, "height": self.height,
                "n_samples": self.n_samples}


@dataclass
class PeakTrack:
    """Local maxima of ||V(., t)||_F per slice plus fitted pre/post
    collision speeds and heights per soliton (sorted by speed)."""

    t_values: np.ndarray
    peaks_per_t: List[List[Tuple[float, float]]]  # (x, height) per slice
    min_height: float
    pre_window: Tuple[float, float]
    post_window: Tuple[float, float]
    pre_solitons: List[SolitonFit]
    post_solitons: List[SolitonFit]
    warnings: List[str] = dc_field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "min_height": self.min_height,
            "pre_window": list(self.pre_window),
            "post_window": list(self.post_window),
            "pre_solitons": [s.to_dict() for s in self.pre_solitons],
            "post_solitons": [s.to_dict() for s in self.post_solitons],
            "warnings": list(self.warnings),
        }


# ----------------------------------------------------------------------
# x-integral functionals
# ----------------------------------------------------------------------

def _simpson_weights(n_points: int) -> np.ndarray:
    """Composite-Simpson weights on a uniform grid (without the dx/3
    factor). Falls back to Simpson + trapezoid tail when the interval
    count is odd; irrelevant at decayed boundaries but keeps the rule
    well defined for every grid."""
    if n_points < 3:
        raise ValueError(f"need at least 3 x samples, got {n_points}")
    n_int = n_points - 1
    w = np.zeros(n_points)
    even_end = n_points if n_int % 2 == 0 else n_points - 1
    w[0] = 1.0
    w[1:even_end - 1:2] = 4.0
    w[2:even_end - 1:2] = 2.0
    w[even_end - 1] = 1.0
    if n_int % 2:
        w[-2] += 1.5
        w[-1] += 1.5
    return w


def _check_lines(field: MatrixField):
    ts = field.grid.t_values()
    if field.mask.any():
        row = int(np.argmax(field.mask.any(axis=1)))
        raise MaskedLineError(float(ts[row]),
                              int(field.mask[row].sum()))
    fro = np.sqrt((np.abs(field.values) ** 2).sum(axis=(2, 3)))
    xs = field.grid.x_values()
    for col, x in ((0, xs[0]), (-1, xs[-1])):
        worst = float(fro[:, col].max())
        if worst >= BOUNDARY_DECAY_TOL:
            raise WindowTooSmallError(worst, float(x))


def _density(field: MatrixField, tag: str) -> np.ndarray:
    v = field.values
    if tag == "trace_sq":
        return np.einsum("txij,txji->tx", v, v)
    if tag == "frobenius":
        return (np.abs(v) ** 2).sum(axis=(2, 3))
    if tag == "trace":
        return np.einsum("txii->tx", v)
    raise ValueError(f"unknown functional tag {tag!r}; "
                     f"expected one of {FUNCTIONAL_TAGS}")


def functional_series(field: MatrixField, tag: str) -> ConservedSeries:
    """Composite-Simpson x-integral of the tagged density, per t slice.

    Requires fully unmasked x-lines and decayed tails at both x ends
    (otherwise the integral is not comparing like with like across t).
    """
    dens = _density(field, tag)  # validates tag before preconditions
    _check_lines(field)
    g = field.grid
    dx = (g.x_max - g.x_min) / (g.nx - 1)
    w = _simpson_weights(g.nx)
    vals = dens @ w * (dx / 3.0)
    if tag == "frobenius":
        vals = vals.real
    return ConservedSeries(tag=tag, t_values=g.t_values(), values=vals)


def energy_partition(field: MatrixField) -> EnergyPartition:
    """Per-entry x-integrals of |V_ij|^2 per t, plus their consistency
    with the Frobenius functional (an exact identity, checked)."""
    _check_lines(field)
    g = field.grid
    dx = (g.x_max - g.x_min) / (g.nx - 1)
    w = _simpson_weights(g.nx)
    dens = np.abs(field.values) ** 2  # (nt, nx, d, d)
    per_entry = np.tensordot(dens, w, axes=(1, 0)) * (dx / 3.0)
    total = functional_series(field, "frobenius").values
    gap = np.abs(per_entry.sum(axis=(1, 2)) - total)
    consistency = float((gap / np.maximum(total, DRIFT_FLOOR)).max())
    return EnergyPartition(t_values=g.t_values(), per_entry=per_entry,
                           total=total, sum_consistency=consistency)


# ----------------------------------------------------------------------
# Peak tracking
# ----------------------------------------------------------------------

def _slice_peaks(xs: np.ndarray, norm_row: np.ndarray,
                 mask_row: np.ndarray,
                 min_height: float) -> List[Tuple[float, float]]:
    """Interior 3-point maxima with parabolic sub-grid refinement.

    Candidates within two cells of a masked sample are discarded: next
    to the singular set the formula's values inflate before the mask
    cuts them off, which manufactures spurious boundary maxima."""
    h = norm_row
    idx = np.nonzero((h[1:-1] > h[:-2]) & (h[1:-1] >= h[2:])
                     & (h[1:-1] > min_height))[0] + 1
    dx = xs[1] - xs[0]
    out = []
    for i in idx:
        if mask_row[max(i - 2, 0):i + 3].any():
            continue
        a = (h[i + 1] + h[i - 1] - 2 * h[i]) / 2.0
        b = (h[i + 1] - h[i - 1]) / 2.0
        if a < 0:
            delta = float(np.clip(-b / (2 * a), -1.0, 1.0))
        else:
            delta = 0.0  # plateau; keep the grid point
        out.append((float(xs[i] + delta * dx),
                    float(h[i] + b * delta + a * delta * delta)))
    return out


def _window_fits(peaks_per_t: Sequence[List[Tuple[float, float]]],
                 ts: np.ndarray, i0: int, i1: int, dx: float,
                 warnings: List[str], label: str) -> List[SolitonFit]:
    """Continuation-based chains inside one window, fitted by least
    squares. Nearest-position matching, max jump 5 grid cells per step."""
    chains: List[List[Tuple[int, float, float]]] = []
    for i in range(i0, i1):
        peaks = peaks_per_t[i]
        used_chain = set()
        used_peak = set()
        cands = []
        for ci, ch in enumerate(chains):
            li, lx, _ = ch[-1]
            for pi, (px, ph) in enumerate(peaks):
                gap = i - li
                if abs(px - lx) <= 5.0 * dx * gap:
                    cands.append((abs(px - lx), ci, pi))
        for _, ci, pi in sorted(cands):
            if ci in used_chain or pi in used_peak:
                continue
            used_chain.add(ci)
            used_peak.add(pi)
            px, ph = peaks[pi]
            chains[ci].append((i, px, ph))
        for pi, (px, ph) in enumerate(peaks):
            if pi not in used_peak:
                chains.append([(i, px, ph)])
    fits = []
    for ch in chains:
        if len(ch) < 3:
            continue
        tt = np.array([ts[i] for i, _, _ in ch])
        xx = np.array([x for _, x, _ in ch])
        hh = np.array([h for _, _, h in ch])
        speed = float(np.polyfit(tt, xx, 1)[0])
        fits.append(SolitonFit(speed=speed, height=float(np.median(hh)),
                               n_samples=len(ch)))
    if not fits:
        warnings.append(f"no soliton fits in {label} window "
                        f"(need >= 3 peak samples per chain)")
    fits.sort(key=lambda f: f.speed)
    return fits


def track_peaks(field: MatrixField, min_height: float) -> PeakTrack:
    """Track local maxima of ||V(., t)||_F through the time range.

    Pre/post interaction windows are the first/last 20 percent of t;
    within each, peak chains are fitted to straight lines and sorted by
    speed, so pre/post soliton lists pair up positionally. Count changes
    near the collision (middle of the range) are tolerated.
    """
    g = field.grid
    if g.nx < 3:
        raise ValueError(f"peak tracking needs nx >= 3, got {g.nx}")
    if min_height <= 0:
        raise ValueError(f"min_height must be positive, got {min_height}")
    xs = g.x_values()
    ts = g.t_values()
    norm = np.sqrt((np.abs(np.nan_to_num(field.values)) ** 2)
                   .sum(axis=(2, 3)))
    peaks_per_t = [_slice_peaks(xs, norm[i], field.mask[i], min_height)
                   for i in range(g.nt)]
    warnings: List[str] = []
    masked_rows = int(field.mask.any(axis=1).sum())
    if masked_rows:
        warnings.append(f"{masked_rows} t slice(s) contain masked points; "
                        f"peaks there come from unmasked samples only")
    win = max(3, int(round(0.2 * g.nt)))
    win = min(win, g.nt)
    dx = xs[1] - xs[0] if g.nx > 1 else 1.0
    pre = _window_fits(peaks_per_t, ts, 0, win, dx, warnings, "pre")
    post = _window_fits(peaks_per_t, ts, g.nt - win, g.nt, dx, warnings,
                        "post")
    if len(pre) != len(post):
        warnings.append(f"peak count differs between windows "
                        f"(pre={len(pre)}, post={len(post)})")
    return PeakTrack(
        t_values=ts, peaks_per_t=peaks_per_t, min_height=min_height,
        pre_window=(float(ts[0]), float(ts[min(win, g.nt) - 1])),
        post_window=(float(ts[g.nt - win]), float(ts[-1])),
        pre_solitons=pre, post_solitons=post, warnings=warnings,
    )
