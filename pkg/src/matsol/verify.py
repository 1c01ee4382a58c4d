"""Numerical certification of the produced fields.

Residual operators check, at chosen points, that

    mKdV:  V_t = V_xxx + 3 {V^2, V_x}
    KdV:   U_t = U_xxx + 3 {U, U_x}      with U = sign*i V_x + V^2
    pKdV:  W_t = W_xxx + 3 (W_x)^2       with W(x,t) = int_{x_cut}^x U ds

hold to discretization accuracy. Derivatives are always central finite
differences applied to fresh exact evaluations at stencil nodes (never to
stored grids), with optional Richardson extrapolation from the (h, h/2)
pair, which raises the effective order by two. Stencil weights are solved
exactly in rational arithmetic, so weight error contributes nothing even
after the 1/h^3 amplification of third-derivative formulas.

Residual operators are written against batched samplers (callables
mapping point arrays to field samples), so the KdV check differentiates
the Miura image by re-sampling it at stencil nodes -- nested stencils,
exactly as an independent verifier should, with no reuse of analytic
derivative shortcuts from the evaluation module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .evaluate import PointLike, _point, evaluate_points
from .linalg import anticommutator
from .spectral import OperatorData

# A field sampler maps equal-length coordinate arrays to (Q, d, d) samples.
Sampler = Callable[[np.ndarray, np.ndarray], np.ndarray]

DECAY_TOL = 1e-10  # ||U|| below this counts as "in the decay region"


class StencilSingularityError(ArithmeticError):
    """A stencil node fell on a masked (singular/overflow) point."""

    def __init__(self, x: float, t: float, reason: str):
        self.x, self.t, self.reason = x, t, reason
        super().__init__(
            f"stencil crosses singularity: node (x={x:g}, t={t:g}) is "
            f"masked ({reason})"
        )


class WindowError(ValueError):
    """A quadrature or series window violates its precondition."""


@dataclass(frozen=True)
class StencilSpec:
    """Finite-difference configuration: step h, accuracy order (2, 4 or
    6), and whether to Richardson-extrapolate the (h, h/2) pair."""

    h: float = 1e-2
    order: int = 4
    richardson: bool = True

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError(f"step must be positive, got {self.h}")
        if self.order not in (2, 4, 6):
            raise ValueError(f"order must be 2, 4 or 6, got {self.order}")

    @property
    def effective_order(self) -> int:
        return self.order + 2 if self.richardson else self.order

    def with_h(self, h: float) -> "StencilSpec":
        return StencilSpec(h=h, order=self.order, richardson=self.richardson)


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite-Simpson configuration: target step (the actual step is
    shrunk to the nearest even subdivision of the interval)."""

    step: float = 5e-3

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")


@lru_cache(maxsize=None)
def central_weights(m: int, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Central finite-difference weights for the m-th derivative at the
    given accuracy order, on integer offsets.

    Solved exactly: with offsets o_j, the weights satisfy
    sum_j w_j o_j^q = m! delta_{q,m} for q = 0..n-1. Rational Gaussian
    elimination keeps the weights exact before the final float cast.
    """
    if m < 1 or order < 2 or order % 2:
        raise ValueError(f"unsupported stencil (m={m}, order={order})")
    npts = 2 * ((m + 1) // 2) - 1 + order
    half = npts // 2
    offsets = list(range(-half, half + 1))
    a = [[Fraction(o) ** q for o in offsets] for q in range(npts)]
    rhs = [Fraction(math.factorial(m)) if q == m else Fraction(0)
           for q in range(npts)]
    # exact Gaussian elimination with partial (nonzero) pivoting
    for col in range(npts):
        piv = next(r for r in range(col, npts) if a[r][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        rhs[col], rhs[piv] = rhs[piv], rhs[col]
        inv = 1 / a[col][col]
        a[col] = [v * inv for v in a[col]]
        rhs[col] *= inv
        for r in range(npts):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [v - f * w for v, w in zip(a[r], a[col])]
                rhs[r] -= f * rhs[col]
    return (np.array(offsets, dtype=float),
            np.array([float(v) for v in rhs]))


def field_sampler(od: OperatorData, path: str = "fast") -> Sampler:
    """Batched sampler over the exact solution; raises
    StencilSingularityError when any requested point is masked."""

    def sample(xs: np.ndarray, ts: np.ndarray) -> np.ndarray:
        r = evaluate_points(od, xs, ts, path=path)
        if r.mask.any():
            i = int(np.argmax(r.mask))
            from .evaluate import REASON_NAMES
            raise StencilSingularityError(
                float(xs[i]), float(ts[i]), REASON_NAMES[int(r.reason[i])])
        return r.values

    return sample


def draw_unmasked_points(
    od: OperatorData, rng: np.random.Generator, n: int,
    x_range: Tuple[float, float], t_range: Tuple[float, float],
    s: StencilSpec, envelope: float = 4.0, path: str = "fast",
    max_tries: int = 500,
) -> List[Tuple[float, float]]:
    """Draw points whose whole stencil neighborhood is unmasked.

    The probe covers a cross of radius envelope*h around each candidate
    (the residual stencils stay within that for the supported orders;
    pass a larger envelope for nested stencils). Raises WindowError when
    the region is too masked to supply n points.
    """
    offs = np.concatenate([np.arange(-envelope, envelope + 0.5, 0.5),
                           [0.0]]) * s.h
    pts: List[Tuple[float, float]] = []
    for _ in range(max_tries):
        if len(pts) >= n:
            break
        x = float(rng.uniform(*x_range))
        t = float(rng.uniform(*t_range))
        xs = np.concatenate([x + offs, np.full(len(offs), x)])
        ts = np.concatenate([np.full(len(offs), t), t + offs])
        if not evaluate_points(od, xs, ts, path=path).mask.any():
            pts.append((x, t))
    if len(pts) < n:
        raise WindowError(
            f"only {len(pts)}/{n} unmasked stencil sites found in "
            f"x{list(x_range)} x t{list(t_range)} after {max_tries} draws"
        )
    return pts


def sampled_derivative(
    sampler: Sampler, x: float, t: float, axis: str, m: int,
    s: StencilSpec,
) -> np.ndarray:
    """m-th derivative of a sampled field along 'x' or 't' at one point,
    by fresh evaluation at every stencil node."""
    if axis not in ("x", "t"):
        raise ValueError(f"axis must be 'x' or 't', got {axis!r}")
    offsets, weights = central_weights(m, s.order)

    def estimate(h: float) -> np.ndarray:
        if axis == "x":
            vals = sampler(x + offsets * h, np.full(len(offsets), t))
        else:
            vals = sampler(np.full(len(offsets), x), t + offsets * h)
        return np.tensordot(weights, vals, axes=(0, 0)) / h ** m

    d1 = estimate(s.h)
    if not s.richardson:
        return d1
    d2 = estimate(s.h / 2)
    return d2 + (d2 - d1) / (2 ** s.order - 1)


def sample_derivatives(
    od: OperatorData, p: PointLike, s: StencilSpec, path: str = "fast",
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(V, V_x, V_xx, V_xxx, V_t) at one point, each derivative from its
    own central stencil of exact evaluations."""
    x, t = _point(p)
    f = field_sampler(od, path)
    v = f(np.array([x]), np.array([t]))[0]
    vx = sampled_derivative(f, x, t, "x", 1, s)
    vxx = sampled_derivative(f, x, t, "x", 2, s)
    vxxx = sampled_derivative(f, x, t, "x", 3, s)
    vt = sampled_derivative(f, x, t, "t", 1, s)
    return v, vx, vxx, vxxx, vt


# ----------------------------------------------------------------------
# Residual operators
# ----------------------------------------------------------------------

def mkdv_residual_sampled(v_sampler: Sampler, p: PointLike,
                          s: StencilSpec) -> np.ndarray:
    """V_t - V_xxx - 3 {V^2, V_x} for an arbitrary sampled field."""
    x, t = _point(p)
    v = v_sampler(np.array([x]), np.array([t]))[0]
    vx = sampled_derivative(v_sampler, x, t, "x", 1, s)
    vxxx = sampled_derivative(v_sampler, x, t, "x", 3, s)
    vt = sampled_derivative(v_sampler, x, t, "t", 1, s)
    return vt - vxxx - 3 * anticommutator(v @ v, vx)


def mkdv_residual(od: OperatorData, p: PointLike, s: StencilSpec,
                  path: str = "fast") -> np.ndarray:
    """mKdV residual of the exact solution at one point."""
    return mkdv_residual_sampled(field_sampler(od, path), p, s)


def miura_sampler(od: OperatorData, s: StencilSpec, sign: int = +1,
                  path: str = "fast") -> Sampler:
    """Batched Miura image U = sign*i V_x + V^2 of the exact field; V_x
    by stencil at every requested point (one fused evaluation batch)."""
    if sign not in (+1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    offsets, weights = central_weights(1, s.order)
    n_off = len(offsets)
    base = field_sampler(od, path)

    def sample(xs: np.ndarray, ts: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        ts = np.asarray(ts, dtype=float)
        q = len(xs)
        levels = [s.h, s.h / 2] if s.richardson else [s.h]
        coords_x = [xs]
        coords_t = [ts]
        for h in levels:
            coords_x.append((xs[:, None] + offsets[None, :] * h).ravel())
            coords_t.append(np.repeat(ts, n_off))
        vals = base(np.concatenate(coords_x), np.concatenate(coords_t))
        v = vals[:q]
        pos = q
        ests = []
        for h in levels:
            block = vals[pos:pos + q * n_off].reshape(q, n_off,
                                                      *vals.shape[1:])
            pos += q * n_off
            ests.append(np.tensordot(weights, block, axes=(0, 1)) / h)
        if s.richardson:
            vx = ests[1] + (ests[1] - ests[0]) / (2 ** s.order - 1)
        else:
            vx = ests[0]
        return sign * 1j * vx + np.einsum("qij,qjk->qik", v, v)

    return sample


def miura_map(od: OperatorData, p: PointLike, s: StencilSpec,
              sign: int = +1, path: str = "fast") -> np.ndarray:
    """U = sign*i V_x + V^2 at one point (default sign +1)."""
    x, t = _point(p)
    return miura_sampler(od, s, sign, path)(np.array([x]), np.array([t]))[0]


def kdv_residual(u_sampler: Sampler, p: PointLike,
                 s: StencilSpec) -> np.ndarray:
    """U_t - U_xxx - 3 {U, U_x} with every derivative taken by
    re-sampling the mapped field at stencil nodes (nested stencils)."""
    x, t = _point(p)
    u = u_sampler(np.array([x]), np.array([t]))[0]
    ux = sampled_derivative(u_sampler, x, t, "x", 1, s)
    uxxx = sampled_derivative(u_sampler, x, t, "x", 3, s)
    ut = sampled_derivative(u_sampler, x, t, "t", 1, s)
    return ut - uxxx - 3 * anticommutator(u, ux)


@dataclass
class MiuraSignProbe:
    """KdV residual sup-norms for both Miura signs over probe points.
    Both signs of the same field are valid images (the source equation is
    odd under V -> -V), so both residuals sit at discretization level;
    the probe records them and selects +1, matching the map's printed
    orientation."""

    residual_plus: float
    residual_minus: float
    selected: int = +1

    @property
    def both_valid(self) -> bool:
        return max(self.residual_plus, self.residual_minus) < 1e-3


def miura_sign_probe(od: OperatorData, points: Sequence[PointLike],
                     s: StencilSpec) -> MiuraSignProbe:
    sups = {}
    for sign in (+1, -1):
        u = miura_sampler(od, s, sign)
        sups[sign] = max(
            float(np.abs(kdv_residual(u, p, s)).max()) for p in points
        )
    return MiuraSignProbe(residual_plus=sups[+1], residual_minus=sups[-1])


# ----------------------------------------------------------------------
# Potential map and pKdV
# ----------------------------------------------------------------------

def _simpson_nodes(x_cut: float, x: float, step: float) -> np.ndarray:
    n = max(2, 2 * int(np.ceil(abs(x - x_cut) / (2 * step))))
    return np.linspace(x_cut, x, n + 1)


def _simpson_integrate(vals: np.ndarray, a: float, b: float) -> np.ndarray:
    n = vals.shape[0] - 1
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return np.tensordot(w, vals, axes=(0, 0)) * ((b - a) / n / 3.0)


def potential_map(
    od: OperatorData, t: float, x_cut: float, x: float,
    quadrature: QuadratureSpec = QuadratureSpec(),
    s: StencilSpec = StencilSpec(), sign: int = +1,
) -> np.ndarray:
    """W(x, t) = int_{x_cut}^x U(s', t) ds' by composite Simpson.

    x_cut must sit in the decay region (||U(x_cut, t)|| < 1e-10), making
    W the potential normalized to vanish at the quiet left end; W_x = U
    holds by construction up to quadrature error.
    """
    u = miura_sampler(od, s, sign)
    u_cut = u(np.array([float(x_cut)]), np.array([float(t)]))[0]
    ncut = float(np.abs(u_cut).max())
    if ncut >= DECAY_TOL:
        raise WindowError(
            f"x_cut={x_cut:g} is not in the decay region: ||U(x_cut,t)|| "
            f"= {ncut:.3e} >= {DECAY_TOL:g}"
        )
    if x == x_cut:
        return np.zeros((od.d, od.d), dtype=complex)
    nodes = _simpson_nodes(x_cut, x, quadrature.step)
    uvals = u(nodes, np.full(len(nodes), float(t)))
    return _simpson_integrate(uvals, x_cut, x)


def potential_sampler(
    od: OperatorData, x_cut: float,
    quadrature: QuadratureSpec = QuadratureSpec(),
    s: StencilSpec = StencilSpec(), sign: int = +1,
) -> Sampler:
    """Batched W sampler (one quadrature per requested point)."""

    def sample(xs: np.ndarray, ts: np.ndarray) -> np.ndarray:
        out = [potential_map(od, float(t), x_cut, float(x), quadrature,
                             s, sign)
               for x, t in zip(xs, ts)]
        return np.array(out)

    return sample


def pkdv_residual(
    w_sampler: Sampler, p: PointLike, s: StencilSpec,
    u_sampler: Optional[Sampler] = None,
) -> np.ndarray:
    """W_t - W_xxx - 3 (W_x)^2.

    When the underlying U sampler is supplied, W_x and W_xxx reduce to U
    and U_xx (cheaper and better conditioned than third-differencing the
    quadrature); W_t always comes from a t-stencil of the full
    quadrature. Without it, all derivatives difference w_sampler
    directly.
    """
    x, t = _point(p)
    wt = sampled_derivative(w_sampler, x, t, "t", 1, s)
    if u_sampler is not None:
        wx = u_sampler(np.array([x]), np.array([t]))[0]
        wxxx = sampled_derivative(u_sampler, x, t, "x", 2, s)
    else:
        wx = sampled_derivative(w_sampler, x, t, "x", 1, s)
        wxxx = sampled_derivative(w_sampler, x, t, "x", 3, s)
    return wt - wxxx - 3 * (wx @ wx)


def find_x_cut(od: OperatorData, ts: Sequence[float], x_start: float,
               s: StencilSpec = StencilSpec(), sign: int = +1,
               max_steps: int = 40) -> float:
    """Walk left from x_start until ||U(x_cut, t)|| < 1e-10 for every t
    in ts; the returned x_cut is a valid potential_map base point."""
    u = miura_sampler(od, s, sign)
    x_cut = float(x_start)
    for _ in range(max_steps):
        vals = u(np.full(len(ts), x_cut), np.asarray(ts, dtype=float))
        worst = float(np.abs(vals).max())
        if worst < DECAY_TOL:
            return x_cut
        x_cut -= 4.0
    raise WindowError(
        f"no decay-region x_cut found left of {x_start:g} "
        f"(last ||U|| = {worst:.3e})"
    )


# ----------------------------------------------------------------------
# Convergence study
# ----------------------------------------------------------------------

@dataclass
class ResidualReport:
    """Residual statistics over sample points, with an optional
    convergence-order estimate when several step sizes were run."""

    equation: str
    sample_count: int
    sup: float
    rms: float
    worst_point: Tuple[float, float]
    order_estimate: Optional[float] = None
    roundoff_limited: bool = False
    sups_by_h: List[Tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "equation": self.equation,
            "sample_count": self.sample_count,
            "sup": self.sup,
            "rms": self.rms,
            "worst_point": {"x": self.worst_point[0], "t": self.worst_point[1]},
            "order_estimate": self.order_estimate,
            "roundoff_limited": self.roundoff_limited,
            "sups_by_h": [{"h": h, "sup": v} for h, v in self.sups_by_h],
        }


def residual_stats(
    residual_op: Callable[[PointLike, StencilSpec], np.ndarray],
    points: Sequence[PointLike], s: StencilSpec, equation: str,
) -> ResidualReport:
    """Evaluate a residual operator over points and summarize."""
    sup = -1.0
    worst = (np.nan, np.nan)
    sq_sum = 0.0
    count = 0
    for p in points:
        r = np.abs(residual_op(p, s))
        m = float(r.max())
        sq_sum += float((r ** 2).sum())
        count += r.size
        if m > sup:
            sup, worst = m, _point(p)
    return ResidualReport(
        equation=equation, sample_count=len(points), sup=sup,
        rms=math.sqrt(sq_sum / max(count, 1)), worst_point=worst,
    )


def convergence_study(
    residual_op: Callable[[PointLike, StencilSpec], np.ndarray],
    points: Sequence[PointLike], h_list: Sequence[float],
    template: StencilSpec, equation: str = "residual",
) -> ResidualReport:
    """Run the residual at several step sizes and fit the convergence
    slope of log(sup) against log(h).

    The fitted slope should match the stencil's effective order until the
    roundoff floor; once halving h stops helping (pairwise slope < 1) the
    report is flagged roundoff-limited and the collapsed steps are
    excluded from the fit.
    """
    if len(h_list) < 2:
        raise ValueError("need at least two step sizes")
    hs = sorted((float(h) for h in h_list), reverse=True)
    reports = [
        residual_stats(residual_op, points, template.with_h(h), equation)
        for h in hs
    ]
    sups = np.array([r.sup for r in reports])
    if np.any(sups <= 0):
        raise WindowError("zero residual; convergence slope undefined")
    pair_slopes = [
        math.log(sups[i] / sups[i + 1]) / math.log(hs[i] / hs[i + 1])
        for i in range(len(hs) - 1)
    ]
    usable = len(hs)
    for i, sl in enumerate(pair_slopes):
        if sl < 1.0:
            usable = i + 1
            break
    roundoff = usable < len(hs)
    if usable >= 2:
        lo = np.log(np.array(hs[:usable]))
        ls = np.log(sups[:usable])
        slope = float(np.polyfit(lo, ls, 1)[0])
    else:
        slope = pair_slopes[0]
    main = reports[min(usable, len(hs)) - 1]
    return ResidualReport(
        equation=equation, sample_count=main.sample_count, sup=main.sup,
        rms=main.rms, worst_point=main.worst_point, order_estimate=slope,
        roundoff_limited=roundoff,
        sups_by_h=[(h, r.sup) for h, r in zip(hs, reports)],
    )
