"""Built-in invariant battery behind `matsol selftest`.

Every module's documented invariants are exercised here at reduced
scale with fixed seeds: algebra-layer oracles, dyad-factorization
identities, dual-path agreement, PDE residual bounds along the whole
Miura/potential chain, diagnostic identities, and byte-level I/O
determinism. Any violated bound makes the battery (and the CLI) fail.
"""

from __future__ import annotations

import json
import math
import tempfile
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import diagnostics as diag
from . import export, report, scenario_io, spectral, verify
from .evaluate import (
    REASON_SINGULAR,
    evaluate_grid,
    evaluate_point_det,
    evaluate_point_fast,
    evaluate_points,
    exponential_action,
)
from .linalg import anticommutator, commutator, expm, lu_det_solve, mat_mul
from .spectral import (
    GridSpec,
    Scenario,
    ScenarioValidationError,
    SolitonEntry,
    build_operator_data,
    factorization_residual,
    random_scenario,
    regauge_factorization,
    validate_scenario,
    with_factorization,
)
from .verify import QuadratureSpec, StencilSpec

SEED = 20240811


@dataclass
class CheckResult:
    name: str
    ok: bool
    measured: str
    seconds: float

    def to_dict(self) -> dict:
        return {"name": self.name, "ok": self.ok,
                "measured": self.measured, "seconds": self.seconds}


def _mat_mul_loops(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, m = a.shape
    m2, p = b.shape
    out = np.zeros((n, p), dtype=complex)
    for i in range(n):
        for j in range(p):
            acc = 0j
            for k in range(m):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def _scalar_two(grid: GridSpec, b: float = 1.0) -> Scenario:
    ents = (SolitonEntry(k=1 + 0j, B=np.array([[b + 0j]])),
            SolitonEntry(k=2 + 0j, B=np.array([[b + 0j]])))
    return validate_scenario(Scenario(d=1, entries=ents, grid=grid,
                                      label="scalar-two",
                                      imaginary_weights=True))


def _preset_od(name: str):
    return build_operator_data(scenario_io.preset(name))


def _sup(a) -> float:
    return float(np.abs(a).max())


# ----------------------------------------------------------------------
# checks: algebra layer
# ----------------------------------------------------------------------

def _chk_mat_mul():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(4):
        a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        b = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        worst = max(worst, _sup(mat_mul(a, b) - _mat_mul_loops(a, b)))
    return f"sup dev vs loop product {worst:.2e}", worst <= 1e-13


def _chk_det_multiplicative():
    rng = np.random.default_rng(SEED + 1)
    worst = 0.0
    for _ in range(6):
        a = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        b = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        da = lu_det_solve(a).det
        db = lu_det_solve(b).det
        dab = lu_det_solve(a @ b).det
        worst = max(worst, abs(dab - da * db) / max(abs(da * db), 1e-30))
    return f"max rel |det(AB)-detA detB| {worst:.2e}", worst <= 1e-10


def _chk_det_cofactor():
    rng = np.random.default_rng(SEED + 2)
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    cof = (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
           - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
           + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]))
    dev = abs(lu_det_solve(a).det - cof) / abs(cof)
    return f"rel dev vs cofactor expansion {dev:.2e}", dev <= 1e-12


def _chk_solve_residual():
    rng = np.random.default_rng(SEED + 3)
    a = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    bvec = rng.standard_normal((6, 2)) + 1j * rng.standard_normal((6, 2))
    x = lu_det_solve(a, bvec).solution
    dev = _sup(a @ x - bvec) / (_sup(a) * max(_sup(x), 1e-30))
    return f"scaled solve residual {dev:.2e}", dev <= 1e-11


def _chk_singular_detection():
    a = np.array([[1.0, 2.0], [2.0, 4.0]], dtype=complex)
    res = lu_det_solve(a)
    flagged = res.singular and abs(res.det) == 0.0
    raised = False
    try:
        lu_det_solve(a, np.ones((2, 1), dtype=complex))
    except Exception:
        raised = True
    ok = flagged and raised
    return f"flagged={flagged} solve-raises={raised}", ok


def _chk_expm_basic():
    z = expm(np.zeros((3, 3), dtype=complex))
    dev0 = _sup(z - np.eye(3))
    d = np.diag([0.3 + 1j, -2.0 + 0j, 5.0 - 0.5j])
    devd = _sup(expm(d) - np.diag(np.exp(np.diag(d))))
    ok = dev0 <= 1e-15 and devd <= 1e-14
    return f"expm(0) dev {dev0:.1e}, diagonal dev {devd:.1e}", ok


def _chk_expm_taylor():
    rng = np.random.default_rng(SEED + 4)
    a = 0.4 * (rng.standard_normal((4, 4))
               + 1j * rng.standard_normal((4, 4)))
    term = np.eye(4, dtype=complex)
    acc = np.eye(4, dtype=complex)
    for n in range(1, 30):
        term = term @ a / n
        acc = acc + term
    dev = _sup(expm(a) - acc)
    return f"dev vs 30-term series {dev:.2e}", dev <= 1e-12


def _chk_expm_inverse():
    rng = np.random.default_rng(SEED + 5)
    a = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    dev = _sup(expm(a) @ expm(-a) - np.eye(5))
    return f"||expm(A)expm(-A)-I|| {dev:.2e}", dev <= 1e-11


def _chk_brackets():
    rng = np.random.default_rng(SEED + 6)
    t = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    s = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    d1 = _sup(anticommutator(t, s) - anticommutator(s, t))
    d2 = _sup(commutator(t, s) + commutator(s, t))
    d3 = _sup(anticommutator(t, s) - (t @ s + s @ t))
    ok = d1 == 0.0 and d2 == 0.0 and d3 == 0.0
    return f"symmetry devs {d1:.1e}/{d2:.1e}/{d3:.1e}", ok


# ----------------------------------------------------------------------
# checks: spectral configuration
# ----------------------------------------------------------------------

def _chk_factorization_residual():
    rng = np.random.default_rng(SEED + 7)
    worst = 0.0
    for name in scenario_io.PRESET_NAMES:
        od = _preset_od(name)
        a = od.A_matrix()
        target = max(_sup(a @ od.B + od.B @ a), 1e-30)
        worst = max(worst, factorization_residual(od) / target)
    for _ in range(10):
        od = build_operator_data(random_scenario(rng))
        a = od.A_matrix()
        target = max(_sup(a @ od.B + od.B @ a), 1e-30)
        worst = max(worst, factorization_residual(od) / target)
    return f"max scaled residual {worst:.2e}", worst <= 1e-12


def _chk_regauge():
    rng = np.random.default_rng(SEED + 8)
    od = _preset_od("fig3")
    t = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    re_fact = regauge_factorization(od.fact, t)
    before = od.fact.c_vectors @ od.fact.d_covectors
    after = re_fact.c_vectors @ re_fact.d_covectors
    dev = _sup(after - before) / max(_sup(before), 1e-30)
    return f"dyad-sum rel change {dev:.2e}", dev <= 1e-10


def _chk_validation_collects():
    bad = Scenario(
        d=0,
        entries=(SolitonEntry(k=-1 + 0j, B=np.zeros((2, 2))),),
        grid=GridSpec(3.0, -3.0, 0, 0.0, 1.0, 2),
    )
    try:
        validate_scenario(bad)
        return "no error raised", False
    except ScenarioValidationError as e:
        codes = {i.code for i in e.issues}
    want = {"bad-dimension", "eigenvalue-halfplane", "weight-shape",
            "bad-grid"}
    ok = want <= codes
    return f"collected codes {sorted(codes)}", ok


def _chk_degenerate_warning():
    s = scenario_io.preset("fig2")
    hit = any("degenerate" in w for w in s.warnings)
    return f"fig2 warnings: {list(s.warnings)}", hit


# ----------------------------------------------------------------------
# checks: evaluation
# ----------------------------------------------------------------------

def _chk_scalar_oracle():
    od = _preset_od("scalar1")
    g = GridSpec(-10.0, 10.0, 101, -5.0, 5.0, 21)
    f = evaluate_grid(od, g)
    xs, ts = g.x_values(), g.t_values()
    theta0 = math.log(2.0)
    ref = 1.0 / np.cosh(xs[None, :] + ts[:, None] - theta0)
    dev = _sup(f.values[:, :, 0, 0] - ref)
    ok = dev <= 1e-10 and f.masked_count == 0
    return f"sup dev vs sech {dev:.2e}, masked {f.masked_count}", ok


def _chk_origin_formula():
    od = _preset_od("scalar1")
    b = 1j  # effective scalar weight under the imaginary convention
    ref = -(1j * b) / (1.0 + (1j * b / 2.0) ** 2)
    v = evaluate_point_det(od, (0.0, 0.0))[0, 0]
    dev = abs(v - ref)
    return f"|V(0,0) - closed form| {dev:.2e}", dev <= 1e-14


def _chk_exponential_action():
    od = _preset_od("scalar2")
    x, t = 0.7, -0.3
    e_mat, _, _ = exponential_action(od, (x, t))
    a = od.A_matrix()
    ref = expm(a * x + a @ a @ a * t)
    dev = _sup(e_mat - ref)
    return f"dev vs generic expm {dev:.2e}", dev <= 1e-12


def _chk_path_agreement():
    rng = np.random.default_rng(SEED + 9)
    worst = 0.0
    sources = [(_preset_od(n), n) for n in scenario_io.PRESET_NAMES]
    for _ in range(10):
        sc = validate_scenario(random_scenario(rng))
        sources.append((build_operator_data(sc), sc.label))
    for od, _name in sources:
        xs = rng.uniform(-8, 8, 40)
        ts = rng.uniform(-2, 2, 40)
        rf = evaluate_points(od, xs, ts, path="fast")
        rd = evaluate_points(od, xs, ts, path="det")
        live = ~(rf.mask | rd.mask)
        if live.any():
            worst = max(worst, _sup(rf.values[live] - rd.values[live]))
    return f"sup fast-det gap {worst:.2e}", worst <= 1e-11


def _chk_fig2_diagonal():
    od = _preset_od("fig2")
    f = evaluate_grid(od, GridSpec(-15.0, 15.0, 301, -6.0, 6.0, 61))
    vals = f.unmasked_values()
    off = vals.copy()
    for i in range(3):
        off[:, i, i] = 0.0
    dev = _sup(off) if len(off) else float("nan")
    return f"off-diagonal sup {dev:.2e}", dev <= 1e-12


def _chk_fig4_activation():
    od = _preset_od("fig4")
    f = evaluate_grid(od, GridSpec(-15.0, 15.0, 301, -6.0, 6.0, 61))
    v13 = np.abs(np.nan_to_num(f.values[:, :, 0, 2])).max()
    lower = max(_sup(np.nan_to_num(f.values[:, :, i, j]))
                for i in range(3) for j in range(3) if i > j)
    ok = v13 > 0.5 and lower <= 1e-12
    return f"max|V13| {v13:.3f}, lower-tri sup {lower:.1e}", ok


def _chk_vanishing_limit():
    worst = 0.0
    for name in scenario_io.PRESET_NAMES:
        od = _preset_od(name)
        worst = max(worst, _sup(evaluate_point_det(od, (-40.0, 0.0))))
    return f"sup ||V(-40,0)|| {worst:.2e}", worst <= 1e-12


def _chk_decay_trend():
    od = _preset_od("scalar1")
    xs = np.linspace(-9.0, -5.0, 17)
    r = evaluate_points(od, xs, np.zeros_like(xs))
    norms = np.sqrt((np.abs(r.values) ** 2).sum(axis=(1, 2)))
    slope = float(np.polyfit(xs, np.log(norms), 1)[0])
    expect = min(k.real for k in od.ks)
    dev = abs(slope - expect) / expect
    return f"tail slope {slope:.4f} vs {expect} (dev {dev:.1%})", dev <= 0.1


def _gauge_sources():
    rng = np.random.default_rng(SEED + 10)
    b1 = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    b2 = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    d2 = validate_scenario(Scenario(
        d=2,
        entries=(SolitonEntry(k=1.0 + 0.2j, B=b1),
                 SolitonEntry(k=1.7 - 0.1j, B=b2)),
        grid=GridSpec(-8.0, 8.0, 101, -2.0, 2.0, 11), label="gauge-d2",
    ))
    return rng, [build_operator_data(d2), _preset_od("fig3"),
                 _preset_od("fig4")]


def _chk_gauge_covariance():
    rng, sources = _gauge_sources()
    worst = 0.0
    for od in sources:
        t = (rng.standard_normal((od.d, od.d))
             + 1j * rng.standard_normal((od.d, od.d)))
        od_g = with_factorization(od, regauge_factorization(od.fact, t))
        done = 0
        while done < 6:
            p = (float(rng.uniform(-6, 0)), float(rng.uniform(-1, 1)))
            if evaluate_points(od, [p[0]], [p[1]]).mask[0]:
                continue
            v = evaluate_point_det(od, p)
            vg = evaluate_point_det(od_g, p)
            ref = lu_det_solve(t, v @ t).solution
            worst = max(worst, _sup(vg - ref))
            done += 1
    return f"sup ||V_T - T^-1 V T|| {worst:.2e}", worst <= 1e-10


def _chk_determinism():
    od = _preset_od("scalar2")
    g = GridSpec(-15.0, 15.0, 201, -3.0, 3.0, 41)
    a = evaluate_grid(od, g).values.tobytes()
    b = evaluate_grid(od, g).values.tobytes()
    c = evaluate_grid(od, g, chunk=517).values.tobytes()
    ok = a == b and a == c
    return f"rerun equal={a == b}, chunk-size equal={a == c}", ok


def _chk_grid_1x1():
    od = _preset_od("fig3")
    g = GridSpec(0.5, 0.5, 1, -0.25, -0.25, 1)
    f = evaluate_grid(od, g)
    dev = _sup(f.values[0, 0] - evaluate_point_fast(od, (0.5, -0.25)))
    return f"grid[0,0] vs point dev {dev:.2e}", dev == 0.0


def singular_prone_scenario() -> Scenario:
    """Real-weight scalar soliton whose det(I+iL) crosses zero on-grid
    (the imaginary-weight convention is deliberately off): with b = 2k
    the determinant is 1 - e^(x + t), exactly zero along x = -t, which
    passes through grid points of this symmetric window."""
    return validate_scenario(Scenario(
        d=1,
        entries=(SolitonEntry(k=1 + 0j, B=np.array([[2.0 + 0j]])),),
        grid=GridSpec(-6.0, 6.0, 201, -1.0, 1.0, 21),
        label="singular-prone",
    ))


def _chk_masked_scenario():
    od = build_operator_data(singular_prone_scenario())
    f = evaluate_grid(od, singular_prone_scenario().grid)
    n = f.masked_count
    nan_ok = bool(np.isnan(f.values[f.mask]).all()) if n else False
    reasons = set(f.reason[f.mask].tolist())
    ok = n > 0 and nan_ok and reasons == {REASON_SINGULAR}
    return f"masked {n}, NaN-filled {nan_ok}, reasons {reasons}", ok


# ----------------------------------------------------------------------
# checks: PDE verification
# ----------------------------------------------------------------------

def _chk_stencil_weights():
    o1, w1 = verify.central_weights(1, 2)
    ref1 = np.array([-0.5, 0.0, 0.5])
    o3, w3 = verify.central_weights(3, 4)
    ref3 = np.array([1, -8, 13, 0, -13, 8, -1]) / 8.0
    dev = max(_sup(w1 - ref1), _sup(w3 - ref3))
    moments_ok = True
    for m, order in ((1, 6), (2, 4), (3, 6)):
        offs, w = verify.central_weights(m, order)
        for q in range(len(offs)):
            want = math.factorial(m) if q == m else 0.0
            if abs(float(w @ offs ** q) - want) > 1e-9:
                moments_ok = False
    ok = dev == 0.0 and moments_ok
    return f"table dev {dev:.1e}, moment conditions {moments_ok}", ok


def _chk_zero_field_residuals():
    def zero(xs, ts):
        return np.zeros((len(xs), 2, 2), dtype=complex)

    s = StencilSpec()
    p = (0.3, -0.2)
    r1 = _sup(verify.mkdv_residual_sampled(zero, p, s))
    r2 = _sup(verify.kdv_residual(zero, p, s))
    r3 = _sup(verify.pkdv_residual(zero, p, s))
    ok = r1 == 0.0 and r2 == 0.0 and r3 == 0.0
    return f"residuals {r1:.1e}/{r2:.1e}/{r3:.1e}", ok


def _chk_peak_vx():
    od = _preset_od("scalar1")
    s = StencilSpec()
    _, vx, _, _, _ = verify.sample_derivatives(od, (math.log(2.0), 0.0), s)
    dev = _sup(vx)
    return f"|V_x| at the peak {dev:.2e}", dev <= 1e-8


def _chk_mkdv_presets():
    rng = np.random.default_rng(SEED + 11)
    s = StencilSpec()
    worst = 0.0
    for name in scenario_io.PRESET_NAMES:
        od = _preset_od(name)
        pts = verify.draw_unmasked_points(od, rng, 4, (-12.0, 6.0),
                                          (-2.0, 2.0), s)
        for p in pts:
            worst = max(worst, _sup(verify.mkdv_residual(od, p, s)))
    return f"sup residual {worst:.2e}", worst <= 1e-5


def _chk_mkdv_halving():
    od = _preset_od("scalar1")
    # points on the soliton core, where truncation dominates roundoff
    pts = [(0.3, 0.2), (-1.0, 0.5), (1.5, -0.5)]
    s1 = StencilSpec(h=1e-2, order=4, richardson=False)
    s2 = s1.with_h(5e-3)
    r1 = max(_sup(verify.mkdv_residual(od, p, s1)) for p in pts)
    r2 = max(_sup(verify.mkdv_residual(od, p, s2)) for p in pts)
    ratio = r1 / r2
    return f"halving ratio {ratio:.2f}", 16 * 0.7 <= ratio <= 16 * 1.3


def _chk_corruption_sensitivity():
    od = _preset_od("scalar1")
    base = verify.field_sampler(od)

    def corrupted(xs, ts):
        return 1.01 * base(xs, ts)

    # flank points: the scaling error cancels where v_x = 0, so probe
    # off-peak on both sides
    r = max(_sup(verify.mkdv_residual_sampled(corrupted, p, StencilSpec()))
            for p in [(1.2, 0.0), (-0.5, 0.0)])
    return f"corrupted-field residual {r:.2e}", r > 1e-3


def _chk_miura_kdv():
    s = StencilSpec()
    od1 = _preset_od("scalar1")
    probe = verify.miura_sign_probe(od1, [(0.4, 0.2), (-1.0, -0.5)], s)
    od2 = _preset_od("scalar2")
    u2 = verify.miura_sampler(od2, s, sign=probe.selected)
    r2 = max(_sup(verify.kdv_residual(u2, p, s))
             for p in [(0.5, 0.1), (-2.0, 0.4)])
    worst = max(probe.residual_plus, probe.residual_minus, r2)
    ok = worst <= 1e-4
    return (f"KdV residual sup {worst:.2e} "
            f"(signs {probe.residual_plus:.1e}/{probe.residual_minus:.1e})",
            ok)


def _chk_diagonal_decoupling():
    s = StencilSpec()
    od_m = _preset_od("fig2")
    od_s = build_operator_data(
        _scalar_two(GridSpec(-15.0, 15.0, 601, -3.0, 3.0, 121)))
    worst = 0.0
    for p in [(0.3, 0.4), (-1.5, -0.8)]:
        rm = verify.mkdv_residual(od_m, p, s)
        rs = verify.mkdv_residual(od_s, p, s)[0, 0]
        worst = max(worst, abs(rm[0, 0] - rs), abs(rm[2, 2] - rs),
                    abs(rm[1, 1]))
    return f"matrix-vs-scalar residual gap {worst:.2e}", worst <= 1e-8


def _chk_potential_wx():
    od = _preset_od("scalar1")
    s = StencilSpec()
    quad = QuadratureSpec()
    x_cut = verify.find_x_cut(od, [0.1], -20.0, s)
    h = 1e-3
    wp = verify.potential_map(od, 0.1, x_cut, 0.8 + h, quad, s)
    wm = verify.potential_map(od, 0.1, x_cut, 0.8 - h, quad, s)
    wx = (wp - wm) / (2 * h)
    u = verify.miura_map(od, (0.8, 0.1), s)
    dev = _sup(wx - u)
    return f"|central-diff W - U| {dev:.2e}", dev <= 1e-6


def _chk_pkdv_residual():
    od = _preset_od("scalar1")
    s = StencilSpec()
    quad = QuadratureSpec()
    x_cut = verify.find_x_cut(od, [-0.2, 0.3], -20.0, s)
    w = verify.potential_sampler(od, x_cut, quad, s)
    u = verify.miura_sampler(od, s)
    worst = max(_sup(verify.pkdv_residual(w, p, s, u_sampler=u))
                for p in [(0.5, 0.3), (-1.2, -0.2)])
    return f"pKdV residual sup {worst:.2e}", worst <= 1e-4


def _chk_pkdv_mass():
    od = _preset_od("scalar1")
    s = StencilSpec()
    quad = QuadratureSpec()
    vals = []
    for t in (0.0, 1.0):
        x_cut = verify.find_x_cut(od, [t], -25.0, s)
        vals.append(verify.potential_map(od, t, x_cut, 25.0, quad,
                                         s)[0, 0])
    drift = abs(vals[0] - vals[1])
    dev2k = abs(vals[0] - 2.0)
    ok = drift <= 1e-6 and dev2k <= 1e-6
    return f"mass drift {drift:.2e}, |mass-2k| {dev2k:.2e}", ok


def _mkdv_op(od):
    def op(p, s):
        return verify.mkdv_residual(od, p, s)

    return op


def _chk_convergence_order4():
    od = _preset_od("scalar1")
    rep = verify.convergence_study(
        _mkdv_op(od), [(0.4, 0.3), (-1.0, 0.2)], [0.2, 0.1, 0.05],
        StencilSpec(order=4, richardson=False), "mkdv")
    sl = rep.order_estimate
    return f"order-4 slope {sl:.2f}", 3.3 <= sl <= 4.7


def _chk_convergence_order2():
    od = _preset_od("scalar1")
    rep = verify.convergence_study(
        _mkdv_op(od), [(0.4, 0.3)], [0.2, 0.1, 0.05],
        StencilSpec(order=2, richardson=False), "mkdv")
    sl = rep.order_estimate
    return f"order-2 slope {sl:.2f}", 1.5 <= sl <= 2.5


def _chk_roundoff_flag():
    od = _preset_od("scalar1")
    rep = verify.convergence_study(
        _mkdv_op(od), [(0.4, 0.3)], [1e-2, 1e-3, 1e-4],
        StencilSpec(order=4, richardson=False), "mkdv")
    return (f"roundoff_limited={rep.roundoff_limited}, "
            f"sups {[f'{v:.1e}' for _, v in rep.sups_by_h]}",
            rep.roundoff_limited)


# ----------------------------------------------------------------------
# checks: diagnostics
# ----------------------------------------------------------------------

def _wide_scalar_field():
    od = _preset_od("scalar1")
    return evaluate_grid(od, GridSpec(-30.0, 30.0, 1201, -5.0, 5.0, 11))


def _chk_scalar_conservation():
    f = _wide_scalar_field()
    s = diag.functional_series(f, "trace_sq")
    dev = float(np.abs(np.asarray(s.values) - 2.0).max()) / 2.0
    ok = dev <= 1e-6 and s.drift <= 1e-6
    return f"max rel |f-2k| {dev:.2e}, drift {s.drift:.2e}", ok


def _chk_trace_pi():
    f = _wide_scalar_field()
    s = diag.functional_series(f, "trace")
    dev = float(np.abs(np.asarray(s.values) - math.pi).max())
    return f"max |trace functional - pi| {dev:.2e}", dev <= 1e-6


def _diag_two_scenario():
    b = np.diag([1.0, 2.0]).astype(complex)
    return validate_scenario(Scenario(
        d=2, entries=(SolitonEntry(k=1 + 0j, B=b),),
        grid=GridSpec(-25.0, 25.0, 1001, -2.0, 2.0, 9),
        label="diag-two", imaginary_weights=True,
    ))


def _chk_partition_identity():
    f = _wide_scalar_field()
    part = diag.energy_partition(f)
    sc = _diag_two_scenario()
    f2 = evaluate_grid(build_operator_data(sc), sc.grid)
    part2 = diag.energy_partition(f2)
    off = max(float(part2.per_entry[:, 0, 1].max()),
              float(part2.per_entry[:, 1, 0].max()))
    worst = max(part.sum_consistency, part2.sum_consistency)
    ok = worst <= 1e-10 and off <= 1e-20
    return f"sum consistency {worst:.2e}, off-diag partition {off:.1e}", ok


def _chk_partition_activation():
    b = (np.eye(3) + np.diag([1.0, 1.0], k=1)).astype(complex)
    sc = validate_scenario(Scenario(
        d=3, entries=(SolitonEntry(k=1 + 0j, B=b),),
        grid=GridSpec(-25.0, 25.0, 801, -1.0, 1.0, 5),
        label="bidiag-one", imaginary_weights=True,
    ))
    f = evaluate_grid(build_operator_data(sc), sc.grid)
    part = diag.energy_partition(f)
    e13 = float(part.per_entry[:, 0, 2].max())
    ok = e13 > 1e-6 and f.masked_count == 0
    return f"max E_13 {e13:.3e} (weights have b13=0)", ok


def _chk_diagonal_diag_concat():
    sc = _diag_two_scenario()
    f2 = evaluate_grid(build_operator_data(sc), sc.grid)
    series2 = diag.functional_series(f2, "trace_sq")
    total = np.zeros(9, dtype=complex)
    for bval in (1.0, 2.0):
        s1 = validate_scenario(Scenario(
            d=1,
            entries=(SolitonEntry(k=1 + 0j,
                                  B=np.array([[bval + 0j]])),),
            grid=sc.grid, label="diag-part", imaginary_weights=True,
        ))
        f1 = evaluate_grid(build_operator_data(s1), sc.grid)
        total += np.asarray(diag.functional_series(f1, "trace_sq").values)
    dev = float(np.abs(np.asarray(series2.values) - total).max())
    return f"matrix vs concatenated scalars dev {dev:.2e}", dev <= 1e-8


def _chk_peaks_single():
    od = _preset_od("scalar1")
    f = evaluate_grid(od, scenario_io.preset("scalar1").grid)
    tr = diag.track_peaks(f, 0.25)
    ok = len(tr.pre_solitons) == 1 and len(tr.post_solitons) == 1
    if ok:
        sp = tr.pre_solitons[0].speed
        hp = tr.pre_solitons[0].height
        ok = abs(sp + 1.0) <= 0.02 and abs(hp - 1.0) <= 0.01
        return f"speed {sp:.4f}, height {hp:.4f}", ok
    return (f"track counts pre={len(tr.pre_solitons)} "
            f"post={len(tr.post_solitons)}", False)


def _chk_peaks_collision():
    od = _preset_od("scalar2")
    f = evaluate_grid(od, scenario_io.preset("scalar2").grid)
    tr = diag.track_peaks(f, 0.25)
    if len(tr.pre_solitons) != 2 or len(tr.post_solitons) != 2:
        return (f"track counts pre={len(tr.pre_solitons)} "
                f"post={len(tr.post_solitons)}", False)
    devs = []
    for fits in (tr.pre_solitons, tr.post_solitons):
        for fit, (speed, height) in zip(fits, ((-4.0, 2.0), (-1.0, 1.0))):
            devs.append(abs(fit.speed - speed) / abs(speed))
            devs.append(abs(fit.height - height) / height)
    height_gap = max(
        abs(a.height - b.height) / b.height
        for a, b in zip(tr.pre_solitons, tr.post_solitons)
    )
    worst = max(devs)
    ok = worst <= 0.02 and height_gap <= 0.01
    return (f"speed/height dev {worst:.2%}, "
            f"pre-post height gap {height_gap:.2%}", ok)


# ----------------------------------------------------------------------
# checks: I/O
# ----------------------------------------------------------------------

def _chk_csv_roundtrip():
    sc = singular_prone_scenario()
    f = evaluate_grid(build_operator_data(sc), sc.grid)
    with tempfile.TemporaryDirectory() as tmp:
        path = f"{tmp}/field.csv"
        export.write_field_csv(f, path)
        back = export.read_field_csv(path)
    same_vals = f.values.tobytes() == back.values.tobytes()
    same_mask = bool((f.mask == back.mask).all())
    same_grid = f.grid == back.grid
    ok = same_vals and same_mask and same_grid
    return (f"values={same_vals} mask={same_mask} grid={same_grid}", ok)


def _chk_ppm_bytes():
    sc = singular_prone_scenario()
    f = evaluate_grid(build_operator_data(sc), sc.grid)
    scale = export.entry_scales(f)[(0, 0)]
    b1 = export.ppm_bytes(f, 0, 0, scale)
    b2 = export.ppm_bytes(f, 0, 0, scale)
    header_ok = b1.startswith(b"P6\n%d %d\n255\n" % (f.grid.nx, f.grid.nt))
    pix = np.frombuffer(b1.split(b"255\n", 1)[1], dtype=np.uint8)
    pix = pix.reshape(f.grid.nt, f.grid.nx, 3)
    red = (pix == np.array(export.MASKED_RGB, dtype=np.uint8)).all(axis=2)
    red_matches = int(red.sum()) == f.masked_count
    ok = b1 == b2 and header_ok and red_matches
    return (f"deterministic={b1 == b2} header={header_ok} "
            f"masked-red={red_matches}", ok)


def _chk_report_agreement():
    rep = {"a": 1.0 / 3.0, "nested": {"b": [2.5e-12, 7], "c": "text"},
           "flag": True}
    txt = report.render_text(rep)
    parsed = json.loads(report.render_json(rep))

    def floats(node):
        if isinstance(node, dict):
            for v in node.values():
                yield from floats(v)
        elif isinstance(node, list):
            for v in node:
                yield from floats(v)
        elif isinstance(node, float):
            yield node

    missing = [v for v in floats(parsed) if repr(v) not in txt]
    return f"floats missing from text: {missing}", not missing


def _chk_parse_layers():
    got = []
    try:
        scenario_io.parse_scenario("{not json")
    except scenario_io.ScenarioSyntaxError as e:
        got.append(f"syntax(line {e.line})")
    try:
        scenario_io.parse_scenario('{"d": 1, "solitons": '
                                   '[{"k": [1, 0], "B": [[1]]}]}')
    except scenario_io.ScenarioSchemaError as e:
        got.append(f"schema({e.path})")
    try:
        scenario_io.parse_scenario(
            '{"d": 1, "solitons": [{"k": [-1, 0], "B": [[1]]}], '
            '"grid": {"x": [-5, 5, 11], "t": [0, 1, 3]}}')
    except ScenarioValidationError:
        got.append("validation")
    ok = got == ["syntax(line 1)", "schema(grid)", "validation"]
    return f"layers {got}", ok


def _chk_preset_documents():
    worst = ""
    for name in scenario_io.PRESET_NAMES:
        s = scenario_io.preset(name)
        back = scenario_io.parse_scenario(
            scenario_io.scenario_to_document(s))
        same = (back.d == s.d and back.grid == s.grid
                and len(back.entries) == len(s.entries)
                and all(complex(a.k) == complex(b.k)
                        and np.array_equal(np.asarray(a.B),
                                           np.asarray(b.B))
                        for a, b in zip(back.entries, s.entries)))
        if not same:
            worst = name
    return (f"round-trip mismatch: {worst or 'none'}", not worst)


CHECKS: List[Tuple[str, Callable[[], Tuple[str, bool]]]] = [
    ("linalg.mat-mul-oracle", _chk_mat_mul),
    ("linalg.det-multiplicative", _chk_det_multiplicative),
    ("linalg.det-cofactor", _chk_det_cofactor),
    ("linalg.solve-residual", _chk_solve_residual),
    ("linalg.singular-detection", _chk_singular_detection),
    ("linalg.expm-basic", _chk_expm_basic),
    ("linalg.expm-taylor", _chk_expm_taylor),
    ("linalg.expm-inverse", _chk_expm_inverse),
    ("linalg.brackets", _chk_brackets),
    ("spectral.factorization-residual", _chk_factorization_residual),
    ("spectral.regauge-invariance", _chk_regauge),
    ("spectral.validation-collects-all", _chk_validation_collects),
    ("spectral.degenerate-warning", _chk_degenerate_warning),
    ("evaluate.scalar-sech-oracle", _chk_scalar_oracle),
    ("evaluate.origin-closed-form", _chk_origin_formula),
    ("evaluate.exponential-action", _chk_exponential_action),
    ("evaluate.path-agreement", _chk_path_agreement),
    ("evaluate.fig2-diagonality", _chk_fig2_diagonal),
    ("evaluate.fig4-activation", _chk_fig4_activation),
    ("evaluate.vanishing-limit", _chk_vanishing_limit),
    ("evaluate.decay-trend", _chk_decay_trend),
    ("evaluate.gauge-covariance", _chk_gauge_covariance),
    ("evaluate.determinism", _chk_determinism),
    ("evaluate.grid-1x1", _chk_grid_1x1),
    ("evaluate.masked-scenario", _chk_masked_scenario),
    ("verify.stencil-weights", _chk_stencil_weights),
    ("verify.zero-field-residuals", _chk_zero_field_residuals),
    ("verify.peak-vx", _chk_peak_vx),
    ("verify.mkdv-presets", _chk_mkdv_presets),
    ("verify.mkdv-halving", _chk_mkdv_halving),
    ("verify.corruption-sensitivity", _chk_corruption_sensitivity),
    ("verify.miura-kdv", _chk_miura_kdv),
    ("verify.diagonal-decoupling", _chk_diagonal_decoupling),
    ("verify.potential-wx", _chk_potential_wx),
    ("verify.pkdv-residual", _chk_pkdv_residual),
    ("verify.pkdv-mass", _chk_pkdv_mass),
    ("verify.convergence-order4", _chk_convergence_order4),
    ("verify.convergence-order2", _chk_convergence_order2),
    ("verify.roundoff-flag", _chk_roundoff_flag),
    ("diagnostics.scalar-conservation", _chk_scalar_conservation),
    ("diagnostics.trace-pi", _chk_trace_pi),
    ("diagnostics.partition-identity", _chk_partition_identity),
    ("diagnostics.partition-activation", _chk_partition_activation),
    ("diagnostics.diagonal-concatenation", _chk_diagonal_diag_concat),
    ("diagnostics.peaks-single", _chk_peaks_single),
    ("diagnostics.peaks-collision", _chk_peaks_collision),
    ("io.csv-roundtrip", _chk_csv_roundtrip),
    ("io.ppm-bytes", _chk_ppm_bytes),
    ("io.report-agreement", _chk_report_agreement),
    ("io.parse-layers", _chk_parse_layers),
    ("io.preset-documents", _chk_preset_documents),
]


def run_selftest(
    emit: Optional[Callable[[str], None]] = print,
) -> List[CheckResult]:
    """Run the battery; returns all results (callers inspect .ok)."""
    results = []
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            measured, ok = fn()
        except Exception as e:
            measured, ok = f"raised {type(e).__name__}: {e}", False
        dt = time.perf_counter() - t0
        results.append(CheckResult(name=name, ok=bool(ok),
                                   measured=str(measured), seconds=dt))
        if emit is not None:
            emit(f"[{'PASS' if ok else 'FAIL'}] {name}: "
                 f"{measured} ({dt:.2f}s)")
    fails = sum(1 for r in results if not r.ok)
    if emit is not None:
        emit(f"selftest: {len(results) - fails}/{len(results)} checks "
             f"passed")
    return results
