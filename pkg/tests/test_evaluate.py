"""Field evaluation: closed-form scalar oracle, dual-route agreement,
structural matrix properties, masking, and bitwise determinism.
"""

import numpy as np
import pytest

from matsol.evaluate import (
    REASON_NAMES,
    REASON_SINGULAR,
    SingularPointError,
    evaluate_grid,
    evaluate_point_det,
    evaluate_point_fast,
    evaluate_points,
    exponential_action,
)
from matsol.linalg import expm
from matsol.scenario_io import preset
from matsol.selftest import singular_prone_scenario
from matsol.spectral import (
    GridSpec,
    build_operator_data,
    random_scenario,
    regauge_factorization,
    validate_scenario,
    with_factorization,
)

from conftest import sup


def _sech_reference(k, beta, xs, ts):
    theta0 = np.log(2.0 * k / beta)
    th = k * xs[None, :] + k**3 * ts[:, None] - theta0
    return k / np.cosh(th)


def test_scalar_single_soliton_matches_sech(preset_od):
    g = GridSpec(-10.0, 10.0, 101, -5.0, 5.0, 21)
    f = evaluate_grid(preset_od("scalar1"), g)
    ref = _sech_reference(1.0, 1.0, g.x_values(), g.t_values())
    assert f.masked_count == 0
    assert sup(f.values[:, :, 0, 0] - ref) <= 1e-10


def test_origin_value_closed_form(preset_od):
    # k = 1, beta = 1: theta_0 = ln 2, and sech(-ln 2) = 4/5
    v = evaluate_point_det(preset_od("scalar1"), (0.0, 0.0))
    assert abs(v[0, 0] - 0.8) <= 1e-14


def test_paths_agree_on_presets_and_random(preset_od):
    rng = np.random.default_rng(301)
    ods = [preset_od(n) for n in ("fig2", "fig3", "fig4", "scalar1",
                                  "scalar2")]
    ods += [build_operator_data(validate_scenario(random_scenario(rng)))
            for _ in range(10)]
    worst = 0.0
    for od in ods:
        xs = rng.uniform(-8, 8, 30)
        ts = rng.uniform(-2, 2, 30)
        rf = evaluate_points(od, xs, ts, path="fast")
        rd = evaluate_points(od, xs, ts, path="det")
        assert np.array_equal(rf.mask, rd.mask)
        live = ~rf.mask
        if live.any():
            worst = max(worst, sup(rf.values[live] - rd.values[live]))
    assert worst <= 1e-11


def test_exponential_action_matches_generic_expm(preset_od):
    od = preset_od("scalar2")
    x, t = 0.7, -0.3
    e_mat, L, phi = exponential_action(od, (x, t))
    a = od.A_matrix()
    assert sup(e_mat - expm(a * x + a @ a @ a * t)) <= 1e-12
    assert sup(L - e_mat @ od.B) <= 1e-15
    assert sup(phi - e_mat @ od.fact.c_vectors) <= 1e-15


def test_exponential_action_overflow(preset_od):
    with pytest.raises(SingularPointError) as err:
        exponential_action(preset_od("scalar1"), (400.0, 0.0))
    assert err.value.reason == "overflow"


def test_diagonal_weights_give_diagonal_field(preset_od):
    g = GridSpec(-12.0, 12.0, 121, -4.0, 4.0, 17)
    f = evaluate_grid(preset_od("fig2"), g)
    off = f.unmasked_values().copy()
    for i in range(3):
        off[:, i, i] = 0.0
    assert sup(off) == 0.0


def test_triangular_weights_activate_corner_entry(preset_od):
    # fig4 weights have b_13 = 0 yet the (1,3) field entry switches on
    g = GridSpec(-12.0, 12.0, 121, -4.0, 4.0, 17)
    f = evaluate_grid(preset_od("fig4"), g)
    v13 = np.abs(np.nan_to_num(f.values[:, :, 0, 2])).max()
    assert v13 > 0.5
    lower = max(sup(np.nan_to_num(f.values[:, :, i, j]))
                for i in range(3) for j in range(3) if i > j)
    assert lower <= 1e-12


def test_gauge_conjugation(preset_od):
    rng = np.random.default_rng(302)
    od = preset_od("fig4")
    t = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    od_g = with_factorization(od, regauge_factorization(od.fact, t))
    tinv = np.linalg.inv(t)
    for _ in range(5):
        p = (float(rng.uniform(-5, 0)), float(rng.uniform(-1, 1)))
        v = evaluate_point_det(od, p)
        vg = evaluate_point_det(od_g, p)
        assert sup(vg - tinv @ v @ t) <= 1e-10


def test_far_field_vanishes(preset_od):
    for name in ("fig2", "fig3", "fig4", "scalar1", "scalar2"):
        v = evaluate_point_det(preset_od(name), (-40.0, 0.0))
        assert sup(v) <= 1e-12


def test_grid_is_deterministic_and_chunk_invariant(preset_od):
    od = preset_od("scalar2")
    g = GridSpec(-12.0, 12.0, 161, -3.0, 3.0, 21)
    a = evaluate_grid(od, g)
    b = evaluate_grid(od, g)
    c = evaluate_grid(od, g, chunk=173)
    assert a.values.tobytes() == b.values.tobytes() == c.values.tobytes()
    assert a.mask.tobytes() == c.mask.tobytes()
    assert a.det_min.tobytes() == c.det_min.tobytes()


def test_masked_points_are_nan_and_reported():
    sc = singular_prone_scenario()
    f = evaluate_grid(build_operator_data(sc), sc.grid)
    assert f.masked_count > 0
    assert np.isnan(f.values[f.mask]).all()
    assert set(np.unique(f.reason[f.mask])) == {REASON_SINGULAR}
    assert np.isfinite(f.values[~f.mask]).all()
    # the determinant vanishes identically on x = -t, which passes
    # through the origin grid point
    it = sc.grid.nt // 2
    ix = sc.grid.nx // 2
    assert f.mask[it, ix]


def test_point_evaluation_raises_at_singular_point():
    od = build_operator_data(singular_prone_scenario())
    for fn in (evaluate_point_det, evaluate_point_fast):
        with pytest.raises(SingularPointError) as err:
            fn(od, (0.0, 0.0))
        assert err.value.reason == REASON_NAMES[REASON_SINGULAR]
        assert err.value.det_plus is not None


def test_single_cell_grid_matches_point(preset_od):
    od = preset_od("fig3")
    f = evaluate_grid(od, GridSpec(0.5, 0.5, 1, -0.25, -0.25, 1))
    assert f.values.shape == (1, 1, 3, 3)
    assert sup(f.values[0, 0] - evaluate_point_fast(od, (0.5, -0.25))) == 0.0


def test_degenerate_grid_and_nonfinite_point_rejected(preset_od):
    od = preset_od("scalar1")
    with pytest.raises(ValueError):
        evaluate_grid(od, GridSpec(0.0, 1.0, 0, 0.0, 1.0, 5))
    with pytest.raises(ValueError):
        evaluate_point_fast(od, (np.nan, 0.0))
    with pytest.raises(ValueError):
        evaluate_points(od, [0.0, 1.0], [0.0])
