"""Grid diagnostics: quadrature-based conserved functionals, the energy
partition identity, and peak tracking through a two-soliton collision.
"""

import math

import numpy as np
import pytest

from matsol import diagnostics as diag
from matsol.diagnostics import (
    ConservedSeries,
    MaskedLineError,
    WindowTooSmallError,
    energy_partition,
    functional_series,
    track_peaks,
)
from matsol.evaluate import evaluate_grid
from matsol.scenario_io import preset
from matsol.selftest import singular_prone_scenario
from matsol.spectral import (
    GridSpec,
    Scenario,
    SolitonEntry,
    build_operator_data,
    validate_scenario,
)


@pytest.fixture(scope="module")
def wide_scalar_field(preset_od):
    # boundary decay needs a window much wider than the preset grid
    return evaluate_grid(preset_od("scalar1"),
                         GridSpec(-30.0, 30.0, 1201, -5.0, 5.0, 11))


def test_simpson_weights_tables():
    w = diag._simpson_weights(5)
    assert np.array_equal(w, [1.0, 4.0, 2.0, 4.0, 1.0])
    # odd interval count: Simpson body plus trapezoid tail
    w = diag._simpson_weights(4)
    assert np.array_equal(w, [1.0, 4.0, 2.5, 1.5])
    w = diag._simpson_weights(3)
    assert np.array_equal(w, [1.0, 4.0, 1.0])
    with pytest.raises(ValueError):
        diag._simpson_weights(2)


def test_scalar_mass_and_energy_functionals(wide_scalar_field):
    # one-soliton closed forms: integral of v^2 is 2k, of v is pi
    s2 = functional_series(wide_scalar_field, "trace_sq")
    vals = np.asarray(s2.values)
    assert float(np.abs(vals - 2.0).max()) / 2.0 <= 1e-6
    assert s2.drift <= 1e-6
    s1 = functional_series(wide_scalar_field, "trace")
    assert float(np.abs(np.asarray(s1.values) - math.pi).max()) <= 1e-6
    # real scalar field: Frobenius density coincides with trace-square
    sf = functional_series(wide_scalar_field, "frobenius")
    assert np.abs(np.asarray(sf.values)
                  - vals.real).max() <= 1e-12


def test_unknown_tag_rejected(wide_scalar_field):
    with pytest.raises(ValueError):
        functional_series(wide_scalar_field, "entropy")


def test_narrow_window_rejected(preset_field):
    # the scalar1 preset window ends where the field is still ~1e-2
    with pytest.raises(WindowTooSmallError) as err:
        functional_series(preset_field("scalar1"), "trace_sq")
    assert "window too small" in str(err.value)


def test_masked_line_rejected():
    sc = singular_prone_scenario()
    f = evaluate_grid(build_operator_data(sc), sc.grid)
    with pytest.raises(MaskedLineError) as err:
        functional_series(f, "trace_sq")
    assert err.value.count >= 1


def test_conserved_series_drift_and_dict():
    s = ConservedSeries(tag="toy", t_values=np.array([0.0, 1.0, 2.0]),
                        values=np.array([3.0, 3.0, 3.0]))
    assert s.drift == 0.0
    d = s.to_dict()
    assert d["tag"] == "toy" and d["drift"] == 0.0
    s2 = ConservedSeries(tag="toy", t_values=np.array([0.0, 1.0]),
                         values=np.array([2.0, 2.5]))
    assert abs(s2.drift - 0.25) <= 1e-15


def test_energy_partition_identity(wide_scalar_field):
    part = energy_partition(wide_scalar_field)
    assert part.sum_consistency <= 1e-10
    assert part.per_entry.shape[1:] == (1, 1)
    shares = part.shares()
    assert np.abs(shares - 1.0).max() <= 1e-12


def test_energy_partition_diagonal_scenario():
    b = np.diag([1.0, 2.0]).astype(complex)
    sc = validate_scenario(Scenario(
        d=2, entries=(SolitonEntry(k=1 + 0j, B=b),),
        grid=GridSpec(-25.0, 25.0, 1001, -2.0, 2.0, 9),
        label="diag-two", imaginary_weights=True,
    ))
    f = evaluate_grid(build_operator_data(sc), sc.grid)
    part = energy_partition(f)
    assert part.sum_consistency <= 1e-10
    # diagonal weights never populate off-diagonal channels
    assert float(part.per_entry[:, 0, 1].max()) == 0.0
    assert float(part.per_entry[:, 1, 0].max()) == 0.0


def test_energy_partition_activates_zero_weight_channel():
    # upper-bidiagonal weights: b_13 = 0, yet channel (1,3) carries energy
    b = (np.eye(3) + np.diag([1.0, 1.0], k=1)).astype(complex)
    sc = validate_scenario(Scenario(
        d=3, entries=(SolitonEntry(k=1 + 0j, B=b),),
        grid=GridSpec(-25.0, 25.0, 801, -1.0, 1.0, 5),
        label="bidiag-one", imaginary_weights=True,
    ))
    f = evaluate_grid(build_operator_data(sc), sc.grid)
    assert f.masked_count == 0
    part = energy_partition(f)
    assert float(part.per_entry[:, 0, 2].max()) > 1e-6


def test_matrix_functional_drift_is_reported_not_gated():
    # matrix-case drifts are surfaced as numbers; no bound is asserted
    b = np.diag([1.0, 2.0]).astype(complex)
    sc = validate_scenario(Scenario(
        d=2, entries=(SolitonEntry(k=1 + 0j, B=b),),
        grid=GridSpec(-25.0, 25.0, 1001, -2.0, 2.0, 9),
        imaginary_weights=True,
    ))
    f = evaluate_grid(build_operator_data(sc), sc.grid)
    s = functional_series(f, "frobenius")
    assert np.isfinite(s.drift)
    assert "drift" in s.to_dict()


def test_track_single_soliton(preset_field):
    tr = track_peaks(preset_field("scalar1"), 0.25)
    assert len(tr.pre_solitons) == 1 and len(tr.post_solitons) == 1
    fit = tr.pre_solitons[0]
    assert abs(fit.speed + 1.0) <= 0.02
    assert abs(fit.height - 1.0) <= 0.01


def test_collision_preserves_speeds_and_heights(preset_field):
    tr = track_peaks(preset_field("scalar2"), 0.25)
    assert len(tr.pre_solitons) == 2 and len(tr.post_solitons) == 2
    for fits in (tr.pre_solitons, tr.post_solitons):
        # fits arrive sorted by speed: the k=2 soliton travels at -4
        assert abs(fits[0].speed + 4.0) <= 0.08
        assert abs(fits[1].speed + 1.0) <= 0.02
        assert abs(fits[0].height - 2.0) / 2.0 <= 0.01
        assert abs(fits[1].height - 1.0) <= 0.01
    for pre, post in zip(tr.pre_solitons, tr.post_solitons):
        assert abs(pre.height - post.height) / pre.height <= 0.01


def test_track_peaks_validation(preset_field):
    f = preset_field("scalar1")
    with pytest.raises(ValueError):
        track_peaks(f, 0.0)
    tall = track_peaks(f, 5.0)  # min height above every sample
    assert not tall.pre_solitons and not tall.post_solitons
