"""Shared fixtures: cached preset operator data and evaluated fields.

Presets are immutable, so building each once per session keeps the suite
fast without risking cross-test contamination.
"""

import numpy as np
import pytest

from matsol.evaluate import evaluate_grid
from matsol.scenario_io import preset
from matsol.spectral import build_operator_data


@pytest.fixture(scope="session")
def preset_od():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = build_operator_data(preset(name))
        return cache[name]

    return get


@pytest.fixture(scope="session")
def preset_field(preset_od):
    """Field evaluated on the preset's own grid, cached per preset."""
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = evaluate_grid(preset_od(name), preset(name).grid)
        return cache[name]

    return get


def sup(a) -> float:
    return float(np.abs(np.asarray(a)).max())
