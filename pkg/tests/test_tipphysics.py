import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stmforge.tipphysics import (
    PhysicalTipParams,
    double_tip_height,
    equivalence_sweep,
    map_physical_to_eq1,
    resolve_offset,
)


def scalar_height(b, i, p, dx):
    src = b[min(max(i - dx, 0), len(b) - 1)]
    return p.I_T * math.exp(p.gamma) / (1 + math.exp(-2 * p.kappa * (src - p.gamma / (2 * p.kappa) - p.a))) + b[i]


def test_flat_surface_half_current():
    p = PhysicalTipParams(I_T=1.0, gamma=0.0, kappa=1.0, a=0.0, s=0.0)
    np.testing.assert_allclose(double_tip_height(np.zeros(10), p), 0.5, rtol=1e-15)


def test_vanishing_current():
    b = np.random.default_rng(0).random(20)
    p = PhysicalTipParams(I_T=1e-300, gamma=0.3, kappa=2.0, a=0.1, s=3.0)
    np.testing.assert_allclose(double_tip_height(b, p), b, atol=1e-290)


def test_matches_scalar_transcription():
    rng = np.random.default_rng(1)
    for _ in range(20):
        b = rng.normal(size=30)
        p = PhysicalTipParams(float(rng.uniform(0.1, 3)), float(rng.uniform(-1, 1)), float(rng.uniform(0.5, 5)),
                              float(rng.uniform(-0.5, 0.5)), float(rng.integers(0, 6)))
        out = double_tip_height(b, p)
        oracle = [scalar_height(b, i, p, int(p.s)) for i in range(30)]
        np.testing.assert_allclose(out, oracle, atol=1e-12)


def test_mapping_examples():
    m = map_physical_to_eq1(PhysicalTipParams(2.5, 0.0, 3.0, 0.0, 0.0))
    assert m.c == 0 and m.amplitude == 2.5
    m = map_physical_to_eq1(PhysicalTipParams(1.0, 1.0, 4.0, 0.5, 5.0), offset=(3, 4))
    assert m.c == 5 and m.d == 8 and (m.dx, m.dy) == (3, 4)
    assert abs(m.amplitude - math.e) < 1e-15


def test_offset_decomposition_errors():
    assert resolve_offset(4.0) == (4, 0)
    assert resolve_offset(2.0, pixel_size=0.5) == (4, 0)
    with pytest.raises(ValueError):
        resolve_offset(2.5)
    with pytest.raises(ValueError):
        resolve_offset(5.0, offset=(3, 3))


def test_equivalence_sweep():
    assert equivalence_sweep(draws=1000, size=16) < 1e-9


def test_parameter_validation():
    with pytest.raises(ValueError):
        PhysicalTipParams(1.0, 0.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        PhysicalTipParams(-1.0, 0.0, 1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        PhysicalTipParams(1.0, 0.0, 1.0, 0.0, -1.0)


@given(
    st.floats(0.1, 5), st.floats(-2, 2), st.floats(0.1, 5), st.floats(-1, 1),
    st.lists(st.floats(-1, 1), min_size=2, max_size=12),
)
@settings(max_examples=60, deadline=None)
def test_monotone_and_bounded(i_t, gamma, kappa, a, values):
    p = PhysicalTipParams(i_t, gamma, kappa, a, 0.0)
    b = np.array(values)
    ghost = double_tip_height(b, p) - b
    assert np.all(ghost >= 0) and np.all(ghost <= i_t * math.exp(gamma) * (1 + 1e-12))
    order = np.argsort(b, kind="stable")
    assert np.all(np.diff(ghost[order]) >= -1e-12)
