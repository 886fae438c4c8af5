import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tomochm import (AcquisitionGeometry, ImageRecord, SLCStack,
                     HeightRaster, kz_from_geometry, rayleigh_resolution,
                     synthetic_geometry, validate_stack)


def test_kz_zero_baseline():
    assert kz_from_geometry(0.69, math.radians(45), 5000.0, 0.0) == 0.0


def test_kz_hand_value():
    # 4*pi*10 / (0.69 * 5000 * sin 45deg), evaluated independently
    expected = 4.0 * math.pi * 10.0 / (0.69 * 5000.0 * math.sin(math.pi / 4))
    got = kz_from_geometry(0.69, math.radians(45), 5000.0, 10.0)
    assert got == pytest.approx(expected, rel=1e-12)
    assert got == pytest.approx(0.05151, abs=5e-6)


@given(st.floats(-500, 500, allow_nan=False))
def test_kz_linear_and_antisymmetric(b):
    kz = kz_from_geometry(0.69, math.radians(40), 4000.0, b)
    kz2 = kz_from_geometry(0.69, math.radians(40), 4000.0, 2 * b)
    kzn = kz_from_geometry(0.69, math.radians(40), 4000.0, -b)
    assert kz2 == pytest.approx(2 * kz, rel=1e-12, abs=1e-15)
    assert kzn == pytest.approx(-kz, rel=1e-12, abs=1e-15)


def test_kz_rejects_degenerate_incidence():
    with pytest.raises(ValueError):
        kz_from_geometry(0.69, 0.0, 5000.0, 10.0)


def test_geometry_requires_master_first_with_zero_kz():
    good = AcquisitionGeometry(0.69, (ImageRecord(0, 0.0, 0.0),
                                      ImageRecord(1, 10.0, 0.05)),
                               5000.0, math.radians(45))
    assert good.n_images == 2
    with pytest.raises(ValueError):
        AcquisitionGeometry(0.69, (ImageRecord(1, 10.0, 0.05),
                                   ImageRecord(0, 0.0, 0.0)),
                            5000.0, math.radians(45))
    with pytest.raises(ValueError):
        AcquisitionGeometry(0.69, (ImageRecord(0, 0.0, 0.01),),
                            5000.0, math.radians(45))
    with pytest.raises(ValueError):
        # distinct baselines, identical kz
        AcquisitionGeometry(0.69, (ImageRecord(0, 0.0, 0.0),
                                   ImageRecord(1, 5.0, 0.05),
                                   ImageRecord(2, 9.0, 0.05)),
                            5000.0, math.radians(45))


def test_geometry_roundtrip_and_subset():
    g = synthetic_geometry(7, 3.0)
    g2 = AcquisitionGeometry.from_dict(g.to_dict())
    assert np.allclose(g.kz, g2.kz)
    sub = g.subset([0, 2, 5])
    assert sub.n_images == 3
    assert np.allclose(sub.kz, g.kz[[0, 2, 5]])
    with pytest.raises(ValueError):
        g.subset([1, 2])


def test_synthetic_geometry_resolution_exact():
    for n in (2, 3, 7, 12, 28):
        g = synthetic_geometry(n, 3.0)
        assert rayleigh_resolution(g) == pytest.approx(3.0, rel=1e-9)
    g = synthetic_geometry(7, 1.0)
    assert rayleigh_resolution(g) == pytest.approx(1.0, rel=1e-9)


def test_rayleigh_reciprocal_law():
    g1 = synthetic_geometry(7, 3.0)
    g2 = synthetic_geometry(7, 1.5)
    assert rayleigh_resolution(g1) == pytest.approx(
        2 * rayleigh_resolution(g2), rel=1e-12)
    span1 = g1.kz.max() - g1.kz.min()
    assert 2 * math.pi / span1 == pytest.approx(3.0, rel=1e-12)


def test_rayleigh_undefined_below_two_images():
    g = synthetic_geometry(1, 3.0)
    with pytest.raises(ValueError):
        rayleigh_resolution(g)


def test_geometry_baselines_consistent_with_kz():
    g = synthetic_geometry(7, 3.0)
    for im in g.images:
        assert kz_from_geometry(g.wavelength_m, g.incidence_rad,
                                g.reference_range_m,
                                im.perpendicular_baseline_m) == pytest.approx(
            im.kz_rad_per_m, abs=1e-12)


def _stack(layers, n_geo=None):
    n = n_geo if n_geo is not None else len(layers)
    g = synthetic_geometry(n, 3.0)
    return SLCStack(g, tuple(layers))


def test_validate_stack_clean():
    layers = [np.ones((4, 5), dtype=complex) for _ in range(7)]
    assert validate_stack(_stack(layers)) == []


def test_validate_stack_shape_mismatch():
    layers = [np.ones((4, 5), dtype=complex) for _ in range(7)]
    layers[3] = np.ones((4, 4), dtype=complex)
    problems = validate_stack(_stack(layers))
    assert any("layer 3" in p and "shape" in p for p in problems)


def test_validate_stack_nonfinite():
    layers = [np.ones((4, 5), dtype=complex) for _ in range(3)]
    bad = layers[0].copy()
    bad[1, 1] = np.nan + 0j
    layers[0] = bad
    problems = validate_stack(_stack(layers))
    assert any("layer 0" in p and "non-finite" in p for p in problems)


def test_validate_stack_count_mismatch():
    layers = [np.ones((4, 5), dtype=complex) for _ in range(3)]
    problems = validate_stack(_stack(layers, n_geo=7))
    assert any("count" in p for p in problems)


def test_height_raster_chm_nonnegative():
    HeightRaster(np.array([[0.0, np.nan], [5.0, 2.0]]), kind="CHM")
    with pytest.raises(ValueError):
        HeightRaster(np.array([[-1.0, 0.0]]), kind="CHM")
    # DTM may be negative
    HeightRaster(np.array([[-10.0, 0.0]]), kind="DTM")


def test_types_immutable():
    layers = [np.ones((3, 3), dtype=complex) for _ in range(2)]
    stack = _stack(layers)
    with pytest.raises(ValueError):
        stack.layers[0][0, 0] = 5
    raster = HeightRaster(np.zeros((3, 3)), kind="DTM")
    with pytest.raises(ValueError):
        raster.values[0, 0] = 1.0
