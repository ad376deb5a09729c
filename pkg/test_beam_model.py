#!/usr/bin/env python3
"""
Test Hermite-Gauss modes, sampled fields, Fourier transforms, free-space
propagation and the field file format
"""

import sys
import os
import math

import numpy as np
import pytest

# Add the project root to Python path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from services.beam_model import (
    Grid, HGModeSpec, SampledField, format_field, fourier_transform, free_space_propagate,
    axis_support, hermite_function_1d, hg_amplitude, hg_intensity_at_distance, overlap, parse_field, refine_axis,
    read_field, rms_width, sample, tail_grid,
)
from services.errors import AliasingError, GridTooSmallError, ValidationError

SQRT2 = math.sqrt(2.0)


def test_hg_amplitude_reference_values():
    assert hg_amplitude(HGModeSpec(0, 0, SQRT2), 0.0, 0.0) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-14)
    assert hg_amplitude(HGModeSpec(1, 0, 2.5), 0.0, 0.7) == 0.0
    spec = HGModeSpec(0, 0, 1.7)
    assert hg_amplitude(spec, 1.7, 0.0) == pytest.approx(spec.norm * math.exp(-1.0), rel=1e-14)


def test_hg_amplitude_is_real():
    values = hg_amplitude(HGModeSpec(2, 3, 1.2), np.linspace(-3, 3, 7), 0.4)
    assert np.all(values.imag == 0.0)


def test_mode_spec_validation():
    for bad in [dict(n=-1, m=0, sigma0=1.0), dict(n=0, m=0, sigma0=0.0), dict(n=0, m=0, sigma0=1.0, wavelength=-1.0)]:
        with pytest.raises(ValidationError):
            HGModeSpec(**bad)


def test_mode_geometry():
    spec = HGModeSpec(3, 1, 2.0)
    assert spec.lambda_bar == pytest.approx(1.0)
    assert spec.rayleigh_range == pytest.approx(math.pi * 4.0 / (2 * math.pi))
    assert spec.tail_bound() == pytest.approx(2.0 * (math.sqrt(7) + 4))
    assert spec.extent() == pytest.approx(2.0 * (math.sqrt(7) + 8))
    assert spec.order(1) == 3 and spec.order(2) == 1
    with pytest.raises(ValidationError):
        spec.order(3)


@pytest.mark.parametrize("n, m", [(0, 0), (3, 3)])
def test_sample_is_normalized_on_reference_grid(n, m):
    field = sample(HGModeSpec(n, m, 1.0), Grid.symmetric(8.0, 256))
    assert abs(field.norm_tag - 1.0) < 1e-6


def test_sample_rejects_small_grid():
    with pytest.raises(GridTooSmallError):
        sample(HGModeSpec(0, 0, 4.0), Grid.symmetric(1.0, 256))


def test_default_grid_spans_extent():
    spec = HGModeSpec(2, 0, 1.5)
    grid = tail_grid(spec)
    assert grid.count == 512
    assert grid.upper == pytest.approx(spec.extent())
    assert grid.lower == pytest.approx(-spec.extent())


def test_grid_helpers():
    grid = Grid.symmetric(4.0, 9)
    np.testing.assert_allclose(grid.points, np.linspace(-4, 4, 9))
    coarse = grid.every_other()
    np.testing.assert_allclose(coarse.points, grid.points[::2])
    conj = grid.conjugate()
    assert conj.step * grid.step * grid.count == pytest.approx(2 * math.pi)
    # odd counts give a momentum grid centred on zero
    assert conj.points[grid.count // 2] == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValidationError):
        Grid(0.0, 0.1, 1)
    with pytest.raises(ValidationError):
        Grid(0.0, 0.0, 5)


def test_orthonormality():
    grid = Grid.symmetric(12.0, 256)
    fields = {(n, m): sample(HGModeSpec(n, m, 1.0), grid) for n in range(5) for m in range(5)}
    for a, fa in fields.items():
        for b, fb in fields.items():
            expected = 1.0 if a == b else 0.0
            assert abs(overlap(fa, fb) - expected) < 1e-6


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_parity_is_exact_on_symmetric_grid(n):
    field = sample(HGModeSpec(n, 2, 1.0), Grid.symmetric(8.0, 128))
    np.testing.assert_array_equal(field.amplitudes[::-1, :], (-1) ** n * field.amplitudes)


def test_sampled_field_is_immutable_and_validated():
    grid = Grid.symmetric(1.0, 4)
    field = SampledField(grid, grid, np.ones((4, 4)))
    with pytest.raises(ValueError):
        field.amplitudes[0, 0] = 2.0
    with pytest.raises(ValidationError):
        SampledField(grid, grid, np.ones((3, 4)))
    with pytest.raises(ValidationError):
        SampledField(grid, grid, np.zeros((4, 4))).normalize()


def test_normalize():
    grid = Grid.symmetric(1.0, 5)
    field = SampledField(grid, grid, 3.0 * np.ones((5, 5)))
    assert not field.is_normalized()
    normalized = field.normalize()
    assert abs(normalized.norm_tag - 1.0) < 1e-9
    with pytest.raises(ValidationError):
        fourier_transform(field)


@pytest.mark.parametrize("count", [64, 65])
def test_padding_keeps_samples_and_norm(count):
    field = sample(HGModeSpec(1, 0, 1.0), Grid.symmetric(8.0, count))
    padded = field.padded(4)
    assert padded.norm_tag == pytest.approx(field.norm_tag, rel=1e-14)
    assert padded.x1_grid.step == field.x1_grid.step
    offset = (padded.x1_grid.count - count) // 2
    np.testing.assert_allclose(padded.x1_grid.points[offset:offset + count], field.x1_grid.points, atol=1e-12)
    np.testing.assert_array_equal(padded.amplitudes[offset:offset + count, offset:offset + count], field.amplitudes)


def test_fourier_transform_of_ground_mode_is_gaussian():
    sigma0 = 1.0
    field = sample(HGModeSpec(0, 0, sigma0), Grid.symmetric(9.0, 257))
    spectral = fourier_transform(field)
    p1 = spectral.p1_grid.points[:, np.newaxis]
    p2 = spectral.p2_grid.points[np.newaxis, :]
    # amplitude width 2/sigma0 in each momentum axis
    expected = hermite_function_1d(0, 2.0 / sigma0, p1) * hermite_function_1d(0, 2.0 / sigma0, p2)
    np.testing.assert_allclose(spectral.amplitudes, expected, atol=1e-10)
    peak = np.unravel_index(np.argmax(spectral.intensity()), spectral.amplitudes.shape)
    assert spectral.p1_grid.points[peak[0]] == pytest.approx(0.0, abs=1e-12)


def test_parseval():
    field = sample(HGModeSpec(2, 1, 1.3))
    spectral = fourier_transform(field)
    assert spectral.norm() == pytest.approx(field.norm_tag, abs=1e-6)


def test_odd_mode_spectrum_vanishes_on_axis():
    spectral = fourier_transform(sample(HGModeSpec(1, 0, 1.0), Grid.symmetric(8.0, 256)))
    zero = spectral.p1_grid.count // 2
    assert spectral.p1_grid.points[zero] == 0.0
    assert np.max(np.abs(spectral.amplitudes[zero, :])) < 1e-12


def test_double_transform_flips_parity():
    field = sample(HGModeSpec(1, 2, 1.0), Grid.symmetric(8.0, 129))
    twice = fourier_transform(fourier_transform(field).as_field())
    np.testing.assert_allclose(twice.amplitudes, field.amplitudes[::-1, ::-1], atol=1e-12)


def test_self_fourier_width():
    spec = HGModeSpec(2, 1, SQRT2)
    spectral = fourier_transform(sample(spec, Grid.symmetric(11.0, 257)))
    expected = hg_amplitude(spec, spectral.p1_grid.points[:, np.newaxis], spectral.p2_grid.points[np.newaxis, :])
    np.testing.assert_allclose(np.abs(spectral.amplitudes), np.abs(expected), atol=1e-6)


def test_propagation_identity_at_zero():
    field = sample(HGModeSpec(1, 1, 1.0))
    assert free_space_propagate(field, 0.0, 2 * math.pi) is field


def test_propagation_width_law_at_rayleigh_range():
    spec = HGModeSpec(0, 0, 1.0)
    field = sample(spec)
    propagated = free_space_propagate(field, spec.rayleigh_range, spec.wavelength)
    for axis in (1, 2):
        assert rms_width(propagated, axis) / rms_width(field, axis) == pytest.approx(SQRT2, abs=1e-3)
    assert propagated.norm_tag == pytest.approx(1.0, abs=1e-6)


def test_propagated_intensity_matches_width_law():
    spec = HGModeSpec(1, 2, 1.0)
    field = sample(spec)
    z = 0.3
    propagated = free_space_propagate(field, z, spec.wavelength)
    x1 = field.x1_grid.points[:, np.newaxis]
    x2 = field.x2_grid.points[np.newaxis, :]
    np.testing.assert_allclose(propagated.intensity(), hg_intensity_at_distance(spec, x1, x2, z), atol=1e-8)


def test_propagation_aliasing():
    field = sample(HGModeSpec(0, 0, 1.0))
    with pytest.raises(AliasingError):
        free_space_propagate(field, 1000.0, 2 * math.pi)
    with pytest.raises(ValidationError):
        free_space_propagate(field, -1.0, 2 * math.pi)


def test_refine_axis_is_band_limited_interpolation():
    grid = Grid.symmetric(8.0, 161)
    values = np.exp(-grid.points ** 2 / 2) * (1 + 0.5j)
    refined, fine = refine_axis(values, grid, 0, 3)
    assert fine.step == pytest.approx(grid.step / 3)
    assert fine.lower == pytest.approx(grid.lower)
    assert refined.shape == (3 * 161,)
    np.testing.assert_allclose(refined, np.exp(-fine.points ** 2 / 2) * (1 + 0.5j), atol=1e-10)
    np.testing.assert_allclose(refined[::3], values, atol=1e-12)


def test_refine_axis_along_second_axis():
    field = sample(HGModeSpec(1, 2, 1.0), Grid.symmetric(9.0, 128))
    refined, fine = refine_axis(field.amplitudes, field.x2_grid, 1, 2)
    expected = hg_amplitude(HGModeSpec(1, 2, 1.0), field.x1_grid.points[:, np.newaxis], fine.points[np.newaxis, :])
    np.testing.assert_allclose(refined, expected, atol=1e-9)
    with pytest.raises(ValidationError):
        refine_axis(field.amplitudes, field.x2_grid, 1, 0)


def test_axis_support_of_shifted_mode():
    grid = Grid.symmetric(12.0, 512)
    spec = HGModeSpec(0, 0, 1.0)
    x1 = grid.points[:, np.newaxis] - 1.5
    x2 = grid.points[np.newaxis, :]
    field = SampledField(grid, grid, hg_amplitude(spec, x1, x2) * np.exp(2j * x1)).normalize()
    support = axis_support(field.amplitudes, grid, 0)
    assert support.x_center == pytest.approx(1.5, abs=2 * grid.step)
    assert support.p_center == pytest.approx(2.0, abs=0.3)
    # intensity exp(-2 x^2) falls to 1e-20 of its peak at |x| = 4.8
    assert 4.7 < support.x_half < 5.0
    other = axis_support(field.amplitudes, grid, 1)
    assert other.x_center == pytest.approx(0.0, abs=2 * grid.step)
    assert other.p_center == pytest.approx(0.0, abs=0.3)


def test_field_text_format(tmp_path):
    field = sample(HGModeSpec(1, 0, 1.0), (Grid.symmetric(7.0, 40), Grid.symmetric(6.0, 30)))
    text = format_field(field)
    lines = text.splitlines()
    assert lines[0].startswith('x1: ') and lines[1].startswith('x2: ')
    assert len(lines) == 2 + 40 * 30
    # x1 varies fastest
    first_re = float(lines[2].split()[0])
    second_re = float(lines[3].split()[0])
    assert first_re == field.amplitudes[0, 0].real
    assert second_re == field.amplitudes[1, 0].real

    path = tmp_path / 'mode.field'
    path.write_text(text)
    loaded = read_field(path)
    assert loaded.x1_grid == field.x1_grid and loaded.x2_grid == field.x2_grid
    np.testing.assert_array_equal(loaded.amplitudes, field.amplitudes)


def test_field_text_format_errors(tmp_path):
    with pytest.raises(ValidationError):
        read_field(tmp_path / 'missing.field')
    with pytest.raises(ValidationError):
        parse_field("x1: 0 0.1 2\nx2: 0 0.1 2\n1 0\n")
    with pytest.raises(ValidationError):
        parse_field("x1: 0 0.1 2\ny: 0 0.1 2\n1 0\n1 0\n1 0\n1 0\n")
    with pytest.raises(ValidationError):
        parse_field("x1: 0 0.1 1\nx2: 0 0.1 1\nfoo bar\n")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
