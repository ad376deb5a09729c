"""
Beam Model Service
Hermite-Gauss mode specifications, sampled transverse fields, their Fourier
transforms and free-space Fresnel propagation.

All transverse coordinates and momenta are reduced (dimensionless) units; the
wavelength only enters the propagation distance through lambda_bar = lambda / 2pi.
"""

import math
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from scipy import fft

from services import config
from services.errors import AliasingError, GridTooSmallError, ValidationError
from services.numerics import hermite_poly

logger = logging.getLogger(__name__)

NORM_TOL = 1e-6
# energy allowed in the outer 1/GUARD_FRACTION of each axis after propagation
GUARD_FRACTION = 16
GUARD_ENERGY = 1e-8
SPECTRAL_TAIL = 1e-12
# marginal intensity, relative to its peak, below which a field counts as absent
SUPPORT_FLOOR = 1e-20


@dataclass(frozen=True)
class Grid:
    """Uniform axis: count points spaced by step, symmetric about center"""

    center: float
    step: float
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValidationError(f"Grid needs at least 2 points, got {self.count}")
        if not self.step > 0:
            raise ValidationError(f"Grid step must be positive, got {self.step}")

    @classmethod
    def symmetric(cls, half_width: float, count: int) -> 'Grid':
        return cls(center=0.0, step=2.0 * half_width / (count - 1), count=count)

    @property
    def points(self) -> np.ndarray:
        return self.center + (np.arange(self.count) - 0.5 * (self.count - 1)) * self.step

    @property
    def lower(self) -> float:
        return self.center - 0.5 * (self.count - 1) * self.step

    @property
    def upper(self) -> float:
        return self.center + 0.5 * (self.count - 1) * self.step

    def conjugate(self) -> 'Grid':
        """Momentum grid of the DFT, in fftshift order"""
        dp = 2.0 * math.pi / (self.count * self.step)
        return Grid(center=(0.5 * (self.count - 1) - self.count // 2) * dp, step=dp, count=self.count)

    def every_other(self) -> 'Grid':
        return Grid(center=self.lower + (self.count - 1) // 2 * self.step, step=2.0 * self.step,
                    count=(self.count + 1) // 2)


@dataclass(frozen=True)
class HGModeSpec:
    """
    Hermite-Gauss mode of order (n, m) with waist sigma0.

    wavelength is only used by propagation geometry; the default 2pi makes
    lambda_bar = 1 so reduced and physical distances coincide.
    """

    n: int
    m: int
    sigma0: float
    wavelength: float = 2.0 * math.pi

    def __post_init__(self):
        if self.n < 0 or self.m < 0:
            raise ValidationError(f"Mode orders must be nonnegative, got ({self.n}, {self.m})")
        if not (self.sigma0 > 0 and math.isfinite(self.sigma0)):
            raise ValidationError(f"sigma0 must be positive, got {self.sigma0}")
        if not (self.wavelength > 0 and math.isfinite(self.wavelength)):
            raise ValidationError(f"wavelength must be positive, got {self.wavelength}")

    @property
    def norm(self) -> float:
        """N_nm"""
        return math.sqrt(2.0 / (math.pi * self.sigma0 ** 2 * math.factorial(self.n)
                                * math.factorial(self.m) * 2 ** (self.n + self.m)))

    @property
    def lambda_bar(self) -> float:
        return self.wavelength / (2.0 * math.pi)

    @property
    def rayleigh_range(self) -> float:
        """Confocal parameter z0 = pi sigma0^2 / lambda"""
        return math.pi * self.sigma0 ** 2 / self.wavelength

    def order(self, axis: int) -> int:
        if axis not in (1, 2):
            raise ValidationError(f"axis must be 1 or 2, got {axis}")
        return self.n if axis == 1 else self.m

    def tail_bound(self) -> float:
        """Turning points plus Gaussian tail; the minimum half-span of a sampling grid"""
        return self.sigma0 * (math.sqrt(2 * max(self.n, self.m) + 1) + 4.0)

    def extent(self) -> float:
        """Half-span of default grids and quadrature boxes"""
        return self.sigma0 * (math.sqrt(2 * max(self.n, self.m) + 1) + 8.0)

    def axis_amplitude(self, axis: int, x: np.ndarray) -> np.ndarray:
        return hermite_function_1d(self.order(axis), self.sigma0, x)


def hermite_function_1d(n: int, sigma0: float, x) -> np.ndarray:
    """Normalized 1D factor c_n H_n(sqrt2 x / sigma0) exp(-x^2 / sigma0^2)"""
    c = (2.0 / (math.pi * sigma0 ** 2)) ** 0.25 / math.sqrt(math.factorial(n) * 2.0 ** n)
    x = np.asarray(x, dtype=float)
    return c * hermite_poly(n, math.sqrt(2.0) * x / sigma0) * np.exp(-(x / sigma0) ** 2)


def hg_amplitude(spec: HGModeSpec, x1, x2):
    """psi_nm(x1, x2); real valued, returned with complex dtype"""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
        raise ValidationError("Coordinates must be finite")
    value = (spec.axis_amplitude(1, x1) * spec.axis_amplitude(2, x2)).astype(complex)
    return value[()]


def hg_intensity_at_distance(spec: HGModeSpec, x1, x2, z: float):
    """Intensity of the mode after free propagation over z (width sigma(z))"""
    sigma_z = spec.sigma0 * math.sqrt(1.0 + (z / spec.rayleigh_range) ** 2)
    scaled = HGModeSpec(spec.n, spec.m, sigma_z, spec.wavelength)
    return np.abs(hg_amplitude(scaled, x1, x2)) ** 2


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=complex)
    values.flags.writeable = False
    return values


@dataclass(frozen=True)
class SampledField:
    """Complex amplitude psi[i, j] = psi(x1_i, x2_j) on a rectangular grid"""

    x1_grid: Grid
    x2_grid: Grid
    amplitudes: np.ndarray
    norm_tag: float = field(init=False, compare=False)

    def __post_init__(self):
        amplitudes = _frozen(self.amplitudes)
        if amplitudes.shape != (self.x1_grid.count, self.x2_grid.count):
            raise ValidationError(
                f"Amplitude shape {amplitudes.shape} does not match grid "
                f"({self.x1_grid.count}, {self.x2_grid.count})"
            )
        if not np.all(np.isfinite(amplitudes)):
            raise ValidationError("Field amplitudes must be finite")
        object.__setattr__(self, 'amplitudes', amplitudes)
        norm = math.sqrt(float(np.sum(np.abs(amplitudes) ** 2)) * self.cell_area)
        object.__setattr__(self, 'norm_tag', norm)

    @property
    def cell_area(self) -> float:
        return self.x1_grid.step * self.x2_grid.step

    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm_tag - 1.0) <= tol

    def require_normalized(self, tol: float = NORM_TOL):
        if not self.is_normalized(tol):
            raise ValidationError(f"Field is not normalized (L2 norm {self.norm_tag:.9f})")

    def normalize(self) -> 'SampledField':
        if self.norm_tag == 0.0:
            raise ValidationError("Cannot normalize an all-zero field")
        return SampledField(self.x1_grid, self.x2_grid, self.amplitudes / self.norm_tag)

    def every_other(self) -> 'SampledField':
        """Sub-grid keeping every other node per axis"""
        return SampledField(self.x1_grid.every_other(), self.x2_grid.every_other(),
                            self.amplitudes[::2, ::2])

    def padded(self, factor: int) -> 'SampledField':
        """
        Embed the field in zeros on a grid about factor times wider, same step
        and centre. Refines the conjugate momentum grid by the same factor.
        """
        if factor < 1:
            raise ValidationError(f"Padding factor must be >= 1, got {factor}")
        n1, n2 = self.amplitudes.shape
        pad1 = (factor - 1) * n1 // 2
        pad2 = (factor - 1) * n2 // 2
        values = np.pad(self.amplitudes, ((pad1, pad1), (pad2, pad2)))
        return SampledField(
            Grid(self.x1_grid.center, self.x1_grid.step, n1 + 2 * pad1),
            Grid(self.x2_grid.center, self.x2_grid.step, n2 + 2 * pad2),
            values,
        )

    def interpolated(self, factor: int) -> 'SampledField':
        """Band-limited interpolation onto a grid factor times finer (zero-padded spectrum)"""
        values, g1 = refine_axis(self.amplitudes, self.x1_grid, 0, factor)
        values, g2 = refine_axis(values, self.x2_grid, 1, factor)
        return SampledField(g1, g2, values)

    def grid(self, axis: int) -> Grid:
        if axis not in (1, 2):
            raise ValidationError(f"axis must be 1 or 2, got {axis}")
        return self.x1_grid if axis == 1 else self.x2_grid


@dataclass(frozen=True)
class SpectralField:
    """Fourier amplitude psi~[k, l] = psi~(p1_k, p2_l)"""

    p1_grid: Grid
    p2_grid: Grid
    amplitudes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'amplitudes', _frozen(self.amplitudes))

    @property
    def cell_area(self) -> float:
        return self.p1_grid.step * self.p2_grid.step

    def norm(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self.amplitudes) ** 2)) * self.cell_area)

    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def as_field(self) -> SampledField:
        """Reinterpret the momentum grid as a coordinate grid (for repeated transforms)"""
        return SampledField(self.p1_grid, self.p2_grid, self.amplitudes)


def tail_grid(spec: HGModeSpec, count: Optional[int] = None) -> Grid:
    """Default square grid: 512 points over +/- sigma0 (sqrt(2 max(n,m)+1) + 8)"""
    count = count or config.default_grid_points()
    return Grid.symmetric(spec.extent(), count)


def sample(spec: HGModeSpec, grid: Optional[Union[Grid, Tuple[Grid, Grid]]] = None) -> SampledField:
    """
    Sample an HG mode on a grid.

    Args:
        spec: Mode to sample
        grid: One grid for both axes, a (x1, x2) pair, or None for the default grid

    Returns:
        SampledField whose discrete norm is within 1e-6 of 1
    """
    if grid is None:
        grid = tail_grid(spec)
    g1, g2 = grid if isinstance(grid, tuple) else (grid, grid)
    bound = spec.tail_bound()
    for axis, g in ((1, g1), (2, g2)):
        if g.lower > -bound or g.upper < bound:
            raise GridTooSmallError(
                f"Axis {axis} grid [{g.lower:g}, {g.upper:g}] does not cover +/-{bound:g} "
                f"for HG({spec.n},{spec.m}) with sigma0={spec.sigma0:g}"
            )
    x1 = g1.points[:, np.newaxis]
    x2 = g2.points[np.newaxis, :]
    result = SampledField(g1, g2, hg_amplitude(spec, x1, x2))
    if not result.is_normalized():
        raise GridTooSmallError(
            f"Grid too coarse for HG({spec.n},{spec.m}): discrete norm {result.norm_tag:.9f}"
        )
    logger.debug(f"Sampled HG({spec.n},{spec.m}) on {g1.count}x{g2.count}, norm {result.norm_tag:.12f}")
    return result


def fourier_transform(source: SampledField) -> SpectralField:
    """
    psi~(p1, p2) = (2pi)^-1 * integral of psi(x1, x2) exp(-i (p1 x1 + p2 x2)).

    Discrete transform on the conjugate grid; Parseval holds exactly for the
    discrete sums.
    """
    source.require_normalized()
    p1_grid = source.x1_grid.conjugate()
    p2_grid = source.x2_grid.conjugate()
    spectrum = fft.fftshift(fft.fft2(source.amplitudes), axes=(0, 1))
    phase1 = np.exp(-1j * p1_grid.points * source.x1_grid.lower)
    phase2 = np.exp(-1j * p2_grid.points * source.x2_grid.lower)
    spectrum = spectrum * phase1[:, np.newaxis] * phase2[np.newaxis, :]
    spectrum *= source.cell_area / (2.0 * math.pi)
    return SpectralField(p1_grid, p2_grid, spectrum)


def _significant_momentum(power: np.ndarray, p: np.ndarray) -> float:
    order = np.argsort(np.abs(p))[::-1]
    tail = np.cumsum(power[order])
    total = tail[-1]
    beyond = np.searchsorted(tail, SPECTRAL_TAIL * total, side='right')
    return float(np.abs(p[order[min(beyond, p.size - 1)]]))


def _guard_energy(intensity: np.ndarray) -> float:
    n1, n2 = intensity.shape
    g1 = max(1, n1 // GUARD_FRACTION)
    g2 = max(1, n2 // GUARD_FRACTION)
    inner = intensity[g1:n1 - g1, g2:n2 - g2].sum()
    total = intensity.sum()
    return float((total - inner) / total) if total > 0 else 0.0


def free_space_propagate(source: SampledField, z: float, wavelength: float) -> SampledField:
    """
    Fresnel propagation over distance z in free space (U = 0).

    The angular spectrum is multiplied by exp(-i z lambda_bar p^2 / 2).

    Raises:
        AliasingError: the chirp is undersampled where the spectrum lives, or
            the propagated field reaches the grid border
    """
    if not z >= 0:
        raise ValidationError(f"Propagation distance must be >= 0, got {z}")
    if not wavelength > 0:
        raise ValidationError(f"wavelength must be positive, got {wavelength}")
    source.require_normalized()
    if z == 0:
        return source

    lambda_bar = wavelength / (2.0 * math.pi)
    spectrum = fft.fft2(source.amplitudes)
    power = np.abs(spectrum) ** 2
    p1 = 2.0 * math.pi * fft.fftfreq(source.x1_grid.count, d=source.x1_grid.step)
    p2 = 2.0 * math.pi * fft.fftfreq(source.x2_grid.count, d=source.x2_grid.step)
    for axis, p, marginal in ((1, p1, power.sum(axis=1)), (2, p2, power.sum(axis=0))):
        dp = abs(p[1] - p[0])
        p_sig = _significant_momentum(marginal, p)
        phase_step = z * lambda_bar * p_sig * dp
        if phase_step > math.pi:
            raise AliasingError(
                f"Propagation chirp exceeds Nyquist on axis {axis}: phase step {phase_step:.3f} rad "
                f"at |p|={p_sig:.3g} for z={z:g}"
            )

    transfer = np.exp(-0.5j * z * lambda_bar * (p1[:, np.newaxis] ** 2 + p2[np.newaxis, :] ** 2))
    propagated = fft.ifft2(spectrum * transfer)
    guard = _guard_energy(np.abs(propagated) ** 2)
    if guard > GUARD_ENERGY:
        raise AliasingError(f"Propagated field leaves {guard:.2e} of its energy in the grid border")
    logger.debug(f"Propagated over z={z:g} (lambda={wavelength:g}), border energy {guard:.2e}")
    return SampledField(source.x1_grid, source.x2_grid, propagated)


def rms_width(source: SampledField, axis: int) -> float:
    """Root-mean-square width of the intensity along one axis"""
    intensity = source.intensity()
    marginal = intensity.sum(axis=1 if axis == 1 else 0)
    x = source.grid(axis).points
    total = marginal.sum()
    mean = float(np.sum(x * marginal) / total)
    return math.sqrt(float(np.sum((x - mean) ** 2 * marginal) / total))


def overlap(a: SampledField, b: SampledField) -> complex:
    """Discrete inner product <a, b>"""
    if a.x1_grid != b.x1_grid or a.x2_grid != b.x2_grid:
        raise ValidationError("Fields must share a grid for an overlap")
    return complex(np.sum(np.conj(a.amplitudes) * b.amplitudes) * a.cell_area)


def refine_axis(values: np.ndarray, grid: Grid, axis: int, factor: int) -> Tuple[np.ndarray, Grid]:
    """
    Band-limited interpolation of values along one array axis onto a grid
    factor times finer, starting at the same lower node.
    """
    if factor < 1:
        raise ValidationError(f"Interpolation factor must be >= 1, got {factor}")
    if factor == 1:
        return values, grid
    n = values.shape[axis]
    count = factor * n
    spectrum = fft.fftshift(fft.fft(values, axis=axis), axes=axis)
    before = count // 2 - n // 2
    widths = [(0, 0)] * values.ndim
    widths[axis] = (before, count - n - before)
    spectrum = np.pad(spectrum, widths)
    refined = fft.ifft(fft.ifftshift(spectrum, axes=axis), axis=axis) * factor
    step = grid.step / factor
    return refined, Grid(grid.lower + 0.5 * (count - 1) * step, step, count)


@dataclass(frozen=True)
class AxisSupport:
    """Where the values along one axis live: centre and half-extent in x and in p"""

    x_center: float
    x_half: float
    p_center: float
    p_half: float


def _support(coords: np.ndarray, marginal: np.ndarray, margin: float) -> Tuple[float, float]:
    peak = marginal.max()
    if peak <= 0:
        return 0.0, margin
    inside = coords[marginal > SUPPORT_FLOOR * peak]
    low, high = float(inside.min()), float(inside.max())
    return 0.5 * (low + high), 0.5 * (high - low) + margin


def axis_support(values: np.ndarray, grid: Grid, axis: int) -> AxisSupport:
    """
    Support of values along one array axis, in position and in momentum,
    cut where the marginal intensity drops below SUPPORT_FLOOR of its peak.
    """
    other = tuple(k for k in range(values.ndim) if k != axis)
    x_marginal = np.sum(np.abs(values) ** 2, axis=other)
    p_marginal = np.sum(np.abs(fft.fft(values, axis=axis)) ** 2, axis=other)
    p = 2.0 * math.pi * fft.fftfreq(grid.count, d=grid.step)
    x_center, x_half = _support(grid.points, x_marginal, grid.step)
    p_center, p_half = _support(p, p_marginal, abs(p[1]) if p.size > 1 else 0.0)
    return AxisSupport(x_center, x_half, p_center, p_half)


def format_field(source: SampledField) -> str:
    """Text encoding: two grid header lines, then 're im' rows with x1 varying fastest"""
    lines = [
        f"x1: {source.x1_grid.center!r} {source.x1_grid.step!r} {source.x1_grid.count}",
        f"x2: {source.x2_grid.center!r} {source.x2_grid.step!r} {source.x2_grid.count}",
    ]
    for value in source.amplitudes.T.ravel():
        lines.append(f"{float(value.real)!r} {float(value.imag)!r}")
    return "\n".join(lines) + "\n"


def _parse_grid_line(line: str, label: str) -> Grid:
    key, _, rest = line.partition(':')
    parts = rest.split()
    if key.strip() != label or len(parts) != 3:
        raise ValidationError(f"Expected '{label}: center step count', got {line!r}")
    try:
        return Grid(center=float(parts[0]), step=float(parts[1]), count=int(parts[2]))
    except ValueError as e:
        raise ValidationError(f"Bad grid header {line!r}: {e}") from e


def parse_field(text: str) -> SampledField:
    rows = [line for line in text.splitlines() if line.strip()]
    if len(rows) < 2:
        raise ValidationError("Field file needs two grid header lines")
    g1 = _parse_grid_line(rows[0], 'x1')
    g2 = _parse_grid_line(rows[1], 'x2')
    body = rows[2:]
    if len(body) != g1.count * g2.count:
        raise ValidationError(f"Field file has {len(body)} value rows, expected {g1.count * g2.count}")
    try:
        pairs = np.array([[float(v) for v in row.split()] for row in body])
    except ValueError as e:
        raise ValidationError(f"Bad value row in field file: {e}") from e
    if pairs.shape != (len(body), 2):
        raise ValidationError("Every value row must hold exactly 're im'")
    values = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(g2.count, g1.count).T
    return SampledField(g1, g2, values)


def read_field(path: Union[str, Path]) -> SampledField:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Field file not found: {path}")
    logger.info(f"Reading field from {path}")
    return parse_field(path.read_text())
