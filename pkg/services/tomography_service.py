"""
Tomography Service
Symplectic, optical and Fresnel tomograms of transverse beam modes.

Hermite-Gauss sources are evaluated in closed form (a product of two 1D
Hermite-Gaussian integrals) or, as an oracle, by direct chirped quadrature of
the defining Fresnel integral. Sampled fields are transformed per axis, by FFT
propagation or by a direct chirped sum on a band-limited refinement of their grid.
"""

import math
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import fft
from scipy.integrate import trapezoid

from services.beam_model import (
    AxisSupport, Grid, HGModeSpec, SampledField, axis_support, hermite_function_1d, hg_intensity_at_distance,
    refine_axis,
)
from services.errors import AliasingError, ConvergenceError, DegenerateQueryError, ValidationError
from services.numerics import QuadratureSpec, hermite_gaussian_integral, oscillatory_line_integral

logger = logging.getLogger(__name__)

NU_EPS = 1e-8
NOISE_FLOOR = 1e-12
MU_MAX_SCALE = 30.0
# largest band-limited refinement the direct chirped sum may ask for
MAX_REFINEMENT = 64
# grid steps kept clear between a propagated field and its periodic copy
PERIOD_MARGIN = 4.0

Source = Union[HGModeSpec, SampledField]


@dataclass(frozen=True)
class TomogramQuery:
    """Point (X1, mu1, nu1, X2, mu2, nu2) of the symplectic tomogram"""

    X1: float
    mu1: float
    nu1: float
    X2: float
    mu2: float
    nu2: float

    def __post_init__(self):
        values = (self.X1, self.mu1, self.nu1, self.X2, self.mu2, self.nu2)
        if not all(math.isfinite(v) for v in values):
            raise ValidationError(f"Tomogram query must be finite, got {values}")
        for k, (mu, nu) in enumerate(((self.mu1, self.nu1), (self.mu2, self.nu2)), start=1):
            if mu == 0 and nu == 0:
                raise DegenerateQueryError(f"Axis {k} has (mu, nu) = (0, 0)")

    @classmethod
    def parse(cls, text: str) -> 'TomogramQuery':
        """Read 'X1,mu1,nu1,X2,mu2,nu2'"""
        parts = [p.strip() for p in text.split(',')]
        if len(parts) != 6:
            raise ValidationError(f"Query needs six comma-separated numbers, got {text!r}")
        try:
            return cls(*(float(p) for p in parts))
        except ValueError as e:
            raise ValidationError(f"Bad query {text!r}: {e}") from e

    def axis(self, k: int) -> Tuple[float, float, float]:
        return (self.X1, self.mu1, self.nu1) if k == 1 else (self.X2, self.mu2, self.nu2)

    def scaled(self, lambda1: float, lambda2: float) -> 'TomogramQuery':
        return TomogramQuery(lambda1 * self.X1, lambda1 * self.mu1, lambda1 * self.nu1,
                             lambda2 * self.X2, lambda2 * self.mu2, lambda2 * self.nu2)

    def as_tuple(self) -> Tuple[float, ...]:
        return (self.X1, self.mu1, self.nu1, self.X2, self.mu2, self.nu2)


def _reduce_angle(theta: float) -> Tuple[float, int]:
    turns = math.floor(theta / math.pi)
    reduced = theta - turns * math.pi
    sign = -1 if turns % 2 else 1
    if reduced >= math.pi:
        reduced, sign = 0.0, -sign
    return reduced, sign


@dataclass(frozen=True)
class OpticalAngles:
    """
    Rotation angles (theta1, theta2), stored reduced to [0, pi).

    w_opt(X, theta + pi) = w_opt(-X, theta); the x*_sign fields record the
    flips picked up by the reduction and take no part in comparisons.
    """

    theta1: float
    theta2: float
    x1_sign: int = field(default=1, compare=False)
    x2_sign: int = field(default=1, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.theta1) and math.isfinite(self.theta2)):
            raise ValidationError("Optical angles must be finite")
        t1, s1 = _reduce_angle(self.theta1)
        t2, s2 = _reduce_angle(self.theta2)
        object.__setattr__(self, 'theta1', t1)
        object.__setattr__(self, 'theta2', t2)
        object.__setattr__(self, 'x1_sign', s1 * self.x1_sign)
        object.__setattr__(self, 'x2_sign', s2 * self.x2_sign)

    def shifted(self, delta: float) -> 'OpticalAngles':
        return OpticalAngles(self.theta1 + delta, self.theta2 + delta, self.x1_sign, self.x2_sign)

    def symplectic(self) -> Tuple[float, float, float, float]:
        """(mu1, nu1, mu2, nu2) = (cos, sin) of the reduced angles"""
        return (math.cos(self.theta1), _sin(self.theta1), math.cos(self.theta2), _sin(self.theta2))

    def query(self, X1: float, X2: float) -> TomogramQuery:
        mu1, nu1, mu2, nu2 = self.symplectic()
        return TomogramQuery(self.x1_sign * X1, mu1, nu1, self.x2_sign * X2, mu2, nu2)


def _sin(theta: float) -> float:
    # sin(0) must be exactly 0 so theta = 0 takes the position-marginal limit
    return 0.0 if theta == 0.0 else math.sin(theta)


@dataclass(frozen=True)
class ClosedFormIntermediates:
    """
    alpha_k = sqrt2 / (sigma0 sqrt(q_k)), beta_k = X_k / (2 nu_k sqrt(q_k)),
    q_k = 1/sigma0^2 - i mu_k / (2 nu_k). The Gaussian shift of the Hermite
    integral is -i beta_k.
    """

    alpha: Tuple[complex, complex]
    beta: Tuple[complex, complex]
    q: Tuple[complex, complex]


@dataclass(frozen=True)
class PropagationGeometry:
    """Effective distances z_k = 2pi nu_k / (lambda mu_k) and widths sigma_k(z_k)"""

    sigma_k_of_z: Tuple[float, float]
    z_k: Tuple[float, float]
    z0: float
    rho: Optional[float] = None


def _axis_q(sigma0: float, mu: float, nu: float) -> complex:
    return complex(1.0 / sigma0 ** 2, -mu / (2.0 * nu))


def closed_form_intermediates(spec: HGModeSpec, query: TomogramQuery) -> ClosedFormIntermediates:
    alphas, betas, qs = [], [], []
    for k in (1, 2):
        X, mu, nu = query.axis(k)
        if abs(nu) < NU_EPS:
            raise ValidationError(f"Closed-form intermediates need |nu{k}| >= {NU_EPS:g}")
        q = _axis_q(spec.sigma0, mu, nu)
        root_q = np.sqrt(q)
        alphas.append(complex(math.sqrt(2.0) / (spec.sigma0 * root_q)))
        betas.append(complex(X / (2.0 * nu * root_q)))
        qs.append(q)
    return ClosedFormIntermediates(tuple(alphas), tuple(betas), tuple(qs))


def line_tomogram_hg(n: int, sigma0: float, X, mu: float, nu: float):
    """
    Tomogram of the 1D Hermite-Gauss factor of order n.

    (1 / (2pi|nu|)) |integral f_n(x) exp(i(mu x^2/(2nu) - X x/nu)) dx|^2, with the
    nu -> 0 limit (1/|mu|) |f_n(X/mu)|^2. X may be an array.
    """
    if mu == 0 and nu == 0:
        raise DegenerateQueryError("(mu, nu) = (0, 0)")
    X = np.asarray(X, dtype=float)
    if abs(nu) < NU_EPS:
        return (np.abs(hermite_function_1d(n, sigma0, X / mu)) ** 2 / abs(mu))[()]
    q = _axis_q(sigma0, mu, nu)
    root_q = np.sqrt(q)
    alpha = math.sqrt(2.0) / (sigma0 * root_q)
    shift = -1j * X / (2.0 * nu * root_q)
    c_n = (2.0 / (math.pi * sigma0 ** 2)) ** 0.25 / math.sqrt(math.factorial(n) * 2.0 ** n)
    integral = c_n * hermite_gaussian_integral(n, alpha, shift) * np.exp(-X ** 2 / (4.0 * nu ** 2 * q)) / root_q
    return (np.abs(integral) ** 2 / (2.0 * math.pi * abs(nu)))[()]


def symplectic_tomogram_hg(spec: HGModeSpec, query: TomogramQuery) -> float:
    """Closed-form tomogram w_nm(X1, mu1, nu1, X2, mu2, nu2) of an HG mode"""
    w1 = line_tomogram_hg(spec.n, spec.sigma0, query.X1, query.mu1, query.nu1)
    w2 = line_tomogram_hg(spec.m, spec.sigma0, query.X2, query.mu2, query.nu2)
    return max(float(w1 * w2), 0.0)


def _line_tomogram_numeric(spec: HGModeSpec, axis: int, X: float, mu: float, nu: float,
                           quadrature: QuadratureSpec) -> float:
    n = spec.order(axis)
    if abs(nu) < NU_EPS:
        return float(np.abs(hermite_function_1d(n, spec.sigma0, X / mu)) ** 2 / abs(mu))
    box = quadrature.covering(spec.extent())
    integral = oscillatory_line_integral(
        lambda x: hermite_function_1d(n, spec.sigma0, x), mu / nu, -X / nu, box,
    )
    return abs(integral) ** 2 / (2.0 * math.pi * abs(nu))


def _along(vector: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = -1
    return vector.reshape(shape)


def _propagated_axis(values: np.ndarray, grid: Grid, array_axis: int, X: np.ndarray,
                     mu: float, nu: float, support: AxisSupport) -> np.ndarray:
    """
    |nu| <= |mu|: free evolution over t = nu / mu read out at Y = X / mu, with
    w = |psi_t(Y)|^2 / |mu|. The zero-padded period holds both the evolved
    field and every readout point, so no periodic copy is ever read.
    """
    t = nu / mu
    Y = X / mu
    centre = support.x_center + t * support.p_center
    spread = support.x_half + abs(t) * support.p_half
    reach = max(float(np.max(np.abs(Y - centre))), spread) + spread + PERIOD_MARGIN * grid.step
    count = fft.next_fast_len(max(grid.count, int(math.ceil(reach / grid.step)) + 1))
    p = 2.0 * math.pi * fft.fftfreq(count, d=grid.step)
    evolved = fft.fft(values, n=count, axis=array_axis)
    evolved *= _along(np.exp(-0.5j * t * p ** 2), array_axis, values.ndim)
    readout = np.exp(1j * np.outer(Y - grid.lower, p)) / (count * math.sqrt(abs(mu)))
    moved = np.moveaxis(evolved, array_axis, -1)
    return np.moveaxis(moved @ readout.T, -1, array_axis)


def _chirped_axis(values: np.ndarray, grid: Grid, array_axis: int, X: np.ndarray,
                  mu: float, nu: float, support: AxisSupport) -> np.ndarray:
    """
    |nu| > |mu|: the chirped sum itself, |a| = |mu / nu| <= 1. The grid is
    refined until the chirped spectrum, shifted by every X / nu, stays inside
    one period 2 pi / step of the sum.
    """
    a = mu / nu
    b = X / nu
    centre = support.p_center + a * support.x_center
    band = support.p_half + abs(a) * support.x_half
    reach = max(float(np.max(np.abs(b - centre))), band) + band
    factor = max(1, int(math.ceil(grid.step * reach / (2.0 * math.pi))))
    if factor > MAX_REFINEMENT:
        raise AliasingError(
            f"Chirped sum at (mu={mu:g}, nu={nu:g}) needs a grid {factor}x finer than the field's "
            f"(limit {MAX_REFINEMENT}); X reaches {float(np.max(np.abs(X))):g}"
        )
    fine_values, fine = refine_axis(values, grid, array_axis, factor)
    x = fine.points
    kernel = np.exp(1j * (0.5 * a * x[np.newaxis, :] ** 2 - np.outer(b, x)))
    kernel *= fine.step / math.sqrt(2.0 * math.pi * abs(nu))
    moved = np.moveaxis(fine_values, array_axis, -1)
    return np.moveaxis(moved @ kernel.T, -1, array_axis)


def transform_axis(values: np.ndarray, source: SampledField, axis: int, X: np.ndarray,
                   mu: float, nu: float) -> np.ndarray:
    """
    Apply the axis-k tomographic transform to array axis (axis - 1) of values.

    The result's squared modulus, taken over both axes, is the tomogram on the X grid.
    Near-position directions propagate the field by FFT; near-momentum ones sum
    the mildly chirped integrand directly.
    """
    grid = source.grid(axis)
    array_axis = axis - 1
    X = np.atleast_1d(np.asarray(X, dtype=float))
    support = axis_support(values, grid, array_axis)
    if abs(nu) <= abs(mu):
        return _propagated_axis(values, grid, array_axis, X, mu, nu, support)
    return _chirped_axis(values, grid, array_axis, X, mu, nu, support)


def sampled_tomogram_grid(source: SampledField, X1: np.ndarray, X2: np.ndarray,
                          mu1: float, nu1: float, mu2: float, nu2: float) -> np.ndarray:
    """w(X1_i, mu1, nu1, X2_j, mu2, nu2) on a grid of X values"""
    partial = transform_axis(source.amplitudes, source, 1, X1, mu1, nu1)
    amplitude = transform_axis(partial, source, 2, X2, mu2, nu2)
    return np.abs(amplitude) ** 2


def _sampled_tomogram(source: SampledField, query: TomogramQuery, quadrature: QuadratureSpec) -> float:
    full = sampled_tomogram_grid(source, query.X1, query.X2, query.mu1, query.nu1, query.mu2, query.nu2)
    coarse = sampled_tomogram_grid(source.every_other(), query.X1, query.X2,
                                   query.mu1, query.nu1, query.mu2, query.nu2)
    value = float(full[0, 0])
    change = abs(value - float(coarse[0, 0]))
    if change > 10.0 * quadrature.abs_tol:
        raise ConvergenceError(
            f"Tomogram at {query.as_tuple()} unresolved on the field grid (node-halving change {change:.3e})"
        )
    return value


def symplectic_tomogram_numeric(source: Source, query: TomogramQuery,
                                quadrature: Optional[QuadratureSpec] = None) -> float:
    """
    Direct quadrature of the symplectic tomogram.

    Args:
        source: HG mode (separable chirped line integrals) or sampled field (grid sums)
        query: Tomogram point
        quadrature: Integration settings (defaults from configuration)

    Returns:
        Nonnegative tomogram value
    """
    quadrature = quadrature or QuadratureSpec.default()
    if isinstance(source, HGModeSpec):
        w1 = _line_tomogram_numeric(source, 1, query.X1, query.mu1, query.nu1, quadrature)
        w2 = _line_tomogram_numeric(source, 2, query.X2, query.mu2, query.nu2, quadrature)
        value = w1 * w2
    else:
        source.require_normalized()
        value = _sampled_tomogram(source, query, quadrature)
    if value < -NOISE_FLOOR:
        logger.warning(f"Clamping negative tomogram value {value:.3e} at {query.as_tuple()}")
    return max(value, 0.0)


def symplectic_tomogram(source: Source, query: TomogramQuery,
                        quadrature: Optional[QuadratureSpec] = None) -> float:
    """Closed form for HG modes, grid quadrature for sampled fields"""
    if isinstance(source, HGModeSpec):
        return symplectic_tomogram_hg(source, query)
    return symplectic_tomogram_numeric(source, query, quadrature)


def optical_tomogram(source: Source, X1: float, angles: OpticalAngles, X2: float,
                     quadrature: Optional[QuadratureSpec] = None) -> float:
    """w_opt(X1, theta1, X2, theta2) = w(X1, cos theta1, sin theta1, X2, cos theta2, sin theta2)"""
    return symplectic_tomogram(source, angles.query(X1, X2), quadrature)


def fresnel_tomogram(source: Source, X1: float, nu1: float, X2: float, nu2: float,
                     quadrature: Optional[QuadratureSpec] = None) -> float:
    """w_F(X1, nu1, X2, nu2) = w(X1, 1, nu1, X2, 1, nu2)"""
    if nu1 == 0 or nu2 == 0:
        raise ValidationError(f"Fresnel tomogram needs nonzero nu1, nu2, got ({nu1}, {nu2})")
    return symplectic_tomogram(source, TomogramQuery(X1, 1.0, nu1, X2, 1.0, nu2), quadrature)


def symplectic_from_optical(source: Source, query: TomogramQuery,
                            quadrature: Optional[QuadratureSpec] = None) -> float:
    """Symplectic tomogram rebuilt from the optical one by radial scaling (mu_k > 0)"""
    if query.mu1 <= 0 or query.mu2 <= 0:
        raise ValidationError("Rebuilding from the optical tomogram needs mu1, mu2 > 0")
    r1 = math.hypot(query.mu1, query.nu1)
    r2 = math.hypot(query.mu2, query.nu2)
    angles = OpticalAngles(math.atan(query.nu1 / query.mu1), math.atan(query.nu2 / query.mu2))
    return optical_tomogram(source, query.X1 / r1, angles, query.X2 / r2, quadrature) / (r1 * r2)


def symplectic_from_fresnel(source: Source, query: TomogramQuery,
                            quadrature: Optional[QuadratureSpec] = None) -> float:
    """Symplectic tomogram from the Fresnel one: (1/|mu1 mu2|) w_F(X/mu, nu/mu, ...)"""
    if query.mu1 == 0 or query.mu2 == 0:
        raise ValidationError("Rebuilding from the Fresnel tomogram needs mu1, mu2 != 0")
    value = fresnel_tomogram(source, query.X1 / query.mu1, query.nu1 / query.mu1,
                             query.X2 / query.mu2, query.nu2 / query.mu2, quadrature)
    return value / abs(query.mu1 * query.mu2)


def homogeneity_check(query: TomogramQuery, lambda1: float, lambda2: float, source: Source,
                      quadrature: Optional[QuadratureSpec] = None) -> Tuple[float, float]:
    """
    Both sides of w(l1 X1, l1 mu1, l1 nu1, l2 X2, l2 mu2, l2 nu2) = w(...) / |l1 l2|.

    Returns:
        (lhs, rhs)
    """
    if lambda1 == 0 or lambda2 == 0:
        raise ValidationError("Homogeneity scale factors must be nonzero")
    lhs = symplectic_tomogram(source, query.scaled(lambda1, lambda2), quadrature)
    rhs = symplectic_tomogram(source, query, quadrature) / abs(lambda1 * lambda2)
    return lhs, rhs


def propagation_geometry(spec: HGModeSpec, query: TomogramQuery) -> PropagationGeometry:
    """Distances z_k = 2pi nu_k/(lambda mu_k), widths sigma_k(z_k), and rho when mu1/nu1 = mu2/nu2"""
    if query.mu1 == 0 or query.mu2 == 0:
        raise ValidationError("Propagation geometry needs mu1, mu2 != 0")
    z0 = spec.rayleigh_range
    z = tuple(2.0 * math.pi * nu / (spec.wavelength * mu)
              for mu, nu in ((query.mu1, query.nu1), (query.mu2, query.nu2)))
    sigmas = tuple(spec.sigma0 * math.sqrt(1.0 + (zk / z0) ** 2) for zk in z)
    rho = None
    if query.nu1 != 0 and query.nu2 != 0:
        r1, r2 = query.mu1 / query.nu1, query.mu2 / query.nu2
        if math.isclose(r1, r2, rel_tol=1e-12):
            rho = r1
    return PropagationGeometry(sigma_k_of_z=sigmas, z_k=z, z0=z0, rho=rho)


def rho_restricted_tomogram(spec: HGModeSpec, X1, X2, mu: float, nu: float):
    """
    Tomogram on the ratio mu/nu = rho shared by both axes: the mode's intensity
    at distance z = 2pi/(lambda rho) on the rescaled plane X/mu, divided by mu^2.
    """
    if mu == 0:
        raise ValidationError("rho-restricted tomogram needs mu != 0")
    z = 2.0 * math.pi * nu / (spec.wavelength * mu)
    return hg_intensity_at_distance(spec, np.asarray(X1) / mu, np.asarray(X2) / mu, z) / mu ** 2


@dataclass(frozen=True)
class LineTomogramSampler:
    """Closed-form 1D HG tomogram as a function of (X, mu, nu) for reconstruction"""

    n: int
    sigma0: float

    def __call__(self, X, mu: float, nu: float):
        return line_tomogram_hg(self.n, self.sigma0, X, mu, nu)

    @property
    def mu_max(self) -> float:
        return MU_MAX_SCALE / self.sigma0

    @property
    def extent(self) -> float:
        return max(self.sigma0, 1.0 / self.sigma0) * (math.sqrt(2 * self.n + 1) + 8.0)


def _characteristic(sampler: Callable, mu: float, nu: float, Y: np.ndarray) -> complex:
    # integral of w(X, mu, nu) exp(iX) dX, taken over the optical variable Y = X / r
    r = math.hypot(mu, nu)
    if r == 0.0:
        return 1.0 + 0.0j
    w = sampler(r * Y, mu, nu)
    return complex(trapezoid(w * r * np.exp(1j * r * Y), Y))


def _correlation_at(sampler: Callable, x: float, xprime: float, mu_nodes: np.ndarray,
                    Y: np.ndarray) -> Tuple[complex, np.ndarray]:
    nu = x - xprime
    centre = 0.5 * (x + xprime)
    chi = np.array([_characteristic(sampler, mu, nu, Y) for mu in mu_nodes])
    value = trapezoid(chi * np.exp(-1j * mu_nodes * centre), mu_nodes) / (2.0 * math.pi)
    return complex(value), chi


def reconstruct_correlation_1d(sampler: Callable, x: float, xprime: float,
                               quadrature: Optional[QuadratureSpec] = None,
                               mu_max: Optional[float] = None) -> complex:
    """
    psi(x) psi*(x') from a 1D tomogram:
    (1/2pi) integral of w(X, mu, x - x') exp(i(X - mu (x + x')/2)) dX dmu.

    Args:
        sampler: Vectorized tomogram w(X, mu, nu) of a pure normalized 1D mode
        x, xprime: The two points of the correlation
        quadrature: abs_tol bounds the truncated tail in mu; half_width the X range
        mu_max: mu truncation (defaults to the sampler's mu_max, else 30/sqrt2)

    Raises:
        ConvergenceError: the integrand has not decayed at +/- mu_max, or
            mu-node doubling moves the result by more than 10 abs_tol
    """
    quadrature = quadrature or QuadratureSpec.default()
    mu_max = mu_max or getattr(sampler, 'mu_max', MU_MAX_SCALE / math.sqrt(2.0))
    half_width = max(quadrature.half_width, getattr(sampler, 'extent', 0.0))
    r_max = math.hypot(mu_max, x - xprime)
    y_nodes = max(1025, int(math.ceil(2.0 * half_width * r_max / (math.pi / 8.0))) + 1)
    Y = np.linspace(-half_width, half_width, y_nodes)

    mu_count = 257
    mu_nodes = np.linspace(-mu_max, mu_max, mu_count)
    coarse, chi = _correlation_at(sampler, x, xprime, mu_nodes, Y)
    tail = max(abs(chi[0]), abs(chi[-1]))
    if tail > quadrature.abs_tol:
        raise ConvergenceError(f"Characteristic function is {tail:.3e} at |mu| = {mu_max:g}; raise mu_max")
    fine, _ = _correlation_at(sampler, x, xprime, np.linspace(-mu_max, mu_max, 2 * mu_count - 1), Y)
    change = abs(fine - coarse)
    logger.debug(f"Correlation at ({x:g}, {xprime:g}): mu doubling change {change:.3e}")
    if change > 10.0 * quadrature.abs_tol:
        raise ConvergenceError(f"Correlation at ({x:g}, {xprime:g}) did not converge (change {change:.3e})")
    return fine
