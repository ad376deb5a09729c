"""
Entropy Service
Shannon entropies of symplectic, optical and Fresnel tomograms, the
position-momentum entropic bound and the R(theta1, theta2) uncertainty surface.

All entropies are in nats.
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from services import config
from services.beam_model import AxisSupport, HGModeSpec, SampledField, axis_support, fourier_transform
from services.errors import ConvergenceError, ValidationError
from services.numerics import QuadratureSpec
from services.tomography_service import (
    OpticalAngles, Source, TomogramQuery, line_tomogram_hg, sampled_tomogram_grid,
)

logger = logging.getLogger(__name__)

LN_PI_E = math.log(math.pi * math.e)
W_FLOOR = 1e-300
ENTROPY_TOL = 1e-4
R_TOLERANCE = -1e-4
BOX_INFLATION = 1.5
TAIL_WIDTHS = 8.0
# X nodes before doubling: quadrature nodes_per_axis over these divisors (513 and 129 by default)
LINE_NODE_DIVISOR = 8
FIELD_NODE_DIVISOR = 32
MIN_NODES = 33
# node doubling stops once H moves by less than this many abs_tol
LINE_STOP = 100.0
FIELD_STOP = 1000.0
MAX_DOUBLINGS = 4
DEFAULT_SCAN = 32
# grid refinement for the entropies of |psi|^2 and |psi~|^2
REFINEMENT = 4


@dataclass(frozen=True)
class EntropyValue:
    value: float
    estimated_error: float

    def __add__(self, other: 'EntropyValue') -> 'EntropyValue':
        return EntropyValue(self.value + other.value, self.estimated_error + other.estimated_error)


@dataclass(frozen=True)
class RSurface:
    """R(theta1_i, theta2_j) in nats on a uniform lattice over [0, pi)^2"""

    theta1_grid: np.ndarray
    theta2_grid: np.ndarray
    values: np.ndarray
    mode_meta: Optional[Tuple[int, int, float]] = None

    def summary(self) -> Dict[str, float]:
        return {
            'min': float(np.min(self.values)),
            'mean': float(np.mean(self.values)),
            'max': float(np.max(self.values)),
        }

    def rows(self):
        """(theta1, theta2, R) in theta1-major order"""
        for i, t1 in enumerate(self.theta1_grid):
            for j, t2 in enumerate(self.theta2_grid):
                yield float(t1), float(t2), float(self.values[i, j])


def _entropy_integrand(w: np.ndarray) -> np.ndarray:
    # 0 ln 0 = 0; values under the floor have underflowed before contributing
    safe = np.where(w > W_FLOOR, w, 1.0)
    return np.where(w > W_FLOOR, -w * np.log(safe), 0.0)


def _differential_entropy(w: np.ndarray, cell: float) -> float:
    return float(np.sum(_entropy_integrand(w)) * cell)


def line_entropy(n: int, sigma0: float, mu: float, nu: float,
                 quadrature: Optional[QuadratureSpec] = None) -> EntropyValue:
    """
    Entropy of the 1D Hermite-Gauss tomogram at (mu, nu), by trapezoid quadrature
    with node doubling on a box scaled to the spread of X = mu x + nu p.

    The box is the tomogram's truncation box (half_width, widened to the mode's
    extent) inflated by BOX_INFLATION; nodes and the doubling stop follow the
    quadrature settings.
    """
    quadrature = quadrature or QuadratureSpec.default()
    box = quadrature.covering(sigma0 * (math.sqrt(2 * n + 1) + TAIL_WIDTHS))
    spread = math.sqrt((mu * sigma0 / 2.0) ** 2 + (nu / sigma0) ** 2)
    half = BOX_INFLATION * (box.half_width / sigma0) * spread
    nodes = max(MIN_NODES, quadrature.nodes_per_axis // LINE_NODE_DIVISOR + 1)
    X = np.linspace(-half, half, nodes)
    previous = trapezoid(_entropy_integrand(line_tomogram_hg(n, sigma0, X, mu, nu)), X)
    change = math.inf
    for _ in range(MAX_DOUBLINGS):
        nodes = 2 * nodes - 1
        X = np.linspace(-half, half, nodes)
        current = trapezoid(_entropy_integrand(line_tomogram_hg(n, sigma0, X, mu, nu)), X)
        change = abs(current - previous)
        previous = current
        if change <= LINE_STOP * quadrature.abs_tol:
            break
    if change > ENTROPY_TOL:
        raise ConvergenceError(f"Entropy of HG{n} at (mu={mu:g}, nu={nu:g}) did not converge (change {change:.3e})")
    return EntropyValue(float(previous), float(change))


def _sampled_box(support: AxisSupport, mu: float, nu: float) -> Tuple[float, float]:
    centre = mu * support.x_center + nu * support.p_center
    half = BOX_INFLATION * (abs(mu) * support.x_half + abs(nu) * support.p_half)
    return centre, half


def sampled_x_box(source: SampledField, mu1: float, nu1: float, mu2: float,
                  nu2: float) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    """(centre, half-width) of the X1 and X2 ranges holding a sampled field's tomogram"""
    s1 = axis_support(source.amplitudes, source.x1_grid, 0)
    s2 = axis_support(source.amplitudes, source.x2_grid, 1)
    return _sampled_box(s1, mu1, nu1), _sampled_box(s2, mu2, nu2)


def _grid_entropy(source: SampledField, X1: np.ndarray, X2: np.ndarray,
                  mu1: float, nu1: float, mu2: float, nu2: float) -> Tuple[float, float]:
    w = sampled_tomogram_grid(source, X1, X2, mu1, nu1, mu2, nu2)
    entropy = trapezoid(trapezoid(_entropy_integrand(w), X2, axis=1), X1)
    mass = trapezoid(trapezoid(w, X2, axis=1), X1)
    return float(entropy), float(mass)


def _sampled_entropy(source: SampledField, mu1: float, nu1: float, mu2: float, nu2: float,
                     quadrature: QuadratureSpec) -> EntropyValue:
    (c1, h1), (c2, h2) = sampled_x_box(source, mu1, nu1, mu2, nu2)
    nodes = max(MIN_NODES, quadrature.nodes_per_axis // FIELD_NODE_DIVISOR + 1)
    previous = None
    change = math.inf
    for _ in range(MAX_DOUBLINGS):
        X1 = np.linspace(c1 - h1, c1 + h1, nodes)
        X2 = np.linspace(c2 - h2, c2 + h2, nodes)
        current, mass = _grid_entropy(source, X1, X2, mu1, nu1, mu2, nu2)
        if previous is not None:
            change = abs(current - previous)
            logger.debug(f"Sampled entropy with {nodes}^2 X nodes: change {change:.3e}")
            if change <= FIELD_STOP * quadrature.abs_tol:
                previous = current
                break
        previous = current
        nodes = 2 * nodes - 1
    where = f"(mu, nu) = ({mu1:g}, {nu1:g}), ({mu2:g}, {nu2:g})"
    if change > ENTROPY_TOL:
        raise ConvergenceError(f"Sampled tomographic entropy at {where} did not converge (change {change:.3e})")
    if abs(mass - 1.0) > ENTROPY_TOL:
        raise ConvergenceError(f"Tomogram box holds mass {mass:.6f} at {where}")
    # the same X nodes from every other field node: an unresolved field moves H
    halved, _ = _grid_entropy(source.every_other(), X1, X2, mu1, nu1, mu2, nu2)
    grid_change = abs(halved - previous)
    if grid_change > ENTROPY_TOL:
        raise ConvergenceError(
            f"Sampled tomographic entropy at {where} changes by {grid_change:.3e} on every other "
            "field node; the field grid is too coarse"
        )
    return EntropyValue(float(previous), float(change + grid_change))


def tomographic_entropy(source: Source, mu1: float, nu1: float, mu2: float, nu2: float,
                        quadrature: Optional[QuadratureSpec] = None) -> EntropyValue:
    """
    H(mu1, nu1, mu2, nu2) = - integral of w ln w over X1, X2.

    HG modes are separable, so H is the sum of two 1D entropies; sampled fields
    are integrated on a 2D X grid.
    """
    TomogramQuery(0.0, mu1, nu1, 0.0, mu2, nu2)
    quadrature = quadrature or QuadratureSpec.default()
    if isinstance(source, HGModeSpec):
        return (line_entropy(source.n, source.sigma0, mu1, nu1, quadrature)
                + line_entropy(source.m, source.sigma0, mu2, nu2, quadrature))
    source.require_normalized()
    return _sampled_entropy(source, mu1, nu1, mu2, nu2, quadrature)


def optical_entropy(source: Source, angles: OpticalAngles,
                    quadrature: Optional[QuadratureSpec] = None) -> EntropyValue:
    """H_opt(theta1, theta2): tomographic entropy at (cos theta, sin theta) per axis"""
    mu1, nu1, mu2, nu2 = angles.symplectic()
    return tomographic_entropy(source, mu1, nu1, mu2, nu2, quadrature)


def fresnel_entropy(source: Source, nu1: float, nu2: float,
                    quadrature: Optional[QuadratureSpec] = None) -> EntropyValue:
    if nu1 == 0 or nu2 == 0:
        raise ValidationError(f"Fresnel entropy needs nonzero nu1, nu2, got ({nu1}, {nu2})")
    return tomographic_entropy(source, 1.0, nu1, 1.0, nu2, quadrature)


def position_momentum_entropy_sum(source: SampledField) -> Tuple[float, float, float]:
    """
    Entropies of |psi|^2 and |psi~|^2 and their slack above 2 ln(pi e).

    Returns:
        (Hx, Hp, slack)
    """
    source.require_normalized()

    def entropies(f: SampledField) -> Tuple[float, float]:
        spectral = fourier_transform(f.padded(REFINEMENT))
        fine = f.interpolated(REFINEMENT)
        hx = _differential_entropy(fine.intensity(), fine.cell_area)
        hp = _differential_entropy(spectral.intensity(), spectral.cell_area)
        return hx, hp

    hx, hp = entropies(source)
    coarse = source.every_other()
    if not coarse.is_normalized():
        logger.debug(f"Every-other-node grid has norm {coarse.norm_tag:.9f}; renormalizing it for the estimate")
        coarse = coarse.normalize()
    hx_c, hp_c = entropies(coarse)
    # third-order error at intensity zeros: the fine grid is off by change / 7
    estimated = abs(hx + hp - hx_c - hp_c) / 7.0
    if estimated > ENTROPY_TOL:
        raise ConvergenceError(
            f"Position-momentum entropies unresolved on the grid (estimated error {estimated:.3e})"
        )
    slack = hx + hp - 2.0 * LN_PI_E
    logger.debug(f"Hx={hx:.8f} Hp={hp:.8f} slack={slack:.3e}")
    return hx, hp, slack


def gaussian_reference_entropy(sigma0: float, angles: OpticalAngles) -> float:
    """Closed-form H_opt of the ground mode: sum of 0.5 ln(2 pi e Var(theta))"""
    total = 0.0
    for theta in (angles.theta1, angles.theta2):
        variance = (sigma0 ** 2 / 4.0) * math.cos(theta) ** 2 + math.sin(theta) ** 2 / sigma0 ** 2
        total += 0.5 * math.log(2.0 * math.pi * math.e * variance)
    return total


def r_function(source: Source, angles: OpticalAngles,
               quadrature: Optional[QuadratureSpec] = None) -> float:
    """R(theta1, theta2) = H_opt(theta) + H_opt(theta + pi/2) - 2 ln(pi e)"""
    h = optical_entropy(source, angles, quadrature)
    h_conj = optical_entropy(source, angles.shifted(math.pi / 2.0), quadrature)
    return h.value + h_conj.value - 2.0 * LN_PI_E


def _worker_count(threads: Optional[int]) -> int:
    cap = config.scan_threads()
    return max(1, min(threads or cap, cap))


def _angle_key(theta: float) -> float:
    return round(OpticalAngles(theta, 0.0).theta1, 12)


def _separable_surface(spec: HGModeSpec, thetas: np.ndarray, workers: int,
                       quadrature: Optional[QuadratureSpec]) -> np.ndarray:
    conj = np.array([OpticalAngles(t + math.pi / 2.0, 0.0).theta1 for t in thetas])
    needed = sorted({(order, _angle_key(t)) for order in {spec.n, spec.m} for t in np.concatenate([thetas, conj])})

    def evaluate(item):
        order, theta = item
        nu = 0.0 if theta == 0.0 else math.sin(theta)
        return line_entropy(order, spec.sigma0, math.cos(theta), nu, quadrature).value

    with ThreadPoolExecutor(max_workers=workers) as pool:
        table = dict(zip(needed, pool.map(evaluate, needed)))

    def axis_term(order: int) -> np.ndarray:
        return np.array([table[(order, _angle_key(t))] + table[(order, _angle_key(c))] - LN_PI_E
                         for t, c in zip(thetas, conj)])

    return axis_term(spec.n)[:, np.newaxis] + axis_term(spec.m)[np.newaxis, :]


def r_surface_scan(source: Source, grid_n: int = DEFAULT_SCAN,
                   quadrature: Optional[QuadratureSpec] = None,
                   threads: Optional[int] = None) -> RSurface:
    """
    R(theta1, theta2) on a grid_n x grid_n lattice theta = k pi / grid_n.

    Lattice points are evaluated in parallel (capped by BEAMTOMO_THREADS); the
    output ordering is theta1-major regardless of completion order.
    """
    if grid_n < 2:
        raise ValidationError(f"Scan grid needs at least 2 points per axis, got {grid_n}")
    thetas = np.arange(grid_n) * math.pi / grid_n
    workers = _worker_count(threads)
    logger.info(f"Scanning R on {grid_n}x{grid_n} angles with {workers} worker(s)")

    if isinstance(source, HGModeSpec):
        values = _separable_surface(source, thetas, workers, quadrature)
        meta = (source.n, source.m, source.sigma0)
    else:
        source.require_normalized()
        points = [(i, j) for i in range(grid_n) for j in range(grid_n)]

        def evaluate(point):
            i, j = point
            return r_function(source, OpticalAngles(thetas[i], thetas[j]), quadrature)

        with ThreadPoolExecutor(max_workers=workers) as pool:
            flat = list(pool.map(evaluate, points))
        values = np.array(flat).reshape(grid_n, grid_n)
        meta = None

    surface = RSurface(thetas, thetas.copy(), values, meta)
    summary = surface.summary()
    logger.info(f"R surface: min {summary['min']:.3e}, mean {summary['mean']:.6f}, max {summary['max']:.6f}")
    return surface
