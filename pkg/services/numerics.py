"""
Numerics Service
Special functions and quadrature primitives shared by the beam, tomography and
entropy services: physicists' Hermite polynomials, Gauss-Hermite rules, the
Hermite-Gaussian integral identity and chirped line integrals.
"""

import math
import cmath
import logging
from dataclasses import dataclass, replace
from typing import Callable, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid

from services import config
from services.errors import ConvergenceError, DegenerateBranchError, ValidationError

logger = logging.getLogger(__name__)

BRANCH_EPS = 1e-10
MAX_GAUSS_HERMITE_ORDER = 200
MAX_REFINEMENTS = 3
MAX_NODES = 2 ** 21
CHUNK_ELEMENTS = 2 ** 22
# largest phase advance of the chirp between neighbouring nodes
MAX_PHASE_STEP = math.pi / 8

ArrayLike = Union[float, complex, np.ndarray]
LineFunction = Callable[[np.ndarray], np.ndarray]
SampledLine = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class QuadratureSpec:
    """Truncation range, node count and absolute tolerance for every numeric integral"""

    half_width: float = 12.0
    nodes_per_axis: int = 4096
    abs_tol: float = 1e-9

    def __post_init__(self):
        if not (self.half_width > 0 and math.isfinite(self.half_width)):
            raise ValidationError(f"half_width must be positive, got {self.half_width}")
        if self.nodes_per_axis < 2:
            raise ValidationError(f"nodes_per_axis must be >= 2, got {self.nodes_per_axis}")
        if not self.abs_tol > 0:
            raise ValidationError(f"abs_tol must be positive, got {self.abs_tol}")

    @classmethod
    def default(cls) -> 'QuadratureSpec':
        return cls(
            half_width=config.default_half_width(),
            nodes_per_axis=config.default_nodes(),
            abs_tol=config.default_abs_tol(),
        )

    @property
    def step(self) -> float:
        return 2.0 * self.half_width / (self.nodes_per_axis - 1)

    def covering(self, extent: float) -> 'QuadratureSpec':
        """Widen the box to at least +/- extent, keeping the node spacing"""
        if extent <= self.half_width:
            return self
        nodes = int(math.ceil((self.nodes_per_axis - 1) * extent / self.half_width)) + 1
        return replace(self, half_width=float(extent), nodes_per_axis=nodes)

    def refined(self) -> 'QuadratureSpec':
        return replace(self, nodes_per_axis=2 * self.nodes_per_axis - 1)


def _require_finite(x: ArrayLike, name: str = 'x'):
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} must be finite")


def hermite_poly(n: int, x: ArrayLike) -> ArrayLike:
    """
    Physicists' Hermite polynomial H_n by the three-term recurrence.

    Args:
        n: Polynomial order (>= 0)
        x: Real or complex argument, scalar or array

    Returns:
        H_n(x) with the dtype of x (float for real input)
    """
    if n < 0:
        raise ValidationError(f"Hermite order must be nonnegative, got {n}")
    _require_finite(x)
    x = np.asarray(x)
    if not np.iscomplexobj(x):
        x = x.astype(float)
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev[()]
    h = 2.0 * x
    for k in range(1, n):
        h_prev, h = h, 2.0 * x * h - 2.0 * k * h_prev
    return h[()]


def hermite_gaussian_integral(n: int, alpha: complex, beta: ArrayLike) -> ArrayLike:
    """
    Closed form of the integral of H_n(alpha*y) * exp(-(y - beta)**2) over the real line.

    Uses the principal branch of sqrt(1 - alpha**2). beta may be an array.
    """
    if n < 0:
        raise ValidationError(f"Hermite order must be nonnegative, got {n}")
    _require_finite(alpha, 'alpha')
    _require_finite(beta, 'beta')
    root_pi = math.sqrt(math.pi)
    beta = np.asarray(beta)
    if n == 0:
        return (root_pi * np.ones_like(beta, dtype=complex))[()]
    one_minus = 1.0 - complex(alpha) ** 2
    if abs(one_minus) < BRANCH_EPS:
        raise DegenerateBranchError(
            f"1 - alpha**2 = {one_minus:.3e} is within {BRANCH_EPS:g} of the branch point; "
            "fall back to direct quadrature"
        )
    s = cmath.sqrt(one_minus)
    return (root_pi * s ** n * hermite_poly(n, alpha * beta.astype(complex) / s))[()]


def gauss_hermite_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Hermite nodes and weights for the weight exp(-x**2).

    Physicists' convention (numpy.polynomial.hermite), so the weights sum to sqrt(pi).
    """
    if not 1 <= order <= MAX_GAUSS_HERMITE_ORDER:
        raise ValidationError(
            f"Gauss-Hermite order must be in [1, {MAX_GAUSS_HERMITE_ORDER}], got {order}"
        )
    nodes, weights = np.polynomial.hermite.hermgauss(order)
    return nodes, weights


def _chirp(x: np.ndarray, chirp_a: float, linear_b: np.ndarray) -> np.ndarray:
    # rows follow linear_b, columns follow x
    return np.exp(1j * (0.5 * chirp_a * x[np.newaxis, :] ** 2 + np.outer(linear_b, x)))


def _integrate_nodes(x: np.ndarray, fx: np.ndarray, chirp_a: float, linear_b: np.ndarray) -> np.ndarray:
    rows = max(1, CHUNK_ELEMENTS // x.size)
    out = np.empty(linear_b.size, dtype=complex)
    for start in range(0, linear_b.size, rows):
        chunk = linear_b[start:start + rows]
        out[start:start + rows] = trapezoid(_chirp(x, chirp_a, chunk) * fx[np.newaxis, :], x=x, axis=1)
    return out


def _resolving_nodes(spec: QuadratureSpec, chirp_a: float, linear_b: np.ndarray) -> int:
    # local frequency of the kernel at the box edge bounds the node spacing
    max_freq = abs(chirp_a) * spec.half_width + float(np.max(np.abs(linear_b)))
    needed = int(math.ceil(2.0 * spec.half_width * max_freq / MAX_PHASE_STEP)) + 1
    nodes = max(spec.nodes_per_axis, needed)
    if nodes > MAX_NODES:
        raise ConvergenceError(
            f"Chirp a={chirp_a:g} needs {nodes} nodes on +/-{spec.half_width:g}, above the {MAX_NODES} cap"
        )
    return nodes


def _sampled_line_integral(f: SampledLine, chirp_a: float, linear_b: np.ndarray,
                           spec: QuadratureSpec) -> np.ndarray:
    x, fx = (np.asarray(v) for v in f)
    if x.ndim != 1 or x.shape != fx.shape or x.size < 5:
        raise ValidationError("Sampled integrand needs matching 1D node and value arrays (>= 5 nodes)")
    full = _integrate_nodes(x, fx, chirp_a, linear_b)
    half = _integrate_nodes(x[::2], fx[::2], chirp_a, linear_b)
    change = float(np.max(np.abs(full - half)))
    logger.debug(f"Sampled line integral: node-halving change {change:.3e}")
    if change > 10.0 * spec.abs_tol:
        raise ConvergenceError(
            f"Sampled chirp integral unresolved on its grid (node-halving change {change:.3e})"
        )
    return full


def oscillatory_line_integral(f: Union[LineFunction, SampledLine], chirp_a: float,
                              linear_b: ArrayLike, spec: QuadratureSpec) -> ArrayLike:
    """
    Integral of f(x) * exp(i*(a*x**2/2 + b*x)) over [-half_width, half_width].

    Args:
        f: Vectorized callable, or a (nodes, values) pair on a uniform grid
        chirp_a: Quadratic phase coefficient a
        linear_b: Linear phase coefficient b, scalar or 1D array
        spec: Truncation, node count and tolerance

    Returns:
        Complex integral (array when linear_b is an array)
    """
    _require_finite(chirp_a, 'chirp_a')
    _require_finite(linear_b, 'linear_b')
    scalar = np.ndim(linear_b) == 0
    b = np.atleast_1d(np.asarray(linear_b, dtype=float))

    if not callable(f):
        result = _sampled_line_integral(f, chirp_a, b, spec)
        return result[0] if scalar else result

    edges = np.abs(f(np.array([-spec.half_width, spec.half_width])))
    if np.max(edges) > spec.abs_tol:
        raise ConvergenceError(
            f"Integrand is {np.max(edges):.3e} at the truncation edge +/-{spec.half_width:g}"
        )

    nodes = _resolving_nodes(spec, chirp_a, b)
    x = np.linspace(-spec.half_width, spec.half_width, nodes)
    previous = _integrate_nodes(x, f(x), chirp_a, b)
    change = math.inf
    for level in range(MAX_REFINEMENTS):
        nodes = 2 * nodes - 1
        if nodes > MAX_NODES:
            break
        x = np.linspace(-spec.half_width, spec.half_width, nodes)
        current = _integrate_nodes(x, f(x), chirp_a, b)
        change = float(np.max(np.abs(current - previous)))
        logger.debug(f"Node doubling to {nodes}: change {change:.3e}")
        previous = current
        if change <= spec.abs_tol:
            break
    if change > 10.0 * spec.abs_tol:
        raise ConvergenceError(
            f"Chirped line integral did not converge (last node-doubling change {change:.3e})"
        )
    if change > spec.abs_tol:
        logger.warning(f"Chirped line integral accepted at change {change:.3e} > abs_tol {spec.abs_tol:g}")
    return previous[0] if scalar else previous
