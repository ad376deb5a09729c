"""
Verification Service
Runs the invariant suite behind the `check` command: tomogram normalization,
homogeneity, conversion identities, closed form against quadrature, the
position-momentum entropic bound and nonnegativity of the R surface.
"""

import math
import logging
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.integrate import trapezoid

from services.beam_model import HGModeSpec, SampledField, sample
from services.entropy_service import (
    R_TOLERANCE, ENTROPY_TOL, gaussian_reference_entropy, optical_entropy,
    position_momentum_entropy_sum, r_surface_scan, sampled_x_box,
)
from services.errors import BeamTomoError, InvariantViolation
from services.numerics import QuadratureSpec
from services.tomography_service import (
    OpticalAngles, Source, TomogramQuery, line_tomogram_hg, optical_tomogram,
    sampled_tomogram_grid, symplectic_from_fresnel, symplectic_from_optical, symplectic_tomogram,
    symplectic_tomogram_hg, symplectic_tomogram_numeric,
)

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-6
IDENTITY_TOL = 1e-8
ORACLE_ABS_TOL = 1e-8
ORACLE_REL_TOL = 1e-6
GAUSSIAN_ENTROPY_TOL = 1e-5
SEED = 20080530


def fixed_queries(count: int, seed: int = SEED, positive_mu: bool = False) -> List[TomogramQuery]:
    """Deterministic nondegenerate queries with |nu| in [0.3, 2]"""
    rng = np.random.default_rng(seed)
    queries = []
    while len(queries) < count:
        X1, X2 = rng.uniform(-2.0, 2.0, size=2)
        mu1, mu2 = rng.uniform(0.2, 2.0, size=2) if positive_mu else rng.uniform(-2.0, 2.0, size=2)
        nu1, nu2 = rng.uniform(0.3, 2.0, size=2) * rng.choice([-1.0, 1.0], size=2)
        queries.append(TomogramQuery(float(X1), float(mu1), float(nu1), float(X2), float(mu2), float(nu2)))
    return queries


def _result(name: str, max_error: Optional[float], tolerance: Optional[float], success: bool,
            detail: str = '', skipped: bool = False, error: Optional[BeamTomoError] = None) -> Dict[str, Any]:
    if error is not None:
        exit_code = error.exit_code
    else:
        exit_code = 0 if success else InvariantViolation.exit_code
    return {
        'name': name,
        'success': bool(success),
        'skipped': skipped,
        'max_error': None if max_error is None else float(max_error),
        'tolerance': tolerance,
        'detail': detail,
        'error': None if error is None else type(error).__name__,
        'exit_code': exit_code,
    }


def _line_mass(n: int, sigma0: float, mu: float, nu: float) -> float:
    spread = math.sqrt((mu * sigma0 / 2.0) ** 2 + (nu / sigma0) ** 2)
    half = 1.5 * (math.sqrt(2 * n + 1) + 8.0) * spread
    X = np.linspace(-half, half, 4097)
    return float(trapezoid(line_tomogram_hg(n, sigma0, X, mu, nu), X))


class VerificationService:
    """Invariant checks for one source (HG mode or sampled field)"""

    def __init__(self, source: Source, quadrature: Optional[QuadratureSpec] = None,
                 scan_grid: int = 16, threads: Optional[int] = None):
        self.source = source
        self.quadrature = quadrature or QuadratureSpec.default()
        self.scan_grid = scan_grid
        self.threads = threads
        self.is_mode = isinstance(source, HGModeSpec)
        self.surface = None

    def _mass(self, mu1: float, nu1: float, mu2: float, nu2: float) -> float:
        if self.is_mode:
            spec = self.source
            return _line_mass(spec.n, spec.sigma0, mu1, nu1) * _line_mass(spec.m, spec.sigma0, mu2, nu2)
        field: SampledField = self.source
        (c1, h1), (c2, h2) = sampled_x_box(field, mu1, nu1, mu2, nu2)
        X1 = np.linspace(c1 - h1, c1 + h1, 513)
        X2 = np.linspace(c2 - h2, c2 + h2, 513)
        w = sampled_tomogram_grid(field, X1, X2, mu1, nu1, mu2, nu2)
        return float(trapezoid(trapezoid(w, X2, axis=1), X1))

    def check_normalization(self) -> Dict[str, Any]:
        """Integral of w over X1, X2 is 1 for symplectic, optical and Fresnel tomograms"""
        count = 10 if self.is_mode else 2
        parameter_sets = [(q.mu1, q.nu1, q.mu2, q.nu2) for q in fixed_queries(count)]
        parameter_sets += [OpticalAngles(0.3 * k, 0.7 * k).symplectic() for k in range(1, 4)]
        parameter_sets += [(1.0, 0.5 * k, 1.0, -0.4 * k) for k in range(1, 3)]
        errors = [abs(self._mass(*p) - 1.0) for p in parameter_sets]
        worst = max(errors)
        return _result('normalization', worst, NORMALIZATION_TOL, worst <= NORMALIZATION_TOL,
                       f"{len(parameter_sets)} (mu, nu) sets")

    def check_homogeneity(self) -> Dict[str, Any]:
        """w(l1 X1, l1 mu1, l1 nu1, l2 ...) = w(...) / |l1 l2|"""
        rng = np.random.default_rng(SEED + 1)
        errors = []
        for query in fixed_queries(10 if self.is_mode else 3, SEED + 2):
            l1, l2 = rng.uniform(0.5, 3.0, size=2) * rng.choice([-1.0, 1.0], size=2)
            lhs = symplectic_tomogram(self.source, query.scaled(l1, l2), self.quadrature)
            rhs = symplectic_tomogram(self.source, query, self.quadrature) / abs(l1 * l2)
            errors.append(abs(lhs - rhs))
        worst = max(errors)
        return _result('homogeneity', worst, IDENTITY_TOL, worst <= IDENTITY_TOL, f"{len(errors)} scalings")

    def check_conversions(self) -> Dict[str, Any]:
        """Optical, Fresnel and symplectic tomograms agree through their conversion formulas"""
        errors = []
        for query in fixed_queries(10 if self.is_mode else 3, SEED + 3, positive_mu=True):
            direct = symplectic_tomogram(self.source, query, self.quadrature)
            errors.append(abs(symplectic_from_optical(self.source, query, self.quadrature) - direct))
            errors.append(abs(symplectic_from_fresnel(self.source, query, self.quadrature) - direct))
            angles = OpticalAngles(0.5 + query.mu1, 1.0 + query.mu2)
            mu1, nu1, mu2, nu2 = angles.symplectic()
            via_symplectic = symplectic_tomogram(
                self.source, TomogramQuery(query.X1, mu1, nu1, query.X2, mu2, nu2), self.quadrature)
            errors.append(abs(optical_tomogram(self.source, query.X1, angles, query.X2, self.quadrature)
                              - via_symplectic))
        worst = max(errors)
        return _result('conversions', worst, IDENTITY_TOL, worst <= IDENTITY_TOL, f"{len(errors)} identities")

    def check_oracle(self, count: int = 20) -> Dict[str, Any]:
        """Closed-form HG tomogram against direct quadrature of the Fresnel integral"""
        if not self.is_mode:
            return _result('oracle', None, None, True, 'no closed form for sampled fields', skipped=True)
        worst = 0.0
        for query in fixed_queries(count, SEED + 4):
            closed = symplectic_tomogram_hg(self.source, query)
            numeric = symplectic_tomogram_numeric(self.source, query, self.quadrature)
            allowed = max(ORACLE_ABS_TOL, ORACLE_REL_TOL * abs(numeric))
            worst = max(worst, abs(closed - numeric) / allowed)
        return _result('oracle', worst, 1.0, worst <= 1.0,
                       f"{count} queries; error in units of max(1e-8, 1e-6 |w|)")

    def check_entropic_bound(self) -> Dict[str, Any]:
        """Hx + Hp >= 2 ln(pi e), saturated by the ground mode"""
        field = sample(self.source) if self.is_mode else self.source
        hx, hp, slack = position_momentum_entropy_sum(field)
        ground = self.is_mode and self.source.n == 0 and self.source.m == 0
        ok = slack >= R_TOLERANCE and (not ground or abs(slack) <= ENTROPY_TOL)
        detail = f"Hx={hx:.6f} Hp={hp:.6f} slack={slack:.3e}" + (' (ground mode saturates)' if ground else '')
        return _result('entropic_bound', -min(slack, 0.0), -R_TOLERANCE, ok, detail)

    def check_gaussian_entropy(self) -> Dict[str, Any]:
        """Quadrature H_opt of the ground mode against its closed form"""
        if not (self.is_mode and self.source.n == 0 and self.source.m == 0):
            return _result('gaussian_entropy', None, None, True, 'ground mode only', skipped=True)
        errors = []
        for k in range(8):
            angles = OpticalAngles(k * math.pi / 8.0, (7 - k) * math.pi / 8.0)
            value = optical_entropy(self.source, angles, self.quadrature).value
            errors.append(abs(value - gaussian_reference_entropy(self.source.sigma0, angles)))
        worst = max(errors)
        return _result('gaussian_entropy', worst, GAUSSIAN_ENTROPY_TOL, worst <= GAUSSIAN_ENTROPY_TOL, '8 angle pairs')

    def check_r_surface(self) -> Dict[str, Any]:
        """R(theta1, theta2) >= 0 over the scan lattice"""
        self.surface = r_surface_scan(self.source, self.scan_grid, self.quadrature, self.threads)
        summary = self.surface.summary()
        detail = f"min {summary['min']:.3e}, mean {summary['mean']:.6f}, max {summary['max']:.6f}"
        if max(abs(summary['min']), abs(summary['max'])) <= -R_TOLERANCE:
            detail += '; R ≈ 0 everywhere'
        return _result('r_nonnegative', -min(summary['min'], 0.0), -R_TOLERANCE,
                       summary['min'] >= R_TOLERANCE, detail)

    def run_all(self) -> Dict[str, Any]:
        """
        Run every check; a check that raises is reported as failed.

        The report's exit_code is 0 when all pass, 3 when any check ran and
        failed, otherwise the exit code of the errors the checks raised (2 when
        they only failed to converge).
        """
        checks = [
            self.check_normalization, self.check_homogeneity, self.check_conversions,
            self.check_oracle, self.check_entropic_bound, self.check_gaussian_entropy,
            self.check_r_surface,
        ]
        results = []
        for check in checks:
            name = check.__name__.replace('check_', '')
            logger.info(f"Running check: {name}")
            try:
                results.append(check())
            except BeamTomoError as e:
                logger.error(f"Check {name} raised: {e}")
                results.append(_result(name, None, None, False, f"{type(e).__name__}: {e}", error=e))
        success = all(r['success'] for r in results)
        codes = {r['exit_code'] for r in results if not r['success']}
        if not codes:
            exit_code = 0
        elif InvariantViolation.exit_code in codes:
            exit_code = InvariantViolation.exit_code
        else:
            exit_code = max(codes)
        logger.info(f"Verification {'passed' if success else 'FAILED'} ({len(results)} checks)")
        return {
            'success': success,
            'exit_code': exit_code,
            'results': results,
            'r_summary': None if self.surface is None else self.surface.summary(),
        }
