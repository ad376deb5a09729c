#!/usr/bin/env python3
"""
Beam tomography command line.
Builds Hermite-Gauss modes (or reads sampled fields), evaluates tomograms and
tomographic entropies, scans the R(theta1, theta2) surface, reconstructs 1D
correlations and runs the invariant suite.

Exit codes: 0 ok, 1 validation failure, 2 numerical non-convergence,
3 invariant violation.
"""

import sys
import math
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import click
from dotenv import load_dotenv

from services import config
from services.beam_model import HGModeSpec, read_field, sample, tail_grid
from services.entropy_service import (
    R_TOLERANCE, DEFAULT_SCAN, fresnel_entropy, optical_entropy, r_surface_scan, tomographic_entropy,
)
from services.errors import BeamTomoError, ConvergenceError, InvariantViolation, ValidationError
from services.numerics import QuadratureSpec
from services import report_service
from services.tomography_service import (
    LineTomogramSampler, OpticalAngles, TomogramQuery, reconstruct_correlation_1d, symplectic_tomogram,
    symplectic_tomogram_numeric,
)
from services.verification_service import VerificationService

load_dotenv()

logger = logging.getLogger(__name__)

COMMANDS = ('tomogram', 'entropy', 'rsurface', 'reconstruct', 'check', 'sample')
FORMATS = ('csv', 'json')


@dataclass
class RunConfig:
    """Everything one CLI invocation needs"""

    command: str
    mode: Optional[HGModeSpec] = None
    field_path: Optional[Path] = None
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec.default)
    output: Optional[Path] = None
    output_format: Optional[str] = None
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValidationError(f"Unknown command {self.command!r}")
        if (self.mode is None) == (self.field_path is None):
            raise ValidationError("Give exactly one source: an analytic mode or --field")
        if self.output_format is None:
            suffix = self.output.suffix.lower().lstrip('.') if self.output else ''
            self.output_format = suffix if suffix in FORMATS else 'csv'
        if self.output_format not in FORMATS:
            raise ValidationError(f"Output format must be one of {FORMATS}, got {self.output_format!r}")
        if self.command == 'check' and self.output is not None and self.output_format != 'json':
            raise ValidationError("check writes its report as json")
        if self.command == 'sample' and self.output is None:
            raise ValidationError("sample needs --out")

    def load_source(self):
        if self.mode is not None:
            return self.mode
        loaded = read_field(self.field_path)
        if not loaded.is_normalized():
            logger.warning(f"Field {self.field_path} has norm {loaded.norm_tag:.6g}; renormalizing")
        return loaded.normalize()

    def source_meta(self) -> Dict[str, Any]:
        if self.mode is not None:
            return {'n': self.mode.n, 'm': self.mode.m, 'sigma0': self.mode.sigma0,
                    'lambda': self.mode.wavelength}
        return {'field': str(self.field_path)}


def _emit(cfg: RunConfig, text: str):
    if cfg.output is None:
        click.echo(text, nl=False)
    else:
        report_service.atomic_write_text(cfg.output, text)


def _run_tomogram(cfg: RunConfig, source) -> int:
    queries: List[TomogramQuery] = cfg.params['queries']
    method = cfg.params.get('method', 'auto')
    if method == 'numeric':
        results = [(q, symplectic_tomogram_numeric(source, q, cfg.quadrature)) for q in queries]
    else:
        results = [(q, symplectic_tomogram(source, q, cfg.quadrature)) for q in queries]
    if cfg.output_format == 'json':
        _emit(cfg, report_service.tomogram_json(results, cfg.source_meta()))
    else:
        _emit(cfg, report_service.tomogram_csv(results))
    return 0


def _run_entropy(cfg: RunConfig, source) -> int:
    p = cfg.params
    if p.get('theta1') is not None:
        angles = OpticalAngles(p['theta1'], p['theta2'])
        value = optical_entropy(source, angles, cfg.quadrature)
        row = {'theta1': angles.theta1, 'theta2': angles.theta2}
    elif p.get('fresnel'):
        value = fresnel_entropy(source, p['nu1'], p['nu2'], cfg.quadrature)
        row = {'nu1': p['nu1'], 'nu2': p['nu2']}
    else:
        value = tomographic_entropy(source, p['mu1'], p['nu1'], p['mu2'], p['nu2'], cfg.quadrature)
        row = {'mu1': p['mu1'], 'nu1': p['nu1'], 'mu2': p['mu2'], 'nu2': p['nu2']}
    row.update({'H': value.value, 'estimated_error': value.estimated_error})
    if cfg.output_format == 'json':
        _emit(cfg, report_service.check_json({'source': cfg.source_meta(), 'entropy': row}))
    else:
        _emit(cfg, report_service.entropy_csv([row]))
    return 0


def _run_rsurface(cfg: RunConfig, source) -> int:
    surface = r_surface_scan(source, cfg.params.get('grid', DEFAULT_SCAN), cfg.quadrature,
                             cfg.params.get('threads'))
    if cfg.output_format == 'json':
        _emit(cfg, report_service.rsurface_json(surface, cfg.source_meta()))
    else:
        _emit(cfg, report_service.rsurface_csv(surface))
    summary = surface.summary()
    if summary['min'] < R_TOLERANCE:
        raise InvariantViolation(f"R surface dips to {summary['min']:.3e} < {R_TOLERANCE:g}")
    return 0


def _run_reconstruct(cfg: RunConfig, source) -> int:
    if not isinstance(source, HGModeSpec):
        raise ValidationError("reconstruct works on the 1D factor of an analytic mode")
    sampler = LineTomogramSampler(source.n, source.sigma0)
    xprime = cfg.params.get('xprime')
    rows: List[Tuple[float, float, complex]] = []
    for x in cfg.params['xs']:
        xp = x if xprime is None else xprime
        rows.append((x, xp, reconstruct_correlation_1d(sampler, x, xp, cfg.quadrature)))
    if cfg.output_format == 'json':
        _emit(cfg, report_service.correlation_json(rows, cfg.source_meta()))
    else:
        _emit(cfg, report_service.correlation_csv(rows))
    return 0


def _run_check(cfg: RunConfig, source) -> int:
    service = VerificationService(source, cfg.quadrature, cfg.params.get('grid', 16), cfg.params.get('threads'))
    report = service.run_all()
    report['source'] = cfg.source_meta()
    for result in report['results']:
        status = 'skip' if result['skipped'] else ('ok' if result['success'] else 'FAIL')
        click.echo(f"[{status:>4}] {result['name']}: {result['detail']}")
    if cfg.output is not None:
        report_service.atomic_write_text(cfg.output, report_service.check_json(report))
    if cfg.params.get('report'):
        report_service.atomic_write_bytes(cfg.params['report'], report_service.check_pdf(report))
    if report['exit_code'] == ConvergenceError.exit_code:
        raise ConvergenceError("One or more checks did not converge")
    if not report['success']:
        raise InvariantViolation("One or more invariant checks failed")
    return 0


def _run_sample(cfg: RunConfig, source) -> int:
    if not isinstance(source, HGModeSpec):
        raise ValidationError("sample needs an analytic mode")
    points = cfg.params.get('points')
    report_service.write_field(sample(source, tail_grid(source, points)), cfg.output)
    return 0


RUNNERS = {
    'tomogram': _run_tomogram,
    'entropy': _run_entropy,
    'rsurface': _run_rsurface,
    'reconstruct': _run_reconstruct,
    'check': _run_check,
    'sample': _run_sample,
}


def run(cfg: RunConfig) -> int:
    """
    Execute one command.

    Returns:
        Process exit status (0 ok, 1 validation, 2 non-convergence, 3 invariant violation)
    """
    try:
        source = cfg.load_source()
        logger.info(f"Running {cfg.command} on {cfg.source_meta()}")
        return RUNNERS[cfg.command](cfg, source)
    except BeamTomoError as e:
        logger.error(f"{cfg.command} failed: {e}")
        click.echo(f"Error: {e}", err=True)
        return e.exit_code


def _source_options(func):
    options = [
        click.option('--n', type=int, default=None, help='HG order along x1'),
        click.option('--m', type=int, default=None, help='HG order along x2'),
        click.option('--sigma0', type=float, default=None, help='Waist width sigma0 (required unless --field)'),
        click.option('--lambda', 'wavelength', type=float, default=2.0 * math.pi, show_default='2pi',
                     help='Wavelength (only used by propagation geometry)'),
        click.option('--field', 'field_path', type=click.Path(path_type=Path), default=None,
                     help='Sampled field file instead of an analytic mode'),
        click.option('--half-width', type=float, default=None, help='Quadrature truncation half-width'),
        click.option('--nodes', type=int, default=None, help='Quadrature nodes per axis'),
        click.option('--abs-tol', type=float, default=None, help='Quadrature absolute tolerance'),
        click.option('--out', 'output', type=click.Path(path_type=Path), default=None, help='Output file'),
        click.option('--format', 'output_format', type=click.Choice(FORMATS), default=None,
                     help='Output format (default from --out suffix, else csv)'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _build_config(command: str, n, m, sigma0, wavelength, field_path, half_width, nodes, abs_tol,
                  output, output_format, **params) -> RunConfig:
    mode = None
    if field_path is None:
        if sigma0 is None:
            raise ValidationError("Give a source: --sigma0 (with --n/--m) for an HG mode, or --field")
        mode = HGModeSpec(n or 0, m or 0, sigma0, wavelength)
    elif any(v is not None for v in (n, m, sigma0)):
        raise ValidationError("--field cannot be combined with --n/--m/--sigma0")
    base = QuadratureSpec.default()
    quadrature = QuadratureSpec(
        half_width=base.half_width if half_width is None else half_width,
        nodes_per_axis=base.nodes_per_axis if nodes is None else nodes,
        abs_tol=base.abs_tol if abs_tol is None else abs_tol,
    )
    return RunConfig(command, mode, field_path, quadrature, output, output_format, params)


@click.group()
@click.option('--log-level', type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR']), default=None,
              help='Logging level (default BEAMTOMO_LOG_LEVEL or INFO)')
def cli(log_level):
    """Tomograms, tomographic entropies and entropic uncertainty checks for paraxial beam modes."""
    logging.basicConfig(level=log_level or config.log_level(),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


@cli.command()
@_source_options
@click.option('--query', 'query_texts', multiple=True, help='X1,mu1,nu1,X2,mu2,nu2 (repeatable)')
@click.option('--x1', 'x1', type=float, default=0.0, help='X1 (with --mu1/--nu1/--mu2/--nu2)')
@click.option('--x2', 'x2', type=float, default=0.0, help='X2 (with --mu1/--nu1/--mu2/--nu2)')
@click.option('--mu1', type=float, default=None)
@click.option('--nu1', type=float, default=None)
@click.option('--mu2', type=float, default=None)
@click.option('--nu2', type=float, default=None)
@click.option('--method', type=click.Choice(['auto', 'numeric']), default='auto',
              help='auto: closed form for modes; numeric: direct quadrature')
def tomogram(query_texts, x1, x2, mu1, nu1, mu2, nu2, method, **source):
    """Evaluate the symplectic tomogram at one or more queries."""
    queries = [TomogramQuery.parse(t) for t in query_texts]
    if all(v is not None for v in (mu1, nu1, mu2, nu2)):
        queries.append(TomogramQuery(x1, mu1, nu1, x2, mu2, nu2))
    if not queries:
        raise ValidationError("Give --query or all of --mu1/--nu1/--mu2/--nu2")
    return run(_build_config('tomogram', **source, queries=queries, method=method))


@cli.command()
@_source_options
@click.option('--mu1', type=float, default=None)
@click.option('--nu1', type=float, default=None)
@click.option('--mu2', type=float, default=None)
@click.option('--nu2', type=float, default=None)
@click.option('--theta1', type=float, default=None, help='Optical angle (radians)')
@click.option('--theta2', type=float, default=None, help='Optical angle (radians)')
@click.option('--fresnel', is_flag=True, help='Fresnel entropy at (--nu1, --nu2)')
def entropy(mu1, nu1, mu2, nu2, theta1, theta2, fresnel, **source):
    """Tomographic (symplectic, optical or Fresnel) Shannon entropy in nats."""
    if (theta1 is None) != (theta2 is None):
        raise ValidationError("--theta1 and --theta2 go together")
    if theta1 is None and fresnel and (nu1 is None or nu2 is None):
        raise ValidationError("--fresnel needs --nu1 and --nu2")
    if theta1 is None and not fresnel and any(v is None for v in (mu1, nu1, mu2, nu2)):
        raise ValidationError("Give --theta1/--theta2, --fresnel with --nu1/--nu2, or all of --mu1/--nu1/--mu2/--nu2")
    return run(_build_config('entropy', **source, mu1=mu1, nu1=nu1, mu2=mu2, nu2=nu2,
                             theta1=theta1, theta2=theta2, fresnel=fresnel))


@cli.command()
@_source_options
@click.option('--grid', type=int, default=DEFAULT_SCAN, show_default=True, help='Angles per axis over [0, pi)')
@click.option('--threads', type=int, default=None, help='Worker threads (capped by BEAMTOMO_THREADS)')
def rsurface(grid, threads, **source):
    """Scan R(theta1, theta2) over [0, pi)^2."""
    return run(_build_config('rsurface', **source, grid=grid, threads=threads))


@cli.command()
@_source_options
@click.option('--x', 'xs', type=float, multiple=True, required=True, help='Point x (repeatable)')
@click.option('--xprime', type=float, default=None, help="Second point x' (default: x, the intensity)")
def reconstruct(xs, xprime, **source):
    """Reconstruct psi(x) psi*(x') of the x1 factor from its 1D tomogram."""
    return run(_build_config('reconstruct', **source, xs=list(xs), xprime=xprime))


@cli.command()
@_source_options
@click.option('--grid', type=int, default=16, show_default=True, help='R scan angles per axis')
@click.option('--threads', type=int, default=None, help='Worker threads (capped by BEAMTOMO_THREADS)')
@click.option('--report', type=click.Path(path_type=Path), default=None, help='Also write a PDF report')
def check(grid, threads, report, **source):
    """Run the invariant suite; exit 3 when an invariant fails, 2 when a check does not converge."""
    return run(_build_config('check', **source, grid=grid, threads=threads, report=report))


@cli.command(name='sample')
@_source_options
@click.option('--points', type=int, default=None, help='Grid points per axis (default BEAMTOMO_GRID_POINTS)')
def sample_command(points, **source):
    """Write the sampled mode as a field file."""
    return run(_build_config('sample', **source, points=points))


def main(argv: Optional[List[str]] = None) -> int:
    try:
        status = cli.main(args=argv, prog_name='beamtomo', standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except BeamTomoError as e:
        click.echo(f"Error: {e}", err=True)
        return e.exit_code
    return status or 0


if __name__ == '__main__':
    sys.exit(main())
