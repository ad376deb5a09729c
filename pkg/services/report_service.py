"""
Report Service
Writes tomogram scans, R surfaces, reconstructions and verification results as
CSV, JSON or PDF, and sampled fields in their text format. Every file is
written once: to a temporary file in the target directory, then renamed.
"""

import os
import io
import csv
import json
import logging
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

from reportlab.lib import colors
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import getSampleStyleSheet
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from services.beam_model import SampledField, format_field
from services.entropy_service import RSurface
from services.tomography_service import TomogramQuery

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TOMOGRAM_HEADER = ['X1', 'mu1', 'nu1', 'X2', 'mu2', 'nu2', 'w']
RSURFACE_HEADER = ['theta1', 'theta2', 'R']


def _round_trip(value: float) -> str:
    """Shortest decimal that reads back to the same double"""
    return repr(float(value))


def _twelve(value: float) -> str:
    return f"{float(value):.12g}"


def atomic_write_bytes(path: PathLike, payload: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.info(f"Wrote {path} ({len(payload)} bytes)")


def atomic_write_text(path: PathLike, text: str):
    atomic_write_bytes(path, text.encode('utf-8'))


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _json_text(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def tomogram_csv(results: List[Tuple[TomogramQuery, float]]) -> str:
    return _csv_text(TOMOGRAM_HEADER, ([_round_trip(v) for v in q.as_tuple()] + [_round_trip(w)]
                                       for q, w in results))


def tomogram_json(results: List[Tuple[TomogramQuery, float]], meta: Dict[str, Any]) -> str:
    return _json_text({
        'source': meta,
        'tomogram': [dict(zip(TOMOGRAM_HEADER, list(q.as_tuple()) + [w])) for q, w in results],
    })


def rsurface_csv(surface: RSurface) -> str:
    return _csv_text(RSURFACE_HEADER, ([_twelve(t1), _twelve(t2), _twelve(r)] for t1, t2, r in surface.rows()))


def rsurface_json(surface: RSurface, meta: Dict[str, Any]) -> str:
    n = len(surface.theta1_grid)
    return _json_text({
        'source': meta,
        'mode_meta': None if surface.mode_meta is None else dict(zip(('n', 'm', 'sigma0'), surface.mode_meta)),
        'grid': {'theta1': {'start': 0.0, 'count': n}, 'theta2': {'start': 0.0, 'count': len(surface.theta2_grid)},
                 'domain': '[0, pi)'},
        'summary': surface.summary(),
        'values': [[float(_twelve(r)) for r in row] for row in surface.values],
    })


def correlation_csv(rows: List[Tuple[float, float, complex]]) -> str:
    return _csv_text(['x', 'xprime', 're', 'im'],
                     ([_round_trip(x), _round_trip(xp), _round_trip(c.real), _round_trip(c.imag)]
                      for x, xp, c in rows))


def correlation_json(rows: List[Tuple[float, float, complex]], meta: Dict[str, Any]) -> str:
    return _json_text({
        'source': meta,
        'correlation': [{'x': x, 'xprime': xp, 're': c.real, 'im': c.imag} for x, xp, c in rows],
    })


def entropy_csv(rows: List[Dict[str, float]]) -> str:
    header = list(rows[0].keys()) if rows else ['value', 'estimated_error']
    return _csv_text(header, ([_round_trip(row[k]) for k in header] for row in rows))


def check_json(report: Dict[str, Any]) -> str:
    return _json_text(report)


def write_field(source: SampledField, path: PathLike):
    atomic_write_text(path, format_field(source))


def check_pdf(report: Dict[str, Any]) -> bytes:
    """Verification summary as a one-table PDF"""
    buffer = io.BytesIO()
    doc = SimpleDocTemplate(buffer, pagesize=A4, title='Beam tomography verification',
                            invariant=1)
    styles = getSampleStyleSheet()
    source = report.get('source', {})
    story = [
        Paragraph('Beam tomography verification', styles['Title']),
        Paragraph(f"Source: {json.dumps(source, sort_keys=True)}", styles['Normal']),
        Paragraph(f"Overall: {'PASSED' if report.get('success') else 'FAILED'}", styles['Heading2']),
        Spacer(1, 12),
    ]
    data = [['Check', 'Result', 'Max error', 'Tolerance', 'Detail']]
    for result in report.get('results', []):
        status = 'skipped' if result.get('skipped') else ('pass' if result['success'] else 'FAIL')
        data.append([
            result['name'],
            status,
            '' if result.get('max_error') is None else f"{result['max_error']:.3e}",
            '' if result.get('tolerance') is None else f"{result['tolerance']:.1e}",
            Paragraph(str(result.get('detail', '')), styles['BodyText']),
        ])
    table = Table(data, colWidths=[110, 50, 65, 60, 220], repeatRows=1)
    table.setStyle(TableStyle([
        ('BACKGROUND', (0, 0), (-1, 0), colors.lightgrey),
        ('GRID', (0, 0), (-1, -1), 0.5, colors.grey),
        ('VALIGN', (0, 0), (-1, -1), 'TOP'),
        ('FONTSIZE', (0, 0), (-1, -1), 8),
    ]))
    story.append(table)
    doc.build(story)
    return buffer.getvalue()
