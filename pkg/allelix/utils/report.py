"""Diagnostic PDF and the TSV tables behind it (visualize verb)"""
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd
from reportlab.graphics.charts.lineplots import LinePlot
from reportlab.graphics.shapes import Drawing, Rect, String
from reportlab.graphics.widgets.markers import makeMarker
from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import letter
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import PageBreak, Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from allelix.errors import AllelixError
from allelix.models.dtbin import dtbin_scan
from allelix.models.window import Orientation

logger = logging.getLogger(__name__)

NAVY = colors.HexColor('#0A2540')
TEAL = colors.HexColor('#2D8B8B')
GRID = colors.HexColor('#E5E7EB')
MUTED = colors.HexColor('#9CA3AF')

HEATMAP_CELLS = 40
RFIT_COLUMNS = ['orientation', 'bad', 'fixed_value', 'r_fit', 'r_dtbin']
HEATMAP_COLUMNS = ['bad', 'ref', 'alt', 'n']


def rfit_table(estimates, counts):
    """Fitted r(x) = b x + a next to the DTBin estimate at each fixed count"""
    frame = estimates.to_frame()
    frame = frame[np.isfinite(frame['loglik'])]
    rows = []
    for orientation in (Orientation.REF, Orientation.ALT):
        for bad in counts.bads:
            sub = frame[(frame['orientation'] == orientation.value) & (frame['bad'] == bad)]
            try:
                dtbin = dtbin_scan(counts.for_bad(bad), orientation)
            except AllelixError as exc:
                logger.warning(f"DTBin scan failed for {orientation.value} BAD={bad:g}: {exc}")
                dtbin = pd.DataFrame(columns=['fixed_value', 'r'])
            dt = dict(zip(dtbin['fixed_value'], dtbin['r']))
            for row in sub.itertuples(index=False):
                rows.append((orientation.value, bad, int(row.fixed_value),
                             row.b * row.fixed_value + row.a, dt.get(int(row.fixed_value), np.nan)))
    return pd.DataFrame(rows, columns=RFIT_COLUMNS)


def heatmap_table(counts):
    return counts.frame[HEATMAP_COLUMNS].copy()


def _rfit_drawing(sub, title):
    drawing = Drawing(7 * inch, 3.2 * inch)
    plot = LinePlot()
    plot.x, plot.y = 50, 35
    plot.width, plot.height = 7 * inch - 80, 3.2 * inch - 70
    fit = [(float(x), float(r)) for x, r in zip(sub['fixed_value'], sub['r_fit'])]
    dt = [(float(x), float(r)) for x, r in zip(sub['fixed_value'], sub['r_dtbin']) if math.isfinite(r)]
    plot.data = [fit, dt] if dt else [fit]
    plot.lines[0].strokeColor = NAVY
    plot.lines[0].strokeWidth = 1.2
    if dt:
        plot.lines[1].strokeColor = None
        plot.lines[1].symbol = makeMarker('Circle', size=2.5, fillColor=TEAL, strokeColor=TEAL)
    plot.xValueAxis.labels.fontSize = 7
    plot.yValueAxis.labels.fontSize = 7
    plot.yValueAxis.gridStrokeColor = GRID
    plot.yValueAxis.visibleGrid = True
    drawing.add(plot)
    drawing.add(String(50, 3.2 * inch - 20, title, fontSize=9, fillColor=NAVY))
    drawing.add(String(50, 8, 'fixed allele count  (line: fitted r, dots: DTBin r)', fontSize=7, fillColor=MUTED))
    return drawing


def _heatmap_drawing(sub, title):
    size = 5 * inch
    drawing = Drawing(size + 60, size + 50)
    top = int(np.quantile(np.concatenate([sub['ref'], sub['alt']]), 0.95))
    edges = np.linspace(sub[['ref', 'alt']].min().min(), max(top, 2) + 1, HEATMAP_CELLS + 1)
    grid, _, _ = np.histogram2d(sub['ref'], sub['alt'], bins=[edges, edges], weights=sub['n'])
    peak = math.log1p(grid.max()) or 1.0
    cell = size / HEATMAP_CELLS
    for i in range(HEATMAP_CELLS):
        for j in range(HEATMAP_CELLS):
            if grid[i, j] <= 0:
                continue
            shade = math.log1p(grid[i, j]) / peak
            fill = colors.linearlyInterpolatedColor(colors.white, NAVY, 0, 1, shade)
            drawing.add(Rect(40 + j * cell, 30 + i * cell, cell, cell, fillColor=fill, strokeColor=None))
    drawing.add(Rect(40, 30, size, size, fillColor=None, strokeColor=MUTED, strokeWidth=0.5))
    drawing.add(String(40, size + 38, title, fontSize=9, fillColor=NAVY))
    drawing.add(String(40, 12, f'alt count (to {edges[-1]:.0f})', fontSize=7, fillColor=MUTED))
    drawing.add(String(8, 30, 'ref', fontSize=7, fillColor=MUTED))
    return drawing


def write_diagnostics(project_name, settings, estimates, counts, out_dir):
    """Write diagnostics.pdf, rfit.tsv and heatmap.tsv into out_dir

    Returns:
        list of written paths
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rfit = rfit_table(estimates, counts)
    heat = heatmap_table(counts)
    rfit.to_csv(out_dir / 'rfit.tsv', sep='\t', index=False, float_format='%.6g')
    heat.to_csv(out_dir / 'heatmap.tsv', sep='\t', index=False, float_format='%.6g')

    doc = SimpleDocTemplate(str(out_dir / 'diagnostics.pdf'), pagesize=letter,
                            rightMargin=0.5 * inch, leftMargin=0.5 * inch,
                            topMargin=0.5 * inch, bottomMargin=0.5 * inch)
    styles = getSampleStyleSheet()
    title_style = ParagraphStyle('DiagTitle', parent=styles['Heading1'], fontSize=16,
                                 textColor=NAVY, alignment=TA_CENTER, spaceAfter=12)
    section_style = ParagraphStyle('DiagSection', parent=styles['Heading2'], fontSize=12,
                                   textColor=TEAL, spaceAfter=6)
    story = [Paragraph(f"Fit diagnostics: {project_name}", title_style), Spacer(1, 0.2 * inch)]

    summary = [['Setting', 'Value']] + [[str(k), str(v)] for k, v in sorted(settings.items())]
    summary.append(['observations', str(counts.n_obs)])
    summary.append(['fitted windows', str(len(estimates))])
    table = Table(summary, colWidths=[2.5 * inch, 4 * inch])
    table.setStyle(TableStyle([
        ('BACKGROUND', (0, 0), (-1, 0), NAVY),
        ('TEXTCOLOR', (0, 0), (-1, 0), colors.white),
        ('FONTSIZE', (0, 0), (-1, -1), 8),
        ('GRID', (0, 0), (-1, -1), 0.5, GRID),
    ]))
    story.append(table)

    story.append(PageBreak())
    story.append(Paragraph("Linear bias: fitted r against DTBin", section_style))
    for (orientation, bad), sub in rfit.groupby(['orientation', 'bad'], sort=True):
        story.append(_rfit_drawing(sub, f"{orientation} | BAD {bad:g}"))
        story.append(Spacer(1, 0.15 * inch))

    story.append(PageBreak())
    story.append(Paragraph("Observed counts", section_style))
    for bad, sub in heat.groupby('bad', sort=True):
        story.append(_heatmap_drawing(sub, f"BAD {bad:g} (log scale)"))
        story.append(Spacer(1, 0.15 * inch))
    doc.build(story)
    logger.info(f"Wrote diagnostics for {project_name} to {out_dir}")
    return [out_dir / 'diagnostics.pdf', out_dir / 'rfit.tsv', out_dir / 'heatmap.tsv']
