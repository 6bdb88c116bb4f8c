#!/usr/bin/env python3

""" plotting.py
    ...Learning curves as plain SVG text. The same input always produces
    the same bytes.
"""

import logging
from xml.sax.saxutils import escape

from .common_base import (
    BackedUpWriter,
    dcValueError,
)

__all__ = ['PALETTE', 'emit_plot', 'render_svg']

log = logging.getLogger(__name__)

WIDTH = 720
HEIGHT = 420
LEFT = 80
RIGHT = 190
TOP = 30
BOTTOM = 60
TICKS = 5

PALETTE = (
    '#1f77b4',
    '#d62728',
    '#2ca02c',
    '#ff7f0e',
    '#9467bd',
    '#8c564b',
    '#e377c2',
    '#7f7f7f',
)


def _num(x):
    return '{:.2f}'.format(x)


def _span(lo, hi):
    """ Pad a degenerate range so it maps to a visible band. """
    if hi - lo <= 0:
        pad = max(abs(lo), 1.0) * 0.5
        return lo - pad, hi + pad
    return lo, hi


def render_svg(curves, title=''):
    """ SVG text for aggregates (objects with steps/means/stds/name). """
    if not curves:
        raise dcValueError('emit_plot() needs at least one curve.')
    for curve in curves:
        if not len(curve.steps):
            raise dcValueError('Curve {!r} is empty.'.format(curve.name))
    x_lo, x_hi = _span(
        min(min(c.steps) for c in curves),
        max(max(c.steps) for c in curves),
    )
    y_lo, y_hi = _span(
        min(m - s for c in curves for m, s in zip(c.means, c.stds)),
        max(m + s for c in curves for m, s in zip(c.means, c.stds)),
    )
    plot_w = WIDTH - LEFT - RIGHT
    plot_h = HEIGHT - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return TOP + (y_hi - y) / (y_hi - y_lo) * plot_h

    out = [
        '<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" '
        'viewBox="0 0 {} {}">'.format(WIDTH, HEIGHT, WIDTH, HEIGHT),
        '<rect x="0" y="0" width="{}" height="{}" fill="white"/>'.format(
            WIDTH, HEIGHT,
        ),
    ]
    if title:
        out.append(
            '<text x="{}" y="{}" text-anchor="middle" font-size="14">{}'
            '</text>'.format(_num(LEFT + plot_w / 2), 20, escape(title))
        )
    # Axes and ticks.
    bottom, right = TOP + plot_h, LEFT + plot_w
    out.append(
        '<line class="axis" x1="{l}" y1="{b}" x2="{r}" y2="{b}" '
        'stroke="black"/>'.format(l=LEFT, b=bottom, r=right)
    )
    out.append(
        '<line class="axis" x1="{l}" y1="{t}" x2="{l}" y2="{b}" '
        'stroke="black"/>'.format(l=LEFT, t=TOP, b=bottom)
    )
    for i in range(TICKS + 1):
        xv = x_lo + (x_hi - x_lo) * i / TICKS
        yv = y_lo + (y_hi - y_lo) * i / TICKS
        out.append(
            '<text class="tick" x="{}" y="{}" text-anchor="middle" '
            'font-size="10">{:g}</text>'.format(_num(px(xv)), bottom + 15,
                                                 float('{:.4g}'.format(xv)))
        )
        out.append(
            '<text class="tick" x="{}" y="{}" text-anchor="end" '
            'font-size="10">{:g}</text>'.format(LEFT - 5, _num(py(yv) + 3),
                                                 float('{:.4g}'.format(yv)))
        )
    out.append(
        '<text class="xlabel" x="{}" y="{}" text-anchor="middle" '
        'font-size="12">environment steps</text>'.format(
            _num(LEFT + plot_w / 2), HEIGHT - 15,
        )
    )
    out.append(
        '<text class="ylabel" x="15" y="{y}" text-anchor="middle" '
        'font-size="12" transform="rotate(-90 15 {y})">evaluation return'
        '</text>'.format(y=_num(TOP + plot_h / 2))
    )
    # Bands first so every line is drawn on top.
    for i, curve in enumerate(curves):
        color = PALETTE[i % len(PALETTE)]
        upper = [
            '{},{}'.format(_num(px(x)), _num(py(m + s)))
            for x, m, s in zip(curve.steps, curve.means, curve.stds)
        ]
        lower = [
            '{},{}'.format(_num(px(x)), _num(py(m - s)))
            for x, m, s in zip(curve.steps, curve.means, curve.stds)
        ]
        out.append(
            '<polygon class="band" points="{}" fill="{}" '
            'fill-opacity="0.2" stroke="none"/>'.format(
                ' '.join(upper + lower[::-1]),
                color,
            )
        )
    for i, curve in enumerate(curves):
        color = PALETTE[i % len(PALETTE)]
        points = ' '.join(
            '{},{}'.format(_num(px(x)), _num(py(m)))
            for x, m in zip(curve.steps, curve.means)
        )
        out.append(
            '<polyline class="curve" points="{}" fill="none" stroke="{}" '
            'stroke-width="1.5"/>'.format(points, color)
        )
    # Legend, in input order.
    for i, curve in enumerate(curves):
        color = PALETTE[i % len(PALETTE)]
        y = TOP + 10 + 18 * i
        out.append(
            '<rect class="legend-key" x="{}" y="{}" width="12" height="4" '
            'fill="{}"/>'.format(right + 15, y - 4, color)
        )
        out.append(
            '<text class="legend" x="{}" y="{}" font-size="11">{}</text>'
            .format(right + 32, y + 2, escape(curve.name or
                                              'curve {}'.format(i + 1)))
        )
    out.append('</svg>')
    return '\n'.join(out) + '\n'


def emit_plot(curves, filename, title=''):
    """ Write render_svg() output to `filename`. Returns the file name. """
    svg = render_svg(curves, title=title)
    with BackedUpWriter(filename) as f:
        f.write(svg)
    log.debug('Wrote plot: {}'.format(filename))
    return str(filename)
