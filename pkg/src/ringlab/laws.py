"""Classical reference laws used as inputs and comparison targets.

Builders return grid-form :class:`~ringlab.measures.Measure1D` objects with
edge-clustered grids (square-root edges are sampled densely so the
piecewise-linear form stays accurate); the ``*_density`` functions are the
closed forms themselves.
"""

from __future__ import annotations

import numpy as np

from .measures import Measure1D


def semicircle_density(x, radius=2.0):
    x = np.asarray(x, dtype=float)
    r2 = radius * radius
    return np.where(np.abs(x) < radius,
                    2.0 / (np.pi * r2) * np.sqrt(np.maximum(r2 - x * x, 0.0)), 0.0)


def quarter_circle_density(x):
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0) & (x <= 2.0),
                    np.sqrt(np.maximum(4.0 - x * x, 0.0)) / np.pi, 0.0)


def arcsine_density(x, half_width=2.0):
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < half_width
    out = np.zeros_like(x)
    out[inside] = 1.0 / (np.pi * np.sqrt(half_width ** 2 - x[inside] ** 2))
    return out


def marchenko_pastur_density(x):
    """MP(1): density sqrt((4-x)/x)/(2 pi) on (0, 4]."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 4.0)
    out = np.zeros_like(x)
    xi = x[inside]
    out[inside] = np.sqrt((4.0 - xi) / xi) / (2.0 * np.pi)
    return out


def uniform(lo, hi):
    if hi <= lo:
        raise ValueError("uniform requires lo < hi")
    h = 1.0 / (hi - lo)
    return Measure1D.from_grid([lo, hi], [h, h])


def semicircle(radius=2.0, n=400):
    theta = np.linspace(-np.pi / 2, np.pi / 2, n)
    grid = radius * np.sin(theta)
    return Measure1D.from_grid(grid, semicircle_density(grid, radius), normalize=True)


def quarter_circle(n=400):
    theta = np.linspace(0.0, np.pi / 2, n)
    grid = 2.0 * np.sin(theta)
    return Measure1D.from_grid(grid, quarter_circle_density(grid), normalize=True)


def marchenko_pastur(n=800):
    # sqrt-clustered at the hard edge 0 and the soft edge 4
    theta = np.linspace(0.0, np.pi, n)
    grid = 2.0 - 2.0 * np.cos(theta)
    vals = marchenko_pastur_density(grid)
    vals[0] = vals[1]  # finite node standing in for the 1/sqrt(x) edge
    vals[-1] = 0.0
    return Measure1D.from_grid(grid, vals, normalize=True)


def two_atoms(x1=1.0, x2=2.0):
    return Measure1D.from_atoms([x1, x2], [0.5, 0.5])
