"""The limiting eigenvalue law of bi-unitarily invariant ensembles.

Two independent pipelines produce the radially symmetric density rho(r) of
the limit law from the singular-value distribution theta:

* ``radial_density_stransform`` -- the multiplicative route: with S the
  S-transform of the squared law, F(t) = 1 / sqrt(S(t - 1)) maps (0, 1]
  increasingly onto the radial support (a, b], and
  rho(r) = 1 / (2 pi r F'(F^{-1}(r))).
* ``radial_density_girko`` -- the log-potential route: h(r) is the
  logarithmic energy of the symmetrized theta freely convolved with the
  two-point law of radius r, and rho = (radial Laplacian of h) / (2 pi).

The two are mathematically equal; ``cross_validate`` is the package's core
self-check. Support is always the annulus a <= |z| <= b with

    b = sqrt(int x^2 d theta),    a = 1 / sqrt(int x^-2 d theta)

(a = 0 when the inverse-square integral diverges).
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AccuracyError, DomainError
from .freeprob import (StieltjesEvaluator, free_convolve_bernoulli,
                       psi_square, _invert_psi)
from .measures import Measure1D, log_potential, moment, symmetrize

log = logging.getLogger(__name__)

_COLLAPSE_TOL = 1e-9


@dataclass(frozen=True)
class RingLaw:
    """Radial law on the annulus [a, b].

    ``density`` holds rho(r) on ``r_grid`` (zero off the annulus); a
    collapsed ring (a == b) carries ``collapsed=True`` and the uniform law
    on the circle of radius a instead of a density.
    """
    a: float
    b: float
    r_grid: np.ndarray
    density: np.ndarray
    pipeline: str
    collapsed: bool = False
    info: dict = field(default_factory=dict)

    def cdf_values(self):
        """Cumulative radial mass 2 pi int_0^r s rho(s) ds on r_grid.

        Integrates the edge-aware profile (see ``_refined_profile``) so the
        sharp drops at a and b do not lose half a trapezoid cell, then
        samples the cumulative back on r_grid.
        """
        rr, flux = _refined_profile(self)
        cum = np.concatenate([[0.0], np.cumsum(
            np.diff(rr) * 0.5 * (flux[1:] + flux[:-1]))])
        return np.interp(self.r_grid, rr, cum)

    def to_json(self):
        return json.dumps({
            "a": self.a, "b": self.b, "pipeline": self.pipeline,
            "collapsed": self.collapsed,
            "r_grid": self.r_grid.tolist(),
            "density": self.density.tolist(),
            "info": {k: v for k, v in self.info.items()
                     if isinstance(v, (int, float, str, bool))},
        })

    def to_csv(self, path):
        cdf = self.cdf_values()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "density", "cdf"])
            for r, d, c in zip(self.r_grid, self.density, cdf):
                w.writerow([f"{r:.17g}", f"{d:.17g}", f"{c:.17g}"])


def ring_radii(theta: Measure1D):
    """(a, b) = (1/sqrt(int x^-2 d theta), sqrt(int x^2 d theta));
    a = 0 when the inverse-square integral diverges."""
    if not theta.is_nonnegative():
        raise DomainError("theta must be supported on [0, inf)")
    b = math.sqrt(moment(theta, 2))
    m2i = moment(theta, -2)
    a = 0.0 if math.isinf(m2i) else 1.0 / math.sqrt(m2i)
    return a, b


def _check_theta_positive(theta):
    if theta.kind == "atoms" and np.any(theta.xs <= 0):
        raise DomainError("theta must have no atom at 0")
    if not theta.is_nonnegative():
        raise DomainError("theta must be supported on (0, inf)")


# ----------------------------------------------------------------------
# pipeline A: S-transform map F
# ----------------------------------------------------------------------

def _build_radial_map(theta, t_min=1e-4, n_base=400, rel_tol=0.04,
                      max_points=20000):
    """Tabulate F(t) = 1/sqrt(S_{theta^2}(t-1)) on an adaptively refined
    t-grid in (0, 1]; returns (t, F, F') with F' by centered differences.

    With u = chi(t-1) (the psi inverse at negative arguments),
    F(t) = sqrt((t-1) / (u t)); psi is inverted by bracketed bisection,
    warm-started along the monotone t sweep. Chebyshev nodes seed the
    grid and intervals are split until the F increment is small both
    absolutely and relative to F, keeping the finite-difference derivative
    accurate where F steepens (t -> 0 when a = 0).
    """
    b = math.sqrt(moment(theta, 2))

    def psi(u):
        return psi_square(theta, u)

    k = np.arange(n_base + 1)
    ts = list(t_min + (1.0 - t_min) * 0.5 * (1.0 - np.cos(np.pi * k / n_base)))
    us = [None] * len(ts)
    us[-1] = 0.0  # t = 1: chi(0) = 0, F = b

    def solve(t, hint):
        return _invert_psi(psi, t - 1.0, u_hint=hint)

    hint = None
    for i in range(len(ts) - 2, -1, -1):
        us[i] = solve(ts[i], us[i + 1] if us[i + 1] not in (None, 0.0) else hint)
        hint = us[i]

    def F_of(t, u):
        if t >= 1.0:
            return b
        return math.sqrt((t - 1.0) / (u * t))

    Fs = [F_of(t, u) for t, u in zip(ts, us)]
    abs_tol = max((Fs[-1] - Fs[0]), 1e-12) / n_base
    for _ in range(40):
        t_arr = np.asarray(ts)
        F_arr = np.asarray(Fs)
        dF = np.diff(F_arr)
        thresh = np.maximum(abs_tol, rel_tol * np.minimum(F_arr[:-1], F_arr[1:]))
        bad = np.nonzero(dF > thresh)[0]
        if bad.size == 0 or len(ts) > max_points:
            break
        for i in reversed(bad):
            tm = 0.5 * (ts[i] + ts[i + 1])
            um = _invert_psi(psi, tm - 1.0, u_hint=us[i])
            ts.insert(i + 1, tm)
            us.insert(i + 1, um)
            Fs.insert(i + 1, F_of(tm, um))
    t_arr = np.asarray(ts)
    F_arr = np.asarray(Fs)
    dF = np.diff(F_arr)
    if np.any(dF < -1e-10):
        i = int(np.argmin(dF))
        raise AccuracyError(
            f"numerically non-monotone F on t in [{t_arr[i]:.6g}, {t_arr[i+1]:.6g}]")
    Fp = np.gradient(F_arr, t_arr)
    return t_arr, F_arr, Fp


def _edge_aware_profile(r_grid, density, a, b):
    """Refined (rr, 2 pi r rho(rr)) for a density supported sharply on
    (a, b]: inside values interpolate the positive grid points, constant
    extension reaches the exact edges, zero outside (the jumps are carried
    by twin points at a and b)."""
    inside = (r_grid > a) & (r_grid <= b) & (density > 0)
    eps = 1e-12 * max(1.0, b)
    if not np.any(inside):
        rr = np.asarray([a, b])
        return rr, np.zeros(2)
    ri, di = r_grid[inside], density[inside]
    rr = np.unique(np.concatenate(
        [r_grid, ri, [a, min(a + eps, b), max(b - eps, a), b, b + eps]]))
    rr = rr[(rr >= min(a, r_grid[0])) & (rr <= max(b + eps, r_grid[-1]))]
    dens = np.interp(rr, ri, di, left=di[0], right=di[-1])
    dens[(rr <= a) | (rr > b)] = 0.0
    return rr, 2 * np.pi * rr * dens


def _refined_profile(law: RingLaw):
    if law.pipeline == "stransform" and not law.collapsed:
        return _edge_aware_profile(law.r_grid, law.density, law.a, law.b)
    return law.r_grid, 2 * np.pi * law.r_grid * law.density


def _normalize_ring(r_grid, density, a, b, info, sharp_support):
    if sharp_support:
        rr, flux = _edge_aware_profile(r_grid, density, a, b)
        raw = float(np.trapezoid(flux, rr))
    else:
        raw = float(np.trapezoid(2 * np.pi * r_grid * density, r_grid))
        if r_grid[0] > a:  # analytic sliver below the first grid point
            raw += math.pi * (r_grid[0] ** 2 - a * a) * density[0]
    if raw <= 0:
        raise AccuracyError("ring density carries no mass")
    factor = 1.0 / raw
    info["raw_ring_mass"] = raw
    info["renormalization"] = factor
    if abs(factor - 1.0) > 0.01:
        log.warning("ring density renormalization %.4f exceeds 1%%", factor)
        info["renormalization_exceeds_1pct"] = True
    return density * factor


def radial_density_stransform(theta: Measure1D, r_grid) -> RingLaw:
    """Radial density of the limit law through the S-transform map.

    theta must be compactly supported on (0, inf) with no atom at 0. A
    collapsed ring (a == b, e.g. a point mass) returns the flagged
    degenerate law instead of a density.
    """
    _check_theta_positive(theta)
    r_grid = np.asarray(r_grid, dtype=float)
    a, b = ring_radii(theta)
    if b - a <= _COLLAPSE_TOL * max(1.0, b):
        log.info("collapsed ring at radius %.6g", b)
        return RingLaw(a=a, b=b, r_grid=r_grid,
                       density=np.zeros_like(r_grid), pipeline="stransform",
                       collapsed=True, info={"radius": b})
    t, F, Fp = _build_radial_map(theta)
    info = {"t_points": int(t.size)}
    t_star = np.interp(r_grid, F, t)
    Fp_at = np.interp(t_star, t, Fp)
    with np.errstate(divide="ignore"):
        dens = 1.0 / (2 * np.pi * r_grid * Fp_at)
    inside = (r_grid > a) & (r_grid <= b) & (r_grid > 0)
    dens = np.where(inside, dens, 0.0)
    dens = _normalize_ring(r_grid, dens, a, b, info, sharp_support=True)
    return RingLaw(a=a, b=b, r_grid=r_grid, density=dens,
                   pipeline="stransform", info=info)


# ----------------------------------------------------------------------
# pipeline B: Girko log potential
# ----------------------------------------------------------------------

def girko_log_potential(theta: Measure1D, radii, eta=None,
                        evaluator=None) -> np.ndarray:
    """h(r) = int log|x| d(free convolution of symmetrized theta with the
    two-point law of radius r), for each r in ``radii``.

    Shares one output grid (step eta/4) across all radii so the
    discretization error varies smoothly with r; values for consecutive
    radii warm-start each other.
    """
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if np.any(radii < 0):
        raise DomainError("radii must be nonnegative")
    _, b = ring_radii(theta)
    if eta is None:
        eta = 0.004 * max(1.0, b)
    theta_sym = symmetrize(theta)
    if evaluator is None:
        evaluator = StieltjesEvaluator(theta_sym, guard=eta / 4)
    r_max = float(np.max(radii))
    x_max = evaluator.radius + r_max + 8 * eta
    dx = eta / 4.0
    half = np.arange(0.0, x_max + dx, dx)
    out_grid = np.concatenate([-half[::-1], half[1:]])
    order = np.argsort(radii)
    h = np.empty(radii.size)
    warm = {}
    for i in order:
        nu = free_convolve_bernoulli(theta, float(radii[i]), out_grid, eta,
                                     evaluator=evaluator, warm=warm)
        h[i] = log_potential(nu)
    return h


def radial_density_girko(theta: Measure1D, r_grid, eta=None,
                         dr=None) -> RingLaw:
    """Radial density from the Laplacian of the log potential.

    For each r the log potential h(r) of the convolved symmetric law is
    evaluated at the five-point stencil r, r +- dr, r +- 2dr (h is even in
    r, so stencil points below 0 reflect); the radial Laplacian
    h'' + h'/r is formed by centered differences with a Richardson pass
    over the doubled step. The density is the positive part of the
    Laplacian over 2 pi, renormalized (factor logged).
    """
    _check_theta_positive(theta)
    r_grid = np.asarray(r_grid, dtype=float)
    a, b = ring_radii(theta)
    if b - a <= _COLLAPSE_TOL * max(1.0, b):
        return RingLaw(a=a, b=b, r_grid=r_grid,
                       density=np.zeros_like(r_grid), pipeline="girko",
                       collapsed=True, info={"radius": b})
    if dr is None:
        dr = 1e-3 * b
    if eta is None:
        eta = 0.004 * max(1.0, b)
    offsets = np.array([-2.0, -1.0, 0.0, 1.0, 2.0]) * dr
    stencil = np.abs(r_grid[:, None] + offsets[None, :])
    r_eval, inverse = np.unique(np.round(stencil / (dr * 1e-6)) * (dr * 1e-6),
                                return_inverse=True)
    h_eval = girko_log_potential(theta, r_eval, eta=eta)
    H = h_eval[inverse].reshape(stencil.shape)
    hm2, hm1, h0, hp1, hp2 = H.T
    d1_a = (hp1 - hm1) / (2 * dr)
    d2_a = (hp1 - 2 * h0 + hm1) / dr ** 2
    d1_b = (hp2 - hm2) / (4 * dr)
    d2_b = (hp2 - 2 * h0 + hm2) / (4 * dr ** 2)
    d1 = (4 * d1_a - d1_b) / 3.0
    d2 = (4 * d2_a - d2_b) / 3.0
    with np.errstate(divide="ignore", invalid="ignore"):
        lap = np.where(r_grid > dr, d2 + d1 / np.where(r_grid > dr, r_grid, 1.0),
                       2.0 * d2)
    dens = np.maximum(lap, 0.0) / (2 * np.pi)
    info = {"eta": eta, "dr": dr}
    dens = _normalize_ring(r_grid, dens, a, b, info, sharp_support=False)
    return RingLaw(a=a, b=b, r_grid=r_grid, density=dens,
                   pipeline="girko", info=info)


# ----------------------------------------------------------------------
# queries and cross-validation
# ----------------------------------------------------------------------

def ring_cdf(law: RingLaw, r):
    """Mass of the disk of radius r under the ring law."""
    r = np.asarray(r, dtype=float)
    if law.collapsed:
        out = np.where(r >= law.a, 1.0, 0.0)
        return float(out) if out.ndim == 0 else out
    cdf = law.cdf_values()
    cdf = cdf / cdf[-1] if cdf[-1] > 0 else cdf
    out = np.interp(r, law.r_grid, cdf, left=0.0, right=1.0)
    return float(out) if out.ndim == 0 else out


def single_ring_check(law: RingLaw, rel_threshold=1e-3, max_gap_cells=2):
    """No-internal-gap check: between the first and last grid point where
    the density exceeds rel_threshold * max, no run of more than
    max_gap_cells consecutive points falls below the threshold."""
    if law.collapsed:
        return True, {"collapsed": True}
    d = law.density
    lev = rel_threshold * float(np.max(d)) if np.max(d) > 0 else 0.0
    idx = np.nonzero(d > lev)[0]
    if idx.size == 0:
        return False, {"reason": "no mass"}
    lo, hi = idx[0], idx[-1]
    gaps = np.diff(idx)
    worst = int(np.max(gaps)) - 1 if gaps.size else 0
    ok = worst <= max_gap_cells
    return ok, {"first": int(lo), "last": int(hi), "worst_gap_cells": worst}


def default_r_grid(theta: Measure1D, n=48):
    a, b = ring_radii(theta)
    width = b - a
    lo = max(0.03 * b, a - 0.15 * width)
    hi = b + 0.15 * width
    return np.linspace(lo, hi, n)


def cross_validate(theta: Measure1D, r_grid=None, eta=None, dr=None,
                   sup_tol=5e-3, collar_frac=0.025) -> dict:
    """Compare the two radial-density pipelines on one grid.

    Reports the sup and L1 distances, plus the sup away from the annulus
    edges (a collar of width ``collar_frac * (b - a)`` around a and b is
    excluded there: the log-potential route smooths the density jump at
    the edges over the finite-difference step while the S-transform route
    keeps it sharp). The pass verdict uses the interior sup.
    """
    if r_grid is None:
        r_grid = default_r_grid(theta)
    law_s = radial_density_stransform(theta, r_grid)
    law_g = radial_density_girko(theta, r_grid, eta=eta, dr=dr)
    diff = np.abs(law_s.density - law_g.density)
    width = law_s.b - law_s.a
    collar = (np.abs(r_grid - law_s.a) < collar_frac * width) | \
             (np.abs(r_grid - law_s.b) < collar_frac * width)
    sup = float(np.max(diff))
    sup_int = float(np.max(diff[~collar])) if np.any(~collar) else sup
    report = {
        "a": law_s.a, "b": law_s.b,
        "sup": sup, "sup_interior": sup_int,
        "l1": float(np.trapezoid(diff, r_grid)),
        "pass": sup_int < sup_tol,
        "sup_tol": sup_tol,
        "stransform": law_s, "girko": law_g,
    }
    return report
