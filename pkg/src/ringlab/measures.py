"""One-dimensional probability measures and their transform toolbox.

A :class:`Measure1D` comes in one of three concrete representations:

* ``atoms``     -- a finite weighted sum of point masses,
* ``grid``      -- a piecewise-linear density tabulated on a strictly
  increasing grid (all quadrature against it is exact for that density),
* ``empirical`` -- a finite sample with equal weights.

Values are immutable after construction and every operation in this module
is pure, so measures can be evaluated in parallel without locking.

``ComplexPoint`` is realized as the built-in :class:`complex`.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import AccuracyError, DomainError

ComplexPoint = complex

_MASS_TOL = 1e-9
# Density above this at the left grid edge x=0 is treated as mass
# accumulating at 0 when negative moments are requested.
_ZERO_DENSITY_SENTINEL = 1e-12


def _as_1d(a, name):
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError(f"{name} must be a nonempty 1-D array")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


class Measure1D:
    """A probability measure on the real line.

    Use the classmethod constructors :meth:`from_atoms`, :meth:`from_grid`
    and :meth:`from_empirical`; the raw constructor is not part of the API.

    Attributes
    ----------
    kind : str
        One of ``"atoms"``, ``"grid"``, ``"empirical"``.
    support : tuple of float
        Interval hint ``(lo, hi)`` containing the support.
    info : dict
        Free-form runtime metadata (renormalization factors etc.); never
        serialized.
    """

    __slots__ = ("kind", "xs", "ws", "grid", "vals", "samples", "support", "info")

    def __init__(self, kind, *, xs=None, ws=None, grid=None, vals=None,
                 samples=None, support=None, info=None):
        self.kind = kind
        self.xs = xs
        self.ws = ws
        self.grid = grid
        self.vals = vals
        self.samples = samples
        self.support = support
        self.info = info or {}

    # ------------------------------------------------------------------
    # constructors
    # ------------------------------------------------------------------

    @classmethod
    def from_atoms(cls, locations, weights=None, support_hint=None):
        """Atomic measure. Locations must be distinct; weights sum to 1."""
        xs = _as_1d(locations, "locations")
        if weights is None:
            ws = np.full(xs.size, 1.0 / xs.size)
        else:
            ws = _as_1d(weights, "weights")
            if ws.size != xs.size:
                raise DomainError("locations and weights must have equal length")
        if np.any(ws < 0):
            raise DomainError("weights must be nonnegative")
        order = np.argsort(xs)
        xs, ws = xs[order], ws[order]
        if xs.size > 1 and np.min(np.diff(xs)) <= 0:
            raise DomainError("atom locations must be distinct")
        if abs(ws.sum() - 1.0) > _MASS_TOL:
            raise DomainError(f"atom weights sum to {ws.sum()!r}, expected 1")
        sup = support_hint or (float(xs[0]), float(xs[-1]))
        return cls("atoms", xs=xs, ws=ws, support=sup)

    @classmethod
    def from_grid(cls, grid, values, normalize=False, support_hint=None):
        """Piecewise-linear density on a strictly increasing grid."""
        grid = _as_1d(grid, "grid")
        vals = _as_1d(values, "values")
        if grid.size != vals.size or grid.size < 2:
            raise DomainError("grid and values must share length >= 2")
        if np.min(np.diff(grid)) <= 0:
            raise DomainError("grid must be strictly increasing")
        if np.any(vals < 0):
            if np.min(vals) < -1e-12 * max(1.0, np.max(vals)):
                raise DomainError("grid density must be nonnegative")
            vals = np.maximum(vals, 0.0)
        mass = np.trapezoid(vals, grid)
        if normalize:
            if mass <= 0:
                raise DomainError("cannot normalize a zero-mass density")
            vals = vals / mass
        elif abs(mass - 1.0) > _MASS_TOL:
            raise DomainError(f"grid density integrates to {mass!r}, expected 1")
        sup = support_hint or (float(grid[0]), float(grid[-1]))
        return cls("grid", grid=grid, vals=vals, support=sup)

    @classmethod
    def from_empirical(cls, samples, support_hint=None):
        """Empirical measure of a finite sample (equal weights)."""
        s = np.sort(_as_1d(samples, "samples"))
        sup = support_hint or (float(s[0]), float(s[-1]))
        return cls("empirical", samples=s, support=sup)

    @classmethod
    def point_mass(cls, x):
        return cls.from_atoms([x], [1.0])

    # ------------------------------------------------------------------
    # basic queries
    # ------------------------------------------------------------------

    def __repr__(self):
        n = {"atoms": lambda: self.xs.size,
             "grid": lambda: self.grid.size,
             "empirical": lambda: self.samples.size}[self.kind]()
        return f"Measure1D({self.kind}, n={n}, support={self.support})"

    def is_nonnegative(self, tol=1e-12):
        return self.support[0] >= -tol

    def breakpoints(self):
        if self.kind == "atoms":
            return self.xs
        if self.kind == "grid":
            return self.grid
        return self.samples

    def cdf(self, x):
        """Right-continuous CDF, vectorized."""
        x = np.asarray(x, dtype=float)
        if self.kind == "atoms":
            idx = np.searchsorted(self.xs, x, side="right")
            cum = np.concatenate([[0.0], np.cumsum(self.ws)])
            return cum[idx]
        if self.kind == "empirical":
            idx = np.searchsorted(self.samples, x, side="right")
            return idx / self.samples.size
        return self._grid_cdf(x)

    def cdf_left(self, x):
        """Left limit F(x-). Coincides with cdf for grid densities."""
        x = np.asarray(x, dtype=float)
        if self.kind == "atoms":
            idx = np.searchsorted(self.xs, x, side="left")
            cum = np.concatenate([[0.0], np.cumsum(self.ws)])
            return cum[idx]
        if self.kind == "empirical":
            idx = np.searchsorted(self.samples, x, side="left")
            return idx / self.samples.size
        return self._grid_cdf(x)

    def _node_cdf(self):
        h = np.diff(self.grid)
        cell = 0.5 * (self.vals[:-1] + self.vals[1:]) * h
        return np.concatenate([[0.0], np.cumsum(cell)])

    def _grid_cdf(self, x):
        g, v = self.grid, self.vals
        W = self._node_cdf()
        idx = np.clip(np.searchsorted(g, x, side="right") - 1, 0, g.size - 2)
        x0 = g[idx]
        t = np.clip(x - x0, 0.0, g[idx + 1] - x0)
        f0 = v[idx]
        slope = (v[idx + 1] - f0) / (g[idx + 1] - x0)
        out = W[idx] + f0 * t + 0.5 * slope * t * t
        out = np.where(x <= g[0], 0.0, np.where(x >= g[-1], 1.0, out))
        return np.clip(out, 0.0, 1.0)

    def density(self, x):
        """Piecewise-linear density (0 for atomic / empirical measures)."""
        x = np.asarray(x, dtype=float)
        if self.kind != "grid":
            return np.zeros_like(x)
        return np.interp(x, self.grid, self.vals, left=0.0, right=0.0)

    def mass_interval(self, lo, hi, open_ends=True):
        """Mass of the interval (lo, hi) (open by default)."""
        if open_ends:
            return float(self.cdf_left(hi) - self.cdf(lo))
        return float(self.cdf(hi) - self.cdf_left(lo))

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------

    def to_dict(self):
        if self.kind == "atoms":
            return {"type": "atoms", "locations": self.xs.tolist(),
                    "weights": self.ws.tolist(), "support": list(self.support)}
        if self.kind == "grid":
            return {"type": "grid", "grid": self.grid.tolist(),
                    "values": self.vals.tolist(), "support": list(self.support)}
        return {"type": "empirical", "samples": self.samples.tolist(),
                "support": list(self.support)}

    @classmethod
    def from_dict(cls, d):
        kind = d["type"]
        hint = tuple(d["support"]) if "support" in d else None
        if kind == "atoms":
            return cls.from_atoms(d["locations"], d["weights"], support_hint=hint)
        if kind == "grid":
            return cls.from_grid(d["grid"], d["values"], support_hint=hint)
        if kind == "empirical":
            return cls.from_empirical(d["samples"], support_hint=hint)
        raise DomainError(f"unknown measure type {kind!r}")

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


# ----------------------------------------------------------------------
# symmetrization and push-forwards
# ----------------------------------------------------------------------

def symmetrize(mu: Measure1D) -> Measure1D:
    """Even reflection: half the mass of every set in (0, inf) goes to its
    mirror image; mass at 0 stays put.

    Requires ``mu`` supported on [0, inf).
    """
    if not mu.is_nonnegative():
        raise DomainError("symmetrize requires support in [0, inf)")
    if mu.kind == "atoms":
        xs, ws = [], []
        for x, w in zip(mu.xs, mu.ws):
            if x <= 0.0:
                xs.append(0.0)
                ws.append(w)
            else:
                xs.extend([-x, x])
                ws.extend([w / 2, w / 2])
        xs = np.asarray(xs)
        order = np.argsort(xs)
        return Measure1D.from_atoms(xs[order], np.asarray(ws)[order])
    if mu.kind == "empirical":
        s = mu.samples
        return Measure1D.from_empirical(np.concatenate([-s, s]))
    g, v = mu.grid, mu.vals
    g = np.maximum(g, 0.0)  # tolerate a -1e-16 first node
    if g[0] > 0.0:
        # support starts above 0: insert a short zero buffer so the
        # piecewise-linear form carries no phantom mass across the gap
        buf = max(g[0] * 1e-9, (g[-1] - g[0]) * 1e-11)
        gp = np.concatenate([[g[0] - buf], g])
        vp = np.concatenate([[0.0], v]) / 2.0
        grid = np.concatenate([-gp[::-1], gp])
        vals = np.concatenate([vp[::-1], vp])
    else:
        grid = np.concatenate([-g[::-1], g[1:]])
        vals = np.concatenate([v[::-1], v[1:]]) / 2.0
    return Measure1D.from_grid(grid, vals, normalize=True)


def pushforward_square(mu: Measure1D) -> Measure1D:
    """Law of X**2 for X ~ mu, mu supported on [0, inf)."""
    if not mu.is_nonnegative():
        raise DomainError("pushforward_square requires support in [0, inf)")
    if mu.kind == "atoms":
        return _merge_atoms(np.maximum(mu.xs, 0.0) ** 2, mu.ws)
    if mu.kind == "empirical":
        return Measure1D.from_empirical(np.maximum(mu.samples, 0.0) ** 2)
    g = np.maximum(mu.grid, 0.0)
    new_grid = g ** 2
    with np.errstate(divide="ignore"):
        new_vals = np.where(g > 0, mu.vals / (2.0 * np.where(g > 0, g, 1.0)), 0.0)
    if g[0] == 0.0:
        new_vals[0] = new_vals[1]  # keep the structural positive-at-0 marker
    return Measure1D.from_grid(new_grid, new_vals, normalize=True)


def pushforward_sqrt(mu: Measure1D) -> Measure1D:
    """Law of sqrt(X) for X ~ mu on [0, inf); inverse of pushforward_square."""
    if not mu.is_nonnegative():
        raise DomainError("pushforward_sqrt requires support in [0, inf)")
    if mu.kind == "atoms":
        return _merge_atoms(np.sqrt(np.maximum(mu.xs, 0.0)), mu.ws)
    if mu.kind == "empirical":
        return Measure1D.from_empirical(np.sqrt(np.maximum(mu.samples, 0.0)))
    g = np.maximum(mu.grid, 0.0)
    new_grid = np.sqrt(g)
    new_vals = mu.vals * 2.0 * new_grid
    if g[0] == 0.0 and mu.vals[0] > _ZERO_DENSITY_SENTINEL:
        new_vals[0] = new_vals[1]
    return Measure1D.from_grid(new_grid, new_vals, normalize=True)


def pushforward_scale(mu: Measure1D, c: float) -> Measure1D:
    """Law of c X for X ~ mu, c > 0."""
    if c <= 0:
        raise DomainError("pushforward_scale requires c > 0")
    if mu.kind == "atoms":
        return Measure1D.from_atoms(c * mu.xs, mu.ws)
    if mu.kind == "empirical":
        return Measure1D.from_empirical(c * mu.samples)
    return Measure1D.from_grid(c * mu.grid, mu.vals / c)


def pushforward_abs_shift(mu: Measure1D, w: ComplexPoint) -> Measure1D:
    """Law of \\|w - X\\| for X ~ mu and a fixed complex w."""
    w = complex(w)
    if mu.kind == "atoms":
        return _merge_atoms(np.abs(w - mu.xs), mu.ws)
    if mu.kind == "empirical":
        return Measure1D.from_empirical(np.abs(w - mu.samples))
    wr, wi = w.real, abs(w.imag)
    g, v = mu.grid, mu.vals
    t_nodes = np.abs(w - g)
    tmin = wi if (g[0] <= wr <= g[-1]) else float(np.min(t_nodes))
    tmax = float(np.max(t_nodes))
    pts = [t_nodes, np.linspace(tmin, tmax, 4 * g.size)]
    if wi > 0 and g[0] <= wr <= g[-1]:
        pts.append(wi * (1.0 + np.geomspace(1e-10, 1.0, 40) * (tmax / wi - 1.0)))
    t = np.unique(np.concatenate(pts))
    t = t[(t >= tmin) & (t <= tmax)]
    if t[0] > tmin:
        t = np.concatenate([[tmin], t])
    u = np.sqrt(np.maximum(t * t - wi * wi, 0.0))
    dens = np.interp(wr + u, g, v, left=0.0, right=0.0) + \
        np.interp(wr - u, g, v, left=0.0, right=0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        jac = np.where(u > 0, t / np.where(u > 0, u, 1.0), 0.0)
    dens = dens * jac
    if wi > 0 and u[0] == 0.0:
        dens[0] = dens[1]  # integrable 1/sqrt edge; finite node marker
    if t.size < 2 or np.trapezoid(dens, t) <= 0:
        return Measure1D.point_mass(float(t_nodes[0]))
    return Measure1D.from_grid(t, dens, normalize=True)


def _merge_atoms(xs, ws):
    order = np.argsort(xs)
    xs, ws = np.asarray(xs, float)[order], np.asarray(ws, float)[order]
    keep_x, keep_w = [xs[0]], [ws[0]]
    for x, w in zip(xs[1:], ws[1:]):
        if x - keep_x[-1] <= 1e-14 * max(1.0, abs(x)):
            keep_w[-1] += w
        else:
            keep_x.append(x)
            keep_w.append(w)
    return Measure1D.from_atoms(keep_x, keep_w)


# ----------------------------------------------------------------------
# Stieltjes transform and its inversion
# ----------------------------------------------------------------------

def _stieltjes_any(mu: Measure1D, z):
    """G_mu(z) = int d mu(x) / (z - x) for z off the support.

    Vectorized over z. No domain checks: callers guarantee either
    Im z != 0 or real z outside the support. Exact for all three
    representations (closed-form cell integrals for the grid form).
    """
    z = np.asarray(z, dtype=complex)
    if mu.kind == "atoms":
        return (mu.ws / (z[..., None] - mu.xs)).sum(axis=-1)
    if mu.kind == "empirical":
        return (1.0 / (z[..., None] - mu.samples)).mean(axis=-1)
    return _pl_stieltjes(mu.grid, mu.vals, z)


def _pl_stieltjes(grid, vals, z, chunk=2 ** 22):
    """Stieltjes transform of a piecewise-linear density, exactly.

    On the cell [x0, x1] with density f(x) = c + d x,
    int f/(z-x) dx = (c + d z) log((z-x0)/(z-x1)) - d (x1-x0),
    and the log of the ratio is safe on the principal branch whenever z is
    off the real segment [x0, x1].
    """
    z = np.asarray(z, dtype=complex)
    flat = z.ravel()
    nodes = grid.size
    out = np.empty(flat.size, dtype=complex)
    step = max(1, chunk // max(nodes, 1))
    m = np.diff(vals) / np.diff(grid)
    c = vals[:-1] - m * grid[:-1]
    dsum = float(np.sum(m * np.diff(grid)))
    for i in range(0, flat.size, step):
        zz = flat[i:i + step, None]
        dz = zz - grid[None, :]
        ratio = dz[:, :-1] / dz[:, 1:]
        out[i:i + step] = ((c + m * zz) * np.log(ratio)).sum(axis=1) - dsum
    return out.reshape(z.shape)


def stieltjes(mu: Measure1D, z: ComplexPoint) -> complex:
    """Stieltjes transform G(z) for Im z > 0 (scalar or array of z).

    Maps the upper half plane into the lower one; \\|G(z)\\| <= 1/Im z.
    """
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise DomainError("stieltjes requires Im z > 0")
    out = _stieltjes_any(mu, z)
    return complex(out) if out.ndim == 0 else out


def stieltjes_invert(G_values, grid, eta, G_values_half=None) -> Measure1D:
    """Recover a density from boundary values of a Stieltjes transform.

    Parameters
    ----------
    G_values : complex array
        G sampled at ``grid + i eta``.
    grid : array
        Strictly increasing evaluation grid.
    eta : float
        Offset above the real axis, > 0.
    G_values_half : complex array, optional
        G sampled at ``grid + i eta/2``; when given, the first-order
        Poisson-kernel bias is removed by Richardson extrapolation
        (density from ``2 G_half - G``).

    Returns a grid-form measure with the renormalization factor stored in
    ``info["renormalization"]``. A factor outside [0.9, 1.1] raises
    :class:`AccuracyError` (eta too large, or the grid missing mass).
    """
    grid = _as_1d(grid, "grid")
    if eta <= 0:
        raise DomainError("eta must be positive")
    G = np.asarray(G_values, dtype=complex)
    if G_values_half is not None:
        G = 2.0 * np.asarray(G_values_half, dtype=complex) - G
    dens = np.maximum(-G.imag / np.pi, 0.0)
    mass = float(np.trapezoid(dens, grid))
    if mass <= 0:
        raise AccuracyError("no mass recovered: zero imaginary part")
    factor = 1.0 / mass
    if not 0.9 <= factor <= 1.1:
        raise AccuracyError(
            f"renormalization factor {factor:.4f} outside [0.9, 1.1]; "
            "eta too large or grid too narrow")
    out = Measure1D.from_grid(grid, dens * factor)
    out.info["renormalization"] = factor
    return out


# ----------------------------------------------------------------------
# moments, quantiles, log potential
# ----------------------------------------------------------------------

def _cell_power_integral(x0, x1, f0, f1, k):
    # exact integral of x^k (c + d x) over [x0, x1], 0 < x0 < x1
    d = (f1 - f0) / (x1 - x0)
    c = f0 - d * x0
    if k == -1:
        return c * math.log(x1 / x0) + d * (x1 - x0)
    if k == -2:
        return c * (1.0 / x0 - 1.0 / x1) + d * math.log(x1 / x0)
    term1 = c * (x1 ** (k + 1) - x0 ** (k + 1)) / (k + 1)
    term2 = d * (x1 ** (k + 2) - x0 ** (k + 2)) / (k + 2)
    return term1 + term2


def moment(mu: Measure1D, k: int, signed: bool = True) -> float:
    """k-th moment. For k < 0 the measure must live on [0, inf);
    mass accumulating at 0 yields the +inf sentinel rather than an error.

    ``signed=False`` integrates \\|x\\|^k instead of x^k.
    """
    k = int(k)
    if k < 0 and not mu.is_nonnegative():
        raise DomainError("negative moments require support in [0, inf)")
    if mu.kind == "atoms":
        xs = mu.xs if signed else np.abs(mu.xs)
        if k < 0 and np.any(np.abs(xs) < 1e-300):
            return math.inf
        return float(np.sum(mu.ws * xs.astype(float) ** k))
    if mu.kind == "empirical":
        xs = mu.samples if signed else np.abs(mu.samples)
        if k < 0 and np.any(np.abs(xs) < 1e-300):
            return math.inf
        return float(np.mean(xs ** k))
    g, v = mu.grid, mu.vals
    if k >= 0:
        xs = g if signed else np.abs(g)
        total = 0.0
        for i in range(g.size - 1):
            a, b = g[i], g[i + 1]
            if a < 0 < b:  # split at the sign change for |x|^k
                vm = np.interp(0.0, g, v)
                total += _signed_cell_poly(a, 0.0, v[i], vm, k, signed)
                total += _signed_cell_poly(0.0, b, vm, v[i + 1], k, signed)
            else:
                total += _signed_cell_poly(a, b, v[i], v[i + 1], k, signed)
        return total
    # negative k, support in [0, inf)
    if g[0] <= 1e-300:
        if v[0] > _ZERO_DENSITY_SENTINEL:
            return math.inf
        if k <= -2 and v[1] > _ZERO_DENSITY_SENTINEL:
            return math.inf  # log-divergent slope cell
    total = 0.0
    for i in range(g.size - 1):
        a, b = g[i], g[i + 1]
        if b <= 1e-300:
            continue
        a_eff = max(a, b * 1e-12)  # the sentinel checks above guarantee the
        # clipped sliver carries negligible f; closed form below it diverges
        if b <= a_eff:
            continue
        fa = v[i] + (v[i + 1] - v[i]) * (a_eff - a) / (b - a)
        total += _cell_power_integral(a_eff, b, fa, v[i + 1], k)
    return total


def _signed_cell_poly(a, b, fa, fb, k, signed):
    if a == b:
        return 0.0
    # integrate x^k (linear) on [a, b] with possibly negative x
    d = (fb - fa) / (b - a)
    c = fa - d * a
    if signed or a >= 0:
        t1 = c * (b ** (k + 1) - a ** (k + 1)) / (k + 1)
        t2 = d * (b ** (k + 2) - a ** (k + 2)) / (k + 2)
        return t1 + t2
    # |x|^k with a < b <= 0: substitute u = -x
    return _signed_cell_poly(-b, -a, fb, fa, k, True)


def quantile(mu: Measure1D, p: float) -> float:
    """Generalized inverse CDF: inf{s : mu([-inf, s]) >= p}, p in (0, 1]."""
    if not 0.0 < p <= 1.0:
        raise DomainError("quantile requires p in (0, 1]")
    if mu.kind == "atoms":
        cum = np.cumsum(mu.ws)
        idx = int(np.searchsorted(cum, p - 1e-12, side="left"))
        return float(mu.xs[min(idx, mu.xs.size - 1)])
    if mu.kind == "empirical":
        n = mu.samples.size
        idx = max(int(math.ceil(p * n - 1e-12)) - 1, 0)
        return float(mu.samples[min(idx, n - 1)])
    W = mu._node_cdf()
    W = W / W[-1]
    idx = int(np.searchsorted(W, p - 1e-12, side="left"))
    if idx == 0:
        return float(mu.grid[0])
    i = idx - 1
    a, b = mu.grid[i], mu.grid[i + 1]
    h = b - a
    f0 = mu.vals[i]
    s = (mu.vals[i + 1] - f0) / h
    need = p - W[i]
    if need <= 0:
        return float(a)
    disc = f0 * f0 + 2.0 * s * need
    if abs(s) < 1e-300:
        t = need / f0 if f0 > 0 else h
    else:
        root = math.sqrt(max(disc, 0.0))
        t = 2.0 * need / (f0 + root) if (f0 + root) > 0 else h
    return float(a + min(max(t, 0.0), h))


def log_potential(nu: Measure1D, cutoff: float = 0.0) -> float:
    """int_{|x| > cutoff} log|x| d nu(x).

    Grid densities are integrated in closed form against log (each cell's
    antiderivative is exact; the cell containing 0 uses the finite limit
    x log x -> 0). An atom at 0 with cutoff 0 yields -inf.
    """
    if cutoff < 0:
        raise DomainError("cutoff must be >= 0")
    if nu.kind == "atoms":
        if cutoff == 0.0 and np.any(np.abs(nu.xs) <= 1e-300):
            return -math.inf
        keep = np.abs(nu.xs) > cutoff
        return float(np.sum(nu.ws[keep] * np.log(np.abs(nu.xs[keep]))))
    if nu.kind == "empirical":
        if cutoff == 0.0 and np.any(np.abs(nu.samples) <= 1e-300):
            return -math.inf
        keep = np.abs(nu.samples) > cutoff
        if not np.any(keep):
            return 0.0
        return float(np.sum(np.log(np.abs(nu.samples[keep]))) / nu.samples.size)
    total = 0.0
    g, v = nu.grid, nu.vals
    for i in range(g.size - 1):
        a, b = g[i], g[i + 1]
        fa, fb = v[i], v[i + 1]
        if a < 0 < b:
            vm = fa + (fb - fa) * (0.0 - a) / (b - a)
            total += _cell_log_integral(0.0, -a, vm, fa, cutoff)
            total += _cell_log_integral(0.0, b, vm, fb, cutoff)
        elif b <= 0:
            total += _cell_log_integral(-b, -a, fb, fa, cutoff)
        else:
            total += _cell_log_integral(a, b, fa, fb, cutoff)
    return total


def _cell_log_integral(a, b, fa, fb, cutoff):
    """Exact integral of f(x) log(x) on [max(a, cutoff), b], 0 <= a < b,
    f linear with f(a) = fa, f(b) = fb."""
    if b <= a:
        return 0.0
    d = (fb - fa) / (b - a)
    lo = max(a, cutoff)
    if b <= lo:
        return 0.0
    c = fa - d * a

    def anti(x):
        if x <= 0.0:
            return 0.0  # lim x->0 of every term
        return c * (x * math.log(x) - x) + d * (0.5 * x * x * math.log(x) - 0.25 * x * x)

    return anti(b) - anti(lo)


# ----------------------------------------------------------------------
# distances
# ----------------------------------------------------------------------

def _merged_breakpoints(a: Measure1D, b: Measure1D):
    pts = np.unique(np.concatenate([a.breakpoints(), b.breakpoints()]))
    return pts


def ks_distance(a: Measure1D, b: Measure1D) -> float:
    """Kolmogorov-Smirnov distance sup_x |F_a(x) - F_b(x)| (exact)."""
    pts = _merged_breakpoints(a, b)
    cand = [np.abs(a.cdf(pts) - b.cdf(pts)),
            np.abs(a.cdf_left(pts) - b.cdf_left(pts))]
    # interior extrema: density difference is linear on each merged cell
    if a.kind == "grid" or b.kind == "grid":
        l, r = pts[:-1], pts[1:]
        dl = a.density(l) - b.density(l)
        dr = a.density(r) - b.density(r)
        mask = (dl * dr < 0)
        if np.any(mask):
            t = dl[mask] / (dl[mask] - dr[mask])
            xs = l[mask] + t * (r[mask] - l[mask])
            cand.append(np.abs(a.cdf(xs) - b.cdf(xs)))
    return float(max(np.max(c) for c in cand))


def wasserstein1(a: Measure1D, b: Measure1D) -> float:
    """W1 distance = integral of |F_a - F_b| (exact for these forms)."""
    pts = _merged_breakpoints(a, b)
    total = 0.0
    for l, r in zip(pts[:-1], pts[1:]):
        h = r - l
        if h <= 0:
            continue
        D0 = float(a.cdf(l) - b.cdf(l))
        fl = float(a.density(l) - b.density(l))
        fr = float(a.density(r) - b.density(r))
        B = fl
        C = (fr - fl) / (2.0 * h)
        total += _abs_quadratic_integral(D0, B, C, h)
    return total


def _abs_quadratic_integral(A, B, C, h):
    # integral of |A + B t + C t^2| over [0, h]
    roots = []
    if abs(C) > 1e-300:
        disc = B * B - 4 * A * C
        if disc > 0:
            r = math.sqrt(disc)
            roots = sorted([(-B - r) / (2 * C), (-B + r) / (2 * C)])
    elif abs(B) > 1e-300:
        roots = [-A / B]
    cuts = [0.0] + [t for t in roots if 0.0 < t < h] + [h]

    def F(t):
        return A * t + B * t * t / 2.0 + C * t ** 3 / 3.0

    total = 0.0
    for u, w in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (u + w)
        sgn = 1.0 if (A + B * mid + C * mid * mid) >= 0 else -1.0
        total += sgn * (F(w) - F(u))
    return total
