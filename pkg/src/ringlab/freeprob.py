"""Free-probability engine.

Solves the subordination fixed point

    G(z1) = G_T(z2),    z2 = z1 - rho * R_rho(G(z1)),

where G_T is the Stieltjes transform of a symmetric singular-value law and
R_rho is the (rho-normalized) R-transform of the symmetric Bernoulli law
with atoms at +-rho. Iterating this fixed point along a vertical
continuation ladder yields the free convolution of the symmetrized law
with the Bernoulli law; inverting the boundary values gives its density.

Also provides the S-transform of measures on (0, inf) via inversion of

    psi(u) = int u x / (1 - u x) d mu(x),    S(t) = chi(t) (1 + t) / t.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import AccuracyError, DomainError, SolverError
from .measures import Measure1D, _stieltjes_any, stieltjes_invert, symmetrize

log = logging.getLogger(__name__)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


# ----------------------------------------------------------------------
# Bernoulli R-transform
# ----------------------------------------------------------------------

def bernoulli_r(rho, w):
    """R_rho(w) = (sqrt(1 + 4 rho^2 w^2) - 1) / (2 rho w), branch pinned
    by R_rho(w) ~ rho w near 0 and continuity on the lower half plane.

    Evaluated in the cancellation-free form 2 rho w / (sqrt(...) + 1) with
    the square root split into principal-branch factors
    sqrt(1 + 2 i rho w) * sqrt(1 - 2 i rho w); for w in the closed lower
    half plane the first factor stays in the right half plane and the
    product realizes the analytic branch cut along the imaginary segment
    below -i/(2 rho). Maps C- into C-. Accepts arrays.
    """
    w = np.asarray(w, dtype=complex)
    rho = np.asarray(rho, dtype=float)
    s = np.sqrt(1.0 + 2j * rho * w) * np.sqrt(1.0 - 2j * rho * w)
    out = 2.0 * rho * w / (s + 1.0)
    return out if out.ndim else complex(out)


# ----------------------------------------------------------------------
# fast Stieltjes evaluation (exact, with an optional rational surrogate)
# ----------------------------------------------------------------------

def _aaa_fit(Z, F, tol=1e-11, mmax=90):
    """Greedy rational (barycentric) fit of samples F on points Z."""
    Z = np.asarray(Z, complex)
    F = np.asarray(F, complex)
    mask = np.ones(Z.size, bool)
    zj, fj, wj = [], [], []
    scale = np.max(np.abs(F))
    R = np.full(Z.size, F.mean(), complex)
    for _ in range(mmax):
        j = int(np.argmax(np.abs(F - R) * mask))
        zj.append(Z[j]); fj.append(F[j])
        mask[j] = False
        zs = np.asarray(zj); fs = np.asarray(fj)
        C = 1.0 / (Z[mask, None] - zs[None, :])
        A = (F[mask, None] - fs[None, :]) * C
        _, _, vh = np.linalg.svd(A, full_matrices=False)
        wj = vh[-1].conj()
        num = C @ (wj * fs)
        den = C @ wj
        R = np.full(Z.size, np.nan, complex)
        R[mask] = num / den
        R[~mask] = F[~mask]
        err = np.max(np.abs(F[mask] - R[mask])) if mask.any() else 0.0
        if err <= tol * scale:
            break
    return np.asarray(zj), np.asarray(fj), np.asarray(wj)


def _bary_eval(z, zj, fj, wj):
    z = np.asarray(z, complex)
    C = 1.0 / (z[..., None] - zj)
    num = C @ (wj * fj)
    den = C @ wj
    out = num / den
    bad = ~np.isfinite(out)
    if np.any(bad):
        idx = np.argmin(np.abs(z[bad][:, None] - zj), axis=1)
        out[bad] = fj[idx]
    return out


def _bary_poles(zj, wj):
    m = wj.size
    E = np.eye(m + 1, dtype=complex)
    E[0, 0] = 0.0
    A = np.zeros((m + 1, m + 1), dtype=complex)
    A[0, 1:] = wj
    A[1:, 0] = 1.0
    A[1:, 1:] = np.diag(zj)
    from scipy.linalg import eig
    ev = eig(A, E, right=False)
    return ev[np.isfinite(ev)]


def _pole_refit(Z, F, poles, keep_mask):
    """Least-squares residues for a fixed pole set: r(z) = sum a_k/(z-p_k)."""
    p = poles[keep_mask]
    if p.size == 0:
        return None
    A = 1.0 / (Z[:, None] - p[None, :])
    scale = np.linalg.norm(A, axis=0)
    a, *_ = np.linalg.lstsq(A / scale, F, rcond=None)
    return p, a / scale


def _pole_eval(z, p, a):
    z = np.asarray(z, complex)
    return (1.0 / (z[..., None] - p)) @ a


class StieltjesEvaluator:
    """Vectorized G_T evaluation for the solver.

    The default path evaluates the transform exactly (closed-form cell
    sums for grid measures). ``use_rational=True`` additionally fits a
    pole expansion on the horizontal guard line Im z = guard (below every
    query the solver makes), validates it against the exact transform on
    probe points and uses it only if it meets ``val_tol``; a rejected fit
    silently falls back to exact evaluation. Kinks of a piecewise-linear
    density put log branch points on the axis, which caps the achievable
    surrogate accuracy around 1e-6, so the ring-law pipelines leave this
    off and pay for exact logs.
    """

    def __init__(self, mu, guard=None, val_tol=5e-8, use_rational=False):
        self.mu = mu
        self.guard = guard
        self.rational = None
        lo, hi = mu.support
        self.radius = max(abs(lo), abs(hi))
        if use_rational and guard is not None and mu.kind == "grid":
            self._fit_rational(val_tol)

    def _fit_rational(self, val_tol):
        g = self.guard
        lo, hi = self.mu.support
        X = self.radius + 3.0
        cluster = [np.linspace(-X, X, 400),
                   np.linspace(lo - 0.1, hi + 0.1, 1200)]
        for e in (lo, hi, 0.0):
            d = np.geomspace(g / 2, 2.0, 90)
            cluster.extend([e + d, e - d])
        x = np.unique(np.concatenate(cluster))
        Z = [x + 1j * g]
        for s in (2.0, 8.0, 64.0):
            Z.append(x[::4] + 1j * g * s)
        Z = np.concatenate(Z)
        F = _stieltjes_any(self.mu, Z)
        zj, fj, wj = _aaa_fit(Z, F, tol=1e-12, mmax=150)
        poles = _bary_poles(zj, wj)
        keep = (poles.imag <= g / 8) & (np.abs(poles.real) <= X)
        fit = _pole_refit(Z, F, poles, keep)
        if fit is None:
            return
        p, a = fit
        xp = np.unique(np.concatenate(
            [np.linspace(-X, X, 4001)] +
            [e + s * np.geomspace(g / 3, 1.0, 300)
             for e in (lo, hi) for s in (1.0, -1.0)]))
        err = 0.0
        scale = 0.0
        for s in (1.0, 1.5, 4.0, 30.0, 500.0):
            zp = xp + 1j * g * s
            exact = _stieltjes_any(self.mu, zp)
            err = max(err, float(np.max(np.abs(_pole_eval(zp, p, a) - exact))))
            scale = max(scale, float(np.max(np.abs(exact))))
        if err <= val_tol * scale:
            self.rational = (p, a)
            log.debug("pole surrogate: %d poles, validated err %.2e", p.size, err)
        else:
            log.info("pole surrogate rejected (err %.2e > %.2e); using exact "
                     "evaluation", err, val_tol * scale)

    def __call__(self, z):
        if self.rational is not None:
            return _pole_eval(z, *self.rational)
        return _stieltjes_any(self.mu, z)


# ----------------------------------------------------------------------
# Schwinger-Dyson fixed point
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SDSolution:
    """One converged fixed point G(z1) with its subordination point."""
    z1: complex
    G: complex
    z2: complex
    residual: float
    iterations: int


def is_symmetric(mu: Measure1D, tol=1e-9) -> bool:
    if mu.kind == "atoms":
        return (np.allclose(mu.xs, -mu.xs[::-1], atol=tol)
                and np.allclose(mu.ws, mu.ws[::-1], atol=tol))
    if mu.kind == "empirical":
        return np.allclose(mu.samples, -mu.samples[::-1], atol=tol)
    return (np.allclose(mu.grid, -mu.grid[::-1], atol=tol)
            and np.allclose(mu.vals, mu.vals[::-1], atol=tol))


def _sd_iterate(G_eval, rho, z1, w0, tol, max_iter, alpha0=0.5):
    """Damped subordination iteration in the omega_2 variable, vectorized,
    with a secant accelerator for the slow modes near spectral edges.

    The fixed point solved is the two-sided subordination form of the
    equation: with H_T(y) = 1/G_T(y) - y and the Bernoulli reciprocal
    transform F_B(w) = w - rho^2/w,

        w = K(w) := z1 + H_T(z1 - rho^2/w),

    whose solution is omega_2, while omega_1 = z1 - rho^2/omega_2 is the
    subordination point z2 and G(z1) = G_T(omega_1). K maps the half
    plane {Im w >= Im z1} into itself (Denjoy-Wolff), and crucially is
    free of square roots: the branch of the R-transform never has to be
    tracked through the iteration, which matters when the solution path
    passes near the branch points +-i/(2 rho). A secant step on
    f(w) = K(w) - w replaces the damped step whenever it is finite, stays
    in the half plane and is not wildly larger than the Picard
    displacement: near spectral edges the plain contraction rate degrades
    to 1 - O(sqrt(Im z)) and the secant restores superlinear convergence.
    After the first 5 sweeps the residual must decrease monotonically,
    otherwise the damping factor of the base step is halved (self-check
    diagnostic).
    """
    w = np.array(w0, complex, copy=True)
    floor = z1.imag
    w = w.real + 1j * np.maximum(w.imag, floor)
    alpha = np.full(w.shape, alpha0)
    res_prev = np.full(w.shape, np.inf)
    iters = np.zeros(w.shape, dtype=int)
    active = np.ones(w.shape, bool)
    last_disp = np.zeros(w.shape)
    w_prev = np.zeros(w.shape, complex)
    f_prev = np.zeros(w.shape, complex)
    have_prev = np.zeros(w.shape, bool)
    rho2 = np.broadcast_to(np.asarray(rho, float) ** 2, w.shape)
    for it in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        omega1 = z1[idx] - rho2[idx] / w[idx]
        g1 = G_eval(omega1)
        g1 = g1.real + 1j * np.minimum(g1.imag, -1e-300)
        K = z1[idx] + 1.0 / g1 - omega1
        K = K.real + 1j * np.maximum(K.imag, floor[idx])
        f = K - w[idx]
        disp = np.abs(f)
        worse = (it > 5) & (disp > res_prev[idx])
        alpha[idx] = np.where(worse, np.maximum(alpha[idx] * 0.5, 1.0 / 64), alpha[idx])
        res_prev[idx] = disp
        last_disp[idx] = disp

        step_damped = alpha[idx] * f
        denom = f - f_prev[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            step_sec = -f * (w[idx] - w_prev[idx]) / denom
        cand = w[idx] + step_sec
        ok = (have_prev[idx] & np.isfinite(cand)
              & (cand.imag >= floor[idx])
              & (np.abs(step_sec) <= 100.0 * disp + 1e-280))
        w_prev[idx] = w[idx]
        f_prev[idx] = f
        have_prev[idx] = True
        w[idx] = np.where(ok, cand, w[idx] + step_damped)
        iters[idx] += 1
        active[idx] = disp > tol
    return w, iters, active, last_disp


def _sd_solve_vec(G_eval, rho, z1, tol, support_radius, warm=None,
                  max_iter=600, max_levels=60):
    """Solve the subordination fixed point at every z1 (1-D complex array);
    returns (omega_2, iterations).

    Continuation: start at Im = Y = 10 (support radius + rho) where the map
    is strongly contracting, walk the height down geometrically to Im(z1),
    warm starting every level. ``warm`` (an omega_2 array) skips the
    ladder and iterates directly from the supplied start; points that fail
    to converge there are re-run through the full ladder.
    """
    z1 = np.asarray(z1, complex)
    rho_arr = np.broadcast_to(np.asarray(rho, float), z1.shape).astype(float)
    # omega accuracy 100x below tol still leaves G far more accurate than
    # the eta bias; 2e-13 stays above the iteration's rounding noise
    tol_it = max(0.02 * tol, 2e-13)

    if warm is not None:
        w, iters, bad, _ = _sd_iterate(G_eval, rho_arr, z1, warm, tol_it,
                                       max_iter=250)
        if np.any(bad):
            idx = np.nonzero(bad)[0]
            w_bad, it_bad = _sd_ladder(G_eval, rho_arr[idx], z1[idx], tol_it,
                                       support_radius, max_iter, max_levels)
            w[idx] = w_bad
            iters[idx] += it_bad
        return w, iters

    return _sd_ladder(G_eval, rho_arr, z1, tol_it, support_radius,
                      max_iter, max_levels)


def _sd_ladder(G_eval, rho_arr, z1, tol_it, support_radius, max_iter, max_levels):
    Y = 10.0 * (support_radius + float(np.max(rho_arr)) + 0.1)
    target = z1.imag
    w = z1.real + 1j * np.maximum(target, Y)
    iters = np.zeros(z1.shape, dtype=int)
    level_im = Y
    for _ in range(max_levels):
        level_im = max(level_im / 2.0, 0.0)
        im_k = np.maximum(target, level_im)
        zk = z1.real + 1j * im_k
        w, it_k, bad, disp = _sd_iterate(G_eval, rho_arr, zk, w, tol_it, max_iter)
        iters += it_k
        if np.any(bad):
            raise SolverError(
                f"fixed point not converged at continuation height {level_im:.3e} "
                f"for {int(bad.sum())} point(s), e.g. z1={zk[np.argmax(bad)]:.6g}",
                residual=float(np.max(disp[bad])))
        if level_im <= np.min(target):
            break
    else:
        raise SolverError("continuation ladder exhausted before reaching Im(z1)")
    return w, iters


def sd_solve(theta_sym: Measure1D, rho: float, z1: complex,
             tol: float = 1e-10) -> SDSolution:
    """Solve G(z1) = G_T(z1 - rho R_rho(G(z1))) for one spectral point.

    Parameters
    ----------
    theta_sym : Measure1D
        Symmetric, compactly supported singular-value law (the measure
        whose Stieltjes transform subordinates the solution).
    rho : float
        Bernoulli radius, >= 0. ``rho=0`` returns G_T(z1) directly.
    z1 : complex
        Spectral point with Im(z1) > 0.
    tol : float
        Bound on the residual |G - G_T(z2)|.
    """
    z1 = complex(z1)
    if z1.imag <= 0:
        raise DomainError("sd_solve requires Im(z1) > 0")
    if rho < 0:
        raise DomainError("rho must be >= 0")
    if not is_symmetric(theta_sym):
        raise DomainError("theta_sym must be a symmetric measure")
    G_eval = StieltjesEvaluator(theta_sym)
    if rho == 0.0:
        G = complex(G_eval(np.array([z1]))[0])
        return SDSolution(z1=z1, G=G, z2=z1, residual=0.0, iterations=0)
    w, iters = _sd_solve_vec(G_eval, rho, np.array([z1]), tol, G_eval.radius)
    omega2 = complex(w[0])
    z2 = z1 - rho * rho / omega2
    G = complex(G_eval(np.array([z2]))[0])
    residual = abs(G - omega2 / (omega2 * omega2 - rho * rho))
    return SDSolution(z1=z1, G=G, z2=z2, residual=residual,
                      iterations=int(iters[0]))


def diag_bounds_check(sol: SDSolution, kappa1: float) -> bool:
    """A-priori bound diagnostic: |Im G| <= kappa1 must propagate from G_T."""
    return abs(sol.G.imag) <= kappa1


# ----------------------------------------------------------------------
# free convolution with the symmetric Bernoulli law
# ----------------------------------------------------------------------

def free_convolve_bernoulli(theta: Measure1D, rho: float, out_grid,
                            eta: float, tol: float = 1e-12,
                            evaluator: StieltjesEvaluator | None = None,
                            warm: dict | None = None) -> Measure1D:
    """Density of symmetrize(theta) boxplus Bernoulli(+-rho).

    Solves the subordination fixed point at ``out_grid + i eta`` and
    ``+ i eta/2`` and inverts with Richardson extrapolation. The output is
    an exactly symmetric grid density, renormalized to mass 1 (factor in
    ``info["renormalization"]`` and logged).

    ``evaluator``/``warm`` let repeated calls (Girko pipeline) share the
    G_T surrogate and warm-start from a neighboring radius; both are
    optimizations, never a correctness dependency.
    """
    out_grid = np.asarray(out_grid, dtype=float)
    if eta <= 0:
        raise DomainError("eta must be positive")
    theta_sym = theta if is_symmetric(theta) else symmetrize(theta)
    if evaluator is None:
        evaluator = StieltjesEvaluator(theta_sym, guard=eta / 2)

    xs = np.unique(np.abs(out_grid))
    if theta_sym.kind == "atoms" and theta_sym.xs.size == 1:
        # theta = delta_0: closed form G(z) = z / (z^2 - rho^2)
        def closed(z):
            return z / (z * z - rho * rho)
        G1 = closed(xs + 1j * eta)
        G2 = closed(xs + 1j * eta / 2)
        iters = np.zeros(xs.shape, int)
    elif rho == 0.0:
        G1 = evaluator(xs + 1j * eta)
        G2 = evaluator(xs + 1j * eta / 2)
        iters = np.zeros(xs.shape, int)
    else:
        try:
            w1 = warm.get("W1") if warm else None
            w2 = warm.get("W2") if warm else None
            W1, it1 = _sd_solve_vec(evaluator, rho, xs + 1j * eta, tol,
                                    evaluator.radius, warm=w1)
            W2, it2 = _sd_solve_vec(evaluator, rho, xs + 1j * eta / 2, tol,
                                    evaluator.radius,
                                    warm=w2 if w2 is not None else W1 - 1j * eta / 2)
            iters = it1 + it2
        except SolverError as exc:
            raise SolverError(f"free convolution failed at rho={rho}: {exc}",
                              residual=exc.residual) from exc
        if warm is not None:
            warm["W1"], warm["W2"] = W1, W2
        G1 = evaluator((xs + 1j * eta) - rho * rho / W1)
        G2 = evaluator((xs + 1j * eta / 2) - rho * rho / W2)

    # map the symmetric solution onto the requested grid
    pos = np.searchsorted(xs, np.abs(out_grid))
    Gfull1 = np.where(out_grid >= 0, G1[pos], -np.conj(G1[pos]))
    Gfull2 = np.where(out_grid >= 0, G2[pos], -np.conj(G2[pos]))
    out = stieltjes_invert(Gfull1, out_grid, eta, G_values_half=Gfull2)
    out.info["iterations"] = int(np.sum(iters))
    log.debug("free convolution rho=%.4f: renormalization %.6f, %d iterations",
              rho, out.info["renormalization"], out.info["iterations"])
    return out


# ----------------------------------------------------------------------
# S-transform
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class STransformTable:
    """Tabulated S-transform; serializes to CSV for inspection."""
    t_grid: np.ndarray
    S_values: np.ndarray
    psi_domain: tuple = (0.0, 0.0)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "S"])
            for t, s in zip(self.t_grid, self.S_values):
                w.writerow([f"{t:.17g}", f"{s:.17g}"])


def _check_positive_support(mu):
    lo, _ = mu.support
    if mu.kind == "atoms" and np.any(mu.xs <= 0):
        raise DomainError("S-transform requires support in (0, inf), no atom at 0")
    if lo < 0:
        raise DomainError("S-transform requires support in (0, inf)")


def psi_moment(mu: Measure1D, u: float) -> float:
    """psi(u) = int u x / (1 - u x) d mu(x) = -1 + y G(y) at y = 1/u, exactly."""
    if u == 0.0:
        return 0.0
    y = 1.0 / u
    G = _stieltjes_any(mu, np.array([y + 0j]))[0]
    return float(np.real(-1.0 + y * G))


def psi_square(theta: Measure1D, u: float) -> float:
    """psi of the squared law at u <= 0, integrated against theta itself:

        psi_{law of X^2}(u) = int u x^2 / (1 - u x^2) d theta(x).

    With s = 1/sqrt(-u) the integrand is -1 + s^2/(s^2 + x^2), and the
    Poisson kernel is the imaginary part of the resolvent, so

        psi(u) = -1 - s Im G_theta(i s),

    which the exact transform evaluates in closed form for every measure
    representation. Integrating against theta itself (rather than a grid
    push-forward of the squared law) avoids misrepresenting 1/sqrt edges.
    """
    if u == 0.0:
        return 0.0
    if u > 0:
        raise DomainError("psi_square is evaluated on u <= 0")
    x_hi = max(abs(theta.support[0]), abs(theta.support[1]))
    if -u * x_hi * x_hi < 1e-3:
        # the closed form cancels catastrophically as u -> 0; three moment
        # terms leave a relative error below (u x^2)^3 ~ 1e-9
        from .measures import moment as _moment
        return (u * _moment(theta, 2) + u * u * _moment(theta, 4)
                + u ** 3 * _moment(theta, 6))
    s = 1.0 / math.sqrt(-u)
    G = _stieltjes_any(theta, np.array([1j * s]))[0]
    return -1.0 - s * float(G.imag)


def _invert_psi(psi, target, u_hint=None):
    """Solve psi(u) = target for u < 0 (psi increasing, -1 < target < 0)."""
    hi = -1e-300
    if u_hint is not None and u_hint < 0 and psi(u_hint) <= target:
        lo = u_hint
    else:
        lo = u_hint if (u_hint is not None and u_hint < 0) else -1.0
        for _ in range(200):
            if psi(lo) < target:
                break
            lo *= 4.0
        else:
            raise AccuracyError("could not bracket psi inversion")
    return brentq(lambda u: psi(u) - target, lo, hi, xtol=1e-300, rtol=8.9e-16)


def s_transform(mu: Measure1D, t: float) -> float:
    """S-transform of a measure on (0, inf) at t in (0, 1).

    S(t) = chi(t) (1 + t) / t with chi the inverse of psi on (0, 1/x_max);
    psi is strictly increasing there so bisection inversion is well posed.
    """
    if not 0.0 < t < 1.0:
        raise DomainError("s_transform requires t in (0, 1)")
    _check_positive_support(mu)
    x_max = mu.support[1]
    hi = (1.0 - 1e-12) / x_max
    lo = 1e-300

    def f(u):
        return psi_moment(mu, u) - t

    if f(hi) < 0:
        raise DomainError(f"t={t} is above the range of psi for this measure")
    u = brentq(f, lo, hi, xtol=1e-300, rtol=8.9e-16)
    return u * (1.0 + t) / t


def s_transform_table(mu: Measure1D, t_grid) -> STransformTable:
    t_grid = np.asarray(t_grid, dtype=float)
    S = np.array([s_transform(mu, t) for t in t_grid])
    x_max = mu.support[1]
    return STransformTable(t_grid=t_grid, S_values=S,
                           psi_domain=(0.0, 1.0 / x_max))
