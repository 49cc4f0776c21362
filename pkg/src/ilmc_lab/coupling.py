"""Reflection-type coupling of two implicit chains and its contraction rate.

One chain step splits into a diffusion stage and a drift stage.  During the
diffusion stage the first chain receives Brownian sub-increments xi and the
second receives the mirrored increments (I - 2 e e^T) xi, with e the unit
vector along the current separation, recomputed each sub-increment; once the
separation falls below the coalescence threshold the pair is glued and moves
in lockstep forever.  The drift stage applies the inverse map Phi_h^{-1} to
both ends.  The separation |X - Y| is measured through the concave Lyapunov
function f, whose exponential decay rate is the ergodicity estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from . import rng
from .errors import InputError, ParameterError
from .potentials import Potential
from .prox import DEFAULT_PROX, ProxConfig, phi_inverse, r_prime, require_admissible

SQRT2 = np.sqrt(2.0)
WF_MAX_SAMPLES = 4096  # exact assignment regime


@dataclass(frozen=True)
class LyapunovConfig:
    c_f: float
    r_f: float

    def __post_init__(self):
        if self.c_f <= 0 or self.r_f <= 0:
            raise ParameterError("c_f and r_f must be positive")


def default_lyapunov(p: Potential) -> LyapunovConfig:
    """R_f = 3*R' with c_f = 1/R_f; the measured rate is reported as a
    function of these, not asserted against a formula."""
    rf = 3.0 * r_prime(p)
    return LyapunovConfig(c_f=1.0 / rf, r_f=rf)


@dataclass
class CoupledState:
    x: np.ndarray
    y: np.ndarray
    coalesced: bool = False


def lyapunov_f(r, cfg: LyapunovConfig):
    """f(r) = integral_0^r exp(-c_f * min(r', R_f)) dr', in closed form:
    (1 - e^{-c_f r})/c_f below the saturation radius, linear with slope
    e^{-c_f R_f} beyond it.  expm1 keeps the c_f -> 0 (identity) limit exact."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise InputError("lyapunov_f is defined for r >= 0")
    c, rf = cfg.c_f, cfg.r_f
    knee = -np.expm1(-c * rf) / c
    out = np.where(r <= rf,
                   -np.expm1(-c * np.minimum(r, rf)) / c,
                   knee + np.exp(-c * rf) * (r - rf))
    return float(out) if out.shape == () else out


def _diffusion_stage(X, Y, coalesced, h, n_substeps, eps, gen, drift_only=False):
    """Shared noise for X, mirrored noise for Y, gluing pairs whose
    separation hits zero.

    The mirrored increments keep the difference on the line it started the
    substep on, so its signed component s is exactly a Brownian motion with
    variance rate 8.  A pair coalesces when s crosses or lands within eps of
    zero, or - endpoints both positive - with the exact bridge-hit
    probability exp(-s_old*s_new/(4*dt_sub)).  Gluing happens at the substep
    end; the X marginal is untouched either way.
    """
    dt_sub = h / n_substeps
    scale = np.sqrt(dt_sub)
    n, d = X.shape
    for _ in range(n_substeps):
        xi = np.zeros((n, d)) if drift_only else gen.standard_normal((n, d)) * scale
        z = X - Y
        nz = np.linalg.norm(z, axis=1)
        safe = np.maximum(nz, 1e-300)
        e = z / safe[:, None]
        proj = np.einsum("ij,ij->i", xi, e)
        xi_y = xi - 2.0 * proj[:, None] * e
        X = X + SQRT2 * xi
        Y = np.where(coalesced[:, None], X, Y + SQRT2 * xi_y)
        s_new = nz + 2.0 * SQRT2 * proj  # signed separation along the old line
        newly = ~coalesced & ((s_new <= eps) | (nz <= eps))
        if not drift_only:
            with np.errstate(over="ignore"):
                p_hit = np.exp(-np.maximum(nz * s_new, 0.0) / (4.0 * dt_sub))
            coin = gen.random(n)
            newly |= ~coalesced & (coin < p_hit)
        if newly.any():
            Y[newly] = X[newly]
            coalesced = coalesced | newly
    return X, Y, coalesced


def _drift_stage(p, h, X, Y, coalesced, cfg):
    if p.dim == 1:
        Xn = np.atleast_2d(phi_inverse(p, h, X.ravel(), cfg)).reshape(X.shape)
        Yn = np.atleast_2d(phi_inverse(p, h, Y.ravel(), cfg)).reshape(Y.shape)
    else:
        Xn = phi_inverse(p, h, X, cfg)
        Yn = phi_inverse(p, h, Y, cfg)
    Yn = np.where(coalesced[:, None], Xn, Yn)
    return Xn, Yn


def coalescence_eps(h: float) -> float:
    """Below 1e-6*sqrt(h) the drift map keeps the pair within solver
    tolerance of equality; the glue bias is far below anything measured."""
    return 1e-6 * np.sqrt(h)


def coupled_step(p: Potential, h: float, state: CoupledState, n_substeps: int,
                 eps_coalesce: float, gen: np.random.Generator,
                 cfg: ProxConfig = DEFAULT_PROX) -> CoupledState:
    """One coupled chain step (diffusion stage then drift stage) for a single
    pair.  ``gen`` supplies the sub-increments."""
    require_admissible(p, h, cfg)
    if n_substeps < 1:
        raise ParameterError("n_substeps must be >= 1")
    X = np.atleast_1d(np.asarray(state.x, dtype=float))[None, :].copy()
    Y = np.atleast_1d(np.asarray(state.y, dtype=float))[None, :].copy()
    co = np.array([state.coalesced])
    X, Y, co = _diffusion_stage(X, Y, co, h, n_substeps, eps_coalesce, gen)
    X, Y = _drift_stage(p, h, X, Y, co, cfg)
    return CoupledState(x=X[0], y=Y[0], coalesced=bool(co[0]))


@dataclass
class ContractionReport:
    h: float
    t: np.ndarray               # chain times n*h, including n = 0
    mean_f: np.ndarray
    stderr: np.ndarray
    coalesced_frac: np.ndarray
    rate: float                 # C in  mean_f ~ exp(alpha - C t)
    intercept: float
    r_squared: float
    n_fit: int
    degenerate: bool


def estimate_contraction(p: Potential, h: float, n_steps: int, n_replicas: int,
                         z0: float, lyap: LyapunovConfig, seed: int,
                         n_substeps: int = 16, eps_coalesce: float | None = None,
                         drift_only: bool = False,
                         cfg: ProxConfig = DEFAULT_PROX) -> ContractionReport:
    """Run independent coupled pairs from |X0 - Y0| = z0 and fit the decay
    rate of E f(|Z_n|).

    X0 is the origin and Y0 = X0 + z0*e1 for every replica.  The exponential
    fit uses the leading window of steps where the mean still clears ten
    times its Monte Carlo standard error; at least three such points are
    required, otherwise the report is flagged degenerate.
    """
    require_admissible(p, h, cfg)
    if n_replicas < 1 or n_steps < 1:
        raise ParameterError("need n_steps >= 1 and n_replicas >= 1")
    eps = coalescence_eps(h) if eps_coalesce is None else eps_coalesce
    d = p.dim
    X = np.zeros((n_replicas, d))
    Y = np.zeros((n_replicas, d))
    Y[:, 0] = z0

    mean_f = np.empty(n_steps + 1)
    stderr = np.empty(n_steps + 1)
    co_frac = np.empty(n_steps + 1)
    co = np.zeros(n_replicas, dtype=bool)

    def record(i):
        dist = np.linalg.norm(X - Y, axis=1)
        fv = lyapunov_f(dist, lyap)
        mean_f[i] = fv.mean()
        stderr[i] = fv.std(ddof=1) / np.sqrt(n_replicas) if n_replicas > 1 else 0.0
        co_frac[i] = co.mean()

    record(0)
    stream = rng.CounterStream(seed, rng.STREAM_COUPLING)
    for n in range(n_steps):
        gen = stream.at(n)
        X, Y, co = _diffusion_stage(X, Y, co, h, n_substeps, eps, gen, drift_only)
        X, Y = _drift_stage(p, h, X, Y, co, cfg)
        record(n + 1)

    t = np.arange(n_steps + 1) * h
    window = mean_f > np.maximum(10.0 * stderr, 1e-300)
    n_fit = int(np.argmin(window)) if not window.all() else window.size
    degenerate = n_fit < 3
    if degenerate:
        rate, intercept, r2 = np.nan, np.nan, np.nan
    else:
        fit_slope, fit_int = np.polyfit(t[:n_fit], np.log(mean_f[:n_fit]), 1)
        resid = np.log(mean_f[:n_fit]) - (fit_slope * t[:n_fit] + fit_int)
        ss_tot = float(np.sum((np.log(mean_f[:n_fit]) - np.log(mean_f[:n_fit]).mean()) ** 2))
        r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
        rate, intercept = -float(fit_slope), float(fit_int)
    return ContractionReport(h=h, t=t, mean_f=mean_f, stderr=stderr,
                             coalesced_frac=co_frac, rate=rate, intercept=intercept,
                             r_squared=r2, n_fit=n_fit, degenerate=degenerate)


def wf_empirical(samples_x, samples_y, lyap: LyapunovConfig) -> float:
    """Empirical Kantorovich distance with cost f(|x - y|): the exact minimum
    of the mean matched cost over permutations, via the assignment solver.

    Sorting both lists is *not* always optimal for this concave cost (staying
    put can beat monotone matching once separations straddle R_f), so the
    exact solver is used in every dimension, with the sample count capped.
    """
    xs = np.asarray(samples_x, dtype=float)
    ys = np.asarray(samples_y, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    if ys.ndim == 1:
        ys = ys[:, None]
    if xs.shape != ys.shape:
        raise InputError(f"sample shapes differ: {xs.shape} vs {ys.shape}")
    n = xs.shape[0]
    if n == 0:
        raise InputError("need at least one sample per side")
    if n > WF_MAX_SAMPLES:
        raise InputError(f"exact assignment capped at {WF_MAX_SAMPLES} samples, got {n}")
    cost = lyapunov_f(cdist(xs, ys), lyap)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())
