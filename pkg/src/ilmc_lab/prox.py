"""The forward map Phi_h(x) = x + h*grad U(x) and its Newton-based inverse.

Inverting Phi_h is the implicit step: Phi_h^{-1}(x0) is the unique minimizer
of U(x) + |x - x0|^2 / (2h) whenever I + h*hess U is positive definite
everywhere, i.e. whenever h * neg_curv < 1.  The solver is damped Newton on
F(x) = x + h*grad U(x) - x0 with Jacobian I + h*hess U(x), initial guess x0,
and backtracking on |F|; since the Jacobian is positive definite, the Newton
direction is always a descent direction for |F|^2 and no trust region is
needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import AdmissibilityError, ConvergenceError, ParameterError
from .potentials import Potential


@dataclass(frozen=True)
class ProxConfig:
    tol: float = 1e-12
    max_iters: int = 100
    damping_shrink: float = 0.5
    h_max_fraction: float = 0.9

    def __post_init__(self):
        if self.tol <= 0:
            raise ParameterError("tol must be positive")
        if not 0.0 < self.damping_shrink < 1.0:
            raise ParameterError("damping_shrink must be in (0,1)")
        if not 0.0 < self.h_max_fraction < 1.0:
            raise ParameterError("h_max_fraction must be in (0,1)")


DEFAULT_PROX = ProxConfig()


def max_step_size(p: Potential, cfg: ProxConfig = DEFAULT_PROX) -> float:
    """Largest admissible h.  I + h*hess stays positive definite for
    h*neg_curv < 1; the configured fraction of 1/(2*neg_curv) keeps a
    factor-2 margin.  Convex potentials (neg_curv = 0) admit any h."""
    if p.neg_curv <= 0:
        return np.inf
    return cfg.h_max_fraction / (2.0 * p.neg_curv)


def require_admissible(p: Potential, h: float, cfg: ProxConfig = DEFAULT_PROX) -> None:
    if h <= 0:
        raise AdmissibilityError(f"step size must be positive, got {h}")
    h_max = max_step_size(p, cfg)
    if h >= h_max:
        raise AdmissibilityError(
            f"step size {h} exceeds admissible bound {h_max:.6g} "
            f"for potential {p.name!r} (neg_curv={p.neg_curv})")


def phi(p: Potential, h: float, x):
    """Forward map x + h * grad U(x)."""
    if h <= 0:
        raise AdmissibilityError(f"step size must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    return x + h * p.grad(x)


def prox_objective(p: Potential, h: float, x, x0) -> float:
    """Minimizing-movement objective U(x) + |x - x0|^2 / (2h)."""
    if h <= 0:
        raise AdmissibilityError(f"step size must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    return float(p.u(x)) + float(np.sum((x - x0) ** 2)) / (2.0 * h)


def _phi_inverse_1d(p: Potential, h: float, x0: np.ndarray, cfg: ProxConfig) -> np.ndarray:
    """Vectorized elementwise Newton for dim == 1 (any input shape)."""
    x = x0.astype(float, copy=True)
    fx = h * p.grad(x)  # F at initial guess: x0 + h grad(x0) - x0
    for _ in range(cfg.max_iters):
        absf = np.abs(fx)
        active = absf > cfg.tol
        if not active.any():
            return x
        jinv = 1.0 / (1.0 + h * p.hess(x))
        step = np.where(active, -fx * jinv, 0.0)
        alpha = np.ones_like(x)
        for _ in range(60):
            x_try = x + alpha * step
            f_try = x_try + h * p.grad(x_try) - x0
            ok = ~active | (np.abs(f_try) <= (1.0 - 0.5 * alpha) * absf)
            if ok.all():
                break
            alpha = np.where(ok, alpha, alpha * cfg.damping_shrink)
        x, fx = x_try, f_try
    worst = float(np.max(np.abs(fx)))
    if worst > cfg.tol:
        raise ConvergenceError(
            f"Newton did not reach tol={cfg.tol} in {cfg.max_iters} iters "
            f"(residual {worst:.3e})", worst)
    return x


def _phi_inverse_nd(p: Potential, h: float, x0: np.ndarray, cfg: ProxConfig) -> np.ndarray:
    """Single-point Newton with Cholesky solves for dim > 1 (the Jacobian
    I + h*hess is symmetric positive definite for admissible h)."""
    eye = np.eye(p.dim)
    x = x0.astype(float, copy=True)
    fx = h * p.grad(x)
    for _ in range(cfg.max_iters):
        nf = float(np.linalg.norm(fx))
        if nf <= cfg.tol:
            return x
        jac = eye + h * np.asarray(p.hess(x), dtype=float)
        step = cho_solve(cho_factor(0.5 * (jac + jac.T), lower=True), -fx)
        alpha = 1.0
        for _ in range(60):
            x_try = x + alpha * step
            f_try = x_try + h * p.grad(x_try) - x0
            if np.linalg.norm(f_try) <= (1.0 - 0.5 * alpha) * nf:
                break
            alpha *= cfg.damping_shrink
        x, fx = x_try, f_try
    nf = float(np.linalg.norm(fx))
    if nf > cfg.tol:
        raise ConvergenceError(
            f"Newton did not reach tol={cfg.tol} in {cfg.max_iters} iters "
            f"(residual {nf:.3e})", nf)
    return x


def phi_inverse(p: Potential, h: float, x0, cfg: ProxConfig = DEFAULT_PROX):
    """Solve Phi_h(x) = x0 to |residual| <= cfg.tol.

    For dim == 1 the input may be a scalar or an array of independent points
    (the solve is elementwise).  For dim > 1, x0 is one point of shape (d,)
    or a batch of shape (n, d).
    """
    require_admissible(p, h, cfg)
    x0 = np.asarray(x0, dtype=float)
    if p.dim == 1:
        out = _phi_inverse_1d(p, h, np.atleast_1d(x0), cfg)
        return out.reshape(x0.shape) if x0.shape else float(out[0])
    if x0.ndim == 1:
        return _phi_inverse_nd(p, h, x0, cfg)
    return np.stack([_phi_inverse_nd(p, h, row, cfg) for row in x0])


@dataclass
class LipschitzReport:
    h: float
    r_prime: float
    n_pairs: int
    n_far_pairs: int
    max_ratio_far: float
    far_bound: float
    max_ratio_global: float
    global_bound: float
    stability_max_excess: float
    tol: float = DEFAULT_PROX.tol

    @property
    def far_field_ok(self) -> bool:
        return self.max_ratio_far <= self.far_bound * (1 + 1e-9)

    @property
    def global_ok(self) -> bool:
        return self.max_ratio_global <= self.global_bound * (1 + 1e-9)

    @property
    def stability_ok(self) -> bool:
        return self.stability_max_excess <= self.tol

    @property
    def all_ok(self) -> bool:
        return self.far_field_ok and self.global_ok and self.stability_ok


def r_prime(p: Potential) -> float:
    """Separation radius (4 + 16*M/m) * R beyond which the inverse map
    contracts at rate exp(-m*h/4)."""
    return (4.0 + 16.0 * p.big_m / p.m) * p.r_conf


def lipschitz_probe(p: Potential, h: float, n_pairs: int, rng_seed: int,
                    cfg: ProxConfig = DEFAULT_PROX) -> LipschitzReport:
    """Sample random pairs and measure |Phi^-1(x) - Phi^-1(y)| / |x - y|
    against the two-regime bounds, plus the stability U(Phi^-1(x)) <= U(x).

    Points are drawn uniformly from a box of half-width 0.75*R' so the pair
    separations straddle R' on both sides.  Only dim == 1 potentials are
    probed (the experiments are one-dimensional).
    """
    require_admissible(p, h, cfg)
    if p.dim != 1:
        raise ParameterError("lipschitz_probe supports dim == 1 potentials")
    rng = np.random.default_rng(rng_seed)
    rp = r_prime(p)
    w = 0.75 * rp
    xs = rng.uniform(-w, w, size=n_pairs)
    ys = rng.uniform(-w, w, size=n_pairs)
    sep = np.abs(xs - ys)
    keep = sep > 1e-12
    xs, ys, sep = xs[keep], ys[keep], sep[keep]

    ixs = phi_inverse(p, h, xs, cfg)
    iys = phi_inverse(p, h, ys, cfg)
    ratio = np.abs(ixs - iys) / sep

    far = sep > rp
    max_far = float(ratio[far].max()) if far.any() else 0.0
    max_glob = float(ratio.max()) if ratio.size else 0.0
    excess = float(np.max(p.u(ixs) - p.u(xs)))

    return LipschitzReport(
        h=h, r_prime=rp, n_pairs=int(sep.size), n_far_pairs=int(far.sum()),
        max_ratio_far=max_far, far_bound=float(np.exp(-p.m * h / 4.0)),
        max_ratio_global=max_glob, global_bound=float(np.exp(2.0 * p.big_m * h)),
        stability_max_excess=excess, tol=cfg.tol,
    )
