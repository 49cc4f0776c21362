"""Confining potentials with derivative oracles and convexity metadata.

A :class:`Potential` bundles the scalar field U with its first three
derivatives and the constants describing where U is convex:

* ``m``      -- far-field convexity: hess(x) >= m*I for |x| >= r_conf,
* ``big_m``  -- max operator norm of hess on the ball |x| <= r_conf,
* ``r_conf`` -- radius of the possibly non-convex region,
* ``ell``    -- polynomial growth exponent of the derivatives,
* ``neg_curv`` -- global bound on negative curvature, max(0, -inf eig hess);
  ``1 + h*hess`` is positive definite everywhere iff ``h*neg_curv < 1``,
  which is the exact step-size admissibility threshold.

Callable convention: for ``dim == 1`` all oracles are elementwise and accept
scalars or arrays of any shape (this is the vectorized hot path used by the
samplers).  For ``dim > 1`` they take a single point of shape ``(dim,)`` and
return scalar / ``(d,)`` / ``(d, d)`` / ``(d, d, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class Potential:
    name: str
    dim: int
    u: Callable
    grad: Callable
    hess: Callable
    third: Callable
    m: float
    big_m: float
    r_conf: float
    ell: float
    neg_curv: float = 0.0
    params: dict = field(default_factory=dict)


@dataclass
class ConditionCheck:
    name: str
    passed: bool
    worst_margin: float
    worst_point: np.ndarray | None


@dataclass
class AssumptionReport:
    potential: str
    n_samples: int
    checks: list[ConditionCheck]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)


def make_gaussian(dim: int, kappa: float) -> Potential:
    """Quadratic potential U(x) = kappa*|x|^2/2 (closed-form everything)."""
    if kappa <= 0:
        raise ParameterError(f"kappa must be positive, got {kappa}")
    if dim < 1:
        raise ParameterError(f"dim must be >= 1, got {dim}")

    if dim == 1:
        u = lambda x: 0.5 * kappa * np.asarray(x, dtype=float) ** 2
        grad = lambda x: kappa * np.asarray(x, dtype=float)
        hess = lambda x: kappa * np.ones_like(np.asarray(x, dtype=float))
        third = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    else:
        eye = np.eye(dim)
        zero3 = np.zeros((dim, dim, dim))
        u = lambda x: 0.5 * kappa * float(np.dot(x, x))
        grad = lambda x: kappa * np.asarray(x, dtype=float)
        hess = lambda x: kappa * eye
        third = lambda x: zero3

    return Potential(
        name="gaussian", dim=dim, u=u, grad=grad, hess=hess, third=third,
        m=kappa, big_m=kappa, r_conf=1.0, ell=1.0, neg_curv=0.0,
        params={"kappa": kappa},
    )


def make_ginzburg_landau(dim: int, a: float, b: float) -> Potential:
    """Double well U(x) = a|x|^4 - b|x|^2 + b^2/(4a), shifted so U >= 0.

    Hessian eigenvalues at radius r are 12*a*r^2 - 2b (radial) and
    4*a*r^2 - 2b (tangential, dim > 1), so with r_conf = sqrt(b/a):
    m = 10b in 1D (2b in higher dimension), big_m = 10b, and the global
    negative-curvature bound is 2b.  For b = 0 the potential is convex and
    r_conf = 1/2 is an arbitrary positive radius.
    """
    if a <= 0:
        raise ParameterError(f"a must be positive, got {a}")
    if b < 0:
        raise ParameterError(f"b must be nonnegative, got {b}")
    if dim < 1:
        raise ParameterError(f"dim must be >= 1, got {dim}")
    if dim > 3:
        raise ParameterError("dense third-derivative tensors are only kept for dim <= 3")

    shift = b * b / (4.0 * a)

    if dim == 1:
        def u(x):
            x = np.asarray(x, dtype=float)
            return a * x**4 - b * x**2 + shift

        def grad(x):
            x = np.asarray(x, dtype=float)
            return (4.0 * a * x**2 - 2.0 * b) * x

        def hess(x):
            x = np.asarray(x, dtype=float)
            return 12.0 * a * x**2 - 2.0 * b

        def third(x):
            x = np.asarray(x, dtype=float)
            return 24.0 * a * x
    else:
        eye = np.eye(dim)

        def u(x):
            r2 = float(np.dot(x, x))
            return a * r2 * r2 - b * r2 + shift

        def grad(x):
            x = np.asarray(x, dtype=float)
            return (4.0 * a * np.dot(x, x) - 2.0 * b) * x

        def hess(x):
            x = np.asarray(x, dtype=float)
            return (4.0 * a * np.dot(x, x) - 2.0 * b) * eye + 8.0 * a * np.outer(x, x)

        def third(x):
            x = np.asarray(x, dtype=float)
            d = len(x)
            t = np.zeros((d, d, d))
            for i in range(d):
                t[i, i, :] += 8.0 * a * x
                t[i, :, i] += 8.0 * a * x
                t[:, i, i] += 8.0 * a * x
            return t

    if b > 0:
        r_conf = float(np.sqrt(b / a))
        m = 10.0 * b if dim == 1 else 2.0 * b
        big_m = 10.0 * b
    else:
        r_conf = 0.5
        m = 12.0 * a * r_conf**2 if dim == 1 else 4.0 * a * r_conf**2
        big_m = 12.0 * a * r_conf**2

    return Potential(
        name="ginzburg_landau", dim=dim, u=u, grad=grad, hess=hess, third=third,
        m=m, big_m=big_m, r_conf=r_conf, ell=3.0, neg_curv=2.0 * b,
        params={"a": a, "b": b},
    )


def _build_gaussian(params: dict) -> Potential:
    return make_gaussian(int(params.pop("dim", 1)), float(params.pop("kappa", 1.0)))


def _build_ginzburg_landau(params: dict) -> Potential:
    return make_ginzburg_landau(int(params.pop("dim", 1)),
                                float(params.pop("a", 1.0)),
                                float(params.pop("b", 1.0)))


_BUILDERS = {
    "gaussian": _build_gaussian,
    "ginzburg_landau": _build_ginzburg_landau,
    "double_well": _build_ginzburg_landau,
}


def make_potential(potential_id: str, **params) -> Potential:
    """Build a potential from its string id (``gaussian``, ``ginzburg_landau``,
    or the alias ``double_well``) and numeric parameters."""
    try:
        builder = _BUILDERS[potential_id]
    except KeyError:
        raise ParameterError(f"unknown potential id {potential_id!r}") from None
    leftover = dict(params)
    p = builder(leftover)
    if leftover:
        raise ParameterError(
            f"unknown parameters for {potential_id!r}: {sorted(leftover)}")
    return p


def _hess_matrix(p: Potential, x: np.ndarray) -> np.ndarray:
    h = p.hess(x)
    if p.dim == 1:
        return np.atleast_2d(np.asarray(h, dtype=float))
    return np.asarray(h, dtype=float)


def check_assumptions(p: Potential, n_samples: int, rng_seed: int) -> AssumptionReport:
    """Sample |x| uniform on [0, 3*r_conf] with uniform directions and check
    the convexity metadata and nonnegativity of U pointwise."""
    if n_samples < 1:
        raise ParameterError("n_samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    radii = rng.uniform(0.0, 3.0 * p.r_conf, size=n_samples)
    dirs = rng.standard_normal((n_samples, p.dim))
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
    points = radii[:, None] * dirs

    slack = 1e-9
    far = ConditionCheck("far_field_convexity", True, np.inf, None)
    near = ConditionCheck("hessian_bound_in_ball", True, np.inf, None)
    nonneg = ConditionCheck("u_nonnegative", True, np.inf, None)

    for i in range(n_samples):
        x = points[i] if p.dim > 1 else points[i, 0]
        hmat = _hess_matrix(p, x)
        eigs = np.linalg.eigvalsh(0.5 * (hmat + hmat.T))
        if radii[i] >= p.r_conf:
            margin = eigs[0] - p.m
            if margin < far.worst_margin:
                far.worst_margin, far.worst_point = margin, points[i].copy()
            if margin < -slack:
                far.passed = False
        else:
            margin = p.big_m - np.max(np.abs(eigs))
            if margin < near.worst_margin:
                near.worst_margin, near.worst_point = margin, points[i].copy()
            if margin < -slack:
                near.passed = False
        uval = float(p.u(x))
        if uval < nonneg.worst_margin:
            nonneg.worst_margin, nonneg.worst_point = uval, points[i].copy()
        if uval < -1e-12:
            nonneg.passed = False

    return AssumptionReport(p.name, n_samples, [far, near, nonneg])
