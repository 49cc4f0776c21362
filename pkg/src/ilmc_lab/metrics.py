"""Statistical distances, divergences, and slope fitting for rate studies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputError


class SlopeFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float


@dataclass
class MetricRow:
    h: float
    t: float
    metric: str
    value: float
    stderr: float = 0.0


@dataclass
class MetricReport:
    rows: list[MetricRow] = field(default_factory=list)
    slope_fits: dict[str, SlopeFit] = field(default_factory=dict)

    def add(self, h: float, t: float, metric: str, value: float, stderr: float = 0.0):
        self.rows.append(MetricRow(h, t, metric, value, stderr))

    def values(self, metric: str) -> list[MetricRow]:
        return [r for r in self.rows if r.metric == metric]

    def write_csv(self, path, header_lines=()):
        """Schema: ``h,t,metric,value,stderr`` with slope fits appended as
        ``#slope`` comment lines.  Fixed formatting keeps reruns byte-identical."""
        with open(path, "w") as f:
            for line in header_lines:
                f.write(f"# {line}\n")
            f.write("h,t,metric,value,stderr\n")
            for r in self.rows:
                f.write(f"{r.h:.12g},{r.t:.12g},{r.metric},{r.value:.12g},{r.stderr:.12g}\n")
            for name, fit in self.slope_fits.items():
                f.write(f"#slope metric={name} slope={fit.slope:.12g} r2={fit.r_squared:.12g}\n")


def w1_empirical_1d(xs, ys) -> float:
    """Exact empirical Wasserstein-1 on the line: sort both samples and
    average |x_(i) - y_(i)| (the monotone coupling is optimal for cost |x-y|)."""
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if xs.size != ys.size or xs.size == 0:
        raise InputError(f"need equal nonempty sample counts, got {xs.size} and {ys.size}")
    return float(np.mean(np.abs(np.sort(xs) - np.sort(ys))))


def relative_entropy_grid(rho_p, rho_q) -> float:
    """Grid relative entropy sum(rho_p * log(rho_p/rho_q) * dx) with the
    0*log(0) = 0 convention.

    rho_q is floored at 1e-300 per cell and cells with
    rho_p < 1e-15 * max(rho_p) are dropped: the quantities measured here are
    insensitive to far-tail cells, which otherwise contribute pure rounding
    noise through log of denormals.
    """
    if rho_p.grid != rho_q.grid:
        raise InputError("density fields live on different grids")
    p = np.asarray(rho_p.values, dtype=float)
    q = np.maximum(np.asarray(rho_q.values, dtype=float), 1e-300)
    mask = p > 1e-15 * p.max()
    dx = rho_p.grid.dx
    pm = p[mask]
    return float(np.sum(pm * np.log(pm / q[mask])) * dx)


def kl_knn(samples_p, samples_q, k: int) -> float:
    """k-nearest-neighbour divergence estimate between two sample sets:
    (d/N_p) * sum_i log(nu_k(i)/rho_k(i)) + log(N_q/(N_p-1)), where rho_k is
    the k-NN radius within samples_p and nu_k the k-NN radius to samples_q.
    Noisy; grid entropy is authoritative where a density exists."""
    sp = np.atleast_2d(np.asarray(samples_p, dtype=float))
    sq = np.atleast_2d(np.asarray(samples_q, dtype=float))
    if sp.shape[0] == 1 and sp.shape[1] > 1:
        sp, sq = sp.T, sq.T
    n_p, d = sp.shape
    n_q = sq.shape[0]
    if sq.shape[1] != d:
        raise InputError("sample sets have different dimensions")
    if d > 3:
        raise InputError("kl_knn supports dimension <= 3")
    if n_p < k + 1 or n_q < k + 1:
        raise InputError(f"need at least k+1={k + 1} samples on each side")

    tree_p = cKDTree(sp)
    tree_q = cKDTree(sq)
    # k+1 within p because the query point is its own 0th neighbour
    rho = tree_p.query(sp, k=k + 1)[0][:, k]
    nu = tree_q.query(sp, k=k)[0][:, k - 1] if k > 1 else tree_q.query(sp, k=1)[0].ravel()
    rho = np.maximum(rho, 1e-12)  # tie/duplicate guard
    nu = np.maximum(nu, 1e-12)
    return float(d * np.mean(np.log(nu / rho)) + np.log(n_q / (n_p - 1.0)))


def fit_loglog_slope(points) -> SlopeFit:
    """Least squares of log(value) on log(h).  Requires >= 3 points with
    positive values."""
    pts = [(float(h), float(v)) for h, v in points]
    if len(pts) < 3:
        raise InputError(f"need at least 3 points for a slope fit, got {len(pts)}")
    if any(v <= 0 for _, v in pts):
        raise InputError("slope fit requires positive values")
    lh = np.log([h for h, _ in pts])
    lv = np.log([v for _, v in pts])
    slope, intercept = np.polyfit(lh, lv, 1)
    resid = lv - (slope * lh + intercept)
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return SlopeFit(float(slope), float(intercept), r2)
