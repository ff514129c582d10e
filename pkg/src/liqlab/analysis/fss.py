"""Finite-size-scaling pipeline over susceptibility curves.

Given chi(alpha, T, N) on a grid, the pipeline

1. locates the peak alpha_m(T, N) of every curve by a 3-point parabola
   around the discrete argmax (cells whose peak is not bracketed by the
   alpha grid are flagged and excluded),
2. reads the growth exponent gamma off the log-log regression of the peak
   height against T at the largest N,
3. finds zeta by collapsing chi / T^gamma against T^(1/zeta) (alpha -
   alpha_m) across horizons at the largest N, minimising the mean pairwise
   L2 distance between linearly interpolated curves on their common range,
4. finds eta and the critical point alpha_star by collapsing
   T^(1/zeta) (alpha_m(T, N) - alpha_star) against N T^(-1/eta).

Distances are normalised per pair by the pooled RMS, which makes steps 3-4
exactly invariant under a global rescaling of chi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

__all__ = ["ScalingFit", "fss_pipeline", "InsufficientGridError"]


class InsufficientGridError(ValueError):
    """The (alpha, T, N) grid cannot support the requested fit."""


@dataclass
class ScalingFit:
    """Fitted exponents, critical point, and the collapse diagnostics."""

    gamma: float
    zeta: float
    eta: float
    alpha_star: float
    collapse_distance: float
    alpha_m: np.ndarray  # (nT, nN), NaN where the peak was not bracketed
    chi_peak: np.ndarray  # (nT, nN)
    zeta_scan: tuple[np.ndarray, np.ndarray]
    eta_scan: tuple[np.ndarray, np.ndarray]
    alpha_star_scan: tuple[np.ndarray, np.ndarray]
    excluded_cells: list[tuple[float, int]] = field(default_factory=list)


def _parabolic_peak(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Vertex of the parabola through three points (falls back to the middle)."""
    c2, c1, c0 = np.polyfit(x, y, 2)
    if c2 >= 0.0:
        return float(x[1]), float(y[1])
    xv = -c1 / (2.0 * c2)
    if not x[0] <= xv <= x[2]:
        return float(x[1]), float(y[1])
    return float(xv), float(c0 - c1 * c1 / (4.0 * c2))


def _pair_distance(x1, y1, x2, y2, n_interp: int) -> float:
    lo = max(x1[0], x2[0])
    hi = min(x1[-1], x2[-1])
    if hi <= lo:
        return math.nan
    xs = np.linspace(lo, hi, n_interp)
    f1 = np.interp(xs, x1, y1)
    f2 = np.interp(xs, x2, y2)
    norm = math.sqrt(0.5 * float(np.mean(f1 * f1 + f2 * f2)))
    if norm == 0.0:
        return 0.0
    return math.sqrt(float(np.mean((f1 - f2) ** 2))) / norm


def _mean_pairwise(curves: list[tuple[np.ndarray, np.ndarray]], n_interp: int) -> float:
    dists = []
    for i in range(len(curves)):
        for j in range(i + 1, len(curves)):
            d = _pair_distance(*curves[i], *curves[j], n_interp)
            if not math.isnan(d):
                dists.append(d)
    return float(np.mean(dists)) if dists else math.inf


def _refine_argmin(grid: np.ndarray, vals: np.ndarray) -> float:
    k = int(np.nanargmin(vals))
    if 0 < k < grid.size - 1 and np.all(np.isfinite(vals[k - 1 : k + 2])):
        c2, c1, _ = np.polyfit(grid[k - 1 : k + 2], vals[k - 1 : k + 2], 2)
        if c2 > 0.0:
            xv = -c1 / (2.0 * c2)
            if grid[k - 1] <= xv <= grid[k + 1]:
                return float(xv)
    return float(grid[k])


def fss_pipeline(
    chi: np.ndarray,
    alphas: Sequence[float],
    horizons: Sequence[float],
    sizes: Sequence[int],
    zeta_grid: Optional[np.ndarray] = None,
    eta_grid: Optional[np.ndarray] = None,
    n_interp: int = 64,
) -> ScalingFit:
    """Fit (gamma, zeta, eta, alpha_star) from chi[T, N, alpha] curves.

    Requires >= 4 horizons, >= 3 sizes, and >= 8 alpha values spanning each
    curve's peak; cells whose peak sits on the edge of the alpha grid are
    excluded (and reported), and the fit refuses if too few cells remain.
    """
    alphas = np.asarray(list(alphas), dtype=float)
    horizons = np.asarray(list(horizons), dtype=float)
    sizes = np.asarray(list(sizes))
    chi = np.asarray(chi, dtype=float)
    n_t, n_n, n_a = horizons.size, sizes.size, alphas.size
    if chi.shape != (n_t, n_n, n_a):
        raise ValueError(f"chi has shape {chi.shape}, expected {(n_t, n_n, n_a)}")
    if n_t < 4:
        raise InsufficientGridError(f"gamma requires >= 4 horizons, got {n_t}")
    if n_n < 3:
        raise InsufficientGridError(f"eta requires >= 3 sizes, got {n_n}")
    if n_a < 8:
        raise InsufficientGridError(f"peak location requires >= 8 alpha values, got {n_a}")

    alpha_m = np.full((n_t, n_n), np.nan)
    chi_peak = np.full((n_t, n_n), np.nan)
    excluded: list[tuple[float, int]] = []
    for i in range(n_t):
        for j in range(n_n):
            curve = chi[i, j]
            if not np.all(np.isfinite(curve)):
                excluded.append((float(horizons[i]), int(sizes[j])))
                continue
            k = int(np.argmax(curve))
            if k == 0 or k == n_a - 1:
                excluded.append((float(horizons[i]), int(sizes[j])))
                continue
            alpha_m[i, j], chi_peak[i, j] = _parabolic_peak(alphas[k - 1 : k + 2], curve[k - 1 : k + 2])

    j_max = int(np.argmax(sizes))
    valid_t = np.isfinite(alpha_m[:, j_max])
    if np.count_nonzero(valid_t) < 4:
        raise InsufficientGridError(
            "fewer than 4 horizons have a bracketed peak at the largest size; "
            f"excluded cells: {excluded}"
        )

    log_t = np.log(horizons[valid_t])
    log_chi = np.log(chi_peak[valid_t, j_max])
    gamma = float(np.polyfit(log_t, log_chi, 1)[0])

    # zeta: collapse chi / T^gamma vs T^(1/zeta) (alpha - alpha_m) at N_max
    if zeta_grid is None:
        zeta_grid = np.linspace(0.8, 6.0, 261)

    def zeta_distance(z: float) -> float:
        curves = []
        for i in np.nonzero(valid_t)[0]:
            t = horizons[i]
            xs = t ** (1.0 / z) * (alphas - alpha_m[i, j_max])
            curves.append((xs, chi[i, j_max] / t ** gamma))
        return _mean_pairwise(curves, n_interp)

    zeta_vals = np.array([zeta_distance(z) for z in zeta_grid])
    zeta = _refine_argmin(zeta_grid, zeta_vals)

    # eta, alpha_star: collapse T^(1/zeta)(alpha_m - alpha_star) vs N T^(-1/eta)
    if eta_grid is None:
        eta_grid = np.linspace(0.8, 6.0, 131)
    am_valid = alpha_m[np.isfinite(alpha_m)]
    spread = max(float(am_valid.max() - am_valid.min()), 1e-4)
    a_lo = float(am_valid.min() - 10.0 * spread)
    a_hi = float(am_valid.max() + 2.0 * spread)

    def eta_alpha_distance(eta_val: float, a_star: float) -> float:
        curves = []
        for i in range(n_t):
            ok = np.isfinite(alpha_m[i])
            if np.count_nonzero(ok) < 2:
                continue
            xs = sizes[ok] * horizons[i] ** (-1.0 / eta_val)
            ys = horizons[i] ** (1.0 / zeta) * (alpha_m[i, ok] - a_star)
            order = np.argsort(xs)
            curves.append((np.asarray(xs, dtype=float)[order], ys[order]))
        if len(curves) < 2:
            return math.inf
        return _mean_pairwise(curves, n_interp)

    def best_alpha_star(eta_val: float) -> tuple[float, float]:
        res = optimize.minimize_scalar(
            lambda a: eta_alpha_distance(eta_val, a),
            bounds=(a_lo, a_hi),
            method="bounded",
            options={"xatol": 1e-6},
        )
        return float(res.x), float(res.fun)

    eta_vals = np.empty(eta_grid.size)
    eta_stars = np.empty(eta_grid.size)
    for m, ev in enumerate(eta_grid):
        eta_stars[m], eta_vals[m] = best_alpha_star(float(ev))
    eta = _refine_argmin(eta_grid, eta_vals)
    alpha_star, collapse = best_alpha_star(eta)

    star_grid = np.linspace(a_lo, a_hi, 121)
    star_vals = np.array([eta_alpha_distance(eta, a) for a in star_grid])

    return ScalingFit(
        gamma=gamma,
        zeta=zeta,
        eta=eta,
        alpha_star=alpha_star,
        collapse_distance=collapse,
        alpha_m=alpha_m,
        chi_peak=chi_peak,
        zeta_scan=(zeta_grid, zeta_vals),
        eta_scan=(eta_grid, eta_vals),
        alpha_star_scan=(star_grid, star_vals),
        excluded_cells=excluded,
    )
