"""Markov-length fits, peak trajectories, Lyapunov spectra and collapses.

Consumes CMI curves and correlator tables produced by the engine; everything
here is a pure transformation of measured data plus the sampling-based
Lyapunov estimator for the conditioned transfer products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .mps import UniformMps
from .oracles import ASYMPTOTIC_Z2B_MIN, ASYMPTOTIC_Z_MAX, thermal_correlation_length
from .sampler import _draw_batch, _site_tensors

__all__ = [
    "MarkovFit",
    "LyapunovResult",
    "PeakTrajectory",
    "fit_markov_length",
    "cmi_peak_trajectory",
    "lyapunov_spectrum",
    "collapse_export",
    "collapse_master",
    "two_slope_rate",
    "InsufficientSignalError",
    "LyapunovConvergenceError",
]


class InsufficientSignalError(RuntimeError):
    """All tail points are consistent with zero; no decay length to fit."""


class LyapunovConvergenceError(RuntimeError):
    """Replica spread of the Lyapunov gap exceeds the acceptance band."""


@dataclass(frozen=True)
class MarkovFit:
    """Decay length of a CMI-vs-block-size curve."""

    xi: float
    window: tuple
    residual_rms: float
    method: str


@dataclass(frozen=True)
class LyapunovResult:
    """Per-site growth rates of the conditioned transfer product."""

    eta0: float
    eta1: float
    gap: float
    predicted_xi: float
    product_length: int
    replicas: int
    gap_spread: float


@dataclass(frozen=True)
class PeakTrajectory:
    """Position of the CMI maximum per time slice plus a ballistic fit."""

    times: np.ndarray
    peaks: np.ndarray
    at_boundary: np.ndarray
    v_star: float


def _weighted_line_fit(x: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Weighted least squares y = a + b x; returns (a, b, rms residual)."""
    sw = w.sum()
    xm = (w * x).sum() / sw
    ym = (w * y).sum() / sw
    cov = (w * (x - xm) * (y - ym)).sum()
    var = (w * (x - xm) ** 2).sum()
    if var <= 0:
        raise InsufficientSignalError("degenerate abscissa in fit window")
    slope = cov / var
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    return intercept, slope, float(np.sqrt(np.mean(resid ** 2)))


def fit_markov_length(curve: Sequence, method: str = "tail",
                      xi_star: Optional[float] = None,
                      min_points: int = 5) -> MarkovFit:
    """Fit the exponential decay length of I(A:C|B) versus |B|.

    ``curve`` holds (b, value, stderr) triples.  The fit window is the
    largest-|B| half of the points that clear 3x their standard error.  The
    ``tail`` method regresses log I; the ``collapse`` method first multiplies
    out the known prefactor 0.5 * xi_star^2 * sqrt(6 b / xi_star).
    """
    if method not in ("tail", "collapse"):
        raise ValueError(f"unknown method {method!r}")
    if method == "collapse" and xi_star is None:
        raise ValueError("collapse method needs xi_star")
    pts = sorted((float(b), float(v), float(e)) for b, v, e in curve)
    usable = [(b, v, e) for b, v, e in pts if v > 3.0 * e and v > 0.0]
    if len(usable) < min_points:
        raise InsufficientSignalError(
            f"only {len(usable)} points above the noise floor, need {min_points}")
    window = usable[len(usable) // 2:]
    if len(window) < min_points:
        window = usable[-min_points:]
    b = np.array([p[0] for p in window])
    val = np.array([p[1] for p in window])
    err = np.array([p[2] for p in window])
    if method == "tail":
        y = np.log(val)
    else:
        y = np.log(0.5 * val * xi_star ** 2 * np.sqrt(6.0 * b / xi_star))
    weights = np.where(err > 0, (val / np.where(err > 0, err, 1.0)) ** 2, 1.0)
    if not np.all(err > 0):
        weights = np.ones_like(b)
    _, slope, rms = _weighted_line_fit(b, y, weights)
    if slope >= 0:
        raise InsufficientSignalError("tail does not decay")
    return MarkovFit(xi=-1.0 / slope, window=(b[0], b[-1]),
                     residual_rms=rms, method=method)


def cmi_peak_trajectory(times: Sequence[float], b_sizes: Sequence[float],
                        values: np.ndarray) -> PeakTrajectory:
    """Locate the CMI maximum over |B| in each time slice.

    Interior maxima are refined with a local parabola; maxima at the edge of
    the grid are flagged.  The ballistic velocity is the least-squares slope
    of the interior peak positions (0 when fewer than two).
    """
    times = np.asarray(times, dtype=float)
    b = np.asarray(b_sizes, dtype=float)
    vals = np.asarray(values, dtype=float)
    if vals.shape != (times.size, b.size):
        raise ValueError("values must have shape (len(times), len(b_sizes))")
    if b.size < 3:
        raise ValueError("need at least 3 block sizes per slice")
    peaks = np.empty(times.size)
    boundary = np.zeros(times.size, dtype=bool)
    for i, row in enumerate(vals):
        j = int(np.argmax(row))
        if j == 0 or j == b.size - 1:
            peaks[i] = b[j]
            boundary[i] = True
            continue
        y0, y1, y2 = row[j - 1], row[j], row[j + 1]
        denom = y0 - 2.0 * y1 + y2
        offset = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
        peaks[i] = b[j] + offset * (b[j + 1] - b[j - 1]) / 2.0
    interior = ~boundary
    if interior.sum() >= 2:
        slope = np.polyfit(times[interior], peaks[interior], 1)[0]
    else:
        slope = 0.0
    return PeakTrajectory(times=times, peaks=peaks, at_boundary=boundary,
                          v_star=float(slope))


def lyapunov_spectrum(mps: UniformMps, b_size: int, replicas: int = 8,
                      seed: int = 0, ortho_every: int = 10,
                      spread_tol: float = 0.2) -> LyapunovResult:
    """Top two per-spin growth rates of the conditioned transfer product.

    Configurations are drawn exactly as in the CMI sampler while the product
    is accumulated with periodic QR re-orthonormalization.  The predicted
    conditional correlation length is 1/(2 (eta0 - eta1)); a rank-deficient
    product gives the 0 sentinel.
    """
    if replicas < 2:
        raise ValueError("need at least 2 replicas")
    x, n_draws = _site_tensors(mps, b_size)
    d, dim, _ = x.shape
    xv = x @ mps.v_right
    uniforms = np.empty((replicas, n_draws))
    for rep in range(replicas):
        gen = np.random.default_rng(np.random.SeedSequence((seed, rep)))
        uniforms[rep] = gen.random(n_draws)
    q = np.broadcast_to(np.eye(dim), (replicas, dim, dim)).copy()
    z = q.copy()
    row = np.broadcast_to(mps.v_left, (replicas, dim)).copy()
    log_growth = np.zeros((replicas, dim))
    pending = 0
    for k in range(n_draws):
        probs = np.clip(row @ xv.T, 0.0, None)
        probs /= probs.sum(axis=1, keepdims=True)
        cum = np.cumsum(probs, axis=1)
        sel = (uniforms[:, k, None] > cum).sum(axis=1)
        np.clip(sel, 0, d - 1, out=sel)
        p_sel = np.take_along_axis(probs, sel[:, None], axis=1)[:, 0]
        x_sel = x[sel]
        row = np.einsum("nd,nde->ne", row, x_sel) / p_sel[:, None]
        # the product grows on the right; track singular values through
        # transposed factors so new matrices multiply from the left
        z = np.einsum("nde,nef->ndf", np.swapaxes(x_sel, 1, 2) / p_sel[:, None, None], z)
        pending += 1
        if pending == ortho_every or k == n_draws - 1:
            q, r = np.linalg.qr(z)
            diag = np.abs(np.diagonal(r, axis1=1, axis2=2))
            with np.errstate(divide="ignore"):
                log_growth += np.log(diag)
            z = q.copy()
            pending = 0
    n_spins = n_draws * mps.cell
    etas = log_growth / n_spins
    etas = -np.sort(-etas, axis=1)
    eta0 = etas[:, 0]
    eta1 = etas[:, 1]
    if not np.all(np.isfinite(eta1)):
        # rank-deficient products: formally infinite gap, length sentinel 0
        return LyapunovResult(float(eta0.mean()), float("-inf"), math.inf, 0.0,
                              b_size, replicas, math.inf)
    gaps = eta0 - eta1
    gap_mean = float(gaps.mean())
    gap_spread = float(gaps.std(ddof=1))
    if gap_mean > 0 and gap_spread > spread_tol * gap_mean:
        raise LyapunovConvergenceError(
            f"replica spread {gap_spread:.3g} exceeds {spread_tol:.0%} "
            f"of the gap {gap_mean:.3g}")
    predicted = 1.0 / (2.0 * gap_mean) if gap_mean > 0 else 0.0
    return LyapunovResult(eta0=float(eta0.mean()), eta1=float(eta1.mean()),
                          gap=gap_mean, predicted_xi=predicted,
                          product_length=b_size, replicas=replicas,
                          gap_spread=gap_spread)


def collapse_master(x: np.ndarray) -> np.ndarray:
    """Master curve 2 exp(-x)/sqrt(6x) of the rescaled CMI decay."""
    x = np.asarray(x, dtype=float)
    return 2.0 * np.exp(-x) / np.sqrt(6.0 * x)


def collapse_export(curves: Sequence) -> list:
    """Rescale CMI curves onto (x, y) = (|B|/xi_star, xi_star^2 I).

    ``curves`` holds (t, xi_star, points) with points over (b, value).  Rows
    outside the saddle-point validity window are flagged invalid but kept.
    Returns rows (t, x, y, valid), monotone in x within each curve.
    """
    rows = []
    for t, xi_star, points in curves:
        z2 = 8.0 / xi_star
        for b, value in sorted(points):
            x = b / xi_star
            y = xi_star ** 2 * value
            valid = (z2 * b >= ASYMPTOTIC_Z2B_MIN
                     and math.sqrt(z2) <= ASYMPTOTIC_Z_MAX)
            rows.append((t, x, y, valid))
    return rows


def two_slope_rate(table_times: Sequence[float], r_values: Sequence[float],
                   correlators: np.ndarray, beta_i: float, beta_f: float,
                   floor: float = 1e-9) -> tuple:
    """Fit the decay rate of the initial-correlation remnant.

    Subtracts the final-temperature thermal profile and regresses the log of
    the positive residual on (t, r).  Returns (gamma_fit, v_star) with
    v_star = gamma_fit * xi_i xi_f / (xi_i - xi_f).
    """
    xi_f = thermal_correlation_length(beta_f)
    xi_i = thermal_correlation_length(beta_i)
    times = np.asarray(table_times, dtype=float)
    r = np.asarray(r_values, dtype=float)
    c = np.asarray(correlators, dtype=float)
    thermal = np.exp(-r / xi_f)[None, :]
    resid = c - thermal
    t_grid, r_grid = np.meshgrid(times, r, indexing="ij")
    mask = (resid > floor) & (r_grid >= 2) & (t_grid > 0)
    if mask.sum() < 8:
        raise InsufficientSignalError("too few residual points for the rate fit")
    y = np.log(resid[mask])
    design = np.column_stack([np.ones(mask.sum()), t_grid[mask], r_grid[mask]])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    gamma_fit = -float(coef[1])
    if math.isinf(xi_i):
        raise ValueError("two-slope rate needs a finite initial temperature")
    v_star = gamma_fit * xi_i * xi_f / (xi_i - xi_f)
    return gamma_fit, v_star
