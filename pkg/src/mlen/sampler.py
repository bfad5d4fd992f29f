"""Conditional mutual information I(A:C|B) by perfect sampling of B-configurations.

Configurations of the separating block B are drawn exactly from the MPS
marginal through the chain rule; each sample carries the conditioned transfer
product F whose boundary contractions give the joint A-C distribution for that
outcome.  The estimator averages the per-sample mutual information.

For states evolved from a polarized trajectory the symmetrized variant tracks
a second product built from the spin-flipped tensor and averages the two
conditioned marginals, which restores the global flip symmetry at measurement
time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mps import UniformMps, Tripartition

__all__ = [
    "SampleRecord",
    "CmiEstimate",
    "sample_b_configuration",
    "conditional_ac_marginal",
    "mi_2x2",
    "estimate_cmi",
    "SamplingError",
]

PROB_CLAMP = -1e-9
NORMALIZATION_HARD = 1e-6
RESCALE_SPINS = 1000  # rescale F with log bookkeeping beyond this block size


class SamplingError(RuntimeError):
    """Conditional probabilities corrupted beyond the clamp tolerance."""


@dataclass
class SampleRecord:
    """One sampled B-configuration and its conditioned transfer product."""

    config: np.ndarray          # spins +-1, length b_size
    log_prob: float
    f: np.ndarray               # D x D conditioned product (rescaled if log_scale != 0)
    f_bar: Optional[np.ndarray]  # spin-flipped product for symmetrized estimates
    mi: float
    log_scale: float = 0.0


@dataclass
class CmiEstimate:
    """Monte-Carlo estimate of I(A:C|B) at one block size."""

    mean: float
    stderr: float
    samples: int
    b_size: int
    time_step: Optional[int] = None


def _site_tensors(mps: UniformMps, b_size: int):
    """Per-draw tensor and number of draws covering b_size spins."""
    if mps.cell == 1:
        return mps.tensor, b_size
    if b_size % 2 != 0:
        raise ValueError("b_size must be even for two-spin-cell states")
    return mps.tensor, b_size // 2


def _boundary_vectors(mps: UniformMps, a_size: int, c_size: int):
    """Environment contractions <v_l|X^{a-config} and X^{c-config}|v_r>.

    Configuration indices are big-endian in the spin order, so the global
    spin flip is index reversal.
    """
    dim = mps.bond_dim
    if mps.cell == 1:
        x = mps.tensor
        rows = mps.v_left[None, :]
        for _ in range(a_size):
            rows = np.einsum("kd,sde->kse", rows, x).reshape(-1, dim)
        cols = mps.v_right[None, :]
        for _ in range(c_size):
            cols = np.einsum("sde,ke->skd", x, cols).reshape(-1, dim)
        return rows, cols
    x4 = mps.tensor.reshape(2, 2, dim, dim)
    x_pair = mps.tensor
    x_second = x4.sum(axis=0)   # first spin of the pair traced out
    x_first = x4.sum(axis=1)    # second spin traced out
    rows = mps.v_left[None, :]
    if a_size % 2 == 1:
        rows = np.einsum("kd,sde->kse", rows, x_second).reshape(-1, dim)
    for _ in range(a_size // 2):
        rows = np.einsum("kd,sde->kse", rows, x_pair).reshape(-1, dim)
    cols = mps.v_right[None, :]
    if c_size % 2 == 1:
        cols = np.einsum("sde,ke->skd", x_first, cols).reshape(-1, dim)
    for _ in range(c_size // 2):
        cols = np.einsum("sde,ke->skd", x_pair, cols).reshape(-1, dim)
    return rows, cols


def _draw_batch(mps: UniformMps, b_size: int, uniforms: np.ndarray,
                track_flipped: bool):
    """Sample a batch of B-configurations via the chain rule.

    Returns (selections, log_prob, f, f_bar, log_scale); selections are the
    per-draw physical indices, shape (batch, n_draws).
    """
    x, n_draws = _site_tensors(mps, b_size)
    if uniforms.shape[1] != n_draws:
        raise ValueError("uniform block does not match the number of draws")
    d, dim, _ = x.shape
    nb = uniforms.shape[0]
    x_flip = x[::-1]
    xv = x @ mps.v_right                       # (d, dim)
    f = np.broadcast_to(np.eye(dim), (nb, dim, dim)).copy()
    f_bar = f.copy() if track_flipped else None
    row = np.broadcast_to(mps.v_left, (nb, dim)).copy()
    log_prob = np.zeros(nb)
    log_scale = np.zeros(nb)
    rescale = b_size > RESCALE_SPINS
    selections = np.empty((nb, n_draws), dtype=np.int64)
    for k in range(n_draws):
        probs = row @ xv.T                     # (nb, d)
        low = probs.min()
        if low < PROB_CLAMP:
            raise SamplingError(
                f"conditional probability {low} below clamp tolerance at draw {k}")
        np.clip(probs, 0.0, None, out=probs)
        totals = probs.sum(axis=1)
        if np.any(np.abs(totals - 1.0) > NORMALIZATION_HARD):
            raise SamplingError("conditional distribution far from normalized")
        probs /= totals[:, None]
        cum = np.cumsum(probs, axis=1)
        sel = (uniforms[:, k, None] > cum).sum(axis=1)
        np.clip(sel, 0, d - 1, out=sel)
        p_sel = np.take_along_axis(probs, sel[:, None], axis=1)[:, 0]
        if np.any(p_sel <= 0.0):
            raise SamplingError("drew a configuration of zero probability")
        x_sel = x[sel]
        f = f @ x_sel / p_sel[:, None, None]
        row = np.einsum("nd,nde->ne", row, x_sel) / p_sel[:, None]
        if track_flipped:
            f_bar = f_bar @ x_flip[sel] / p_sel[:, None, None]
        log_prob += np.log(p_sel)
        if rescale:
            scale = np.abs(f).max(axis=(1, 2))
            f /= scale[:, None, None]
            if track_flipped:
                f_bar /= scale[:, None, None]
            log_scale += np.log(scale)
        selections[:, k] = sel
    return selections, log_prob, f, f_bar, log_scale


def _selections_to_spins(mps: UniformMps, selections: np.ndarray) -> np.ndarray:
    if mps.cell == 1:
        return (1 - 2 * selections).astype(np.int8)
    first = selections // 2
    second = selections % 2
    spins = np.stack([1 - 2 * first, 1 - 2 * second], axis=-1)
    return spins.reshape(selections.shape[0], -1).astype(np.int8)


def _conditional_batch(f, a_rows, c_cols):
    return np.einsum("ad,nde,ce->nac", a_rows, f, c_cols)


def _mi_batch(joint: np.ndarray) -> np.ndarray:
    """Mutual information of a batch of normalized joint distributions (nats)."""
    rows = joint.sum(axis=2, keepdims=True)
    cols = joint.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(joint > 0.0, joint * np.log(joint / (rows * cols)), 0.0)
    return np.clip(terms.sum(axis=(1, 2)), 0.0, None)


def _normalize_conditionals(joint: np.ndarray, check: bool) -> np.ndarray:
    low = joint.min()
    if low < PROB_CLAMP:
        raise SamplingError(f"conditional marginal entry {low} below clamp tolerance")
    joint = np.clip(joint, 0.0, None)
    totals = joint.sum(axis=(1, 2))
    if check and np.any(np.abs(totals - 1.0) > NORMALIZATION_HARD):
        dev = np.abs(totals - 1.0).max()
        raise SamplingError(f"conditional marginal normalization off by {dev}")
    return joint / totals[:, None, None]


def mi_2x2(dist: np.ndarray) -> float:
    """Mutual information of a normalized joint distribution, in nats.

    Zero entries contribute zero via the x log x -> 0 limit.
    """
    dist = np.asarray(dist, dtype=float)
    return float(_mi_batch(dist[None])[0])


def sample_b_configuration(mps: UniformMps, b_size: int,
                           rng: np.random.Generator,
                           symmetrized: bool = False) -> SampleRecord:
    """Draw one B-configuration exactly from the block marginal.

    The per-draw uniforms are taken as one ``rng.random(n)`` block, so a given
    generator state fixes the sample.  The record's ``mi`` is evaluated for
    single-spin A and C adjacent to the block.
    """
    _, n_draws = _site_tensors(mps, b_size)
    uniforms = rng.random(n_draws)[None, :]
    sel, log_prob, f, f_bar, log_scale = _draw_batch(
        mps, b_size, uniforms, symmetrized)
    a_rows, c_cols = _boundary_vectors(mps, 1, 1)
    joint = _conditional_batch(f, a_rows, c_cols)
    if symmetrized:
        joint = 0.5 * joint + 0.5 * _conditional_batch(
            f_bar, a_rows[::-1], c_cols[::-1])
    joint = _normalize_conditionals(
        joint, check=not symmetrized and log_scale[0] == 0.0)
    mi = float(_mi_batch(joint)[0])
    return SampleRecord(
        config=_selections_to_spins(mps, sel)[0],
        log_prob=float(log_prob[0]),
        f=f[0],
        f_bar=None if f_bar is None else f_bar[0],
        mi=mi,
        log_scale=float(log_scale[0]),
    )


def conditional_ac_marginal(record: SampleRecord, mps: UniformMps,
                            symmetrized: bool = False) -> np.ndarray:
    """Joint distribution of single spins A and C conditioned on the sample."""
    a_rows, c_cols = _boundary_vectors(mps, 1, 1)
    joint = _conditional_batch(record.f[None], a_rows, c_cols)
    if symmetrized:
        if record.f_bar is None:
            raise ValueError("record carries no flipped product")
        joint = 0.5 * joint + 0.5 * _conditional_batch(
            record.f_bar[None], a_rows[::-1], c_cols[::-1])
    joint = _normalize_conditionals(
        joint, check=not symmetrized and record.log_scale == 0.0)
    return joint[0]


def estimate_cmi(mps: UniformMps, b_size: int, samples: int,
                 symmetrized: bool = False, seed: int = 0,
                 tripartition: Optional[Tripartition] = None,
                 time_step: Optional[int] = None,
                 batch_size: int = 2048) -> CmiEstimate:
    """Estimate I(A:C|B) from ``samples`` independent perfect samples.

    Each sample's random stream is derived from (seed, sample index), so the
    result is reproducible and independent of batching.  With ``symmetrized``
    the per-sample marginal averages the direct and spin-flipped products.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples for a standard error")
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    part = tripartition or Tripartition(b_size=b_size)
    if part.b_size != b_size:
        raise ValueError("tripartition block size disagrees with b_size")
    _, n_draws = _site_tensors(mps, b_size)
    a_rows, c_cols = _boundary_vectors(mps, part.a_size, part.c_size)
    mi_values = np.empty(samples)
    for start in range(0, samples, batch_size):
        stop = min(start + batch_size, samples)
        uniforms = np.empty((stop - start, n_draws))
        for i in range(start, stop):
            gen = np.random.default_rng(np.random.SeedSequence((seed, i)))
            uniforms[i - start] = gen.random(n_draws)
        _, _, f, f_bar, log_scale = _draw_batch(
            mps, b_size, uniforms, symmetrized)
        joint = _conditional_batch(f, a_rows, c_cols)
        if symmetrized:
            joint = 0.5 * joint + 0.5 * _conditional_batch(
                f_bar, a_rows[::-1], c_cols[::-1])
        joint = _normalize_conditionals(
            joint, check=not symmetrized and not np.any(log_scale))
        mi_values[start:stop] = _mi_batch(joint)
    mean = float(mi_values.mean())
    stderr = float(mi_values.std(ddof=1) / math.sqrt(samples))
    return CmiEstimate(mean=mean, stderr=stderr, samples=samples,
                       b_size=b_size, time_step=time_step)
