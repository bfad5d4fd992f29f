"""Discrete-time Glauber and depolarizing channels, and TEBD-style evolution.

One sweep of the heat-bath dynamics updates the even sublattice and then the
odd sublattice.  Both layers are assembled from the single-spin update tensor
``W`` and the value-copying tensor ``Delta``; contracted over a two-spin unit
cell they form an MPO of bond dimension 4.  The evolved state therefore lives
on two-spin cells and stays translationally invariant over those cells.

Truncation goes through the canonical form of the uniform MPS: the left and
right gauge factors are square roots of the doubled transfer map's fixed
points, and an SVD of the centre matrix exposes the Schmidt spectrum.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr as scipy_qr

from .mps import UniformMps

__all__ = [
    "GlauberChannel",
    "QuenchConfig",
    "glauber_weight",
    "build_glauber_mpo",
    "apply_depolarizing",
    "apply_channel_exact",
    "canonicalize",
    "tebd_step",
    "tebd_evolve",
    "CanonicalizationError",
]

QR_TOL = 1e-12
QR_MAX_ITER = 10_000


class CanonicalizationError(RuntimeError):
    """QR orthonormalization did not converge within the iteration cap."""


def glauber_weight(s: int, s_old: int, left: int, right: int,
                   beta: float, alpha: float) -> float:
    """Single-spin update weight W(s <- s_old | neighbours left, right).

    Spins are +-1.  With probability 1-alpha the spin is kept, otherwise it is
    redrawn from the heat-bath distribution of its two neighbours.
    """
    for v in (s, s_old, left, right):
        if v not in (-1, 1):
            raise ValueError("spins must be +-1")
    field_sum = left + right
    heat_bath = math.exp(beta * s * field_sum) / (
        2.0 * math.cosh(beta * field_sum))
    return (1.0 - alpha) * (s == s_old) + alpha * heat_bath


def _w_tensor(beta: float, alpha: float) -> np.ndarray:
    """W[s, s', tau, tau'] on index convention 0 -> +1, 1 -> -1."""
    vals = np.array([1.0, -1.0])
    n = vals[:, None] + vals[None, :]            # tau + tau'
    heat = np.exp(beta * vals[:, None, None] * n) / (2.0 * np.cosh(beta * n))
    w = alpha * heat[:, None, :, :] * np.ones((1, 2, 1, 1))
    w[0, 0] += 1.0 - alpha
    w[1, 1] += 1.0 - alpha
    return w


def _delta_tensor() -> np.ndarray:
    """Copy tensor Delta[s, s', tau, tau']: all four indices equal."""
    d = np.zeros((2, 2, 2, 2))
    d[0, 0, 0, 0] = 1.0
    d[1, 1, 1, 1] = 1.0
    return d


@dataclass(frozen=True)
class GlauberChannel:
    """One sweep (even then odd sublattice) of the discrete heat-bath dynamics.

    ``site_even``/``site_odd`` are the per-site tensors of the two-layer MPO
    (physical out, physical in, left bond, right bond), and ``pair_mpo`` their
    contraction over a two-spin unit cell.
    """

    beta: float
    alpha: float
    w: np.ndarray = field(repr=False)
    delta: np.ndarray = field(repr=False)
    site_even: np.ndarray = field(repr=False)
    site_odd: np.ndarray = field(repr=False)
    pair_mpo: np.ndarray = field(repr=False)
    mpo_bond: int = 4

    @property
    def gamma(self) -> float:
        return math.tanh(2.0 * self.beta)


def build_glauber_mpo(beta: float, alpha: float) -> GlauberChannel:
    """Assemble the two-layer sweep MPO at inverse temperature ``beta``.

    The first layer updates even sites (W on even, Delta on odd), the second
    updates odd sites with the refreshed even values.  Per two-site cell the
    composite bond dimension is 4.
    """
    if not math.isfinite(beta) or beta < 0:
        raise ValueError(f"beta must be finite and >= 0, got {beta}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    w = _w_tensor(beta, alpha)
    delta = _delta_tensor()
    # vertical contraction per site; bond index = (odd layer, even layer)
    site_even = np.einsum("zmuU,msvV->zsuvUV", delta, w).reshape(2, 2, 4, 4)
    site_odd = np.einsum("zmuU,msvV->zsuvUV", w, delta).reshape(2, 2, 4, 4)
    pair = np.einsum("abkm,cdmn->acbdkn", site_even, site_odd).reshape(4, 4, 4, 4)
    return GlauberChannel(beta=beta, alpha=alpha, w=w, delta=delta,
                          site_even=site_even, site_odd=site_odd,
                          pair_mpo=pair)


@dataclass(frozen=True)
class QuenchConfig:
    """Parameters of one finite-temperature quench run."""

    beta_i: float
    beta_f: float
    alpha: float
    steps: int
    d_max: int
    cutoff: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.beta_f < 0 or not math.isfinite(self.beta_f):
            raise ValueError(f"beta_f must be finite and >= 0, got {self.beta_f}")
        if self.beta_i < 0:
            raise ValueError(f"beta_i must be >= 0, got {self.beta_i}")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.d_max < 1:
            raise ValueError("d_max must be >= 1")
        if self.cutoff < 0:
            raise ValueError("cutoff must be >= 0")
        if self.beta_f > self.beta_i:
            warnings.warn("beta_f > beta_i: cooling quench", stacklevel=2)


def apply_depolarizing(mps: UniformMps, p: float) -> UniformMps:
    """Flip every spin independently with probability ``p``.

    Pure physical-index contraction; the bond dimension is unchanged.
    """
    if not 0.0 <= p <= 0.5:
        raise ValueError(f"flip probability must lie in [0, 1/2], got {p}")
    noise = np.array([[1.0 - p, p], [p, 1.0 - p]])
    if mps.cell == 2:
        noise = np.kron(noise, noise)
    tensor = np.einsum("st,tab->sab", noise, mps.tensor)
    eigendata = None
    if mps.symmetric:
        # the channel commutes with the spin flip, so the transfer matrix and
        # the symmetric boundary convention are unchanged
        eigendata = (1.0, mps.v_left.copy(), mps.v_right.copy())
    return UniformMps.from_tensor(tensor, cell=mps.cell,
                                  symmetric=mps.symmetric, eigendata=eigendata)


def apply_channel_exact(mps: UniformMps, channel: GlauberChannel) -> UniformMps:
    """One sweep without truncation; bond dimension grows by the MPO bond."""
    if mps.cell == 1:
        mps = mps.block_pair()
    d, dim = mps.phys_dim, mps.bond_dim
    k = channel.pair_mpo.shape[2]
    y = np.einsum("STkm,Tab->Skamb", channel.pair_mpo, mps.tensor)
    return UniformMps.from_tensor(y.reshape(d, k * dim, k * dim), cell=2)


def _doubled_fixed_point(tensor: np.ndarray, side: str, tol: float,
                         max_iter: int, block: int = 8):
    """Leading eigenpair of the doubled transfer map E[M] = sum_s X^sT M X^s.

    Low-temperature states carry a nearly degenerate leading pair (the two
    ferromagnetic sectors), so a plain power/QR iteration stalls; a small
    Rayleigh-Ritz block converges at the macroscopic gap instead.  Returns
    (eigenvalue, symmetric PSD eigenmatrix).
    """
    d, dim, _ = tensor.shape
    n = dim * dim
    block = min(block, n)

    if side == "left":
        flat = tensor.reshape(-1, dim)                       # (s*a, b)

        def apply_many(mats):
            # out[k,b,d] = sum_{s,a,c} X[s,a,b] M[k,a,c] X[s,c,d]
            t1 = np.matmul(mats[:, None], tensor[None])      # (k,s,a,d)
            t1 = t1.reshape(mats.shape[0], -1, dim)          # (k, s*a, d)
            return np.matmul(flat.T, t1)                     # (k, b, d)
    else:
        flat = np.ascontiguousarray(
            tensor.transpose(1, 0, 2)).reshape(dim, -1)      # (c, s*d)

        def apply_many(mats):
            # out[k,a,c] = sum_{s,b,d} X[s,a,b] M[k,b,d] X[s,c,d]
            t1 = np.matmul(tensor[None], mats[:, None])      # (k,s,a,d)
            t1 = np.ascontiguousarray(np.swapaxes(t1, 1, 2))
            t1 = t1.reshape(mats.shape[0], dim, -1)          # (k, a, s*d)
            return np.matmul(t1, flat.T)                     # (k, a, c)

    def apply(m):
        return apply_many(m[None])[0]

    def apply_block(basis):
        mats = np.ascontiguousarray(basis.T).reshape(-1, dim, dim)
        return apply_many(mats).reshape(basis.shape[1], -1).T

    rng = np.random.default_rng(0)
    basis = rng.standard_normal((n, block))
    basis[:, 0] = np.eye(dim).ravel()
    basis, _ = np.linalg.qr(basis)
    for _ in range(max_iter):
        image = apply_block(basis)
        small = basis.T @ image
        evals, evecs = np.linalg.eig(small)
        lead = int(np.argmax(np.abs(evals)))
        lam = evals[lead]
        vec = (basis @ evecs[:, lead]).real
        vec /= np.linalg.norm(vec)
        residual = np.linalg.norm(
            apply(vec.reshape(dim, dim)).ravel() - lam.real * vec)
        if residual < tol * max(abs(lam.real), 1e-300):
            mat = vec.reshape(dim, dim)
            mat = 0.5 * (mat + mat.T)
            if np.trace(mat) < 0:
                mat = -mat
            return float(lam.real), mat
        basis, _ = np.linalg.qr(image)
    raise CanonicalizationError(
        f"doubled-map fixed point did not converge in {max_iter} iterations")


LONG = np.longdouble
LD_REFINE_ROUNDS = 5    # extended-precision power polish of the fixed points
SUPPORT_LD = 4e-17      # fixed-point weight below this (relative) is noise


def _apply_doubled_ld(tensor_ld: np.ndarray, mat: np.ndarray) -> np.ndarray:
    # sum_s X^sT (M X^s) via flat matmuls; longdouble stays off the BLAS path
    d, dim, _ = tensor_ld.shape
    t1 = np.matmul(mat[None], tensor_ld)          # (s, a, d)
    flat = tensor_ld.reshape(d * dim, dim)
    return flat.T @ t1.reshape(d * dim, dim)


def _power_refine_ld(tensor_ld: np.ndarray, rho: np.ndarray,
                     rounds: int = LD_REFINE_ROUNDS):
    """Extended-precision power polish of a doubled-map fixed point.

    The double-precision solve resolves the nearly degenerate sector doublet;
    these rounds rebuild the weakly weighted directions, whose content sits
    below the double-precision noise floor of the squared fixed point.
    """
    rho = rho.astype(LONG)
    rho = 0.5 * (rho + rho.T)
    rho /= np.linalg.norm(rho.ravel())
    lam = None
    for _ in range(rounds):
        new = _apply_doubled_ld(tensor_ld, rho)
        new = 0.5 * (new + new.T)
        lam = float(np.dot(rho.ravel(), new.ravel()))
        norm = np.sqrt(np.dot(new.ravel(), new.ravel()))
        rho = new / norm
    if lam is None or lam <= 0:
        raise CanonicalizationError("doubled transfer map is not positive")
    return lam, rho


def _jacobi_eigh_ld(mat: np.ndarray, sweeps: int = 24):
    """Jacobi eigendecomposition in extended precision.

    A double-precision eigenbasis pre-rotation leaves only noise-floor
    off-diagonal mass, so the extended-precision rotations touch few pairs.
    Returns (w, v), eigenvalues descending.
    """
    n = mat.shape[0]
    _, v_seed = np.linalg.eigh(mat.astype(float))
    vecs = v_seed.astype(LONG)
    a = vecs.T @ mat @ vecs
    a = 0.5 * (a + a.T)
    scale = max(float(np.abs(np.diag(a)).max()), 1e-300)
    for _ in range(sweeps):
        off = np.abs(np.triu(a, 1))
        pairs = np.argwhere(off > 1e-22 * scale)
        if pairs.size == 0:
            break
        for p, q in pairs:
            apq = a[p, q]
            if abs(apq) <= 1e-22 * scale:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            if theta == 0:
                t = a.dtype.type(1.0)
            else:
                t = np.sign(theta) / (abs(theta) + np.sqrt(1.0 + theta * theta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            col_p = c * a[:, p] - s * a[:, q]
            col_q = s * a[:, p] + c * a[:, q]
            a[:, p], a[:, q] = col_p, col_q
            row_p = c * a[p, :] - s * a[q, :]
            row_q = s * a[p, :] + c * a[q, :]
            a[p, :], a[q, :] = row_p, row_q
            vec_p = c * vecs[:, p] - s * vecs[:, q]
            vec_q = s * vecs[:, p] + c * vecs[:, q]
            vecs[:, p], vecs[:, q] = vec_p, vec_q
    w = np.diag(a).copy()
    order = np.argsort(-w)
    return w[order], vecs[:, order]


def _qr_economic_ld(a: np.ndarray):
    """Householder QR in extended precision, diag(r) >= 0."""
    m, n = a.shape
    r = a.copy()
    vs = []
    for k in range(n):
        col = r[k:, k].copy()
        alpha = np.sqrt(np.dot(col, col))
        if alpha == 0:
            vs.append(np.zeros_like(col))
            continue
        if col[0] >= 0:
            alpha = -alpha
        col[0] -= alpha
        norm = np.sqrt(np.dot(col, col))
        if norm == 0:
            vs.append(np.zeros_like(col))
            continue
        v = col / norm
        r[k:, k:] -= 2.0 * np.outer(v, v @ r[k:, k:])
        vs.append(v)
    q = np.zeros((m, n), dtype=a.dtype)
    q[:n, :n] = np.eye(n, dtype=a.dtype)
    for k in range(n - 1, -1, -1):
        v = vs[k]
        if v.any():
            q[k:, :] -= 2.0 * np.outer(v, v @ q[k:, :])
    signs = np.sign(np.diag(r[:n]))
    signs[signs == 0] = 1.0
    return q * signs, signs[:, None] * r[:n]


def _one_sided_gauge(tensor_ld: np.ndarray, rho_d: np.ndarray):
    """Orthonormal blocks, gauge residue and rectangular gauge for one side.

    The gauge is the eigen square root of the extended-precision fixed point
    restricted to its numerical support (weights above ~1e-16 of the
    maximum), which keeps Schmidt directions down to ~1e-8 of the largest at
    full relative accuracy while excluding noise modes whose orthonormal
    completion would be junk.
    """
    d, dim, _ = tensor_ld.shape
    lam, rho = _power_refine_ld(tensor_ld, rho_d)
    w, u = _jacobi_eigh_ld(rho)
    keep = w > w[0] * SUPPORT_LD
    w = w[keep]
    u = u[:, keep]
    root = np.sqrt(w)
    gauge = root[:, None] * u.T           # (r, D): rho = gauge^T gauge
    inv = u / root[None, :]               # (D, r)
    scale = np.sqrt(LONG(lam))
    raw = np.matmul(np.matmul(gauge[None], tensor_ld), inv[None]) / scale
    rank = gauge.shape[0]
    q, residue = _qr_economic_ld(raw.reshape(d * rank, rank))
    return q.reshape(d, rank, rank), residue, gauge


def canonicalize(tensor: np.ndarray, tol: float = QR_TOL,
                 max_iter: int = QR_MAX_ITER):
    """Canonical form (x_left, x_right, schmidt) of a uniform MPS tensor.

    The gauges are square roots of the doubled transfer map's fixed points,
    refined in extended precision so that Schmidt weights down to ~1e-8 of
    the maximum carry real content (squaring into the fixed point costs half
    the working digits); a final QR pass makes the orthonormality conditions
    exact and its residue is absorbed into the centre matrix.  Noise modes
    are projected out, so the returned bond dimension can shrink.
    ``schmidt`` is nonincreasing with unit 2-norm.
    """
    tensor = np.asarray(tensor, dtype=float)
    d, dim, _ = tensor.shape
    if dim == 1:
        norm = math.sqrt(float(np.sum(tensor ** 2)))
        return tensor / norm, tensor / norm, np.array([1.0])
    fp_tol = min(tol, 1e-13)
    _, rho_l = _doubled_fixed_point(tensor, "left", fp_tol, max_iter)
    _, rho_r = _doubled_fixed_point(tensor, "right", fp_tol, max_iter)
    tensor_ld = tensor.astype(LONG)
    x_left, p_left, g_left = _one_sided_gauge(tensor_ld, rho_l)
    reversed_ld = np.ascontiguousarray(np.swapaxes(tensor_ld, 1, 2))
    x_rev, p_right, g_right = _one_sided_gauge(reversed_ld, rho_r)
    x_right = np.swapaxes(x_rev, 1, 2)
    centre = (p_left @ (g_left @ g_right.T) @ p_right.T).astype(float)
    u, schmidt, vt = np.linalg.svd(centre)
    rank = max(1, int(np.sum(schmidt > schmidt[0] * 1e-10)))
    x_left = np.einsum("ca,scd,db->sab", u[:, :rank],
                       x_left.astype(float), u[:, :rank])
    x_right = np.einsum("ca,scd,db->sab", vt.T[:, :rank],
                        x_right.astype(float), vt.T[:, :rank])
    schmidt = schmidt[:rank]
    return x_left, x_right, schmidt / np.linalg.norm(schmidt)


def tebd_step(mps: UniformMps, channel: GlauberChannel, d_max: int,
              cutoff: float = 1e-9):
    """One sweep followed by canonical-form truncation.

    Returns (new_state, truncation_error) where the error is the sum of the
    squared discarded Schmidt values of the unit-norm spectrum.  The new state
    is renormalized to leading transfer eigenvalue 1.
    """
    grown = apply_channel_exact(mps, channel)
    x_left, _, schmidt = canonicalize(grown.tensor)
    keep = int(np.sum(schmidt >= cutoff)) if cutoff > 0 else len(schmidt)
    keep = max(1, min(keep, d_max))
    error = float(np.sum(schmidt[keep:] ** 2))
    truncated = np.ascontiguousarray(x_left[:, :keep, :keep])
    return UniformMps.from_tensor(truncated, cell=2), error


def tebd_evolve(mps: UniformMps, channel: GlauberChannel, steps: int,
                d_max: int, cutoff: float = 1e-9):
    """Generator over (sweep_index, state, truncation_error), 1-based."""
    state = mps
    for step in range(1, steps + 1):
        state, err = tebd_step(state, channel, d_max, cutoff)
        yield step, state, err
