"""Uniform matrix-product representations of classical spin-chain distributions.

A probability distribution over an infinite chain of Ising spins is stored as a
single translationally invariant tensor ``X[s, a, b]`` with a physical index
``s`` and two virtual (bond) indices.  Marginals, correlators and the
normalization are all expressed through the transfer matrix ``T = sum_s X^s``
and its leading eigenpair.

Physical index convention: ``s = 0`` is spin up (+1), ``s = 1`` is spin down
(-1).  States evolved under the even/odd dynamics live on two-spin unit cells;
those carry ``cell = 2`` and a physical dimension of 4 with ``s = 2*s1 + s2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPIN_VALUES = np.array([1.0, -1.0])

# dense eigensolve below this bond dimension, power iteration above
DENSE_EIG_MAX = 64
DEGENERACY_GAP = 1e-10
MARGINAL_CLAMP = -1e-9

__all__ = [
    "UniformMps",
    "Tripartition",
    "thermal_mps",
    "depolarized_cat_mps",
    "polarized_mps",
    "symmetrize",
    "transfer_spectrum",
    "SpectrumError",
]


class SpectrumError(RuntimeError):
    """Leading transfer eigenpair could not be determined."""


def _power_iteration(t_mat: np.ndarray, tol: float = 1e-14, max_iter: int = 100_000):
    d = t_mat.shape[0]
    v = np.full(d, 1.0 / math.sqrt(d))
    w = v.copy()
    lam = 0.0
    for _ in range(max_iter):
        v_new = t_mat @ v
        w_new = t_mat.T @ w
        lam_new = np.linalg.norm(v_new)
        v_new /= lam_new
        w_new /= np.linalg.norm(w_new)
        if (np.linalg.norm(v_new - v) < tol and np.linalg.norm(w_new - w) < tol
                and abs(lam_new - lam) < tol * max(1.0, abs(lam))):
            return lam_new, w_new, v_new
        v, w, lam = v_new, w_new, lam_new
    raise SpectrumError("power iteration did not converge")


def _leading_eigenpair(t_mat: np.ndarray, symmetric: bool):
    """Leading (lam0, v_left, v_right) of a transfer matrix.

    Degenerate leading eigenvalues are resolved with the equal-weight
    convention v = (1, 1, ...)/norm when the state carries the virtual
    spin-flip symmetry.
    """
    d = t_mat.shape[0]
    if d == 1:
        lam = float(t_mat[0, 0])
        return lam, np.array([1.0]), np.array([1.0])
    if d > DENSE_EIG_MAX:
        lam, v_l, v_r = _power_iteration(t_mat)
    else:
        evals, vecs_r = np.linalg.eig(t_mat)
        order = np.argsort(-np.abs(evals))
        lam = evals[order[0]]
        gap = np.abs(evals[order[0]]) - np.abs(evals[order[1]])
        if symmetric and gap < DEGENERACY_GAP:
            v = np.full(d, 1.0 / math.sqrt(d))
            return float(lam.real), v, v.copy()
        if abs(lam.imag) > 1e-12 * abs(lam.real):
            raise SpectrumError("complex leading transfer eigenvalue")
        lam = float(lam.real)
        v_r = vecs_r[:, order[0]].real
        evals_l, vecs_l = np.linalg.eig(t_mat.T)
        v_l = vecs_l[:, np.argmax(np.abs(evals_l))].real
    if v_r.sum() < 0:
        v_r = -v_r
    overlap = v_l @ v_r
    if overlap < 0:
        v_l = -v_l
        overlap = -overlap
    if overlap < 1e-12 * np.linalg.norm(v_l) * np.linalg.norm(v_r):
        raise SpectrumError("left/right leading eigenvectors are orthogonal")
    scale = 1.0 / math.sqrt(overlap)
    return lam, v_l * scale, v_r * scale


class UniformMps:
    """Translationally invariant MPS for a classical spin distribution.

    Instances are normalized at construction (leading transfer eigenvalue 1,
    ``<v_left|v_right> = 1``) and immutable afterwards; evolution and channel
    application create new values.

    Attributes:
        tensor: real array of shape ``(d, D, D)`` with ``d = 2**cell``.
        cell: number of spins per MPS site (1 or 2).
        lam0: leading transfer eigenvalue after normalization (1.0).
        v_left, v_right: leading left/right transfer eigenvectors.
        symmetric: whether the virtual spin-flip symmetry
            ``X^s = V X^{-s} V^{-1}`` applies (cat-type states).
    """

    def __init__(self, tensor, cell, lam0, v_left, v_right, symmetric):
        self.tensor = tensor
        self.cell = cell
        self.lam0 = lam0
        self.v_left = v_left
        self.v_right = v_right
        self.symmetric = symmetric
        for arr in (self.tensor, self.v_left, self.v_right):
            arr.setflags(write=False)

    @classmethod
    def from_tensor(cls, tensor: np.ndarray, cell: int = 1,
                    symmetric: bool = False, eigendata=None) -> "UniformMps":
        """Normalize a raw tensor into a state (lam0 -> 1, <vl|vr> -> 1)."""
        tensor = np.ascontiguousarray(tensor, dtype=float)
        if tensor.ndim != 3 or tensor.shape[1] != tensor.shape[2]:
            raise ValueError(f"expected (d, D, D) tensor, got {tensor.shape}")
        if tensor.shape[0] != 2 ** cell:
            raise ValueError(
                f"physical dimension {tensor.shape[0]} does not match cell={cell}")
        if eigendata is None:
            lam, v_l, v_r = _leading_eigenpair(tensor.sum(axis=0), symmetric)
        else:
            lam, v_l, v_r = eigendata
            v_l = np.asarray(v_l, dtype=float).copy()
            v_r = np.asarray(v_r, dtype=float).copy()
        if lam <= 0:
            raise SpectrumError(f"leading transfer eigenvalue {lam} is not positive")
        return cls(tensor / lam, cell, 1.0, v_l, v_r, symmetric)

    @property
    def bond_dim(self) -> int:
        return self.tensor.shape[1]

    @property
    def phys_dim(self) -> int:
        return self.tensor.shape[0]

    def transfer_matrix(self) -> np.ndarray:
        return self.tensor.sum(axis=0)

    def marginal(self, n_spins: int, max_sites: int = 12) -> np.ndarray:
        """Exact marginal over ``n_spins`` contiguous spins.

        Returns an array of shape ``(2,)*n_spins``, clamped and renormalized
        per the truncation policy: entries below -1e-9 are an error, small
        negatives are zeroed.
        """
        if n_spins < 1:
            raise ValueError("n_spins must be >= 1")
        if n_spins > max_sites:
            raise ValueError(f"marginal over {n_spins} spins exceeds cap {max_sites}")
        env = self.v_left
        if self.cell == 1:
            for _ in range(n_spins):
                env = np.tensordot(env, self.tensor, axes=([-1], [1]))
        else:
            x4 = self.tensor.reshape(2, 2, self.bond_dim, self.bond_dim)
            full, rem = divmod(n_spins, 2)
            for _ in range(full):
                env = np.tensordot(env, x4, axes=([-1], [2]))
            if rem:
                env = np.tensordot(env, x4.sum(axis=1), axes=([-1], [1]))
        probs = env @ self.v_right
        total = probs.sum()
        if abs(total - 1.0) > 1e-8:
            raise ValueError(f"marginal sums to {total}, expected 1")
        low = probs.min()
        if low < MARGINAL_CLAMP:
            raise ValueError(f"marginal entry {low} below clamp tolerance")
        if low < 0.0:
            probs = np.clip(probs, 0.0, None)
        return probs / probs.sum()

    # -- observables ----------------------------------------------------------

    def _cell_operators(self):
        """(weighted, unweighted) single-site contractions for each spin slot."""
        if self.cell == 1:
            z = self.tensor[0] - self.tensor[1]
            return [(z, self.transfer_matrix())]
        x4 = self.tensor.reshape(2, 2, self.bond_dim, self.bond_dim)
        z1 = np.einsum("s,stab->ab", SPIN_VALUES, x4)
        z2 = np.einsum("t,stab->ab", SPIN_VALUES, x4)
        t_mat = self.transfer_matrix()
        return [(z1, t_mat), (z2, t_mat)]

    def magnetization(self) -> float:
        """Mean spin, averaged over the positions of the unit cell."""
        ops = self._cell_operators()
        vals = [float(self.v_left @ z @ self.v_right) for z, _ in ops]
        return sum(vals) / len(vals)

    def spin_correlator(self, r: int) -> float:
        """Two-point function <s_0 s_r>, averaged over cell alignments."""
        if r < 0:
            raise ValueError("distance must be >= 0")
        if r == 0:
            return 1.0
        return float(self.correlator_profile(r)[r])

    def correlator_profile(self, r_max: int) -> np.ndarray:
        """<s_0 s_r> for r = 0..r_max (origin-averaged for cell=2 states)."""
        if r_max < 0:
            raise ValueError("r_max must be >= 0")
        if self.cell == 1:
            out = np.empty(r_max + 1)
            out[0] = 1.0
            if r_max == 0:
                return out
            t_mat = self.transfer_matrix()
            z = self.tensor[0] - self.tensor[1]
            left = self.v_left @ z
            vec = z @ self.v_right
            for r in range(1, r_max + 1):
                out[r] = left @ vec
                vec = t_mat @ vec
            return out
        c_first, c_second = self.sublattice_correlators(r_max)
        return 0.5 * (c_first + c_second)

    def sublattice_correlators(self, r_max: int):
        """Origin-resolved correlators of a cell=2 state.

        Returns (c_first, c_second) where ``c_first[r]`` starts at the first
        spin of a cell and ``c_second[r]`` at the second.
        """
        if self.cell != 2:
            prof = self.correlator_profile(r_max)
            return prof, prof.copy()
        t_mat = self.transfer_matrix()
        x4 = self.tensor.reshape(2, 2, self.bond_dim, self.bond_dim)
        z1 = np.einsum("s,stab->ab", SPIN_VALUES, x4)
        z2 = np.einsum("t,stab->ab", SPIN_VALUES, x4)
        z12 = np.einsum("s,t,stab->ab", SPIN_VALUES, SPIN_VALUES, x4)
        c_first = np.zeros(r_max + 1)
        c_second = np.zeros(r_max + 1)
        c_first[0] = c_second[0] = 1.0
        if r_max >= 1:
            c_first[1] = float(self.v_left @ z12 @ self.v_right)
        l1, l2 = self.v_left @ z1, self.v_left @ z2
        v1, v2 = z1 @ self.v_right, z2 @ self.v_right
        # after k-1 transfer applications: v holds T^{k-1} Z |v_r>, i.e. the
        # weighted spin sits k cells to the right of the origin cell
        for k in range(1, r_max // 2 + 2):
            if 2 * k - 1 <= r_max and 2 * k - 1 >= 1:
                c_second[2 * k - 1] = l2 @ v1
            if 2 * k <= r_max:
                c_first[2 * k] = l1 @ v1
                c_second[2 * k] = l2 @ v2
            if 2 * k + 1 <= r_max:
                c_first[2 * k + 1] = l1 @ v2
            v1, v2 = t_mat @ v1, t_mat @ v2
        return c_first, c_second

    # -- structure ------------------------------------------------------------

    def block_pair(self) -> "UniformMps":
        """Contract two sites into one two-spin cell (cell 1 -> 2)."""
        if self.cell != 1:
            raise ValueError("state is already blocked into two-spin cells")
        d, dim = 2, self.bond_dim
        pair = np.einsum("sac,tcb->stab", self.tensor, self.tensor)
        pair = pair.reshape(d * d, dim, dim)
        return UniformMps.from_tensor(
            pair, cell=2, symmetric=self.symmetric,
            eigendata=(1.0, self.v_left.copy(), self.v_right.copy()))

    def flipped_tensor(self) -> np.ndarray:
        """Tensor of the globally spin-flipped state (physical index reversed)."""
        return self.tensor[::-1]


def thermal_mps(beta: float) -> UniformMps:
    """Gibbs state of the nearest-neighbour ferromagnetic chain as a D=2 MPS."""
    if not math.isfinite(beta) or beta < 0:
        raise ValueError(f"beta must be finite and >= 0, got {beta}")
    # entries exp(+-beta)/(2 cosh beta), computed in logs for large beta
    log_norm = beta + math.log1p(math.exp(-2.0 * beta))  # log(2 cosh beta)
    hi = math.exp(beta - log_norm)
    lo = math.exp(-beta - log_norm)
    x = np.zeros((2, 2, 2))
    x[0, 0, 0] = hi
    x[0, 0, 1] = lo
    x[1, 1, 0] = lo
    x[1, 1, 1] = hi
    return UniformMps.from_tensor(x)


def depolarized_cat_mps(p: float) -> UniformMps:
    """Symmetric mixture of the two polarized states after site-wise spin flips.

    Each spin is flipped independently with probability ``p``; the transfer
    matrix is the identity, so the boundary vectors are fixed to the
    equal-weight symmetric convention (1, 1)/sqrt(2).
    """
    if not 0.0 <= p <= 0.5:
        raise ValueError(f"flip probability must lie in [0, 1/2], got {p}")
    q = 1.0 - p
    x = np.zeros((2, 2, 2))
    x[0, 0, 0] = q
    x[1, 0, 0] = p
    x[0, 1, 1] = p
    x[1, 1, 1] = q
    v = np.array([1.0, 1.0]) / math.sqrt(2.0)
    return UniformMps.from_tensor(x, symmetric=True,
                                  eigendata=(1.0, v, v.copy()))


def polarized_mps() -> UniformMps:
    """All-up product state (D = 1)."""
    x = np.zeros((2, 1, 1))
    x[0, 0, 0] = 1.0
    return UniformMps.from_tensor(x)


def symmetrize(mps: UniformMps) -> UniformMps:
    """Block state diag(X^s, X^{-s}): equal mixture of a state and its flip.

    Doubles the bond dimension; the boundary vectors extend blockwise with
    equal weights, which selects the symmetric sector.
    """
    x = mps.tensor
    d, dim = x.shape[0], x.shape[1]
    flipped = mps.flipped_tensor()
    blocked = np.zeros((d, 2 * dim, 2 * dim))
    blocked[:, :dim, :dim] = x
    blocked[:, dim:, dim:] = flipped
    v_l = np.concatenate([mps.v_left, mps.v_left]) / math.sqrt(2.0)
    v_r = np.concatenate([mps.v_right, mps.v_right]) / math.sqrt(2.0)
    return UniformMps.from_tensor(blocked, cell=mps.cell, symmetric=True,
                                  eigendata=(1.0, v_l, v_r))


def transfer_spectrum(mps: UniformMps):
    """Leading transfer eigendata (lam0, v_left, v_right) of a state."""
    return mps.lam0, mps.v_left, mps.v_right


@dataclass(frozen=True)
class Tripartition:
    """Contiguous A-B-C split of the chain; sizes are in spins."""

    b_size: int
    a_size: int = 1
    c_size: int = 1

    def __post_init__(self):
        for name in ("a_size", "b_size", "c_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
