"""Closed-form and recursion-based references for the engine and the sampler.

Everything here is independent of the tensor-network machinery: the
depolarized-cat conditional mutual information reduces to a sum over the block
magnetization, thermal mutual information follows from the 2x2 transfer
matrix, and the discrete heat-bath correlator dynamics closes on a small
sublattice-resolved recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .mps import UniformMps

__all__ = [
    "DepolCatParams",
    "ThermalParams",
    "thermal_correlation_length",
    "conditional_cat_matrix",
    "exact_cmi_depolarized_cat",
    "brute_force_cmi",
    "AsymptoticCmi",
    "asymptotic_cmi",
    "magnetization_recursion",
    "magnetization_series",
    "CorrelatorTable",
    "correlator_recursion",
    "thermal_mi",
    "markov_length_prediction",
]

LN2 = math.log(2.0)

# soft validity thresholds of the saddle-point formula
ASYMPTOTIC_Z_MAX = 0.5
ASYMPTOTIC_Z2B_MIN = 4.0


def thermal_correlation_length(beta: float) -> float:
    """Correlation length -1/log(tanh beta) of the thermal chain."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    if math.isinf(beta):
        return math.inf
    return -1.0 / math.log(math.tanh(beta))


@dataclass(frozen=True)
class DepolCatParams:
    """Derived quantities of the depolarized cat family at flip probability p."""

    p: float
    q: float = field(init=False)
    lam: float = field(init=False)
    z: float = field(init=False)
    m: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.p <= 0.5:
            raise ValueError(f"flip probability must lie in (0, 1/2], got {self.p}")
        q = 1.0 - self.p
        lam = self.p / q
        z = -math.log(lam) if lam > 0 else math.inf
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "m", math.tanh(z / 2.0))

    @classmethod
    def from_time(cls, t: float) -> "DepolCatParams":
        """Depolarization time t with magnetization m(t) = exp(-t)."""
        return cls(p=0.5 * (1.0 - math.exp(-t)))


@dataclass(frozen=True)
class ThermalParams:
    """Derived quantities of the thermal chain at inverse temperature beta."""

    beta: float
    xi: float = field(init=False)
    gamma: float = field(init=False)

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        object.__setattr__(self, "xi", thermal_correlation_length(self.beta))
        object.__setattr__(self, "gamma", math.tanh(2.0 * self.beta))


def _log_cosh(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - LN2


def conditional_cat_matrix(p: float, l: int) -> np.ndarray:
    """Joint A-C distribution conditioned on block magnetization imbalance l.

    Entries: diagonal p*q*cosh((l +- 1) log lam)/cosh(l log lam), off-diagonal
    p*q, with lam = p/q; normalized by construction.
    """
    params = DepolCatParams(p)
    pq = params.p * params.q
    if params.p == 0.5:
        return np.full((2, 2), 0.25)
    u = math.log(params.lam)
    base = _log_cosh(np.array(l * u))
    d_up = pq * math.exp(_log_cosh(np.array((l + 1) * u)) - base)
    d_dn = pq * math.exp(_log_cosh(np.array((l - 1) * u)) - base)
    return np.array([[d_up, pq], [pq, d_dn]])


def _cat_mi_per_l(p: float, ls: np.ndarray) -> np.ndarray:
    """Vectorized mutual information of the conditioned 2x2 over imbalances."""
    params = DepolCatParams(p)
    pq = params.p * params.q
    if params.p == 0.5:
        return np.zeros_like(ls, dtype=float)
    u = math.log(params.lam)
    base = _log_cosh(ls * u)
    d_up = pq * np.exp(_log_cosh((ls + 1) * u) - base)
    d_dn = pq * np.exp(_log_cosh((ls - 1) * u) - base)
    joint = np.stack([np.stack([d_up, np.full_like(d_up, pq)], axis=-1),
                      np.stack([np.full_like(d_up, pq), d_dn], axis=-1)], axis=-2)
    rows = joint.sum(axis=-1, keepdims=True)
    cols = joint.sum(axis=-2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(joint > 0, joint * np.log(joint / (rows * cols)), 0.0)
    return np.clip(terms.sum(axis=(-1, -2)), 0.0, None)


def exact_cmi_depolarized_cat(p: float, b_size: int) -> float:
    """I(A:C|B) of the depolarized cat, exactly, as a sum over imbalance l.

    The block marginal depends on its configuration only through the number of
    up spins, so the configuration sum reduces to O(|B|) terms weighted by the
    binomial multiplicity times the symmetrized Bernoulli weight.
    """
    if b_size < 2 or b_size % 2 != 0:
        raise ValueError("block size must be even and >= 2")
    params = DepolCatParams(p)
    half = b_size // 2
    ls = np.arange(-half, half + 1)
    n_up = half + ls
    n_dn = half - ls
    log_binom = gammaln(b_size + 1) - gammaln(n_up + 1) - gammaln(n_dn + 1)
    log_q, log_p = math.log(params.q), math.log(params.p)
    branch_a = n_up * log_q + n_dn * log_p
    branch_b = n_dn * log_q + n_up * log_p
    log_weight = log_binom + np.logaddexp(branch_a, branch_b) - LN2
    return float(np.sum(np.exp(log_weight) * _cat_mi_per_l(p, ls)))


def _entropy(dist: np.ndarray) -> float:
    flat = dist[dist > 0]
    return float(-np.sum(flat * np.log(flat)))


def brute_force_cmi(mps: UniformMps, b_size: int) -> float:
    """Exact I(A:C|B) from full enumeration of the (|B|+2)-spin marginal.

    Independent of the sampler: uses S_AB + S_BC - S_B - S_ABC on the
    enumerated joint distribution.  Limited to |B| <= 12.
    """
    if b_size < 1 or b_size > 12:
        raise ValueError("brute force supports 1 <= b_size <= 12")
    n = b_size + 2
    joint = mps.marginal(n, max_sites=14)
    s_abc = _entropy(joint)
    s_ab = _entropy(joint.sum(axis=-1))
    s_bc = _entropy(joint.sum(axis=0))
    s_b = _entropy(joint.sum(axis=(0, -1)))
    return s_ab + s_bc - s_b - s_abc


class AsymptoticCmi(NamedTuple):
    value: float
    valid: bool


def asymptotic_cmi(p: float, b_size: int) -> AsymptoticCmi:
    """Saddle-point CMI of the depolarized cat at leading order.

    value = z^4 / (16 sqrt(3 z^2 |B|)) * exp(-z^2 |B| / 8); the flag marks the
    regime z small and z^2 |B| large where the expansion applies.
    """
    params = DepolCatParams(p)
    z = params.z
    z2b = z * z * b_size
    if z2b <= 0:
        return AsymptoticCmi(0.0, False)
    value = z ** 4 / (16.0 * math.sqrt(3.0 * z2b)) * math.exp(-z2b / 8.0)
    valid = z <= ASYMPTOTIC_Z_MAX and z2b >= ASYMPTOTIC_Z2B_MIN
    return AsymptoticCmi(value, valid)


def magnetization_recursion(profile: np.ndarray, beta: float, alpha: float,
                            steps: int = 1) -> np.ndarray:
    """Evolve a periodic site-resolved magnetization profile by full sweeps.

    Each sweep updates even sites from their old odd neighbours, then odd
    sites from the refreshed even values.
    """
    m = np.array(profile, dtype=float)
    if m.ndim != 1 or len(m) % 2 != 0:
        raise ValueError("profile must be a flat array of even length")
    gamma = math.tanh(2.0 * beta)
    half = alpha * gamma / 2.0
    for _ in range(steps):
        left = np.roll(m, 1)
        right = np.roll(m, -1)
        even = slice(0, None, 2)
        m[even] = (1 - alpha) * m[even] + half * (left[even] + right[even])
        left = np.roll(m, 1)
        right = np.roll(m, -1)
        odd = slice(1, None, 2)
        m[odd] = (1 - alpha) * m[odd] + half * (left[odd] + right[odd])
    return m


def magnetization_series(m0: float, beta: float, alpha: float,
                         steps: int) -> np.ndarray:
    """Mean magnetization after 0..steps sweeps from a uniform profile."""
    out = np.empty(steps + 1)
    profile = np.array([m0, m0])
    out[0] = m0
    for t in range(1, steps + 1):
        profile = magnetization_recursion(profile, beta, alpha)
        out[t] = profile.mean()
    return out


@dataclass
class CorrelatorTable:
    """Spin-spin correlators C_r(t) of the discrete sweep dynamics.

    ``c_first[t, r]`` starts the pair at the first (even) spin of a unit cell,
    ``c_second`` at the second; both parities of r are filled.  ``averaged``
    is the origin average, which matches UniformMps.correlator_profile.
    """

    times: np.ndarray
    r_values: np.ndarray
    c_first: np.ndarray
    c_second: np.ndarray

    @property
    def averaged(self) -> np.ndarray:
        return 0.5 * (self.c_first + self.c_second)


def _correlator_sweep(cee, coo, ceo, beta, alpha, r_update):
    """One even->odd sweep of the closed sublattice correlator system.

    cee/coo live on even r, ceo on odd r; index r directly.  Rows with
    r >= r_update stay pinned (far boundary).
    """
    half = alpha * math.tanh(2.0 * beta) / 2.0
    lazy = 1.0 - alpha

    def val(arr, r):
        r = abs(r)
        return 1.0 if r == 0 else arr[r]

    ceo_h = ceo.copy()
    cee_h = cee.copy()
    for r in range(1, r_update, 2):
        ceo_h[r] = lazy * ceo[r] + half * (val(coo, r - 1) + val(coo, r + 1))
    for r in range(2, r_update, 2):
        cee_h[r] = (lazy * lazy * cee[r]
                    + 2.0 * lazy * half * (val(ceo, r - 1) + val(ceo, r + 1))
                    + half * half * (2.0 * val(coo, r)
                                     + val(coo, r - 2) + val(coo, r + 2)))
    ceo_n = ceo.copy()
    coo_n = coo.copy()
    for r in range(1, r_update, 2):
        ceo_n[r] = lazy * ceo_h[r] + half * (val(cee_h, r - 1) + val(cee_h, r + 1))
    for r in range(2, r_update, 2):
        coo_n[r] = (lazy * lazy * coo[r]
                    + 2.0 * lazy * half * (val(ceo_h, r - 1) + val(ceo_h, r + 1))
                    + half * half * (2.0 * val(cee_h, r)
                                     + val(cee_h, r - 2) + val(cee_h, r + 2)))
    return cee_h, coo_n, ceo_n


def correlator_recursion(beta_i: float, beta_f: float, alpha: float,
                         steps: int, r_max: int,
                         record_times: Optional[Sequence[int]] = None
                         ) -> CorrelatorTable:
    """Iterate the exact discrete correlator dynamics of the sweep channel.

    Initial condition is the thermal profile tanh(beta_i)^r (all ones for
    beta_i = inf, the polarized start).  The far boundary r >= r_max is pinned
    to the initial tail; a shadow run with a zero-pinned boundary detects when
    boundary influence reaches r < r_max/2, which raises.
    """
    if r_max < 8:
        raise ValueError("r_max too small for the stencil")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    times = (np.arange(steps + 1) if record_times is None
             else np.asarray(sorted(set(record_times)), dtype=int))
    if times.size and (times[0] < 0 or times[-1] > steps):
        raise ValueError("record_times outside 0..steps")
    tanh_i = 1.0 if math.isinf(beta_i) else math.tanh(beta_i)
    r_all = np.arange(r_max + 3)
    init = tanh_i ** r_all
    state = {
        "cee": np.where(r_all % 2 == 0, init, 0.0),
        "coo": np.where(r_all % 2 == 0, init, 0.0),
        "ceo": np.where(r_all % 2 == 1, init, 0.0),
    }
    shadow = {k: v.copy() for k, v in state.items()}
    for key in shadow:
        shadow[key][r_max:] = 0.0

    n_rec = times.size
    c_first = np.empty((n_rec, r_max + 1))
    c_second = np.empty((n_rec, r_max + 1))
    record_at = {int(t): i for i, t in enumerate(times)}

    def snapshot(idx: int):
        even = r_all[: r_max + 1] % 2 == 0
        cf = np.where(even, state["cee"][: r_max + 1], state["ceo"][: r_max + 1])
        cs = np.where(even, state["coo"][: r_max + 1], state["ceo"][: r_max + 1])
        cf[0] = cs[0] = 1.0
        c_first[idx] = cf
        c_second[idx] = cs

    if 0 in record_at:
        snapshot(record_at[0])
    guard = max(4, r_max // 2)
    for t in range(1, steps + 1):
        state["cee"], state["coo"], state["ceo"] = _correlator_sweep(
            state["cee"], state["coo"], state["ceo"], beta_f, alpha, r_max)
        shadow["cee"], shadow["coo"], shadow["ceo"] = _correlator_sweep(
            shadow["cee"], shadow["coo"], shadow["ceo"], beta_f, alpha, r_max)
        drift = max(
            np.max(np.abs(state[k][:guard] - shadow[k][:guard])) for k in state)
        if drift > 1e-12:
            raise ValueError(
                f"r_max={r_max} too small: boundary influence {drift:.2e} "
                f"reached r < {guard} at sweep {t}")
        if t in record_at:
            snapshot(record_at[t])
    return CorrelatorTable(times=times, r_values=r_all[: r_max + 1],
                           c_first=c_first, c_second=c_second)


def thermal_mi(beta: float, b_size: int) -> float:
    """Mutual information of two spins separated by |B| thermal spins (nats).

    Closed form log 2 - H2(zeta) with zeta = (1 + tanh(beta)^(|B|+1))/2; a
    series expansion covers the far tail where the direct form cancels.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if b_size < 0:
        raise ValueError("b_size must be >= 0")
    eps = math.tanh(beta) ** (b_size + 1)
    if eps < 1e-4:
        # log2 - H2((1+eps)/2) = sum_k eps^(2k) / (2k(2k-1))
        e2 = eps * eps
        return e2 / 2.0 * (1.0 + e2 / 6.0 + e2 * e2 / 15.0)
    zeta = 0.5 * (1.0 + eps)
    low = 0.5 * (1.0 - eps)
    h2 = -zeta * math.log(zeta)
    if low > 0.0:
        h2 -= low * math.log(low)
    return LN2 - h2


def markov_length_prediction(scenario: str, t: Optional[float] = None,
                             beta_i: Optional[float] = None,
                             beta_f: Optional[float] = None,
                             m: Optional[float] = None) -> float:
    """Closed-form conditional-correlation-length predictions.

    Scenarios: ``depolarized-cat`` (2/m^2 with m = exp(-t)), ``ground-to-finite``
    (xi_{beta_f} / m^2), ``thermal-to-thermal`` (xi_{beta_i} / 2 at late times).
    """
    if scenario == "depolarized-cat":
        if m is None:
            if t is None:
                raise ValueError("depolarized-cat needs t or m")
            m = math.exp(-t)
        return 2.0 / (m * m)
    if scenario == "ground-to-finite":
        if beta_f is None or m is None:
            raise ValueError("ground-to-finite needs beta_f and m")
        return thermal_correlation_length(beta_f) / (m * m)
    if scenario == "thermal-to-thermal":
        if beta_i is None:
            raise ValueError("thermal-to-thermal needs beta_i")
        return 0.5 * thermal_correlation_length(beta_i)
    raise ValueError(f"unknown scenario {scenario!r}")
