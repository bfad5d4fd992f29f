"""Shared exact-enumeration helpers for small periodic chains."""

import numpy as np
import pytest


class RingOracle:
    """Exact 2^L-state evolution of the even/odd heat-bath sweep on a ring."""

    def __init__(self, length):
        self.length = length
        states = np.arange(2 ** length)
        bits = (states[:, None] >> np.arange(length)) & 1
        self.spins = 1.0 - 2.0 * bits

    def gibbs(self, beta):
        energy = np.sum(self.spins * np.roll(self.spins, -1, axis=1), axis=1)
        weights = np.exp(beta * energy)
        return weights / weights.sum()

    def polarized(self):
        dist = np.zeros(2 ** self.length)
        dist[0] = 1.0
        return dist

    def _update_site(self, dist, site, beta, alpha):
        length = self.length
        neighbours = (self.spins[:, (site - 1) % length]
                      + self.spins[:, (site + 1) % length])
        up = self.spins[:, site] > 0
        idx_up = np.where(up)[0]
        idx_dn = idx_up ^ (1 << site)
        n_up = neighbours[idx_up]
        heat_up = np.exp(beta * n_up) / (2.0 * np.cosh(beta * n_up))
        out = np.zeros_like(dist)
        total = dist[idx_up] + dist[idx_dn]
        out[idx_up] = (1 - alpha) * dist[idx_up] + alpha * heat_up * total
        out[idx_dn] = (1 - alpha) * dist[idx_dn] + alpha * (1 - heat_up) * total
        return out

    def sweep(self, dist, beta, alpha):
        for site in range(0, self.length, 2):
            dist = self._update_site(dist, site, beta, alpha)
        for site in range(1, self.length, 2):
            dist = self._update_site(dist, site, beta, alpha)
        return dist

    def as_site_array(self, dist):
        """Distribution as an array with axis i = site i (0 = spin up)."""
        full = dist.reshape((2,) * self.length)
        return np.transpose(full, tuple(range(self.length - 1, -1, -1)))


def ring_distribution(tensor, n_sites):
    """Exact ring distribution Tr[X...X], axis i = site i."""
    d, dim, _ = tensor.shape
    cell = 2 if d == 4 else 1
    n_cells = n_sites // cell
    acc = tensor
    for _ in range(n_cells - 1):
        acc = np.einsum("...ab,sbc->...sac", acc, tensor)
    probs = np.trace(acc, axis1=-2, axis2=-1)
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    return probs.reshape((2,) * n_sites)


@pytest.fixture(scope="session")
def ring8():
    return RingOracle(8)
