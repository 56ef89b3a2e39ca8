"""Independent reference values used by the tests.

Weierstrass zeta and wp are summed directly over the lattice in square boxes,
with Richardson extrapolation on the box size to remove the 1/s^2 tail.
"""

import numpy as np


def _box_sums(z, ell, delta, s):
    n = np.arange(-s, s + 1)
    W = (2 * ell * n[:, None] + 2j * delta * n[None, :]).ravel()
    W = W[W != 0]
    zeta = 1 / z + np.sum(1 / (z - W) + 1 / W + z / W**2)
    wp = 1 / z**2 + np.sum(1 / (z - W) ** 2 - 1 / W**2)
    return zeta, wp


def lattice_zeta_wp(z, ell, delta, s=100):
    """(zeta(z), wp(z)) by Richardson-extrapolated lattice sums."""
    z1, p1 = _box_sums(complex(z), ell, delta, s)
    z2, p2 = _box_sums(complex(z), ell, delta, 2 * s)
    return (4 * z2 - z1) / 3, (4 * p2 - p1) / 3
