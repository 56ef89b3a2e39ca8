"""Weierstrass functions for the rectangular lattice 2*ell*Z + 2i*delta*Z and
the four kernel families (rational, trigonometric, hyperbolic, elliptic).

Evaluation uses the logarithmic derivative of the Jacobi theta function
theta_1 as a q-series.  Two expansions are available:

* in the nome ``q = exp(-pi*delta/ell)`` the series sums to ``zeta_1``
  (the 2*ell-periodic variant);
* in the conjugate nome ``q' = exp(-pi*ell/delta)`` it sums to ``zeta_2``
  (the 2i*delta-periodic variant).

The smaller nome is always used, so at most ~15 terms are needed.  Arguments
are first reduced into the centred period cell, with the quasi-periodic
increments of ``zeta_2`` added back analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PoleProximity

EPS_POLE = 1e-12

CASE_TAGS = ("I", "II", "III", "IV")


def _as_array(z):
    arr = np.asarray(z, dtype=complex)
    return arr, arr.ndim == 0


def _ret(x, scalar):
    return complex(x) if scalar else x


def _eta_over_omega(omega: complex, q: float) -> complex:
    """eta/omega for half-period omega whose companion gives nome q."""
    c2 = (math.pi / (2 * omega)) ** 2
    if q == 0.0:
        return c2 / 3
    log_q2 = -2.0 * math.log(q)
    nmax = int(math.ceil(50.0 / log_q2)) + 5
    n = np.arange(1, nmax + 1, dtype=float)
    q2n = np.exp(-log_q2 * n)
    s = float(np.sum(n * q2n / -np.expm1(-log_q2 * n)))
    return c2 * (1.0 / 3.0 - 8.0 * s)


@dataclass(frozen=True)
class Lattice:
    """Rectangular period lattice with half-periods ``ell`` and ``i*delta``.

    Derived constants: ``gamma0 = pi/(2*ell*delta)``, ``eta1 = zeta(ell)``
    and ``eta2 = zeta(i*delta)``.  The two eta values come from independent
    series, so the Legendre relation is a genuine consistency check.
    """

    ell: float
    delta: float
    gamma0: float = field(init=False)
    eta1: complex = field(init=False)
    eta2: complex = field(init=False)

    def __post_init__(self):
        if not (self.ell > 0 and self.delta > 0):
            raise ValueError(f"half-periods must be positive, got ell={self.ell}, delta={self.delta}")
        object.__setattr__(self, "ell", float(self.ell))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "gamma0", math.pi / (2 * self.ell * self.delta))
        q1 = math.exp(-math.pi * self.delta / self.ell)
        q2 = math.exp(-math.pi * self.ell / self.delta)
        eta1 = self.ell * _eta_over_omega(self.ell, q1)
        eta2 = 1j * self.delta * _eta_over_omega(1j * self.delta, q2)
        object.__setattr__(self, "eta1", complex(eta1))
        object.__setattr__(self, "eta2", complex(eta2))

    @property
    def nome(self) -> float:
        """The nome actually used by the series (the smaller of the two)."""
        r = min(self.delta / self.ell, self.ell / self.delta)
        return math.exp(-math.pi * r)

    def legendre_defect(self) -> complex:
        return self.eta1 * (1j * self.delta) - self.eta2 * self.ell - 0.5j * math.pi


def _theta_logderiv(v, q: float, nterms: int):
    """cot(v) + 4 sum q^2n/(1-q^2n) sin(2nv), and its first two v-derivatives."""
    sin_v = np.sin(v)
    cot_v = np.cos(v) / sin_v
    csc2 = 1.0 / sin_v**2
    l0 = cot_v.copy()
    l1 = -csc2
    l2 = 2.0 * csc2 * cot_v
    if q > 0.0 and nterms > 0:
        n = np.arange(1, nterms + 1, dtype=float)
        q2n = q ** (2 * n)
        c = 4.0 * q2n / (1.0 - q2n)
        arg = 2.0 * np.multiply.outer(v, n)
        s = np.sin(arg)
        co = np.cos(arg)
        l0 = l0 + s @ c
        l1 = l1 + co @ (2.0 * n * c)
        l2 = l2 - s @ (4.0 * n * n * c)
    return l0, l1, l2


def _nterms(q: float) -> int:
    if q <= 0.0:
        return 0
    return int(math.ceil(40.0 / -math.log(q))) + 2


def _reduce(z, lat: Lattice):
    n = np.rint(z.real / (2 * lat.ell))
    m = np.rint(z.imag / (2 * lat.delta))
    z0 = z - 2 * lat.ell * n - 2j * lat.delta * m
    return z0, n, m


def _check_poles(dist, eps_pole):
    if eps_pole > 0 and np.any(dist < eps_pole):
        bad = float(np.min(dist))
        raise PoleProximity(f"argument within {bad:.3e} of a pole (eps_pole={eps_pole:.1e})")


def _core(z, lat: Lattice, eps_pole: float):
    """Return (zeta2, wp2, wp2') on array input, with full argument reduction."""
    z0, n, _ = _reduce(z, lat)
    _check_poles(np.abs(z0), eps_pole)
    if lat.delta >= lat.ell:
        q = math.exp(-math.pi * lat.delta / lat.ell)
        c = math.pi / (2 * lat.ell)
        l0, l1, l2 = _theta_logderiv(c * z0, q, _nterms(q))
        z2 = c * l0 + lat.gamma0 * z0
        p2 = -(c**2) * l1 - lat.gamma0
        dp2 = -(c**3) * l2
    else:
        q = math.exp(-math.pi * lat.ell / lat.delta)
        c = math.pi / (2j * lat.delta)
        l0, l1, l2 = _theta_logderiv(c * z0, q, _nterms(q))
        z2 = c * l0
        p2 = -(c**2) * l1
        dp2 = -(c**3) * l2
    z2 = z2 + n * (math.pi / lat.delta)
    return z2, p2, dp2


def zeta2(z, lat: Lattice, eps_pole: float = EPS_POLE):
    """zeta(z) - (eta2/(i delta)) z: odd, 2i*delta-periodic, shifts by pi/delta over 2*ell."""
    arr, scalar = _as_array(z)
    return _ret(_core(arr, lat, eps_pole)[0], scalar)


def zeta1(z, lat: Lattice, eps_pole: float = EPS_POLE):
    """zeta(z) - (eta1/ell) z, the 2*ell-periodic variant."""
    arr, scalar = _as_array(z)
    return _ret(_core(arr, lat, eps_pole)[0] - lat.gamma0 * arr, scalar)


def weierstrass_zeta(z, lat: Lattice, eps_pole: float = EPS_POLE):
    arr, scalar = _as_array(z)
    z2 = _core(arr, lat, eps_pole)[0]
    return _ret(z2 + (lat.eta2 / (1j * lat.delta)) * arr, scalar)


def weierstrass_wp(z, lat: Lattice, eps_pole: float = EPS_POLE):
    arr, scalar = _as_array(z)
    p2 = _core(arr, lat, eps_pole)[1]
    return _ret(p2 - lat.eta2 / (1j * lat.delta), scalar)


def wp1(z, lat: Lattice, eps_pole: float = EPS_POLE):
    """-zeta1'(z); 2*ell-periodic with zero mean over a real period."""
    arr, scalar = _as_array(z)
    return _ret(_core(arr, lat, eps_pole)[1] + lat.gamma0, scalar)


def wp2(z, lat: Lattice, eps_pole: float = EPS_POLE):
    arr, scalar = _as_array(z)
    return _ret(_core(arr, lat, eps_pole)[1], scalar)


def wp2_prime(z, lat: Lattice, eps_pole: float = EPS_POLE):
    arr, scalar = _as_array(z)
    return _ret(_core(arr, lat, eps_pole)[2], scalar)


def kappa(z, lat: Lattice, eps_pole: float = EPS_POLE):
    """zeta2(z)**2 - wp2(z)."""
    arr, scalar = _as_array(z)
    z2, p2, _ = _core(arr, lat, eps_pole)
    return _ret(z2 * z2 - p2, scalar)


def kappa_prime(z, lat: Lattice, eps_pole: float = EPS_POLE):
    # kappa' = 2 zeta2 zeta2' - wp2' = -2 zeta2 wp2 - wp2'
    arr, scalar = _as_array(z)
    z2, p2, dp2 = _core(arr, lat, eps_pole)
    return _ret(-2.0 * z2 * p2 - dp2, scalar)


# --------------------------------------------------------------------------
# kernel families


def _inv_sinh_sq(w):
    """1/sinh(w)^2 without overflow for large |Re w|."""
    w = np.where(w.real < 0, -w, w)
    q = np.exp(-2 * w)
    return 4 * q / (1 - q) ** 2


@dataclass(frozen=True)
class CaseKind:
    """Kernel family selector.

    ``I`` rational (no parameters), ``II`` trigonometric (``ell``),
    ``III`` hyperbolic (``delta``), ``IV`` elliptic (``ell`` and ``delta``).
    """

    tag: str
    ell: float | None = None
    delta: float | None = None
    eps_pole: float = EPS_POLE
    lattice: Lattice | None = field(init=False, default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.tag not in CASE_TAGS:
            raise ValueError(f"unknown case tag {self.tag!r}; expected one of {CASE_TAGS}")
        need_ell = self.tag in ("II", "IV")
        need_delta = self.tag in ("III", "IV")
        if need_ell and not (self.ell and self.ell > 0):
            raise ValueError(f"case {self.tag} requires a positive ell")
        if need_delta and not (self.delta and self.delta > 0):
            raise ValueError(f"case {self.tag} requires a positive delta")
        # parameters a case does not use are dropped so equal cases compare equal
        object.__setattr__(self, "ell", float(self.ell) if need_ell else None)
        object.__setattr__(self, "delta", float(self.delta) if need_delta else None)
        if self.tag == "IV":
            object.__setattr__(self, "lattice", Lattice(self.ell, self.delta))

    @property
    def shift(self) -> float:
        """The delta entering the i*delta/2 pole offsets; 0 for the sBO cases."""
        return self.delta if self.tag in ("III", "IV") else 0.0

    @property
    def gamma0(self) -> float:
        return self.lattice.gamma0 if self.tag == "IV" else 0.0

    @property
    def periodic(self) -> bool:
        return self.tag in ("II", "IV")

    @property
    def is_sbo(self) -> bool:
        return self.tag in ("I", "II")

    def pole_distance(self, z):
        """Distance from z to the pole set of alpha (and V)."""
        arr = np.asarray(z, dtype=complex)
        if self.tag in ("II", "IV"):
            arr = arr - 2 * self.ell * np.rint(arr.real / (2 * self.ell))
        if self.tag in ("III", "IV"):
            arr = arr - 2j * self.delta * np.rint(arr.imag / (2 * self.delta))
        return np.abs(arr)

    def _check(self, arr):
        _check_poles(self.pole_distance(arr), self.eps_pole)

    def alpha(self, z):
        arr, scalar = _as_array(z)
        if self.tag == "IV":
            return _ret(_core(arr, self.lattice, self.eps_pole)[0], scalar)
        self._check(arr)
        if self.tag == "I":
            out = 1.0 / arr
        elif self.tag == "II":
            c = math.pi / (2 * self.ell)
            out = c / np.tan(c * arr)
        else:
            c = math.pi / (2 * self.delta)
            out = c / np.tanh(c * arr)
        return _ret(out, scalar)

    def V(self, z):
        arr, scalar = _as_array(z)
        if self.tag == "IV":
            return _ret(_core(arr, self.lattice, self.eps_pole)[1], scalar)
        self._check(arr)
        if self.tag == "I":
            out = 1.0 / arr**2
        elif self.tag == "II":
            c = math.pi / (2 * self.ell)
            out = c**2 / np.sin(c * arr) ** 2
        else:
            c = math.pi / (2 * self.delta)
            out = c**2 * _inv_sinh_sq(c * arr)
        return _ret(out, scalar)

    def V_prime(self, z):
        arr, scalar = _as_array(z)
        if self.tag == "IV":
            return _ret(_core(arr, self.lattice, self.eps_pole)[2], scalar)
        self._check(arr)
        if self.tag == "I":
            out = -2.0 / arr**3
        elif self.tag == "II":
            c = math.pi / (2 * self.ell)
            s = np.sin(c * arr)
            out = -2.0 * c**3 * np.cos(c * arr) / s**3
        else:
            c = math.pi / (2 * self.delta)
            out = -2.0 * c**3 * np.tanh(c * arr) ** -1 * _inv_sinh_sq(c * arr)
        return _ret(out, scalar)

    def kappa(self, z):
        """zeta2^2 - wp2 in case IV; the limiting constant otherwise."""
        arr, scalar = _as_array(z)
        if self.tag == "IV":
            return _ret(kappa(arr, self.lattice, self.eps_pole), scalar)
        self._check(arr)
        if self.tag == "I":
            const = 0.0
        elif self.tag == "II":
            const = -((math.pi / (2 * self.ell)) ** 2)
        else:
            const = (math.pi / (2 * self.delta)) ** 2
        return _ret(np.full(arr.shape, const, dtype=complex), scalar)

    def kappa_prime(self, z):
        arr, scalar = _as_array(z)
        if self.tag == "IV":
            z2, p2, dp2 = _core(arr, self.lattice, self.eps_pole)
            return _ret(-2.0 * z2 * p2 - dp2, scalar)
        self._check(arr)
        return _ret(np.zeros(arr.shape, dtype=complex), scalar)

    def all_kernels(self, z):
        """(alpha, V, V') in one pass; shares the series in case IV."""
        arr, scalar = _as_array(z)
        if self.tag == "IV":
            z2, p2, dp2 = _core(arr, self.lattice, self.eps_pole)
            return _ret(z2, scalar), _ret(p2, scalar), _ret(dp2, scalar)
        return self.alpha(z), self.V(z), self.V_prime(z)


def kernel_alpha(case: CaseKind, z):
    return case.alpha(z)


def kernel_V(case: CaseKind, z):
    return case.V(z)


def kernel_V_prime(case: CaseKind, z):
    return case.V_prime(z)


def kernel_kappa_prime(case: CaseKind, z):
    return case.kappa_prime(z)
