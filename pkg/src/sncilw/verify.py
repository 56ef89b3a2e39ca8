"""Nonlocal operators, their calibration, and PDE residuals of constructed fields.

Periodic operators (cases II, IV) are applied by singularity-subtracted
trapezoid sums on the grid ``[-ell, ell)``.  Since the kernels are odd and
2*ell-periodic, their principal-value period integral vanishes and

    (T f)(x) = (1/pi) int zeta1(x' - x) (f(x') - f(x)) dx',

whose integrand is regular with diagonal value ``f'(x)``.  Real-line
operators (cases I, III) use the same subtraction on a finite window, plus the
closed-form principal value of the kernel over the window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .backlund import backlund_residuals, hermitian_defect
from .dynamics import Trajectory
from .elliptic import CaseKind, Lattice, wp1, zeta1
from .errors import GridTooCoarse, MissingTimeDerivative
from .waves import WaveSample

# --------------------------------------------------------------------------
# spectral helpers


def wavenumbers(n: int, ell: float) -> np.ndarray:
    return 2 * math.pi * np.fft.fftfreq(n, d=2 * ell / n)


def spectral_derivative(f, ell: float, order: int = 1) -> np.ndarray:
    """d^order f / dx^order for samples on [-ell, ell) along axis 0."""
    f = np.asarray(f, complex)
    n = f.shape[0]
    ik = 1j * wavenumbers(n, ell)
    if order % 2 == 1 and n % 2 == 0:
        ik[n // 2] = 0.0
    mult = (ik**order).reshape((n,) + (1,) * (f.ndim - 1))
    return np.fft.ifft(mult * np.fft.fft(f, axis=0), axis=0)


def _periodic_quadrature(f, ell: float, kernel_vals: np.ndarray, singular: bool) -> np.ndarray:
    """Dense trapezoid sum with circulant kernel values ``kernel_vals[m] = K(m h)``."""
    f = np.asarray(f, complex)
    n = f.shape[0]
    h = 2 * ell / n
    m = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    Q = h * kernel_vals[m]
    flat = f.reshape(n, -1)
    out = Q @ flat
    if singular:
        np.fill_diagonal(Q, 0.0)
        out = out - Q.sum(axis=1)[:, None] * flat
        out = out + (h / math.pi) * spectral_derivative(flat, ell)
    return out.reshape(f.shape)


def _zeta1_offsets(lat: Lattice, n: int, shift: complex) -> np.ndarray:
    h = 2 * lat.ell / n
    s = np.arange(n) * h + shift
    vals = np.zeros(n, complex)
    if shift == 0:
        vals[1:] = zeta1(s[1:], lat)
    else:
        vals[:] = zeta1(s, lat)
    return vals / math.pi


def apply_T_quadrature(f, lat: Lattice) -> np.ndarray:
    """(1/pi) PV int zeta1(x' - x) f(x') dx' over one period."""
    n = np.shape(f)[0]
    return _periodic_quadrature(f, lat.ell, _zeta1_offsets(lat, n, 0.0), singular=True)


def apply_Ttilde_quadrature(f, lat: Lattice) -> np.ndarray:
    """(1/pi) int zeta1(x' - x + i*delta) f(x') dx' over one period."""
    n = np.shape(f)[0]
    return _periodic_quadrature(f, lat.ell, _zeta1_offsets(lat, n, 1j * lat.delta), singular=False)


def apply_H_periodic(f, ell: float) -> np.ndarray:
    """(1/(2 ell)) PV int cot(pi (x' - x) / (2 ell)) f(x') dx' over one period."""
    n = np.shape(f)[0]
    h = 2 * ell / n
    vals = np.zeros(n, complex)
    c = math.pi / (2 * ell)
    vals[1:] = 1.0 / np.tan(c * np.arange(1, n) * h) / (2 * ell)
    return _periodic_quadrature(f, ell, vals, singular=True)


def richardson_check(apply, f, tol: float, *args) -> float:
    """Compare ``apply`` on the grid and on every other point; raise if they differ."""
    f = np.asarray(f)
    if f.shape[0] % 2:
        raise GridTooCoarse("grid size must be even for the n/2 comparison")
    full = apply(f, *args)[::2]
    half = apply(f[::2], *args)
    err = float(np.max(np.abs(full - half)))
    if err > tol:
        raise GridTooCoarse(f"operator changes by {err:.3e} between n and n/2 (tolerance {tol:.1e})")
    return err


# --------------------------------------------------------------------------
# real-line window operators


def _trap_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def _toeplitz_apply(kvals_neg_to_pos: np.ndarray, g: np.ndarray) -> np.ndarray:
    """out[i] = sum_k K(x_k - x_i) g[k], with kvals indexed by k - i + n - 1."""
    n = g.shape[0]
    rev = kvals_neg_to_pos[::-1].reshape((-1,) + (1,) * (g.ndim - 1))
    full = fftconvolve(g, rev, axes=0)
    return full[n - 1: 2 * n - 1]


def fd_derivative(f, h: float, order: int = 1) -> np.ndarray:
    """Eighth-order central differences along axis 0; lower order near the ends."""
    f = np.asarray(f, complex)
    if order == 1:
        c = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0, 4 / 5, -1 / 5, 4 / 105, -1 / 280]) / h
    elif order == 2:
        c = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560]) / h**2
    else:
        raise ValueError("order must be 1 or 2")
    out = np.zeros_like(f)
    n = f.shape[0]
    for j, cj in enumerate(c):
        s = j - 4
        if cj:
            out[4:n - 4] += cj * f[4 + s: n - 4 + s]
    edge = np.gradient(f, h, axis=0, edge_order=2)
    if order == 2:
        edge = np.gradient(edge, h, axis=0, edge_order=2)
    out[:4], out[n - 4:] = edge[:4], edge[n - 4:]
    return out


def _window_singular(f, x, kernel, pv_integral, tail=None):
    f = np.asarray(f, complex)
    n = f.shape[0]
    h = x[1] - x[0]
    w = _trap_weights(n, h)
    m = np.arange(-(n - 1), n)
    kv = np.zeros(2 * n - 1, complex)
    nz = m != 0
    kv[nz] = kernel(m[nz] * h)
    wb = w.reshape((n,) + (1,) * (f.ndim - 1))
    conv1 = _toeplitz_apply(kv, wb * f)
    conv0 = _toeplitz_apply(kv, w.astype(complex))
    conv0 = conv0.reshape((n,) + (1,) * (f.ndim - 1))
    out = conv1 - conv0 * f + wb * fd_derivative(f, h) / math.pi
    with np.errstate(divide="ignore", invalid="ignore"):
        pv = pv_integral(x)
    # the window ends carry a log singularity; their values are not meaningful
    pv = np.where(np.isfinite(pv), pv, 0.0)
    out = out + pv.reshape(conv0.shape) * f
    if tail is not None:
        out = out + tail(f, x)
    return out


def _power_tail(f, x, p: float = 2.0, terms: int = 60):
    """Hilbert-kernel contribution from beyond the window for f ~ c (X/x')^p."""
    X_r, X_l = x[-1], -x[0]
    fr, fl = f[-1], f[0]
    out = np.zeros_like(f)
    xs = x.reshape((-1,) + (1,) * (f.ndim - 1))
    # int_X^inf X^p x'^-p / (x' - x) dx' = sum_k x^k X^p / ((k + p) X^(k+p))
    for k in range(terms):
        out = out + fr * (xs / X_r) ** k / (k + p)
        out = out + fl * (-1) ** (k + 1) * (xs / X_l) ** k / (k + p)
    return out / math.pi


def apply_H_realline(f, x, tail_power: float | None = 2.0) -> np.ndarray:
    """(1/pi) PV int f(x')/(x' - x) dx' on the window spanned by x.

    With ``tail_power`` set, the region outside the window is added assuming
    ``f(x') ~ f(edge) * (edge / x')**tail_power``.
    """
    x = np.asarray(x, float)
    X0, X1 = x[0], x[-1]

    def pv(xx):
        return np.log((X1 - xx) / (xx - X0)) / math.pi

    tail = None if tail_power is None else (lambda f, xx: _power_tail(f, xx, tail_power))
    return _window_singular(f, x, lambda s: 1.0 / (math.pi * s), pv, tail)


def apply_T_realline(f, x, delta: float) -> np.ndarray:
    """(1/(2 delta)) PV int coth(pi (x' - x)/(2 delta)) f(x') dx' on the window."""
    x = np.asarray(x, float)
    X0, X1 = x[0], x[-1]
    c = math.pi / (2 * delta)

    def pv(xx):
        # log|sinh| difference, written to avoid overflow for wide windows
        def lsinh(u):
            u = np.abs(u)
            return u + np.log1p(-np.exp(-2 * u)) - math.log(2)
        return (lsinh(c * (X1 - xx)) - lsinh(c * (xx - X0))) / math.pi

    return _window_singular(f, x, lambda s: 1.0 / (np.tanh(c * s) * 2 * delta), pv)


def apply_Ttilde_realline(f, x, delta: float) -> np.ndarray:
    """(1/(2 delta)) int tanh(pi (x' - x)/(2 delta)) f(x') dx' on the window."""
    f = np.asarray(f, complex)
    x = np.asarray(x, float)
    n = f.shape[0]
    h = x[1] - x[0]
    w = _trap_weights(n, h).reshape((n,) + (1,) * (f.ndim - 1))
    m = np.arange(-(n - 1), n)
    kv = np.tanh(math.pi * m * h / (2 * delta)) / (2 * delta)
    return _toeplitz_apply(kv.astype(complex), w * f)


def window_tail_estimate(apply, f, x, *args, shrink: float = 0.25) -> float:
    """Change of ``apply`` on the central half when the window shrinks by ``shrink``."""
    x = np.asarray(x, float)
    n = x.size
    cut = int(round(n * shrink / 2))
    full = apply(f, x, *args)
    part = apply(f[cut:n - cut], x[cut:n - cut], *args)
    centre = central_mask(x)
    return float(np.max(np.abs(full[cut:n - cut][centre[cut:n - cut]] - part[centre[cut:n - cut]])))


def central_mask(x, fraction: float = 0.5) -> np.ndarray:
    x = np.asarray(x, float)
    mid = 0.5 * (x[0] + x[-1])
    half = 0.5 * (x[-1] - x[0]) * fraction
    return np.abs(x - mid) <= half + 1e-12


# --------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class OperatorTable:
    """Fourier multipliers of the periodic operators, indexed like ``np.fft.fftfreq``.

    ``T`` and ``Ttilde`` are set in case IV, ``H`` in case II.  For the
    real-line cases the table only records the window method.
    """

    case: CaseKind
    n: int
    T: np.ndarray | None = None
    Ttilde: np.ndarray | None = None
    H: np.ndarray | None = None
    calibration_error: float = 0.0
    method: str = "multiplier"

    @property
    def periodic(self) -> bool:
        return self.case.periodic

    def apply(self, name: str, f) -> np.ndarray:
        mult = getattr(self, name)
        if mult is None:
            raise ValueError(f"operator {name} not available for case {self.case.tag}")
        f = np.asarray(f, complex)
        shape = (self.n,) + (1,) * (f.ndim - 1)
        return np.fft.ifft(mult.reshape(shape) * np.fft.fft(f, axis=0), axis=0)


def _measure(apply, n: int, ell: float, *args):
    x = -ell + 2 * ell * np.arange(n) / n
    modes = np.exp(1j * np.outer(x, wavenumbers(n, ell)))
    img = apply(modes, *args)
    ratio = img / modes
    mult = ratio.mean(axis=0)
    spread = float(np.max(np.abs(ratio - mult[None, :])))
    return mult, spread


def calibrate_multipliers(case: CaseKind, n: int, coarse_tol: float = 1e-8) -> OperatorTable:
    """Measure the quadrature operators' action on every Fourier mode.

    The n and n/2 tables are compared on ``|m| < n/4``; disagreement above
    ``coarse_tol`` raises :class:`GridTooCoarse`.
    """
    if n < 8 or n & (n - 1):
        raise ValueError(f"n must be a power of two >= 8, got {n}")
    if not case.periodic:
        return OperatorTable(case, n, method="window")

    def table(nn):
        if case.tag == "IV":
            T, s1 = _measure(apply_T_quadrature, nn, case.ell, case.lattice)
            Tt, s2 = _measure(apply_Ttilde_quadrature, nn, case.ell, case.lattice)
            return {"T": T, "Ttilde": Tt}, max(s1, s2)
        H, s = _measure(apply_H_periodic, nn, case.ell, case.ell)
        return {"H": H}, s

    fine, spread = table(n)
    coarse, _ = table(n // 2)
    mf = np.fft.fftfreq(n, 1 / n)
    mc = np.fft.fftfreq(n // 2, 1 / (n // 2))
    err = 0.0
    for name in fine:
        for m in range(-(n // 4) + 1, n // 4):
            err = max(err, abs(fine[name][np.where(mf == m)[0][0]] - coarse[name][np.where(mc == m)[0][0]]))
    if err > coarse_tol:
        raise GridTooCoarse(f"multipliers move by {err:.3e} between n={n} and n={n // 2}")
    # constant-mode action is exact: T(1) = 0, Ttilde(1) = -i, H(1) = 0
    for name in fine:
        fine[name] = fine[name].copy()
        fine[name][0] = -1j if name == "Ttilde" else 0.0
    return OperatorTable(case, n, calibration_error=max(err, spread), **fine)


def exact_multipliers(case: CaseKind, n: int) -> dict:
    """Closed-form Fourier symbols, for comparison with the calibrated table."""
    k = wavenumbers(n, case.ell)
    out = {}
    nz = k != 0
    if case.tag == "IV":
        T = np.zeros(n, complex)
        Tt = np.full(n, -1j, complex)
        T[nz] = 1j / np.tanh(k[nz] * case.delta)
        u = np.abs(k[nz]) * case.delta
        Tt[nz] = 2j * np.sign(k[nz]) * np.exp(-u) / -np.expm1(-2 * u)
        out = {"T": T, "Ttilde": Tt}
    elif case.tag == "II":
        out = {"H": 1j * np.sign(k)}
    return out


# --------------------------------------------------------------------------
# strip eigenfunctions


def strip_test_functions(lat: Lattice) -> dict:
    """2*ell-periodic, zero-mean functions analytic in |Im z| < A with A > delta/2."""
    c = math.pi / lat.ell
    a_low = 0.37 * lat.ell - 1j * lat.delta
    return {
        "sin": lambda z: np.sin(c * z),
        "trig_poly": lambda z: np.cos(2 * c * z) + 0.5j * np.sin(3 * c * z) - 0.25 * np.cos(c * z),
        "wp1": lambda z: wp1(z - a_low, lat),
    }


def _calT(v1, v2, lat, apply_T, apply_Tt):
    return apply_T(v1, lat) + apply_Tt(v2, lat), -apply_Tt(v1, lat) - apply_T(v2, lat)


def check_strip_eigenfunction(g, lat: Lattice, n: int = 256, sign: int = 1,
                              coarse_tol: float | None = None) -> float:
    """max |calT v - sign*i*v| for v = (g(x - sign*i*delta/2), -g(x + sign*i*delta/2))."""
    x = -lat.ell + 2 * lat.ell * np.arange(n) / n
    v1 = g(x - sign * 0.5j * lat.delta)
    v2 = -g(x + sign * 0.5j * lat.delta)
    w1, w2 = _calT(v1, v2, lat, apply_T_quadrature, apply_Ttilde_quadrature)
    dev = max(np.max(np.abs(w1 - sign * 1j * v1)), np.max(np.abs(w2 - sign * 1j * v2)))
    if coarse_tol is not None:
        richardson_check(apply_T_quadrature, v1, coarse_tol, lat)
    return float(dev)


def check_pole_action(lat: Lattice, pole: complex, r: int, n: int = 256) -> float:
    """Deviation of calT A'_r(x - pole) from i r A'_r + constant gamma0 terms.

    ``A'_r(z) = (-wp2(z - i r delta/2), wp2(z + i r delta/2))``; the pole must
    lie in the lower strip for r = +1 and the upper strip for r = -1.
    """
    from .elliptic import wp2

    x = -lat.ell + 2 * lat.ell * np.arange(n) / n
    v1 = -wp2(x - pole - 0.5j * r * lat.delta, lat)
    v2 = wp2(x - pole + 0.5j * r * lat.delta, lat)
    w1, w2 = _calT(v1, v2, lat, apply_T_quadrature, apply_Ttilde_quadrature)
    g0 = lat.gamma0
    e1 = 1j * r * v1 + (1 - r) * 1j * g0
    e2 = 1j * r * v2 + (1 + r) * 1j * g0
    return float(max(np.max(np.abs(w1 - e1)), np.max(np.abs(w2 - e2))))


# --------------------------------------------------------------------------
# PDE residual


@dataclass
class ResidualReport:
    max_norm: dict
    l2_norm: dict
    terms: dict = field(default_factory=dict)
    n: int = 0
    method: str = ""
    tail_estimate: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_norm.values()) if self.max_norm else 0.0


def _comm(A, B):
    return A @ B - B @ A


def _acomm(A, B):
    return A @ B + B @ A


def _pointwise_norm(R):
    return np.linalg.norm(R, ord=2, axis=(-2, -1))


def _spectrum_check(F, tol: float):
    spec = np.abs(np.fft.fft(F, axis=0)).reshape(F.shape[0], -1).max(axis=1)
    n = F.shape[0]
    k = np.abs(np.fft.fftfreq(n, 1 / n))
    hi = spec[k >= 3 * n // 8].max()
    ref = max(spec.max(), 1e-300)
    if hi / ref > tol:
        raise GridTooCoarse(f"field spectrum not resolved: high-mode ratio {hi / ref:.2e} > {tol:.1e}")


def pde_residual(sample: WaveSample, case: CaseKind, table: OperatorTable | None = None,
                 method: str = "multiplier", region: np.ndarray | None = None,
                 spectral_tol: float = 1e-10) -> ResidualReport:
    """Residual of the evolution equation for a sampled field with analytic U_t.

    Periodic cases use spectral x-derivatives and the calibrated multipliers
    (``method="multiplier"``) or the dense quadrature (``method="quadrature"``).
    Real-line cases use eighth-order differences and window operators, and
    the norms are taken over the central half of the window unless ``region``
    is given.
    """
    if sample.U_t is None or (not case.is_sbo and sample.V_t is None):
        raise MissingTimeDerivative("sample carries no analytic time derivative")
    x = sample.x
    U = sample.U
    V = sample.V
    n = x.size
    tail = 0.0
    if case.periodic:
        if table is None and method == "multiplier":
            table = calibrate_multipliers(case, n)
        ell = case.ell
        _spectrum_check(U, spectral_tol)
        Ux, Uxx = spectral_derivative(U, ell), spectral_derivative(U, ell, 2)
        Vx = Vxx = None
        if V is not None:
            Vx, Vxx = spectral_derivative(V, ell), spectral_derivative(V, ell, 2)
        if method == "multiplier":
            T = (lambda F: table.apply("T", F))
            Tt = (lambda F: table.apply("Ttilde", F))
            H = (lambda F: table.apply("H", F))
        else:
            lat = case.lattice
            T = (lambda F: apply_T_quadrature(F, lat))
            Tt = (lambda F: apply_Ttilde_quadrature(F, lat))
            H = (lambda F: apply_H_periodic(F, ell))
        mask = np.ones(n, bool) if region is None else region
        method_tag = f"periodic/{method}"
    else:
        h = x[1] - x[0]
        Ux, Uxx = fd_derivative(U, h), fd_derivative(U, h, 2)
        Vx = Vxx = None
        if V is not None:
            Vx, Vxx = fd_derivative(V, h), fd_derivative(V, h, 2)
        if case.tag == "I":
            H = (lambda F: apply_H_realline(F, x))
            tail = window_tail_estimate(apply_H_realline, Ux, x)
        else:
            dl = case.delta
            T = (lambda F: apply_T_realline(F, x, dl))
            Tt = (lambda F: apply_Ttilde_realline(F, x, dl))
            tail = max(window_tail_estimate(apply_T_realline, Ux, x, dl),
                       window_tail_estimate(apply_Ttilde_realline, Vx, x, dl))
        mask = central_mask(x) if region is None else region
        method_tag = "window/fd8"

    terms = {}
    if case.is_sbo:
        HUx = H(Ux)
        terms = {"U_t": sample.U_t, "{U,U_x}": _acomm(U, Ux), "HU_xx": H(Uxx), "i[U,HU_x]": 1j * _comm(U, HUx)}
        res = {"U": sum(terms.values())}
    else:
        TUx, TtVx, TVx, TtUx = T(Ux), Tt(Vx), T(Vx), Tt(Ux)
        tU = {"U_t": sample.U_t, "{U,U_x}": _acomm(U, Ux), "TU_xx": T(Uxx), "TtV_xx": Tt(Vxx),
              "i[U,TU_x]": 1j * _comm(U, TUx), "i[U,TtV_x]": 1j * _comm(U, TtVx)}
        tV = {"V_t": sample.V_t, "-{V,V_x}": -_acomm(V, Vx), "-TV_xx": -T(Vxx), "-TtU_xx": -Tt(Uxx),
              "i[V,TV_x]": 1j * _comm(V, TVx), "i[V,TtU_x]": 1j * _comm(V, TtUx)}
        res = {"U": sum(tU.values()), "V": sum(tV.values())}
        terms = {**tU, **tV}
    h = (x[-1] - x[0]) / (n - 1) if not case.periodic else 2 * case.ell / n
    max_norm = {k: float(np.max(_pointwise_norm(R[mask]))) for k, R in res.items()}
    l2 = {k: float(math.sqrt(h * np.sum(np.abs(R[mask]) ** 2))) for k, R in res.items()}
    term_norms = {k: float(np.max(_pointwise_norm(R[mask]))) for k, R in terms.items()}
    return ResidualReport(max_norm, l2, term_norms, n, method_tag, tail)


def finite_difference_time_derivative(state, case: CaseKind, x, h: float = 1e-5, substeps: int = 4):
    """Central difference (U(t+h) - U(t-h)) / 2h, advancing the state both ways with RK4."""
    from .dynamics import advance
    from .waves import eval_fields

    sp = eval_fields(advance(state, case, h, substeps), case, x)
    sm = eval_fields(advance(state, case, -h, substeps), case, x)
    Ut = (sp.U - sm.U) / (2 * h)
    Vt = None if sp.V is None else (sp.V - sm.V) / (2 * h)
    return Ut, Vt


# --------------------------------------------------------------------------
# trajectory monitors


@dataclass
class InvariantReport:
    times: np.ndarray
    columns: dict
    tolerances: dict
    flags: dict

    @property
    def passed(self) -> bool:
        return all(self.flags.values())


DEFAULT_MONITOR_TOL = {
    "drift_P": 1e-8,
    "drift_Q": 1e-8,
    "drift_norm_fe_max": 1e-8,
    "backlund_res_max": 1e-6,
    "velocity_mismatch": 1e-7,
}


def invariant_report(traj: Trajectory, case: CaseKind, tolerances: dict | None = None) -> InvariantReport:
    """Per-sample conservation drifts, Backlund residuals and geometry monitors."""
    tol = {**DEFAULT_MONITOR_TOL, **(tolerances or {})}
    cols = {k: np.asarray(v, float) for k, v in traj.diagnostics.items()}
    bres, vmis, herm = [], [], []
    h0 = hermitian_defect(traj.states[0])
    for s in traj.states:
        br = backlund_residuals(s, case)
        bres.append(br.max_norm)
        vmis.append(br.velocity_mismatch)
        herm.append(hermitian_defect(s) if math.isfinite(h0) else 0.0)
    cols["backlund_res_max"] = np.array(bres)
    cols["velocity_mismatch"] = np.array(vmis)
    if math.isfinite(h0) and h0 < 1e-8:
        cols["hermitian_drift"] = np.array(herm)
        tol.setdefault("hermitian_drift", 1e-8)
    flags = {k: bool(np.all(cols[k] <= v)) for k, v in tol.items() if k in cols}
    return InvariantReport(np.asarray(traj.times), cols, tol, flags)
