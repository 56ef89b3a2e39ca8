"""Matrix fields built from a spin-pole state.

For cases III and IV the pair ``(U, V)`` is conjugated by
``exp(i*gamma0*(P+Q)*t)``; in the sBO cases I and II only ``U`` exists and
the pole offsets ``+-i*delta/2`` vanish.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dynamics import SpinPoleState, scm_rhs, total_spins
from .elliptic import CaseKind
from .errors import UnbalancedState

BALANCE_TOL = 1e-8
EIG_COND_MAX = 1e8


@dataclass
class WaveSample:
    """Fields on a grid at one time; arrays have shape (n, d, d)."""

    x: np.ndarray
    t: float
    U: np.ndarray
    V: np.ndarray | None = None
    U_t: np.ndarray | None = None
    V_t: np.ndarray | None = None
    U_x: np.ndarray | None = None
    V_x: np.ndarray | None = None
    case_tag: str = ""

    @property
    def d(self) -> int:
        return self.U.shape[-1]


def periodic_grid(ell: float, n: int) -> np.ndarray:
    """n equispaced points on [-ell, ell)."""
    return -ell + 2 * ell * np.arange(n) / n


def window_grid(x_min: float, x_max: float, n: int) -> np.ndarray:
    """n equispaced points on [x_min, x_max], both ends included."""
    return np.linspace(x_min, x_max, n)


def matrix_conjugation_exp(A, t: float, X) -> np.ndarray:
    """exp(i*A*t) @ X @ exp(-i*A*t); X may carry leading batch axes."""
    A = np.asarray(A, complex)
    X = np.asarray(X, complex)
    if t == 0 or not np.any(A):
        return X.copy()
    w, R = np.linalg.eig(A)
    if np.linalg.cond(R) < EIG_COND_MAX:
        Rinv = np.linalg.inv(R)
        L = (R * np.exp(1j * w * t)) @ Rinv
        Linv = (R * np.exp(-1j * w * t)) @ Rinv
    else:
        L = scipy.linalg.expm(1j * t * A)
        Linv = scipy.linalg.expm(-1j * t * A)
    return L @ X @ Linv


def _check_balance(state: SpinPoleState, case: CaseKind, tol: float):
    if case.tag != "IV":
        return
    P, Q = total_spins(state)
    defect = float(np.linalg.norm(P - Q, 2)) if P.size else 0.0
    if defect > tol:
        raise UnbalancedState(f"||P - Q|| = {defect:.3e} exceeds {tol:.1e}; field is not 2*ell-periodic")


def _pole_sum(x, poles, left, right, case: CaseKind, offset: complex, deriv: int):
    """sum_j |left_j><right_j| k(x - pole_j - offset), k = alpha (deriv 0) or V."""
    d = left.shape[1]
    if poles.size == 0:
        return np.zeros((x.size, d, d), complex)
    z = x[:, None] - poles[None, :] - offset
    k = case.alpha(z) if deriv == 0 else case.V(z)
    return np.einsum("xj,jm,jn->xmn", k, left, right)


def _raw_fields(state: SpinPoleState, case: CaseKind, x, deriv: int = 0):
    """U0 and V0 (deriv=0) or their kernel-V partner sums (deriv=1, without M)."""
    h = 0.5j * case.shift
    sa = _pole_sum(x, state.a, state.e, state.f, case, h, deriv)
    sb = _pole_sum(x, state.b, state.g, state.h, case, -h, deriv)
    U = 1j * sa - 1j * sb
    if case.is_sbo:
        V = None
    else:
        sa2 = _pole_sum(x, state.a, state.e, state.f, case, -h, deriv)
        sb2 = _pole_sum(x, state.b, state.g, state.h, case, h, deriv)
        V = -1j * sa2 + 1j * sb2
    if deriv == 0:
        U = U + state.M_bg[None]
        if V is not None:
            V = V - state.M_bg[None]
    return U, V


def _conj_all(A, t, *arrays):
    return tuple(None if X is None else matrix_conjugation_exp(A, t, X) for X in arrays)


def eval_fields(state: SpinPoleState, case: CaseKind, x, with_x: bool = False,
                balance_tol: float = BALANCE_TOL) -> WaveSample:
    """U (and V for cases III, IV) at the state's time on grid ``x``.

    ``with_x`` also fills ``U_x``, ``V_x`` analytically (using alpha' = -V).
    """
    x = np.asarray(x, dtype=float)
    _check_balance(state, case, balance_tol)
    U0, V0 = _raw_fields(state, case, x)
    P, Q = total_spins(state)
    A = case.gamma0 * (P + Q)
    U, V = _conj_all(A, state.t, U0, V0)
    sample = WaveSample(x, state.t, U, V, case_tag=case.tag)
    if with_x:
        dU, dV = _raw_fields(state, case, x, deriv=1)
        dU, dV = -dU, (None if dV is None else -dV)
        sample.U_x, sample.V_x = _conj_all(A, state.t, dU, dV)
    return sample


def analytic_time_derivative(state: SpinPoleState, case: CaseKind, x, with_x: bool = False,
                             balance_tol: float = BALANCE_TOL) -> WaveSample:
    """eval_fields plus U_t, V_t assembled from the equations of motion."""
    sample = eval_fields(state, case, x, with_x=with_x, balance_tol=balance_tol)
    x = sample.x
    rate = scm_rhs(state, case)
    h = 0.5j * case.shift

    def group(poles, left, right, dleft, dright, vel, offset):
        d = left.shape[1]
        if poles.size == 0:
            return np.zeros((x.size, d, d), complex)
        z = x[:, None] - poles[None, :] - offset
        al, Vk = case.alpha(z), case.V(z)
        Pj = np.einsum("jm,jn->jmn", left, right)
        Pdot = np.einsum("jm,jn->jmn", dleft, right) + np.einsum("jm,jn->jmn", left, dright)
        return np.einsum("xj,jmn->xmn", al, Pdot) + np.einsum("xj,j,jmn->xmn", Vk, vel, Pj)

    ga = lambda off: group(state.a, state.e, state.f, rate.e, rate.f, state.adot, off)  # noqa: E731
    gb = lambda off: group(state.b, state.g, state.h, rate.g, rate.h, state.bdot, off)  # noqa: E731
    U0t = rate.M_bg[None] + 1j * ga(h) - 1j * gb(-h)
    V0t = None if case.is_sbo else -rate.M_bg[None] - 1j * ga(-h) + 1j * gb(h)

    P, Q = total_spins(state)
    A = case.gamma0 * (P + Q)
    Ut, Vt = _conj_all(A, state.t, U0t, V0t)
    if case.gamma0:
        Ut = Ut + 1j * (A @ sample.U - sample.U @ A)
        if Vt is not None:
            Vt = Vt + 1j * (A @ sample.V - sample.V @ A)
    sample.U_t, sample.V_t = Ut, Vt
    return sample


def boundary_limits(state: SpinPoleState, case: CaseKind):
    """Limits of U as x -> -inf and x -> +inf for the real-line cases I and III.

    alpha tends to 0 in case I and to +-pi/(2 delta) in case III, so
    U -> M +- i*c*(P - Q) with c = 0 or pi/(2 delta); there is no
    conjugation on the line since gamma0 = 0.
    """
    if case.periodic:
        raise ValueError("boundary limits are defined for the real-line cases only")
    P, Q = total_spins(state)
    c = 0.0 if case.tag == "I" else np.pi / (2 * case.delta)
    jump = 1j * c * (P - Q)
    return state.M_bg - jump, state.M_bg + jump


def boundary_report(state: SpinPoleState, case: CaseKind, x_min: float, x_max: float) -> dict:
    """Distance of U at the window edges from its limits, with a tail allowance.

    The allowance is ``scale * |U_x(edge)|``, with ``scale`` the kernel's decay
    length (delta/pi in case III, the edge distance in case I), since the
    remainder alpha - lim alpha is that multiple of its own derivative to
    leading order.
    """
    lo, hi = boundary_limits(state, case)
    s = eval_fields(state, case, np.array([x_min, x_max]), with_x=True)
    defect = max(float(np.linalg.norm(s.U[0] - lo, 2)), float(np.linalg.norm(s.U[1] - hi, 2)))
    if case.tag == "III":
        scale = np.array([case.delta / np.pi] * 2)
    else:
        scale = np.abs([x_min, x_max])
    tail = max(float(scale[i] * np.linalg.norm(s.U_x[i], 2)) for i in range(2))
    return {"boundary_defect": defect, "boundary_tail": 2.0 * tail + 1e-12}
