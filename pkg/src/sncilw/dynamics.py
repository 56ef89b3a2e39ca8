"""Spin Calogero-Moser dynamics with a dynamical background matrix.

Bras are stored as plain d-vectors and paired with kets without conjugation,
``<f|e> = sum_mu f_mu e_mu``.  Rank-one spins are ``P_j = outer(e_j, f_j)``
and ``Q_j = outer(g_j, h_j)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45

from .elliptic import CaseKind
from .errors import CollisionError, StepSizeUnderflow, StripExit

EPS_COLL = 1e-6


class StripWarning(UserWarning):
    """A pole left its admissible half-strip (non-strict mode)."""


def _c1(x):
    return np.atleast_1d(np.asarray(x, dtype=complex))


def _c2(x, d):
    arr = np.asarray(x, dtype=complex)
    if arr.size == 0:
        return np.zeros((0, d), dtype=complex)
    return np.atleast_2d(arr)


@dataclass
class SpinPoleState:
    """Poles, velocities, spins and background at one instant.

    ``e``, ``f`` have shape (N, d); ``g``, ``h`` have shape (M_count, d).
    """

    a: np.ndarray
    adot: np.ndarray
    b: np.ndarray
    bdot: np.ndarray
    e: np.ndarray
    f: np.ndarray
    g: np.ndarray
    h: np.ndarray
    M_bg: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.M_bg = np.atleast_2d(np.asarray(self.M_bg, dtype=complex))
        d = self.M_bg.shape[0]
        if self.M_bg.shape != (d, d):
            raise ValueError(f"M_bg must be square, got shape {self.M_bg.shape}")
        self.a = _c1(self.a) if np.size(self.a) else np.zeros(0, complex)
        self.adot = _c1(self.adot) if np.size(self.adot) else np.zeros(0, complex)
        self.b = _c1(self.b) if np.size(self.b) else np.zeros(0, complex)
        self.bdot = _c1(self.bdot) if np.size(self.bdot) else np.zeros(0, complex)
        self.e, self.f = _c2(self.e, d), _c2(self.f, d)
        self.g, self.h = _c2(self.g, d), _c2(self.h, d)
        n, m = self.a.size, self.b.size
        for name, arr, shape in (
            ("adot", self.adot, (n,)),
            ("bdot", self.bdot, (m,)),
            ("e", self.e, (n, d)),
            ("f", self.f, (n, d)),
            ("g", self.g, (m, d)),
            ("h", self.h, (m, d)),
        ):
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
        self.t = float(self.t)

    @property
    def d(self) -> int:
        return self.M_bg.shape[0]

    @property
    def N(self) -> int:
        return self.a.size

    @property
    def M_count(self) -> int:
        return self.b.size

    def copy(self) -> "SpinPoleState":
        return SpinPoleState(
            self.a.copy(), self.adot.copy(), self.b.copy(), self.bdot.copy(),
            self.e.copy(), self.f.copy(), self.g.copy(), self.h.copy(),
            self.M_bg.copy(), self.t,
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.a, self.adot, self.b, self.bdot,
            self.e.ravel(), self.f.ravel(), self.g.ravel(), self.h.ravel(),
            self.M_bg.ravel(),
        ])

    def with_vector(self, y: np.ndarray, t: float | None = None) -> "SpinPoleState":
        """New state with this state's shape and entries taken from y."""
        n, m, d = self.N, self.M_count, self.d
        sizes = [n, n, m, m, n * d, n * d, m * d, m * d, d * d]
        parts = np.split(np.asarray(y, dtype=complex), np.cumsum(sizes)[:-1])
        return SpinPoleState(
            parts[0].copy(), parts[1].copy(), parts[2].copy(), parts[3].copy(),
            parts[4].reshape(n, d), parts[5].reshape(n, d),
            parts[6].reshape(m, d), parts[7].reshape(m, d),
            parts[8].reshape(d, d), self.t if t is None else t,
        )

    def P_parts(self) -> np.ndarray:
        return np.einsum("jm,jn->jmn", self.e, self.f)

    def Q_parts(self) -> np.ndarray:
        return np.einsum("jm,jn->jmn", self.g, self.h)


def empty_state(M_bg, t: float = 0.0) -> SpinPoleState:
    M_bg = np.atleast_2d(np.asarray(M_bg, dtype=complex))
    z = np.zeros(0, complex)
    zz = np.zeros((0, M_bg.shape[0]), complex)
    return SpinPoleState(z, z, z, z, zz, zz, zz, zz, M_bg, t)


def total_spins(state: SpinPoleState) -> tuple[np.ndarray, np.ndarray]:
    """(P, Q) = (sum_j |e_j><f_j|, sum_j |g_j><h_j|)."""
    return state.e.T @ state.f, state.g.T @ state.h


# --------------------------------------------------------------------------
# pole separation


def _pair_min(case: CaseKind, z) -> float:
    z = np.asarray(z, dtype=complex)
    if z.size == 0:
        return math.inf
    return float(np.min(case.pole_distance(z)))


def _same_group_diffs(x: np.ndarray) -> np.ndarray:
    iu = np.triu_indices(x.size, k=1)
    return (x[:, None] - x[None, :])[iu]


def min_pole_separation(state: SpinPoleState, case: CaseKind) -> float:
    """Smallest kernel-argument distance over a-a, b-b and a-b pairs.

    Distances are taken to the kernel pole set of ``case`` (so modulo 2*ell in
    the periodic cases, and modulo the full lattice in case IV).  Mixed pairs
    use the argument ``a_j - b_k + i*delta`` that enters the constraint.
    """
    dmin = min(
        _pair_min(case, _same_group_diffs(state.a)),
        _pair_min(case, _same_group_diffs(state.b)),
    )
    if state.N and state.M_count:
        ab = state.a[:, None] - state.b[None, :] + 1j * case.shift
        dmin = min(dmin, _pair_min(case, ab.ravel()))
    return dmin


def strip_margin(state: SpinPoleState, case: CaseKind) -> float:
    """Signed distance of the worst pole to its half-strip boundary (>0 inside)."""
    margins = [math.inf]
    ia, ib = state.a.imag, state.b.imag
    if case.is_sbo:
        if ia.size:
            margins.append(float(np.min(-ia)))
        if ib.size:
            margins.append(float(np.min(ib)))
    else:
        dl = case.delta
        if ia.size:
            margins.append(float(np.min(np.minimum(ia + 1.5 * dl, -0.5 * dl - ia))))
        if ib.size:
            margins.append(float(np.min(np.minimum(ib - 0.5 * dl, 1.5 * dl - ib))))
    return min(margins)


# --------------------------------------------------------------------------
# right-hand side


def _group_rhs(x, e, f, case: CaseKind, eps_coll: float):
    """Accelerations, spin derivatives and the background source of one group."""
    n, d = e.shape
    if n < 2:
        z = np.zeros((n, d), complex)
        return np.zeros(n, complex), z, z.copy(), np.zeros((d, d), complex)
    diff = x[:, None] - x[None, :]
    off = ~np.eye(n, dtype=bool)
    sep = case.pole_distance(diff[off])
    if np.min(sep) < eps_coll:
        raise CollisionError(f"pole separation {np.min(sep):.3e} below eps_coll={eps_coll:.1e}")
    V = np.zeros((n, n), complex)
    Vp = np.zeros((n, n), complex)
    Kp = np.zeros((n, n), complex)
    V[off], Vp[off] = case.V(diff[off]), case.V_prime(diff[off])
    Kp[off] = case.kappa_prime(diff[off])
    S = f @ e.T  # S[j, k] = <f_j|e_k>
    acc = -4.0 * np.sum(S * S.T * Vp, axis=1)
    edot = 2j * (S.T * V) @ e
    fdot = -2j * (S * V) @ f
    # sum_{j != k} [P_j, P_k] kappa'(x_j - x_k), written with P_j P_k = S_jk e_j f_k
    src = e.T @ ((Kp - Kp.T) * S) @ f
    return acc, edot, fdot, src


def scm_rhs(state: SpinPoleState, case: CaseKind, eps_coll: float = EPS_COLL) -> SpinPoleState:
    """Time derivative of every state component, returned as a state-shaped object."""
    acc_a, edot, fdot, src_a = _group_rhs(state.a, state.e, state.f, case, eps_coll)
    acc_b, gdot, hdot, src_b = _group_rhs(state.b, state.g, state.h, case, eps_coll)
    Mdot = -0.5 * src_a + 0.5 * src_b
    return SpinPoleState(
        state.adot.copy(), acc_a, state.bdot.copy(), acc_b,
        edot, fdot, gdot, hdot, Mdot, state.t,
    )


# --------------------------------------------------------------------------
# integration


@dataclass(frozen=True)
class IntegratorConfig:
    """``scheme`` is "rk4" (fixed step ``dt``) or "rk45" (adaptive, ``rtol``/``atol``)."""

    scheme: str = "rk4"
    dt: float = 1e-3
    rtol: float = 1e-10
    atol: float = 1e-10
    eps_coll: float = EPS_COLL
    strict: bool = False
    min_step: float = 1e-14

    def __post_init__(self):
        if self.scheme not in ("rk4", "rk45"):
            raise ValueError(f"unknown integrator scheme {self.scheme!r}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def tolerance(self) -> float:
        """Nominal accuracy used by conservation monitors."""
        return self.atol if self.scheme == "rk45" else self.dt**4


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    diagnostics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.states)

    @property
    def final(self) -> SpinPoleState:
        return self.states[-1]

    def poles_a(self) -> np.ndarray:
        return np.array([s.a for s in self.states])

    def poles_b(self) -> np.ndarray:
        return np.array([s.b for s in self.states])


def normalization_defect(state: SpinPoleState) -> float:
    """max_j |<f_j|e_j> - 1| and |<h_j|g_j> - 1|."""
    vals = [0.0]
    if state.N:
        vals.append(float(np.max(np.abs(np.sum(state.f * state.e, axis=1) - 1))))
    if state.M_count:
        vals.append(float(np.max(np.abs(np.sum(state.h * state.g, axis=1) - 1))))
    return max(vals)


def sample_diagnostics(state: SpinPoleState, ref: SpinPoleState, case: CaseKind) -> dict:
    P0, Q0 = total_spins(ref)
    P, Q = total_spins(state)
    nrm = lambda A: float(np.linalg.norm(A, 2)) if A.size else 0.0  # noqa: E731
    return {
        "min_sep": min_pole_separation(state, case),
        "strip_margin": strip_margin(state, case),
        "drift_P": nrm(P - P0),
        "drift_Q": nrm(Q - Q0),
        "drift_norm_fe_max": normalization_defect(state),
    }


def _rk4_step(fun, t, y, h):
    k1 = fun(t, y)
    k2 = fun(t + h / 2, y + h / 2 * k1)
    k3 = fun(t + h / 2, y + h / 2 * k2)
    k4 = fun(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def advance(state: SpinPoleState, case: CaseKind, span: float, steps: int = 1,
            eps_coll: float = EPS_COLL) -> SpinPoleState:
    """RK4 over a signed time ``span`` in ``steps`` equal steps, without monitors."""

    def fun(t, y):
        return scm_rhs(state.with_vector(y, t), case, eps_coll).to_vector()

    y, h = state.to_vector(), span / steps
    for i in range(steps):
        y = _rk4_step(fun, state.t + i * h, y, h)
    return state.with_vector(y, state.t + span)


def evolve(
    state: SpinPoleState,
    case: CaseKind,
    t_end: float,
    config: IntegratorConfig = IntegratorConfig(),
    times=None,
) -> Trajectory:
    """Integrate from ``state.t`` to ``t_end`` and sample at ``times``.

    ``times`` defaults to 101 equispaced points.  Strip exits warn (or raise
    :class:`StripExit` when ``config.strict``); collisions always raise.
    """
    t0 = state.t
    if not t_end > t0:
        raise ValueError(f"t_end={t_end} must exceed the initial time {t0}")
    if times is None:
        times = np.linspace(t0, t_end, 101)
    times = np.asarray(times, dtype=float)
    if times[0] != t0:
        times = np.concatenate([[t0], times[times > t0]])
    if np.any(np.diff(times) <= 0) or times[-1] > t_end + 1e-14:
        raise ValueError("sample times must be strictly increasing within [t0, t_end]")

    def fun(t, y):
        return scm_rhs(state.with_vector(y, t), case, config.eps_coll).to_vector()

    traj = Trajectory(times=times, states=[], diagnostics={})
    strip_reported = False

    def record(t, y):
        nonlocal strip_reported
        s = state.with_vector(y, t)
        diag = sample_diagnostics(s, state, case)
        if diag["min_sep"] < config.eps_coll:
            raise CollisionError(f"poles collide at t={t:.6g} (separation {diag['min_sep']:.3e})")
        if diag["strip_margin"] <= 0:
            msg = f"pole left its strip at t={t:.6g} (margin {diag['strip_margin']:.3e})"
            if config.strict:
                raise StripExit(msg)
            if not strip_reported:
                warnings.warn(msg, StripWarning, stacklevel=3)
                traj.warnings.append(msg)
                strip_reported = True
        traj.states.append(s)
        for k, v in diag.items():
            traj.diagnostics.setdefault(k, []).append(v)

    y = state.to_vector()
    record(t0, y)
    if config.scheme == "rk4":
        for ta, tb in zip(times[:-1], times[1:]):
            nsteps = max(1, int(math.ceil((tb - ta) / config.dt - 1e-9)))
            h = (tb - ta) / nsteps
            for i in range(nsteps):
                y = _rk4_step(fun, ta + i * h, y, h)
            record(tb, y)
    else:
        solver = RK45(fun, t0, y, times[-1], rtol=config.rtol, atol=config.atol,
                      first_step=min(config.dt, times[-1] - t0))
        k = 1
        while k < times.size:
            msg = solver.step()
            if solver.status == "failed" or (solver.step_size is not None and solver.step_size < config.min_step):
                raise StepSizeUnderflow(f"adaptive step failed at t={solver.t:.6g}: {msg}")
            dense = solver.dense_output()
            while k < times.size and times[k] <= solver.t:
                record(times[k], dense(times[k]))
                k += 1
    traj.diagnostics = {k: np.asarray(v) for k, v in traj.diagnostics.items()}
    return traj
