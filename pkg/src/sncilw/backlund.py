"""Admissible initial data from the Backlund constraints, and residual monitors.

The constraint is linear in the unknowns ``(h, e, vec M)`` once the poles
``a, b`` and the spins ``f, g`` are fixed, with a right-hand side linear in the
velocities ``v = adot(0)``, ``w = bdot(0)``.  Index conventions: pole-spin
pairs ``(j, mu)`` map to ``j*d + mu``; ``vec M`` is column-major, so the
column label ``(nu, sigma)`` at position ``nu*d + sigma`` holds ``M[sigma, nu]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import SpinPoleState, min_pole_separation, total_spins, EPS_COLL
from .elliptic import CaseKind
from .errors import CollisionError, InconsistentConstraints, NotAnEigenpair, NotHermitian

SOLVE_TOL = 1e-8


def _kernel_matrix(case: CaseKind, x, y, shift: complex = 0.0, skip_diag: bool = False):
    """alpha(x_j - y_k + shift) as a matrix; zero on the diagonal if skip_diag."""
    z = x[:, None] - y[None, :] + shift
    out = np.zeros(z.shape, complex)
    mask = np.ones(z.shape, bool)
    if skip_diag:
        np.fill_diagonal(mask, False)
    if mask.any():
        out[mask] = case.alpha(z[mask])
    return out


@dataclass
class ConstraintProblem:
    """Block system ``K x = R0 + G p`` with ``p = (v, w)``.

    In case IV ``x = (h, e, vec M)`` and ``K`` is the full square block matrix.
    In cases I-III the background ``M0`` is given, the balance rows are
    dropped, and ``x = (h, e)``.
    """

    case: CaseKind
    a: np.ndarray
    b: np.ndarray
    f: np.ndarray
    g: np.ndarray
    blocks: dict
    M0: np.ndarray | None = None
    K: np.ndarray = field(init=False, repr=False)
    G: np.ndarray = field(init=False, repr=False)
    R0: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        bl = self.blocks
        n, m, d = self.N, self.M_count, self.d
        top = [bl["A1"], bl["A2"]]
        mid = [bl["B1"], bl["B2"]]
        # G columns: v_j multiplies f_j in the a rows, w_k multiplies -g_k in the b rows
        G = np.zeros((n * d + m * d, n + m), complex)
        for j in range(n):
            G[j * d:(j + 1) * d, j] = self.f[j]
        for k in range(m):
            G[n * d + k * d:n * d + (k + 1) * d, n + k] = -self.g[k]
        if self.full:
            self.K = np.block([top + [bl["A3"]], mid + [bl["B3"]], [bl["C1"], bl["C2"], np.zeros((d * d, d * d))]])
            self.G = np.vstack([G, np.zeros((d * d, n + m))])
            self.R0 = np.zeros(self.K.shape[0], complex)
        else:
            self.K = np.block([top, mid])
            self.G = G
            vecM = self.M0.reshape(-1, order="F")
            self.R0 = -np.concatenate([bl["A3"] @ vecM, bl["B3"] @ vecM])

    @property
    def N(self) -> int:
        return self.a.size

    @property
    def M_count(self) -> int:
        return self.b.size

    @property
    def d(self) -> int:
        return self.f.shape[1] if self.f.size else self.g.shape[1]

    @property
    def full(self) -> bool:
        """True when vec M is an unknown (case IV)."""
        return self.case.tag == "IV"

    def rhs(self, v, w) -> np.ndarray:
        return self.R0 + self.G @ np.concatenate([np.atleast_1d(v), np.atleast_1d(w)]).astype(complex)

    def split(self, x):
        """(h, e, M) from a solution vector."""
        n, m, d = self.N, self.M_count, self.d
        h = x[: m * d].reshape(m, d)
        e = x[m * d: m * d + n * d].reshape(n, d)
        M = x[m * d + n * d:].reshape(d, d, order="F") if self.full else self.M0.copy()
        return h, e, M


def assemble_constraints(case: CaseKind, a, b, f, g, M0=None, eps_coll: float = EPS_COLL) -> ConstraintProblem:
    """Build the constraint blocks for given poles and spins.

    ``M0`` is required in cases I-III (it is a fixed datum there) and ignored
    in case IV, where the background is solved for.
    """
    a = np.atleast_1d(np.asarray(a, complex))
    b = np.atleast_1d(np.asarray(b, complex))
    f = np.atleast_2d(np.asarray(f, complex))
    g = np.atleast_2d(np.asarray(g, complex))
    n, m = a.size, b.size
    d = f.shape[1] if n else g.shape[1]
    if f.shape != (n, d) or g.shape != (m, d):
        raise ValueError(f"spin shapes {f.shape}, {g.shape} do not match N={n}, M={m}, d={d}")
    if case.tag == "IV" and n != m:
        raise ValueError(f"case IV needs N == M_count, got {n} and {m}")
    if case.tag != "IV":
        if M0 is None:
            raise ValueError(f"case {case.tag} needs the background M0")
        M0 = np.atleast_2d(np.asarray(M0, complex))
    probe = SpinPoleState(a, np.zeros(n), b, np.zeros(m), np.zeros((n, d)), f, g, np.zeros((m, d)),
                          np.zeros((d, d)))
    sep = min_pole_separation(probe, case)
    if sep < eps_coll:
        raise CollisionError(f"pole separation {sep:.3e} below eps_coll={eps_coll:.1e}")

    sh = 1j * case.shift
    I = np.eye(d)
    Sfg = f @ g.T  # <f_j|g_k>
    al_ab = _kernel_matrix(case, a, b, sh)
    al_ba = _kernel_matrix(case, b, a, sh)
    al_aa = _kernel_matrix(case, a, a, skip_diag=True)
    al_bb = _kernel_matrix(case, b, b, skip_diag=True)

    A1 = np.kron(-2j * Sfg * al_ab, I)
    A2 = (2j * np.einsum("jk,km,jn->jmkn", al_aa, f, f)).reshape(n * d, n * d)
    A3 = (2 * np.einsum("js,mn->jmns", f, I)).reshape(n * d, d * d)
    B1 = (2j * np.einsum("jk,jn,km->jmkn", al_bb, g, g)).reshape(m * d, m * d)
    B2 = np.kron(-2j * Sfg.T * al_ba, I)
    B3 = (-2 * np.einsum("jn,ms->jmns", g, I)).reshape(m * d, d * d)
    C1 = (2 * np.einsum("jn,ms->mnjs", g, I)).reshape(d * d, m * d)
    C2 = (-2 * np.einsum("jm,ns->mnjs", f, I)).reshape(d * d, n * d)
    blocks = dict(A1=A1, A2=A2, A3=A3, B1=B1, B2=B2, B3=B3, C1=C1, C2=C2)
    return ConstraintProblem(case, a, b, f, g, blocks, M0=M0)


# --------------------------------------------------------------------------
# direct substitution checks


def bt_defect(state: SpinPoleState, case: CaseKind) -> float:
    """Largest violation of the first-order constraint at the state's velocities."""
    a, b, e, f, g, h, M = state.a, state.b, state.e, state.f, state.g, state.h, state.M_bg
    sh = 1j * case.shift
    worst = 0.0
    for j in range(state.N):
        rhs = 2 * f[j] @ M
        for k in range(state.N):
            if k != j:
                rhs = rhs + 2j * (f[j] @ e[k]) * f[k] * case.alpha(a[j] - a[k])
        for k in range(state.M_count):
            rhs = rhs - 2j * (f[j] @ g[k]) * h[k] * case.alpha(a[j] - b[k] + sh)
        worst = max(worst, float(np.linalg.norm(state.adot[j] * f[j] - rhs)))
    for j in range(state.M_count):
        rhs = 2 * M @ g[j]
        for k in range(state.M_count):
            if k != j:
                rhs = rhs - 2j * g[k] * (h[k] @ g[j]) * case.alpha(b[j] - b[k])
        for k in range(state.N):
            rhs = rhs + 2j * e[k] * (f[k] @ g[j]) * case.alpha(b[j] - a[k] + sh)
        worst = max(worst, float(np.linalg.norm(state.bdot[j] * g[j] - rhs)))
    return worst


def balance_defect(state: SpinPoleState) -> float:
    P, Q = total_spins(state)
    return float(np.linalg.norm(P - Q, 2))


def admissibility_report(state: SpinPoleState, case: CaseKind) -> dict:
    """Constraint violations of a candidate initial state, by name."""
    from .dynamics import normalization_defect

    rep = {"bt": bt_defect(state, case), "normalization": normalization_defect(state)}
    if case.tag == "IV":
        rep["balance"] = balance_defect(state)
    return rep


# --------------------------------------------------------------------------
# solving


@dataclass
class InitialData:
    state: SpinPoleState
    residual: float
    report: dict
    rank: int
    nullity: int
    velocity_rank_deficiency: int


def _real_split(A: np.ndarray, real_cols: np.ndarray) -> np.ndarray:
    """Real matrix acting on stacked (Re z, Im z[complex cols]) for A z."""
    re_part = np.hstack([A.real, -A.imag[:, ~real_cols]])
    im_part = np.hstack([A.imag, A.real[:, ~real_cols]])
    return np.vstack([re_part, im_part])


def solve_initial_data(
    problem: ConstraintProblem,
    real_velocities: bool = False,
    trace_M: complex = 0.0,
    tol: float = SOLVE_TOL,
) -> InitialData:
    """Complete ``(a, b, f, g)`` to admissible data ``(h, e, M, v, w)``.

    The solution of ``K x = R(p)`` is written as ``x = K^+ R(p) + W0 c`` with
    ``W0`` spanning the right nullspace.  The velocities ``p`` and
    coefficients ``c`` then solve, in the least-squares sense, the
    consistency conditions ``U0^H R(p) = 0`` together with the normalizations
    ``<f_j|e_j> = 1`` and ``<h_j|g_j> = 1``.  In case IV the shift
    ``M -> M + c*I, p -> p + 2c`` leaves every condition invariant, so the
    trace of ``M`` is pinned to ``trace_M``.
    """
    K, G, R0 = problem.K, problem.G, problem.R0
    n, m, d = problem.N, problem.M_count, problem.d
    U, s, Wh = np.linalg.svd(K)
    thr = (s[0] if s.size else 0.0) * max(K.shape) * np.finfo(float).eps * 1e2
    r = int(np.sum(s > thr))
    Kp = (Wh[:r].conj().T / s[:r]) @ U[:, :r].conj().T
    U0 = U[:, r:]
    W0 = Wh[r:].conj().T
    nul = W0.shape[1]

    # x = X0 + Xp p + W0 c
    X0, Xp = Kp @ R0, Kp @ G
    # linear functionals on x for the normalization rows
    L = np.zeros((n + m, K.shape[1]), complex)
    for k in range(m):
        L[k, k * d:(k + 1) * d] = problem.g[k]
    for j in range(n):
        L[m + j, m * d + j * d: m * d + (j + 1) * d] = problem.f[j]
    rows = [np.hstack([U0.conj().T @ G, np.zeros((U0.shape[1], nul))]),
            np.hstack([L @ Xp, L @ W0])]
    rhs = [-U0.conj().T @ R0, np.ones(n + m) - L @ X0]
    if problem.full:
        T = np.zeros((1, K.shape[1]), complex)
        T[0, (m + n) * d + np.arange(d) * (d + 1)] = 1.0
        rows.append(np.hstack([T @ Xp, T @ W0]))
        rhs.append(np.array([trace_M - (T @ X0)[0]]))
    A = np.vstack(rows)
    y = np.concatenate(rhs)

    real_cols = np.zeros(A.shape[1], bool)
    if real_velocities:
        real_cols[: n + m] = True
    Ar = _real_split(A, real_cols)
    yr = np.concatenate([y.real, y.imag])
    sol, _, rank_r, _ = np.linalg.lstsq(Ar, yr, rcond=None)
    z = sol[: A.shape[1]].astype(complex)
    z[~real_cols] += 1j * sol[A.shape[1]:]
    deficiency = Ar.shape[1] - int(rank_r)

    p, c = z[: n + m], z[n + m:]
    x = X0 + Xp @ p + W0 @ c
    h, e, M = problem.split(x)
    state = SpinPoleState(problem.a.copy(), p[:n], problem.b.copy(), p[n:], e, problem.f.copy(),
                          problem.g.copy(), h, M, 0.0)
    report = admissibility_report(state, problem.case)
    report["linear"] = float(np.linalg.norm(K @ x - problem.rhs(p[:n], p[n:])))
    residual = max(report.values())
    if not residual <= tol:
        raise InconsistentConstraints(
            f"constraint residual {residual:.3e} exceeds {tol:.1e} "
            + ", ".join(f"{k}={v:.2e}" for k, v in report.items())
        )
    return InitialData(state, residual, report, r, nul, deficiency)


# --------------------------------------------------------------------------
# one soliton


def eigenpair(M0, index: int = 0):
    """(right, left) eigenvectors of M0 for eigenvalue ``index``, with <f|e> = 1.

    Hermitian matrices use ``eigh`` and return ``f = conj(e)``.
    """
    M0 = np.atleast_2d(np.asarray(M0, complex))
    if np.allclose(M0, M0.conj().T, atol=1e-14, rtol=0):
        _, vec = np.linalg.eigh(M0)
        e = vec[:, index]
        return e, e.conj()
    _, R = np.linalg.eig(M0)
    Linv = np.linalg.inv(R)
    return R[:, index], Linv[index]


def one_soliton_data(case: CaseKind, M0, a10, b10, eigpair, tol: float = 1e-10) -> SpinPoleState:
    """Closed-form single pole pair with ``g = e``, ``h = f``.

    ``eigpair`` is ``(e, f)``: a right and left eigenvector of ``M0`` for a
    common eigenvalue.  ``f`` is rescaled so that ``<f|e> = 1``.
    """
    M0 = np.atleast_2d(np.asarray(M0, complex))
    e, f = (np.asarray(v, complex).ravel() for v in eigpair)
    fe = f @ e
    if abs(fe) < tol:
        raise NotAnEigenpair("<f|e> vanishes; cannot normalize")
    f = f / fe
    lam = f @ M0 @ e
    scale = max(1.0, float(np.linalg.norm(M0, 2)))
    res = max(np.linalg.norm(M0 @ e - lam * e) / np.linalg.norm(e),
              np.linalg.norm(f @ M0 - lam * f) / np.linalg.norm(f))
    if res > tol * scale:
        raise NotAnEigenpair(f"eigenpair residual {res:.3e} exceeds {tol * scale:.1e}")
    v = 2 * lam - 2j * case.alpha(complex(a10) - complex(b10) + 1j * case.shift)
    return SpinPoleState([a10], [v], [b10], [v], e[None, :], f[None, :], e[None, :].copy(),
                         f[None, :].copy(), M0.copy(), 0.0)


# --------------------------------------------------------------------------
# residual monitors


@dataclass
class BacklundResiduals:
    F: np.ndarray
    E: np.ndarray
    velocity_a: np.ndarray
    velocity_b: np.ndarray
    velocity_mismatch: float

    @property
    def F_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.F, axis=1))) if self.F.size else 0.0

    @property
    def E_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.E, axis=1))) if self.E.size else 0.0

    @property
    def max_norm(self) -> float:
        return max(self.F_norm, self.E_norm)


def backlund_residuals(state: SpinPoleState, case: CaseKind, eps_coll: float = EPS_COLL) -> BacklundResiduals:
    """Consistency covectors ``<F_j|`` (a group) and vectors ``|E_j>`` (b group).

    Works on the stacked poles ``a - i*delta/2`` (sign +1) and ``b + i*delta/2``
    (sign -1), so the a-b coupling enters as ``alpha(a_j - b_k - i*delta)``.
    """
    n, m, d = state.N, state.M_count, state.d
    half = 0.5j * case.shift
    x = np.concatenate([state.a - half, state.b + half])
    r = np.concatenate([np.ones(n), -np.ones(m)])
    Pk = np.concatenate([state.P_parts(), state.Q_parts()]) if n + m else np.zeros((0, d, d))
    sep = min_pole_separation(state, case)
    if sep < eps_coll:
        raise CollisionError(f"pole separation {sep:.3e} below eps_coll={eps_coll:.1e}")
    al = _kernel_matrix(case, x, x, skip_diag=True)
    B = state.M_bg[None] + 1j * np.einsum("jk,k,kmn->jmn", al, r, Pk)
    F = np.zeros((n, d), complex)
    E = np.zeros((m, d), complex)
    va = np.zeros(n, complex)
    vb = np.zeros(m, complex)
    one = np.eye(d)
    for j in range(n):
        fB = state.f[j] @ B[j]
        F[j] = fB @ (one - Pk[j])
        va[j] = 2 * fB @ state.e[j]
    for k in range(m):
        Bg = B[n + k] @ state.g[k]
        E[k] = (one - Pk[n + k]) @ Bg
        vb[k] = 2 * state.h[k] @ Bg
    mism = np.concatenate([np.abs(va - state.adot), np.abs(vb - state.bdot)])
    return BacklundResiduals(F, E, va, vb, float(mism.max()) if mism.size else 0.0)


# --------------------------------------------------------------------------
# hermitian reduction


def hermitian_reduce(a, e, f, M0, adot=None) -> SpinPoleState:
    """State with ``b = conj(a)``, ``h = conj(e)``, ``g = conj(f)``, ``bdot = conj(adot)``."""
    M0 = np.atleast_2d(np.asarray(M0, complex))
    if not np.allclose(M0, M0.conj().T, atol=1e-12, rtol=0):
        raise NotHermitian(f"background is not Hermitian (defect {np.linalg.norm(M0 - M0.conj().T):.2e})")
    a = np.atleast_1d(np.asarray(a, complex))
    e = np.atleast_2d(np.asarray(e, complex))
    f = np.atleast_2d(np.asarray(f, complex))
    adot = np.zeros(a.size, complex) if adot is None else np.atleast_1d(np.asarray(adot, complex))
    return SpinPoleState(a, adot, a.conj(), adot.conj(), e, f, f.conj(), e.conj(), M0, 0.0)


def hermitian_defect(state: SpinPoleState) -> float:
    """Largest deviation from the Hermitian reduction; inf if N != M_count."""
    if state.N != state.M_count:
        return float("inf")
    parts = [float(np.linalg.norm(state.M_bg - state.M_bg.conj().T, 2))]
    if state.N:
        parts += [
            float(np.max(np.abs(state.b - state.a.conj()))),
            float(np.max(np.abs(state.bdot - state.adot.conj()))),
            float(np.max(np.abs(state.h - state.e.conj()))),
            float(np.max(np.abs(state.g - state.f.conj()))),
        ]
    return max(parts)


def is_hermitian_state(state: SpinPoleState, tol: float = 1e-8) -> bool:
    return hermitian_defect(state) <= tol
