import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sncilw.backlund import (
    assemble_constraints,
    backlund_residuals,
    balance_defect,
    bt_defect,
    eigenpair,
    hermitian_defect,
    hermitian_reduce,
    is_hermitian_state,
    one_soliton_data,
    solve_initial_data,
)
from sncilw.dynamics import IntegratorConfig, SpinPoleState, evolve, normalization_defect, total_spins
from sncilw.elliptic import CaseKind
from sncilw.errors import CollisionError, InconsistentConstraints, NotAnEigenpair, NotHermitian

IV = CaseKind("IV", ell=math.pi, delta=1.0)
M_HERM = np.array([[0.5, 0.3 - 0.2j], [0.3 + 0.2j, -0.4]])


def cplx(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def hermitian_problem(case, seed=1, a=(-1 - 1j, 1 - 1j), M0=None):
    rng = np.random.default_rng(seed)
    a = np.array(a)
    f = cplx(rng, a.size, 2)
    return assemble_constraints(case, a, a.conj(), f, f.conj(), M0=M0)


def test_matrix_is_hermitian_under_reduction():
    K = hermitian_problem(IV).K
    assert np.max(np.abs(K - K.conj().T)) < 1e-14 * np.max(np.abs(K))


def test_hermitian_two_soliton_solve():
    sol = solve_initial_data(hermitian_problem(IV))
    s = sol.state
    assert sol.residual <= 1e-8
    assert bt_defect(s, IV) <= 1e-8
    assert normalization_defect(s) <= 1e-8
    assert balance_defect(s) <= 1e-8
    assert is_hermitian_state(s)
    assert backlund_residuals(s, IV).max_norm <= 1e-8


def test_trace_gauge_shifts_background_and_velocities():
    prob = hermitian_problem(IV)
    s0 = solve_initial_data(prob, trace_M=0.0).state
    s1 = solve_initial_data(prob, trace_M=1.0).state
    assert np.allclose(s1.M_bg - s0.M_bg, 0.5 * np.eye(2), atol=1e-10)
    assert np.allclose(s1.adot - s0.adot, 1.0, atol=1e-10)
    assert np.allclose(s1.e, s0.e, atol=1e-10)


def test_single_pair_solve_matches_closed_form():
    rng = np.random.default_rng(2)
    a, f = np.array([0.3 - 0.9j]), cplx(rng, 1, 2)
    s = solve_initial_data(assemble_constraints(IV, a, a.conj(), f, f.conj()), trace_M=0.4).state
    e, M = s.e[0], s.M_bg
    lam = f[0] @ M @ e
    assert np.linalg.norm(M @ e - lam * e) < 1e-9
    assert np.linalg.norm(f[0] @ M - lam * f[0]) < 1e-9
    v = 2 * lam - 2j * IV.alpha(a[0] - a[0].conj() + 1j)
    assert abs(s.adot[0] - v) < 1e-9


@pytest.mark.parametrize("case", [CaseKind("I"), CaseKind("II", ell=math.pi), CaseKind("III", delta=1.0)],
                         ids=["I", "II", "III"])
def test_fixed_background_solve(case):
    sol = solve_initial_data(hermitian_problem(case, seed=3, a=(-2 - 0.8j, 1.5 - 1.1j), M0=M_HERM))
    assert sol.residual <= 1e-8
    assert np.array_equal(sol.state.M_bg, M_HERM)
    assert backlund_residuals(sol.state, case).max_norm <= 1e-8


def test_unequal_counts_are_inconsistent():
    rng = np.random.default_rng(4)
    case = CaseKind("III", delta=1.0)
    prob = assemble_constraints(case, [-1 - 1j, 1 - 1j], [0.2 + 1j], cplx(rng, 2, 2), cplx(rng, 1, 2), M0=M_HERM)
    with pytest.raises(InconsistentConstraints):
        solve_initial_data(prob)


def test_assembly_errors():
    rng = np.random.default_rng(5)
    with pytest.raises(ValueError):
        assemble_constraints(IV, [-1j, 1 - 1j], [1j], cplx(rng, 2, 2), cplx(rng, 1, 2))
    with pytest.raises(ValueError):
        assemble_constraints(CaseKind("I"), [-1j], [1j], cplx(rng, 1, 2), cplx(rng, 1, 2))
    with pytest.raises(CollisionError):
        assemble_constraints(IV, [-1j, -1j + 1e-9], [1j, 1j + 1], cplx(rng, 2, 2), cplx(rng, 2, 2))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(-2.5, 2.5), st.floats(0.6, 1.4))
def test_any_returned_solution_is_admissible(seed, x, y):
    a = (-0.5 - 1j, x - 1j * y)
    if abs(a[1] - a[0]) < 0.3:
        return
    try:
        sol = solve_initial_data(hermitian_problem(IV, seed=seed, a=a))
    except InconsistentConstraints:
        return
    assert sol.residual <= 1e-8
    assert balance_defect(sol.state) <= 1e-8


# --------------------------------------------------------------------------
# one soliton


def test_one_soliton_mid_strip_elliptic():
    m = 0.7
    s = one_soliton_data(IV, [[m]], 0.4 - 1j, 0.4 + 1j, ([1.0], [1.0]))
    assert abs(s.adot[0] - 2 * m) <= 1e-10
    assert s.adot[0] == s.bdot[0]


def test_one_soliton_rational():
    m, y = 0.3, 0.8
    s = one_soliton_data(CaseKind("I"), [[m]], 1.0 - 1j * y, 1.0 + 1j * y, ([1.0], [1.0]))
    assert abs(s.adot[0] - (2 * m + 1 / y)) <= 1e-10


@pytest.mark.parametrize("case", [CaseKind("I"), CaseKind("II", ell=2.0), CaseKind("III", delta=1.0), IV],
                         ids=["I", "II", "III", "IV"])
def test_one_soliton_hermitian_speed_is_real(case):
    e, f = eigenpair(M_HERM, 0)
    assert np.allclose(f, e.conj())
    s = one_soliton_data(case, M_HERM, 0.2 - 0.8j, 0.2 + 0.8j, (e, f))
    assert abs(s.adot[0].imag) < 1e-12
    assert backlund_residuals(s, case).max_norm <= 1e-12
    assert bt_defect(s, case) <= 1e-12


def test_one_soliton_non_hermitian_pair():
    rng = np.random.default_rng(6)
    M0 = cplx(rng, 3, 3)
    e, f = eigenpair(M0, 2)
    s = one_soliton_data(IV, M0, 0.1 - 1.1j, -0.2 + 0.7j, (e, 3 * f))
    assert abs(s.f[0] @ s.e[0] - 1) < 1e-12
    assert backlund_residuals(s, IV).max_norm <= 1e-10


def test_not_an_eigenpair():
    with pytest.raises(NotAnEigenpair):
        one_soliton_data(IV, M_HERM, -1j, 1j, ([1.0, 0.0], [1.0, 0.0]))
    with pytest.raises(NotAnEigenpair):
        one_soliton_data(IV, M_HERM, -1j, 1j, ([1.0, 0.0], [0.0, 1.0]))


# --------------------------------------------------------------------------
# residual monitors and reduction


def test_perturbation_is_detected():
    s = solve_initial_data(hermitian_problem(IV)).state
    s.e[0, 1] += 1e-3
    r = backlund_residuals(s, IV).max_norm
    assert 1e-5 <= r <= 1e-1


def test_residuals_persist_along_trajectory():
    s = solve_initial_data(hermitian_problem(IV), trace_M=1.0).state
    traj = evolve(s, IV, 0.3, IntegratorConfig(dt=1e-3), times=np.linspace(0, 0.3, 4))
    for st_ in traj.states:
        br = backlund_residuals(st_, IV)
        assert br.max_norm <= 1e-6
        assert br.velocity_mismatch <= 1e-7
        assert hermitian_defect(st_) <= 1e-8


def test_hermitian_reduce_scalar_example():
    s = hermitian_reduce([-1j], [[1.0]], [[1.0]], [[0.5]])
    assert s.b[0] == 1j
    assert s.g[0, 0] == 1 and s.h[0, 0] == 1
    assert is_hermitian_state(s)


def test_hermitian_reduce_gives_conjugate_spins():
    rng = np.random.default_rng(7)
    s = hermitian_reduce([-1 - 1j, 1 - 0.9j], cplx(rng, 2, 3), cplx(rng, 2, 3), np.eye(3))
    P, Q = total_spins(s)
    assert np.allclose(Q, P.conj().T)
    with pytest.raises(NotHermitian):
        hermitian_reduce([-1j], [[1.0]], [[1.0]], [[1j]])


def test_hermitian_defect_for_unequal_counts():
    s = one_soliton_data(CaseKind("III", delta=1.0), M_HERM, -1j, 1j, eigenpair(M_HERM))
    assert hermitian_defect(s) < 1e-15
    lone = SpinPoleState(s.a, s.adot, [], [], s.e, s.f, [], [], M_HERM)
    assert hermitian_defect(lone) == math.inf
