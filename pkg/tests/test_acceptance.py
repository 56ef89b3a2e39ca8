"""Acceptance criteria 1-7.

Each test prints one ``PASS criterion k: ...`` or ``FAIL criterion k: ...``
line (shown even under output capture) and then asserts.  Tolerances and
runtime budgets are pinned in TOL and BUDGET.
"""

import math
import time

import numpy as np

from sncilw.backlund import (
    assemble_constraints,
    backlund_residuals,
    bt_defect,
    eigenpair,
    hermitian_defect,
    one_soliton_data,
    solve_initial_data,
)
from sncilw.cli import verify_scenario
from sncilw.dynamics import IntegratorConfig, evolve, normalization_defect, total_spins
from sncilw.elliptic import CaseKind, Lattice, kappa, wp2, zeta2
from sncilw.scenario import build_initial_data, resolve_scenario
from sncilw.verify import (
    apply_T_quadrature,
    apply_Ttilde_quadrature,
    calibrate_multipliers,
    check_strip_eigenfunction,
    strip_test_functions,
    wavenumbers,
)
from sncilw.waves import periodic_grid

TOL = {
    "identity": 1e-9,
    "degeneration": 1e-10,
    "small_argument_rel": 1e-4,
    "fast_vs_quadrature": 1e-8,
    "strip_eigenfunction": 1e-7,
    "conservation": 1e-8,
    "backlund": 1e-6,
    "pde_residual": 1e-6,
    "detector": 1e-4,
    "speed": 1e-10,
    "affine_track": 1e-10,
}
BUDGET = {1: 5.0, 2: 5.0, 3: 30.0, 4: 60.0, 5: 120.0, 6: 120.0, 7: 10.0}
LATTICES = [(math.pi, 1.0), (1.0, 1.0), (5.0, 0.5)]
M_HERM = np.array([[0.5, 0.3 - 0.2j], [0.3 + 0.2j, -0.4]])


def report(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")


def lattice_distance(lat, z):
    z = np.asarray(z, complex)
    m = np.round(z.real / (2 * lat.ell))
    k = np.round(z.imag / (2 * lat.delta))
    return np.abs(z - 2 * lat.ell * m - 2j * lat.delta * k)


def cell_points(lat, n, rng, margin=0.3):
    """n random points of the centred cell at least margin*min(ell, delta) from the lattice."""
    out = np.zeros(0, complex)
    while out.size < n:
        z = rng.uniform(-lat.ell, lat.ell, 4 * n) + 1j * rng.uniform(-lat.delta, lat.delta, 4 * n)
        out = np.concatenate([out, z[lattice_distance(lat, z) > margin * min(lat.ell, lat.delta)]])
    return out[:n]


def triples(lat, n, rng, margin=0.3):
    """n random triples whose pairwise differences stay away from the lattice."""
    rows = []
    while len(rows) < n:
        p, q, r = rng.uniform(-lat.ell, lat.ell, 3) + 1j * rng.uniform(-lat.delta, lat.delta, 3)
        if min(lattice_distance(lat, [p - q, q - r, p - r])) > margin * min(lat.ell, lat.delta):
            rows.append((p, q, r))
    return (np.array(v) for v in zip(*rows))


def identity_defects(ell, delta, rng):
    lat = Lattice(ell, delta)
    case = CaseKind("IV", ell=ell, delta=delta)
    z = cell_points(lat, 50, rng)
    z2 = lambda u: zeta2(u, lat)  # noqa: E731
    out = {
        "parity": max(np.max(np.abs(z2(-z) + z2(z))), np.max(np.abs(wp2(-z, lat) - wp2(z, lat)))),
        "wp2=zeta2^2-kappa": np.max(np.abs(wp2(z, lat) - z2(z) ** 2 + kappa(z, lat))),
        "zeta2 quasi-periods": max(np.max(np.abs(z2(z + 2j * delta) - z2(z))),
                                   np.max(np.abs(z2(z + 2 * ell) - z2(z) - math.pi / delta))),
        "wp2 periods": max(np.max(np.abs(wp2(z + s, lat) - wp2(z, lat))) for s in (2 * ell, 2j * delta)),
        "alpha*V": np.max(np.abs(case.alpha(z) * case.V(z) + 0.5 * (case.V_prime(z) + case.kappa_prime(z)))),
        "legendre": abs(lat.legendre_defect()),
    }
    p, q, r = triples(lat, 50, rng)
    x, y, w = p - q, q - r, r - p
    lhs = z2(x) * z2(y) + z2(y) * z2(w) + z2(w) * z2(x)
    rhs = -0.5 * (kappa(x, lat) + kappa(y, lat) + kappa(w, lat)) - 3 * lat.eta2 / (2j * delta)
    out["three-point"] = np.max(np.abs(lhs - rhs))
    al, V, kp = case.alpha, case.V, case.kappa_prime
    p, q, r = triples(lat, 50, rng)
    lhs = (al(p - r) - al(q - r)) * V(p - q)
    rhs = -(al(p - q) - al(p - r)) * V(q - r) - 0.5 * (kp(p - q) - kp(q - r))
    out["three-argument"] = np.max(np.abs(lhs - rhs))
    return out


def test_criterion_1_elliptic_identities(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst, where = 0.0, ""
    for ell, delta in LATTICES:
        for name, val in identity_defects(ell, delta, rng).items():
            if val >= worst:
                worst, where = float(val), f"{name} at (ell, delta)=({ell:g}, {delta:g})"
    dt = time.perf_counter() - t0
    ok = worst <= TOL["identity"] and dt < BUDGET[1]
    report(capsys, 1, ok, f"worst identity defect {worst:.2e} [{where}] (tol {TOL['identity']:.0e}); {dt:.1f}s")
    assert worst <= TOL["identity"]
    assert dt < BUDGET[1]


def test_criterion_2_degenerations(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    z = rng.uniform(-1.0, 1.0, 20) + 1j * rng.uniform(-0.45, 0.45, 20)

    iv, iii = CaseKind("IV", ell=10.0, delta=1.0), CaseKind("III", delta=1.0)
    d_iii = float(np.max(np.abs(iv.alpha(z) - iii.alpha(z))))

    # delta/ell = 10, points scaled into the real half-period
    iv2, ii = CaseKind("IV", ell=1.0, delta=10.0), CaseKind("II", ell=1.0)
    d_ii = float(np.max(np.abs(iv2.alpha(z) - ii.alpha(z))))

    period = 2.0
    w = 0.01 * period * np.sqrt(rng.uniform(0, 1, 20)) * np.exp(2j * math.pi * rng.uniform(0, 1, 20))
    rel = 0.0
    for case in (CaseKind("II", ell=1.0), CaseKind("III", delta=1.0)):
        rel = max(rel, float(np.max(np.abs(case.alpha(w) - 1 / w) * np.abs(w))))
    dt = time.perf_counter() - t0

    parts = {"IV->III": d_iii <= TOL["degeneration"], "IV->II": d_ii <= TOL["degeneration"],
             "II/III->I": rel <= TOL["small_argument_rel"]}
    ok = all(parts.values()) and dt < BUDGET[2]
    report(capsys, 2, ok, f"|a_IV-a_III|={d_iii:.2e}, |a_IV-a_II|={d_ii:.2e} (tol {TOL['degeneration']:.0e}); "
                          f"small-|z| rel {rel:.2e} (tol {TOL['small_argument_rel']:.0e}); "
                          f"failed parts {[k for k, v in parts.items() if not v]}; {dt:.1f}s")
    assert all(parts.values()), parts
    assert dt < BUDGET[2]


def test_criterion_3_operators(capsys):
    t0 = time.perf_counter()
    case = CaseKind("IV", ell=math.pi, delta=1.0)
    table = calibrate_multipliers(case, 512)
    exact_const = table.T[0] == 0 and table.Ttilde[0] == -1j

    rng = np.random.default_rng(11)
    n, k = 512, wavenumbers(512, math.pi)
    fast = 0.0
    for _ in range(20):
        coef = np.zeros(n, complex)
        sel = np.abs(np.fft.fftfreq(n, 1 / n)) <= 40
        coef[sel] = (rng.normal(size=sel.sum()) + 1j * rng.normal(size=sel.sum())) * np.exp(-0.05 * np.abs(k[sel]))
        f = np.fft.ifft(coef) * n / 50
        fast = max(fast, float(np.max(np.abs(table.apply("T", f) - apply_T_quadrature(f, case.lattice)))),
                   float(np.max(np.abs(table.apply("Ttilde", f) - apply_Ttilde_quadrature(f, case.lattice)))))

    lat = case.lattice
    strip = 0.0
    for g in strip_test_functions(lat).values():
        strip = max(strip, check_strip_eigenfunction(g, lat, n=256, sign=1))
        strip = max(strip, check_strip_eigenfunction(lambda u: np.conj(g(np.conj(u))), lat, n=256, sign=-1))
    dt = time.perf_counter() - t0
    ok = exact_const and fast <= TOL["fast_vs_quadrature"] and strip <= TOL["strip_eigenfunction"] and dt < BUDGET[3]
    report(capsys, 3, ok, f"T(1)=0, Ttilde(1)=-i exact: {exact_const}; fast vs quadrature {fast:.2e} "
                          f"(tol {TOL['fast_vs_quadrature']:.0e}); strip eigenfunction {strip:.2e} "
                          f"(tol {TOL['strip_eigenfunction']:.0e}); {dt:.1f}s")
    assert exact_const
    assert fast <= TOL["fast_vs_quadrature"]
    assert strip <= TOL["strip_eigenfunction"]
    assert dt < BUDGET[3]


def test_criterion_4_conservation(capsys):
    t0 = time.perf_counter()
    case = CaseKind("IV", ell=math.pi, delta=1.0)
    rng = np.random.default_rng(4)
    a = np.array([-1.2, 1.0]) + rng.uniform(-0.2, 0.2, 2) - 1j * rng.uniform(0.85, 1.15, 2)
    f = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    s = solve_initial_data(assemble_constraints(case, a, a.conj(), f, f.conj()), trace_M=1.0).state
    traj = evolve(s, case, 1.0, IntegratorConfig(dt=1e-3), times=np.linspace(0, 1, 11))
    P0, Q0 = total_spins(s)
    drift_p = max(max(np.linalg.norm(P - P0, 2), np.linalg.norm(Q - Q0, 2))
                  for P, Q in (total_spins(x) for x in traj.states))
    norm = max(normalization_defect(x) for x in traj.states)
    herm = max(hermitian_defect(x) for x in traj.states)
    bres = max(backlund_residuals(x, case).max_norm for x in traj.states)
    monitors_ok = not traj.warnings
    dt = time.perf_counter() - t0
    c = TOL["conservation"]
    ok = max(drift_p, norm, herm) <= c and bres <= TOL["backlund"] and monitors_ok and dt < BUDGET[4]
    report(capsys, 4, ok, f"|P(t)-P(0)|={drift_p:.2e}, |<f|e>-1|={norm:.2e}, hermitian drift {herm:.2e} "
                          f"(tol {c:.0e}); Backlund {bres:.2e} (tol {TOL['backlund']:.0e}); "
                          f"monitors clean: {monitors_ok}; {dt:.1f}s")
    assert max(drift_p, norm, herm) <= c
    assert bres <= TOL["backlund"]
    assert monitors_ok
    assert dt < BUDGET[4]


def test_criterion_5_elliptic_end_to_end(capsys):
    t0 = time.perf_counter()
    sc = resolve_scenario("hermitian-2soliton-caseIV")
    state, _ = build_initial_data(sc)
    header, rows, failures = verify_scenario(sc, state)
    col = header.index("pde_res_max")
    times = [r[0] for r in rows]
    res = max(r[col] for r in rows)

    bad = state.copy()
    bad.e[0, 1] += 1e-2
    _, bad_rows, bad_fail = verify_scenario(sc, bad)
    detect = min(r[col] for r in bad_rows)
    dt = time.perf_counter() - t0
    ok = (res <= TOL["pde_residual"] and not failures and detect >= TOL["detector"] and bool(bad_fail)
          and sc.n == 512 and dt < BUDGET[5])
    report(capsys, 5, ok, f"residual {res:.2e} at t={times} n={sc.n} (tol {TOL['pde_residual']:.0e}); "
                          f"perturbed residual {detect:.2e} (>= {TOL['detector']:.0e}); {dt:.1f}s")
    assert times == [0.0, 0.1, 0.25] and sc.n == 512
    assert res <= TOL["pde_residual"] and not failures
    assert detect >= TOL["detector"] and bad_fail
    assert dt < BUDGET[5]


def test_criterion_6_degenerate_end_to_end(capsys):
    t0 = time.perf_counter()
    names = ["sbo-1soliton-caseI", "sbo-2soliton-caseI", "sbo-1soliton-caseII", "sbo-2soliton-caseII",
             "sncilw-2soliton-caseIII"]
    worst, fails, boundary = {}, {}, (0.0, 0.0)
    for name in names:
        sc = resolve_scenario(name)
        state, _ = build_initial_data(sc)
        assert state.d == 2
        header, rows, failures = verify_scenario(sc, state)
        worst[name] = max(r[header.index("pde_res_max")] for r in rows)
        fails[name] = failures
        if sc.case == "III":
            assert np.linalg.norm(sc.M0) > 0
            i, j = header.index("boundary_defect"), header.index("boundary_tail")
            boundary = max(((r[i], r[j]) for r in rows), key=lambda p: p[0] - p[1])
    dt = time.perf_counter() - t0
    res = max(worst.values())
    b_ok = boundary[0] <= boundary[1]
    ok = res <= TOL["pde_residual"] and not any(fails.values()) and b_ok and dt < BUDGET[6]
    report(capsys, 6, ok, f"worst residual {res:.2e} over {len(names)} scenarios (tol {TOL['pde_residual']:.0e}); "
                          f"Case III boundary defect {boundary[0]:.2e} <= tail {boundary[1]:.2e}: {b_ok}; {dt:.1f}s")
    assert res <= TOL["pde_residual"], worst
    assert not any(fails.values()), fails
    assert b_ok
    assert dt < BUDGET[6]


def test_criterion_7_one_soliton(capsys):
    t0 = time.perf_counter()
    iv = CaseKind("IV", ell=math.pi, delta=1.0)
    e, f = eigenpair(M_HERM, 1)
    m = float(np.real(f @ M_HERM @ e))
    s_iv = one_soliton_data(iv, M_HERM, 0.4 - 1j, 0.4 + 1j, (e, f))
    err_iv = abs(s_iv.adot[0] - 2 * m)

    y = 0.8
    s_i = one_soliton_data(CaseKind("I"), M_HERM, 0.3 - 1j * y, 0.3 + 1j * y, (e, f))
    err_i = abs(s_i.adot[0] - (2 * m + 1 / y))

    track = 0.0
    for case, s in ((iv, s_iv), (CaseKind("I"), s_i)):
        traj = evolve(s, case, 1.0, IntegratorConfig(dt=1e-3), times=np.linspace(0, 1, 11))
        line = s.a[0] + s.adot[0] * traj.times
        track = max(track, float(np.max(np.abs(traj.poles_a()[:, 0] - line))))
        track = max(track, bt_defect(traj.final, case))
    dt = time.perf_counter() - t0
    ok = max(err_iv, err_i) <= TOL["speed"] and track <= TOL["affine_track"] and dt < BUDGET[7]
    report(capsys, 7, ok, f"|v-2m|={err_iv:.2e}, |v-(2m+1/y)|={err_i:.2e} (tol {TOL['speed']:.0e}); "
                          f"affine track deviation {track:.2e} (tol {TOL['affine_track']:.0e}); {dt:.1f}s")
    assert err_iv <= TOL["speed"] and err_i <= TOL["speed"]
    assert track <= TOL["affine_track"]
    assert dt < BUDGET[7]


def test_grid_helper_is_the_shipped_one():
    # the residual grid above is the same one the CLI writes out
    sc = resolve_scenario("hermitian-2soliton-caseIV")
    assert np.array_equal(sc.grid(), periodic_grid(math.pi, 512))
