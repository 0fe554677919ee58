"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` to see the lines inline;
they are also repeated in the terminal summary of any pytest run.
"""

import math
import time

import numpy as np
import pytest

from conftest import cantor_spec
from selfaffine.affine import log_phi_from_integer_levels, product_levels
from selfaffine.closed_forms import equal_diagonal_spectrum, rosc_carpet_tau, slope_jump
from selfaffine.covering import AxisRectangle, partition_and_select, select_translates
from selfaffine.empirical import (chaos_game, check_measure_inequalities, empirical_tau,
                                  grid_moments, random_translations, rosc_translations)
from selfaffine.lyapunov import lyapunov_dimension, lyapunov_exponents, make_rng
from selfaffine.pressure import equilibrium_weights, solve_D, solve_root, solve_tau, spectrum_table
from selfaffine.spectra import concavity_audit, d_prime, formalism_clauses
from selfaffine.words import IFSSpec

RESULTS = {}
L23 = math.log(2) / math.log(3)


def report(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def ordered_diagonal_specs(count=20, seed=2024):
    """Random diagonal specs (d <= 3, m <= 4) whose entries share one decreasing order."""
    rng = make_rng(seed)
    specs = []
    while len(specs) < count:
        d = int(rng.integers(1, 4))
        m = int(rng.integers(2, 5))
        mats = [np.diag(np.sort(rng.uniform(0.05, 0.45, d))[::-1]) for _ in range(m)]
        p = rng.dirichlet(np.ones(m))
        p[-1] = 1.0 - p[:-1].sum()
        specs.append(IFSSpec(mats, p))
    return specs


SPECS = ordered_diagonal_specs()
DERIV_Q = [0.3, 0.6, 1.5, 2.0, 2.6]


def off_knot(spec, q, gap=0.05):
    s = solve_root(spec, q).sigma
    return all(abs(s - k) >= gap for k in range(1, spec.d + 1))


def test_criterion_01_similitude_closed_form():
    spec = cantor_spec()
    qs = np.linspace(0.1, 3.0, 50)
    assert not np.any(np.isclose(qs, 1.0))
    t0 = time.perf_counter()
    D = np.array([solve_D(spec, q) for q in qs])
    dt = time.perf_counter() - t0
    err = float(np.max(np.abs(D - (qs - 1) * L23)))
    report(1, err <= 1e-9 and dt < 1.0, f"max |D - (q-1)log2/log3| = {err:.2e} over 50 points, {dt:.3f} s")


def test_criterion_02_equal_diagonal_and_jump():
    t, p = (0.4, 0.2), (0.5, 0.5)
    spec = IFSSpec([np.diag(t)] * 2, list(p))
    qs = np.linspace(0.1, 3.0, 60)
    qs = qs[np.abs(qs - 1) > 1e-9]
    err = max(abs(solve_tau(spec, q) - equal_diagonal_spectrum(t, p, q).tau) for q in qs)

    t, p = (0.6, 0.01), (0.9, 0.1)
    spec = IFSSpec([np.diag(t)] * 2, list(p))
    grid = np.linspace(0.05, 0.99, 95)
    audit = concavity_audit(spectrum_table(spec, grid))
    boundary = [j for j in audit.jumps if {j["from_k"], j["to_k"]} == {0, 1}]
    located = len(boundary) == 1 and 0 < boundary[0]["q"] < 1
    q_c, k, jump = slope_jump(t, p)
    h = 1e-5
    Dq = lambda x: solve_D(spec, x)  # noqa: E731
    left = (3 * Dq(q_c) - 4 * Dq(q_c - h) + Dq(q_c - 2 * h)) / (2 * h)
    right = (-3 * Dq(q_c) + 4 * Dq(q_c + h) - Dq(q_c + 2 * h)) / (2 * h)
    jump_err = abs(jump - (right - left))
    ok = err <= 1e-8 and audit.passed and located and jump > 0 and jump_err <= 1e-6
    where = f"{boundary[0]['q']:.4f}" if boundary else "none"
    report(2, ok, f"tau vs closed form {err:.2e}; J0/J1 boundary at q~{where} (closed form {q_c:.6f}); "
                  f"jump {jump:.6f}, one-sided solver differences agree to {jump_err:.1e}")


def test_criterion_03_derivative_identity():
    worst_fd, worst_res, points, specs_used = 0.0, 0.0, 0, 0
    for spec in SPECS:
        used = False
        for q in DERIV_Q:
            if not off_knot(spec, q):
                continue
            fm = d_prime(spec, q, "formula")
            fd = d_prime(spec, q, "finite-difference", h=1e-4)
            worst_fd = max(worst_fd, abs(fm.value - fd.value))
            worst_res = max(worst_res, abs(fm.residual))
            points += 1
            used = True
        specs_used += used
    ok = specs_used == len(SPECS) and worst_fd <= 1e-4 and worst_res <= 1e-8
    report(3, ok, f"{specs_used} specs / {points} points: max |formula - FD| = {worst_fd:.2e}, "
                  f"max residual = {worst_res:.2e}")


def test_criterion_04_concavity_audit():
    qs = np.concatenate([np.linspace(0.05, 0.99, 48), np.linspace(1.01, 3.0, 100)])
    failures = []
    worst = -math.inf
    for i, spec in enumerate(SPECS):
        rep = concavity_audit(spectrum_table(spec, qs), tol=1e-10)
        worst = max(worst, rep.max_second_difference)
        if not rep.passed:
            failures.append((i, rep.violations[:3]))
    report(4, not failures, f"{len(SPECS)} specs audited, max required second difference {worst:.2e}, "
                            f"failures {failures}")


def test_criterion_05_lyapunov_suite():
    worst_cert = 0.0
    for spec in SPECS:
        data = lyapunov_exponents(spec, spec.probabilities)
        s = lyapunov_dimension(data)
        if s < spec.d:
            worst_cert = max(worst_cert, abs(data.entropy + data.phi_star(s)))
    hits = 0
    trials = 100
    for t in range(trials):
        spec = SPECS[t % len(SPECS)]
        exact = lyapunov_exponents(spec, spec.probabilities).lambdas
        mc = lyapunov_exponents(spec, spec.probabilities, "monte-carlo", n=60, trials=300, seed=[5, t])
        hits += bool(np.all(np.abs(mc.lambdas - exact) <= 3 * mc.stderr))
    points = []
    for spec in SPECS:
        if not spec.strict_half:
            continue
        for q in (0.2, 0.4, 0.6, 0.8):
            rep = formalism_clauses(spec, q)
            if rep.clause == "i":
                w = equilibrium_weights(spec, q)
                ly = lyapunov_dimension(lyapunov_exponents(spec, w))
                points.append(abs(ly - rep.predicted_dimension))
            if len(points) == 10:
                break
        if len(points) == 10:
            break
    worst_id = max(points) if points else math.inf
    ok = worst_cert <= 1e-10 and hits >= 95 and len(points) == 10 and worst_id <= 1e-6
    report(5, ok, f"root certificate {worst_cert:.1e}; MC within 3 SE in {hits}/{trials}; "
                  f"dim_LY(w_q) = alpha q - tau at {len(points)} clause-(i) points, max error {worst_id:.1e}")


def test_criterion_06_empirical_cantor():
    t0 = time.perf_counter()
    sample = chaos_game(cantor_spec(), 1_000_000, seed=6)
    radii = 2.0 ** -np.arange(3, 12)
    mom = grid_moments(sample, radii, [0.5, 2.0])
    errs = {q: abs(empirical_tau(mom, q).slope - (q - 1) * L23) for q in (0.5, 2.0)}
    dt = time.perf_counter() - t0
    ok = max(errs.values()) <= 0.05 and dt < 30
    report(6, ok, f"|tau_hat - tau| at q=0.5: {errs[0.5]:.4f}, q=2: {errs[2.0]:.4f}; {dt:.1f} s")


def test_criterion_07_empirical_random_translations():
    t0 = time.perf_counter()
    base = IFSSpec([np.diag([0.4, 0.3])] * 3, [1 / 3, 1 / 3, 1 - 2 / 3])
    qs = [1.25, 1.5, 2.0]
    radii = 2.0 ** -np.arange(4, 13)
    est = {q: [] for q in qs}
    for s in range(5):
        spec = base.with_translations(random_translations(3, 2, 1.0, [7, s]))
        sample = chaos_game(spec, 1_000_000, seed=[7, s, 1])
        mom = grid_moments(sample, radii, qs)
        for q in qs:
            est[q].append(empirical_tau(mom, q).slope)
    dt = time.perf_counter() - t0
    errs = {q: abs(np.mean(est[q]) - solve_tau(base, q)) for q in qs}
    ok = max(errs.values()) <= 0.1 and dt < 300
    report(7, ok, "mean over 5 translation draws, |error| " +
           ", ".join(f"q={q}: {e:.3f}" for q, e in errs.items()) + f"; {dt:.1f} s")


def test_criterion_08_rosc_carpet():
    t1, t2 = 0.4, 0.2
    a = rosc_translations(2, t1, t2)
    errs = {}
    for p in [(0.5, 0.5), (0.7, 0.3)]:
        spec = IFSSpec([np.diag([t1, t2])] * 2, list(p), a)
        sample = chaos_game(spec, 1_000_000, seed=8)
        mom = grid_moments(sample, 2.0 ** -np.arange(3, 12), [0.5, 1.5, 2.0])
        for q in (0.5, 1.5, 2.0):
            errs[(p, q)] = abs(empirical_tau(mom, q).slope - rosc_carpet_tau(t1, t2, p, q))
    worst = max(errs.values())
    report(8, worst <= 0.1, f"max |tau_hat - closed form| over p in {{(1/2,1/2), (0.7,0.3)}}, "
                            f"q in {{0.5,1.5,2}}: {worst:.4f}")


def test_criterion_09_covering():
    rng = make_rng(9)
    t0 = time.perf_counter()
    bad_r = bad_t = 0
    for _ in range(1000):
        n = int(rng.integers(10, 80))
        norms = rng.uniform(1.0, 8.0, n)
        a = norms[:, None] * rng.uniform(0.05, 1.0, (n, 2))
        a[np.arange(n), rng.integers(0, 2, n)] = norms
        c = rng.uniform(0.0, 40.0, (n, 2))
        res = partition_and_select([AxisRectangle(ci, ai) for ci, ai in zip(c, a)], 2, lattice=1000)
        bad_r += not (res.certified and res.certificate["disjoint"])
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        T = rng.normal(size=(2, 2)) * 0.3
        while abs(np.linalg.det(T)) < 1e-2:
            T = rng.normal(size=(2, 2)) * 0.3
        b = rng.uniform(0.0, 3.0, (n, 2))
        res = select_translates([0.5, 0.5], 0.5, [(T, x) for x in b])
        bad_t += not res.certified
    dt = time.perf_counter() - t0
    report(9, bad_r == 0 and bad_t == 0 and dt < 60,
           f"rectangle families failing {bad_r}/1000, translate families failing {bad_t}/1000; {dt:.1f} s")


def test_criterion_10_measure_inequalities():
    planar = IFSSpec([np.diag([0.4, 0.3])] * 3, [1 / 3, 1 / 3, 1 - 2 / 3])
    planar = planar.with_translations(random_translations(3, 2, 1.0, [7, 0]))
    summary = {}
    for name, spec in [("cantor", cantor_spec()), ("planar", planar)]:
        sample = chaos_game(spec, 1_000_000, seed=10)
        checks = check_measure_inequalities(sample, trials=200, seed=[10, 1])
        statuses = [c.status for c in checks]
        summary[name] = {s: statuses.count(s) for s in sorted(set(statuses))}
    ok = all("violation" not in v for v in summary.values())
    report(10, ok, f"status counts {summary}")


def test_criterion_11_submultiplicativity():
    rng = make_rng(11)
    violations = 0
    total = 0
    for d in (1, 2, 3, 4):
        n = 2500
        A = rng.uniform(-1, 1, (n, d, d))
        B = rng.uniform(-1, 1, (n, d, d))
        A /= 1.05 * np.linalg.norm(A, 2, axis=(1, 2))[:, None, None]
        B /= 1.05 * np.linalg.norm(B, 2, axis=(1, 2))[:, None, None]
        lev_ab = product_levels([A, B])
        lev_a, lev_b = product_levels([A]), product_levels([B])
        for s in rng.uniform(0, d + 1, 10):
            lhs = log_phi_from_integer_levels(lev_ab, s)
            rhs = log_phi_from_integer_levels(lev_a, s) + log_phi_from_integer_levels(lev_b, s)
            # relative slack on phi itself: phi(AB) <= phi(A) phi(B) (1 + 1e-12)
            violations += int(np.sum(lhs > rhs + math.log1p(1e-12)))
            total += n
    report(11, violations == 0 and total == 10 ** 5,
           f"{total} (pair, s) checks over d = 1..4, {violations} violations")
