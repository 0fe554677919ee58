import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import cantor_spec, generic_spec, planar_spec, random_ordered_diagonal
from selfaffine.lyapunov import make_rng
from selfaffine.pressure import (ConvergenceError, Q_GUARD, SpectrumTable, equilibrium_weights,
                                 pressure, solve_D, solve_root, solve_tau, solve_u, spectrum_table)
from selfaffine.words import IFSSpec, moment_sum

L23 = math.log(2) / math.log(3)


@pytest.mark.parametrize("q", [0.0, 0.25, 0.5, 2.0, 3.0, 7.5])
def test_cantor_closed_form(q):
    assert solve_D(cantor_spec(), q) == pytest.approx((q - 1) * L23, abs=1e-12)


def test_q_equal_one_is_zero(cantor):
    r = solve_root(cantor, 1.0)
    assert r.D == 0.0 and r.method == "definition"


def test_guard_band_interpolates(cantor):
    r = solve_root(cantor, 1.0 + Q_GUARD / 2)
    assert r.method == "guard-interpolated"
    assert r.D == pytest.approx(Q_GUARD / 2 * L23, rel=1e-9)


def test_planar_values(planar):
    # 3 (1/3)^2 / phi^s = 1  ->  phi^s = 1/3 = 0.4 * 0.3^(s-1)
    r = solve_root(planar, 2.0)
    assert r.method == "exact" and not r.heuristic
    assert r.sigma == pytest.approx(1 + math.log(1 / 1.2) / math.log(0.3), abs=1e-13)
    # q = 0.5: 3 (1/3)^0.5 phi^s(T)^0.5 = 1  ->  phi^s = 1/3
    assert solve_D(planar, 0.5) == pytest.approx(-0.5 * r.sigma, abs=1e-12)


def test_equal_diagonal_value():
    spec = IFSSpec([np.diag([0.4, 0.2])] * 2, [0.5, 0.5])
    assert solve_tau(spec, 2.0) == pytest.approx(math.log(0.5) / math.log(0.4), abs=1e-13)
    assert solve_D(spec, 0.5) == pytest.approx(-0.3782353986830150, abs=1e-12)


def test_tau_clamped_by_dimension():
    spec = IFSSpec([np.diag([0.9, 0.9])] * 4, [0.25] * 4)
    r = solve_root(spec, 2.0)
    assert r.sigma > 2
    assert r.tau == pytest.approx(2.0)
    assert r.D > r.tau


def test_u_kind(cantor):
    # sum p^q / phi^{s(q-1)} = 2^(1-q) 3^(s(q-1)) = 1  ->  s = log2/log3
    assert solve_u(cantor, 3.0) == pytest.approx(L23, abs=1e-12)
    with pytest.raises(ValueError):
        solve_u(cantor, 1.5)


def test_root_certificate_exact(planar):
    for q in [0.3, 0.7, 1.5, 2.5]:
        r = solve_root(planar, q)
        assert abs(moment_sum(planar, 1, r.sigma, q)) < 1e-12
        lo, hi = r.bracket
        assert lo <= r.sigma <= hi and hi - lo < 1e-12


def test_finite_n_path(generic):
    r = solve_root(generic, 2.0)
    assert r.method == "finite-n" and r.heuristic
    assert r.n >= 10 and r.drift is not None and r.drift < 0.05
    lo, hi = r.bracket
    # q > 1: sup P_n is the limit, so the level-n root is a certified lower bound on sigma*
    assert r.sigma >= lo - 1e-4


def test_finite_n_q_below_one_not_heuristic(generic):
    assert not solve_root(generic, 0.5).heuristic


def test_pressure_probe_brackets(generic):
    probe = pressure(generic, 1.2, 0.5)
    vals = [v for _, v in probe.estimates]
    assert probe.bracket[1] == pytest.approx(min(vals))
    probe = pressure(generic, 1.2, 2.0)
    vals = [v for _, v in probe.estimates]
    assert probe.bracket[0] == pytest.approx(max(vals))


def test_variational_lower_bound(generic):
    """Any Bernoulli eta gives h + Psi_* <= P for q > 1."""
    probe = pressure(generic, 1.2, 2.0, eta=[0.4, 0.6])
    assert probe.variational_lower is not None
    assert probe.variational_lower <= probe.bracket[1] + 0.02


def test_equilibrium_weights_cantor(cantor):
    assert np.allclose(equilibrium_weights(cantor, 2.0), [0.5, 0.5])
    w = equilibrium_weights(cantor_spec((0.2, 0.8)), 2.0)
    assert w.sum() == pytest.approx(1.0)
    assert w[1] / w[0] == pytest.approx(16.0)


def test_no_root_rejected():
    spec = IFSSpec([[[0.5]], [[0.5]]], [0.5, 0.5])
    with pytest.raises(ConvergenceError, match="sigma"):
        solve_root(spec, 2.0, sigma_cap=0.5)


def test_negative_q_rejected(cantor):
    with pytest.raises(ValueError):
        solve_root(cantor, -0.5)


def test_spectrum_table_validates_grid(cantor):
    with pytest.raises(ValueError):
        spectrum_table(cantor, [2.0, 1.5])
    with pytest.raises(ValueError):
        SpectrumTable(np.array([]), [], [], [], [], 1)


def test_knot_flag():
    # uniform p with t1 = 1/2: 2 2^-q phi^s^(1-q) = 1 forces phi^s = 1/2, so s = 1 for all q
    spec = IFSSpec([np.diag([0.5, 0.25])] * 2, [0.5, 0.5])
    assert solve_root(spec, 2.0).knot == 1
    assert solve_root(spec, 0.5).knot == 1
    assert solve_root(IFSSpec([np.diag([0.5, 0.25])] * 2, [0.3, 0.7]), 2.5).knot is None


@given(st.integers(0, 10_000), st.floats(1.05, 3.0), st.floats(1.05, 3.0))
def test_ratio_non_increasing(seed, q1, q2):
    """D(q)/(q-1) is non-increasing for q > 1."""
    spec = random_ordered_diagonal(make_rng(seed))
    lo, hi = sorted((q1, q2))
    assert solve_root(spec, hi).sigma <= solve_root(spec, lo).sigma + 1e-10


@given(st.integers(0, 10_000))
def test_secants_at_one(seed):
    """D is continuous at 1 and its one-sided secants are equal there (D'(1) exists)."""
    spec = random_ordered_diagonal(make_rng(seed))
    h = 1e-3
    left = -solve_D(spec, 1 - 2 * h) / (2 * h)
    right = solve_D(spec, 1 + 2 * h) / (2 * h)
    assert abs(solve_D(spec, 1 - 2 * h)) < 0.1 and abs(solve_D(spec, 1 + 2 * h)) < 0.1
    assert left == pytest.approx(right, abs=0.05 * max(1.0, abs(left)))


@given(st.integers(0, 10_000))
def test_D_increasing(seed):
    spec = random_ordered_diagonal(make_rng(seed))
    qs = np.linspace(0.05, 3.0, 15)
    D = [solve_D(spec, q) for q in qs]
    assert np.all(np.diff(D) > 0)
