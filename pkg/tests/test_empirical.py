import math

import numpy as np
import pytest

from conftest import cantor_spec, planar_spec
from selfaffine.empirical import (affine_mean, chaos_game, check_measure_inequalities, dyadic_radii,
                                  empirical_tau, grid_moments, local_dimension_histogram,
                                  pushforward_check, random_translations, read_sample,
                                  rosc_translations, write_moments, write_sample)
from selfaffine.words import BudgetError, IFSSpec

L23 = math.log(2) / math.log(3)


@pytest.fixture(scope="module")
def cantor_sample():
    return chaos_game(cantor_spec((0.3, 0.7)), 200_000, seed=4)


def test_determinism():
    spec = cantor_spec()
    a = chaos_game(spec, 5000, seed=7)
    b = chaos_game(spec, 5000, seed=7)
    c = chaos_game(spec, 5000, seed=8)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.points, c.points)


def test_single_map_fixed_point():
    spec = IFSSpec([[[0.5]]], [1.0], [[1.0]])
    s = chaos_game(spec, 1000, burn_in=80, seed=0)
    assert np.allclose(s.points, 2.0)


def test_cantor_first_level_mass(cantor_sample):
    mass = np.mean(cantor_sample.points[:, 0] <= 1 / 3 + 1e-12)
    mean, se = cantor_sample.batch_mean_se((cantor_sample.points[:, 0] <= 1 / 3 + 1e-12).astype(float))
    assert abs(mass - 0.3) < 4 * se + 1e-3


def test_points_in_bounding_ball(cantor_sample):
    assert np.all(np.linalg.norm(cantor_sample.points, axis=1) <= cantor_sample.bounding_radius + 1e-12)


def test_affine_mean(cantor_sample):
    assert affine_mean(cantor_sample.spec)[0] == pytest.approx(0.7 * 2 / 3 / (1 - 1 / 3))
    mean, se = cantor_sample.batch_mean_se(cantor_sample.points[:, 0])
    assert abs(mean - affine_mean(cantor_sample.spec)[0]) < 4 * se


def test_random_translations_statistics():
    draws = np.array([random_translations(3, 2, 1.0, [s, 0]) for s in range(2000)])
    norms = np.linalg.norm(draws.reshape(2000, -1), axis=1)
    assert np.all(norms <= 1.0)
    assert np.allclose(draws.mean(axis=0), 0.0, atol=0.05)
    # radius^6 is uniform on [0, 1] for a uniform point in the 6-ball
    assert np.mean(norms ** 6) == pytest.approx(0.5, abs=0.03)
    assert np.array_equal(random_translations(2, 1, 0.5, 3), random_translations(2, 1, 0.5, 3))


def test_rosc_translations():
    a = rosc_translations(2, 0.4, 0.2)
    assert np.allclose(a, [[0, 0], [0.6, 0.8]])
    with pytest.raises(ValueError):
        rosc_translations(3, 0.5, 0.4)


def test_moment_monotone_and_convex_in_q(cantor_sample):
    qs = np.linspace(0.0, 3.0, 13)
    mom = grid_moments(cantor_sample, [2 ** -6, 2 ** -8], qs)
    for row in mom.log_moments:
        assert np.all(np.diff(row) <= 1e-12)  # cell masses are <= 1
        assert np.all(np.diff(row, 2) >= -1e-9)  # Hoelder: log moments are convex in q
    assert np.allclose(mom.log_moments[:, 4], 0.0, atol=1e-12)  # q = 1


def test_box_dimension_at_q_zero():
    s = chaos_game(cantor_spec(), 1_000_000, seed=1)
    radii = 2.0 ** -np.arange(4, 12)
    est = empirical_tau(grid_moments(s, radii, [0.0]), 0.0)
    assert -est.slope == pytest.approx(L23, abs=0.1)


def test_cantor_tau_small(cantor_sample):
    radii = dyadic_radii(cantor_sample, 7)
    mom = grid_moments(cantor_sample, radii, [2.0])
    est = empirical_tau(mom, 2.0)
    ref = -math.log(0.3 ** 2 + 0.7 ** 2) / math.log(3)
    assert est.slope == pytest.approx(ref, abs=0.05)


def test_noise_floor_excludes_small_radii():
    s = chaos_game(cantor_spec(), 2000, seed=0)
    mom = grid_moments(s, [2 ** -3, 2 ** -14], [2.0])
    assert mom.radii.tolist() == [2 ** -3]
    assert mom.notices and "excluded" in mom.notices[0]


def test_empirical_tau_validation(cantor_sample):
    mom = grid_moments(cantor_sample, [0.1, 0.05, 0.025], [2.0])
    with pytest.raises(ValueError, match="4 radii"):
        empirical_tau(mom, 2.0)
    with pytest.raises(ValueError):
        empirical_tau(mom, 3.0)


def test_local_dimensions(cantor_sample):
    out = local_dimension_histogram(cantor_sample, [2 ** -8])
    alpha = out[0]["alpha"]
    lo = -math.log(0.7) / math.log(3)
    hi = -math.log(0.3) / math.log(3)
    assert np.median(alpha) > lo - 0.2 and np.median(alpha) < hi + 0.2


def test_measure_inequalities_cantor(cantor_sample):
    checks = check_measure_inequalities(cantor_sample, trials=30, seed=2)
    assert checks
    assert not any(c.status == "violation" for c in checks)


def test_pushforward(cantor_sample):
    fresh = chaos_game(cantor_sample.spec, 20_000, seed=99)
    assert pushforward_check(cantor_sample, fresh, 0)["status"] == "pass"


def test_sample_io(tmp_path):
    s = chaos_game(planar_spec().with_translations([[0, 0], [0.6, 0], [0, 0.7]]), 3000, seed=2)
    write_sample(tmp_path / "s.txt", s)
    pts, labels, meta = read_sample(tmp_path / "s.txt")
    assert np.array_equal(pts, s.points) and np.array_equal(labels, s.labels)
    assert meta["spec_hash"] == s.spec.spec_hash()
    mom = grid_moments(s, [0.1, 0.05], [0.5, 2.0])
    write_moments(tmp_path / "m.csv", mom)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "r,q,log_moment,cells_occupied" and len(lines) == 5


def test_sampling_budget():
    with pytest.raises(BudgetError):
        chaos_game(cantor_spec(), 10 ** 6, budget=1000)


def test_needs_translations(planar):
    with pytest.raises(ValueError):
        chaos_game(planar, 100)
