import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obsfem import (
    NoiseModel,
    build_disk_mesh,
    build_square_mesh,
    build_observation_set,
    dump_observations_csv,
    empirical_inner_product,
    empirical_norm,
    place_points,
    quadrature_weights,
    sample_noise,
    uniformity_report,
)
from obsfem.observations import sample_noise_range


def trapezoid_on_partition(t, w_at_t, w0, w1):
    """Composite trapezoid over the partition {0, t_1..t_m, 1}.

    Reference rule for the one-sided weight construction: the two rules
    differ only in how the end intervals [0,t_1] and [t_m,1] are closed.
    """
    nodes = np.concatenate([[0.0], t, [1.0]])
    vals = np.concatenate([[w0], w_at_t, [w1]])
    return float(np.trapezoid(vals, nodes))


class TestQuadratureWeights:
    def test_two_point_thirds(self):
        w = quadrature_weights(np.array([1 / 3, 2 / 3]))
        np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-15)

    def test_single_point(self):
        np.testing.assert_allclose(quadrature_weights(np.array([0.5])), [1.0])

    def test_empty(self):
        assert quadrature_weights(np.array([])).size == 0

    def test_four_point_example(self):
        w = quadrature_weights(np.array([0.1, 0.2, 0.4, 0.9]))
        np.testing.assert_allclose(w, [0.15, 0.15, 0.35, 0.35], atol=1e-15)

    def test_non_increasing_rejected(self):
        with pytest.raises(ValueError):
            quadrature_weights(np.array([0.3, 0.3]))
        with pytest.raises(ValueError):
            quadrature_weights(np.array([0.5, 0.2]))

    def test_endpoint_params_rejected(self):
        with pytest.raises(ValueError):
            quadrature_weights(np.array([0.0, 0.5]))
        with pytest.raises(ValueError):
            quadrature_weights(np.array([0.5, 1.0]))

    def test_trapezoid_identity_on_example(self):
        # Q(w) - T(w) = dt_1/2 (w(t_1) - w(0)) + dt_last/2 (w(t_m) - w(1))
        t = np.array([0.1, 0.2, 0.4, 0.9])
        omega = quadrature_weights(t)
        for wfun in (lambda s: s, lambda s: s ** 2, np.cos):
            q = float(np.sum(omega * wfun(t)))
            trap = trapezoid_on_partition(t, wfun(t), wfun(0.0), wfun(1.0))
            correction = 0.5 * 0.1 * (wfun(t[0]) - wfun(0.0)) \
                + 0.5 * 0.1 * (wfun(t[-1]) - wfun(1.0))
            assert abs((q - trap) - correction) <= 1e-14

    @given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=30, unique=True))
    @settings(max_examples=300, deadline=None)
    def test_weights_sum_to_one(self, params):
        t = np.sort(np.asarray(params))
        if np.any(np.diff(t) < 1e-12):
            return
        w = quadrature_weights(t)
        assert abs(w.sum() - 1.0) <= 1e-14

    @given(st.lists(st.floats(0.01, 0.99), min_size=2, max_size=20, unique=True))
    @settings(max_examples=200, deadline=None)
    def test_trapezoid_identity_random(self, params):
        t = np.sort(np.asarray(params))
        if np.any(np.diff(t) < 1e-12):
            return
        omega = quadrature_weights(t)
        wfun = lambda s: s  # noqa: E731
        q = float(np.sum(omega * t))
        trap = trapezoid_on_partition(t, t, 0.0, 1.0)
        d1 = t[0] - 0.0
        dlast = 1.0 - t[-1]
        correction = 0.5 * d1 * (t[0] - 0.0) + 0.5 * dlast * (t[-1] - 1.0)
        assert abs((q - trap) - correction) <= 1e-14

    def test_error_decay_first_order(self):
        # smooth non-symmetric integrand: rule error must decay at least O(1/n)
        exact = 2.0 / math.pi  # integral of sin(pi t) over [0, 1]
        errs = []
        for n in (4, 8, 16, 32, 64):
            t = (np.arange(n) + 0.5) / n
            w = quadrature_weights(t)
            errs.append(abs(np.sum(w * np.sin(math.pi * t)) - exact))
        errs = np.array(errs)
        assert (np.diff(errs) < 0).all()
        slope = np.polyfit(np.log([4, 8, 16, 32, 64]), np.log(errs), 1)[0]
        assert slope <= -1.0
        assert (errs * np.array([4, 8, 16, 32, 64])).max() < 1.0

    def test_odd_symmetry_exact(self):
        # sin(2 pi t) is odd around 1/2, and so is the weight layout
        t = (np.arange(16) + 0.5) / 16
        w = quadrature_weights(t)
        assert abs(np.sum(w * np.sin(2 * math.pi * t))) <= 1e-15


class TestPlacement:
    def test_one_site_per_element_centered(self):
        mesh = build_square_mesh(2)
        pl = place_points(mesh, 8)
        assert pl.n == 8
        for e in range(8):
            sl = pl.element_slice(e)
            assert sl.stop - sl.start == 1
            assert pl.t[sl.start] == pytest.approx(0.5, abs=1e-12)

    def test_equal_counts_k10_n1000(self, square10):
        pl = place_points(square10, 1000)
        counts = np.diff(pl.offsets)
        assert (counts == 25).all()

    def test_brute_force_binning(self, square10):
        # independent binning: walk the cumulative element lengths per site
        n = 397
        pl = place_points(square10, n)
        lengths = square10.boundary_lengths
        starts = np.concatenate([[0.0], np.cumsum(lengths)])
        s = pl.arclengths()
        for idx in range(0, n, 41):
            e_found = int(np.searchsorted(starts, s[idx], side="right")) - 1
            sl_lo, sl_hi = pl.offsets[e_found], pl.offsets[e_found + 1]
            assert sl_lo <= idx < sl_hi

    def test_arclengths_half_offset(self):
        mesh = build_square_mesh(4)
        pl = place_points(mesh, 4)
        np.testing.assert_allclose(pl.arclengths(), [0.5, 1.5, 2.5, 3.5], atol=1e-12)

    def test_endpoint_collision_nudged(self, caplog):
        # k=2 elements have length 0.5, so n=4 sites land exactly on vertices
        mesh = build_square_mesh(2)
        with caplog.at_level(logging.WARNING):
            pl = place_points(mesh, 4)
        assert any("nudged" in r.message for r in caplog.records)
        np.testing.assert_allclose(pl.arclengths(), [0.5, 1.5, 2.5, 3.5], atol=1e-8)
        assert (pl.t > 0).all() and (pl.t < 1).all()

    def test_no_nudge_when_clean(self, square10, caplog):
        # midpoint offsets (2j+1)/500 are never multiples of 0.1
        with caplog.at_level(logging.WARNING):
            place_points(square10, 1000)
        assert not any("nudged" in r.message for r in caplog.records)

    def test_params_strictly_increasing_per_element(self, disk10):
        pl = place_points(disk10, 500)
        for e in range(len(disk10.boundary)):
            sl = pl.element_slice(e)
            te = pl.t[sl]
            assert (np.diff(te) > 0).all()

    def test_positions_on_true_boundary(self, disk10):
        pl = place_points(disk10, 100)
        for e in (0, 30, 62):
            pts = pl.positions(e)
            if len(pts):
                np.testing.assert_allclose(np.hypot(pts[:, 0], pts[:, 1]), 1.0,
                                           atol=1e-12)

    def test_alpha_ratio_bound(self, square10, disk10):
        # end-interval weights are at most 3x the interior ones
        for mesh, ns in ((square10, (40, 100, 397)), (disk10, (63, 200))):
            for n in ns:
                lo, hi = place_points(mesh, n).alpha_bounds
                assert hi / lo <= 3.0


class TestUniformity:
    def test_equispaced_disk(self, disk10):
        pl = place_points(disk10, 100)
        rep = uniformity_report(disk10, pl.arclengths())
        assert rep.s_min == pytest.approx(2 * math.pi / 100, rel=1e-12)
        assert rep.s_max == pytest.approx(math.pi / 100, rel=1e-12)
        assert rep.ratio == pytest.approx(0.5, rel=1e-12)

    def test_two_antipodal_points(self, disk10):
        rep = uniformity_report(disk10, np.array([0.0, math.pi]))
        assert rep.s_min == pytest.approx(math.pi, rel=1e-12)
        assert rep.s_max == pytest.approx(math.pi / 2, rel=1e-12)

    def test_three_point_brute_force(self, disk10):
        s = np.array([0.3, 2.0, 4.1])
        rep = uniformity_report(disk10, s)
        L = disk10.boundary_length
        # O(n^2) pairwise arc distances
        smin = min(min(abs(a - b), L - abs(a - b))
                   for i, a in enumerate(s) for b in s[i + 1:])
        # sup over the boundary of the distance to the nearest site
        grid = np.linspace(0, L, 20001)
        d = np.min([np.minimum(np.abs(grid - x), L - np.abs(grid - x)) for x in s],
                   axis=0)
        assert rep.s_min == pytest.approx(smin, rel=1e-12)
        assert rep.s_max == pytest.approx(d.max(), abs=1e-3)


class TestNoise:
    def test_none_is_zero(self):
        assert not sample_noise(None, 100, seed=1).any()
        assert not sample_noise(NoiseModel.none(), 100, seed=1).any()

    def test_deterministic(self):
        a = sample_noise(NoiseModel.gaussian(2.0), 5000, seed=42)
        b = sample_noise(NoiseModel.gaussian(2.0), 5000, seed=42)
        np.testing.assert_array_equal(a, b)
        c = sample_noise(NoiseModel.gaussian(2.0), 5000, seed=43)
        assert (a != c).any()

    def test_gaussian_moments(self):
        e = sample_noise(NoiseModel.gaussian(2.0), 10 ** 6, seed=7)
        assert abs(e.mean()) <= 4 * (2 / 10 ** 3)
        assert abs(e.std() - 2.0) <= 0.02

    def test_mixture_moments(self):
        model = NoiseModel.mixture(1.0, 10.0, 0.5)
        e = sample_noise(model, 10 ** 6, seed=11)
        assert abs(e.mean()) <= 0.05
        assert abs(e.std() - model.std) <= 0.02 * model.std

    def test_std_property(self):
        assert NoiseModel.none().std == 0.0
        assert NoiseModel.gaussian(2.0).std == 2.0
        assert NoiseModel.mixture(1.0, 10.0, 0.5).std == pytest.approx(
            math.sqrt(0.5 * 1 + 0.5 * 100))

    def test_range_matches_full_draw(self):
        # counter-based stream: any sub-range must equal the full-draw slice
        model = NoiseModel.gaussian(1.5)
        full = sample_noise(model, 2 ** 21 + 13, seed=3)
        for start, stop in ((0, 100), (2 ** 20 - 5, 2 ** 20 + 5), (2 ** 21, 2 ** 21 + 13)):
            part = sample_noise_range(model, 3, start, stop)
            np.testing.assert_array_equal(part, full[start:stop])

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            NoiseModel.gaussian(-1.0)


class TestObservationSet:
    def test_alpha_sums_to_boundary_length(self, square10, disk10):
        g0 = lambda x, y: x + y  # noqa: E731
        for mesh, total in ((square10, 4.0), (disk10, 2 * math.pi)):
            obs = build_observation_set(mesh, 500, g0, None, seed=0)
            assert abs(obs.alpha.sum() - total) <= 1e-10

    def test_equispaced_alpha_uniform(self, square10):
        obs = build_observation_set(square10, 1000, lambda x, y: x, None, seed=0)
        np.testing.assert_allclose(obs.alpha, 4.0 / 1000, atol=1e-12)

    def test_constant_data_no_noise(self, square10):
        obs = build_observation_set(square10, 100, lambda x, y: 3.25, None, seed=0)
        np.testing.assert_array_equal(obs.g, np.full(100, 3.25))

    def test_noise_decomposition(self, disk10):
        model = NoiseModel.gaussian(2.0)
        obs = build_observation_set(disk10, 300, lambda x, y: x * y, model, seed=5)
        clean = np.concatenate([obs.clean_values(e)
                                for e in range(len(disk10.boundary))])
        noise = sample_noise(model, 300, seed=5)
        np.testing.assert_allclose(obs.g - clean, noise, atol=1e-15)

    def test_bit_identical_rebuild(self, disk10):
        model = NoiseModel.mixture(1.0, 10.0, 0.5)
        a = build_observation_set(disk10, 777, lambda x, y: x, model, seed=9)
        b = build_observation_set(disk10, 777, lambda x, y: x, model, seed=9)
        np.testing.assert_array_equal(a.g, b.g)
        np.testing.assert_array_equal(a.alpha, b.alpha)
        np.testing.assert_array_equal(a.t, b.t)

    def test_clean_values_on_true_boundary(self, disk10):
        # g0 must be sampled on the circle, not the chord polygon
        obs = build_observation_set(disk10, 200, lambda x, y: x ** 2 + y ** 2, None)
        np.testing.assert_allclose(obs.g, 1.0, atol=1e-12)

    def test_csv_dump_round_trips(self, tmp_path, square10):
        obs = build_observation_set(square10, 50, lambda x, y: x,
                                    NoiseModel.gaussian(1.0), seed=2)
        path = tmp_path / "obs.csv"
        dump_observations_csv(obs, str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == "element,t,x,y,g0,e,g,omega,alpha"
        assert len(lines) == 51
        g_back = np.array([float(line.split(",")[6]) for line in lines[1:]])
        np.testing.assert_array_equal(np.sort(g_back), np.sort(obs.g))


class TestEmpiricalInnerProduct:
    def test_constant_gives_boundary_length(self, disk10):
        obs = build_observation_set(disk10, 123, lambda x, y: 1.0, None)
        one = np.ones(123)
        assert empirical_inner_product(obs.alpha, one, one) == pytest.approx(
            2 * math.pi, abs=1e-10)

    def test_zero_factor(self, square10):
        obs = build_observation_set(square10, 64, lambda x, y: 1.0, None)
        assert empirical_inner_product(obs.alpha, np.ones(64), np.zeros(64)) == 0.0

    def test_approximates_line_integral(self, square10):
        # integral of x^2 over the unit square boundary: 1/3 + 1 + 1/3 + 0
        obs = build_observation_set(square10, 10 ** 4, lambda x, y: x ** 2, None)
        assert abs(empirical_inner_product(obs.alpha, np.ones(10 ** 4), obs.g)
                   - 5.0 / 3.0) <= 1e-4

    def test_norm_is_sqrt_self_product(self, rng):
        alpha = rng.random(40) + 0.1
        u = rng.standard_normal(40)
        assert empirical_norm(alpha, u) == pytest.approx(
            math.sqrt(empirical_inner_product(alpha, u, u)))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            empirical_inner_product(np.ones(3), np.ones(3), np.ones(4))
