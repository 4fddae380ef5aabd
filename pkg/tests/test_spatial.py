import numpy as np
import pytest

from swg.spatial import (MaternParams, SingularCorrelationError, SpatialDomain,
                         basis_matrix, basis_vector, cholesky_jitter,
                         correlation_matrix, knot_grid, matern_correlation,
                         pairwise_distances, project_latlon, unproject_xy)


def random_domain(rng, n=5, **kwargs):
    return SpatialDomain.from_locations(rng.uniform(0, 100, (n, 2)), **kwargs)


class TestMaternCorrelation:
    def test_zero_distance_is_one(self):
        for rho, nu in [(1.0, 0.5), (10.0, 1.5), (3.0, 0.8), (50.0, 1.9)]:
            assert matern_correlation(0.0, MaternParams(rho, nu)) == 1.0

    def test_exponential_special_case(self):
        # nu = 1/2 reduces to exp(-h/rho)
        assert matern_correlation(3.0, MaternParams(3.0, 0.5)) == pytest.approx(
            np.exp(-1.0), abs=1e-12)
        h = np.array([0.5, 1.0, 7.0])
        got = matern_correlation(h, MaternParams(2.0, 0.5))
        np.testing.assert_allclose(got, np.exp(-h / 2.0), atol=1e-12)

    def test_nu_three_halves_closed_form(self):
        # independent closed-form evaluation of the once-differentiable case
        h, rho = 2.0, 3.0
        x = np.sqrt(3.0) * h / rho
        expected = (1.0 + x) * np.exp(-x)
        assert matern_correlation(h, MaternParams(rho, 1.5)) == pytest.approx(
            expected, rel=1e-12)

    def test_bessel_route_matches_closed_forms(self):
        # generic Bessel evaluation against the closed forms at nearby nu
        h = np.linspace(0.01, 20, 50)
        for nu, closed in [(0.5, np.exp(-h / 4.0)),
                           (1.5, (1 + np.sqrt(3) * h / 4) * np.exp(-np.sqrt(3) * h / 4))]:
            got = np.array([matern_correlation(hi, MaternParams(4.0, nu + 1e-12))
                            for hi in h])
            np.testing.assert_allclose(got, closed, rtol=1e-6)

    def test_monotone_decreasing(self):
        rng = np.random.default_rng(11)
        hs = np.linspace(0.0, 50.0, 400)
        for _ in range(100):
            params = MaternParams(rng.uniform(1.0, 40.0), rng.uniform(0.05, 1.95))
            vals = matern_correlation(hs, params)
            assert np.all(np.diff(vals) <= 1e-12)
            assert vals[0] == 1.0

    def test_continuity_under_perturbation(self):
        # small relative perturbations of (h, rho, nu) barely move the value
        rng = np.random.default_rng(12)
        for _ in range(100):
            h = rng.uniform(0.5, 40.0)
            rho = rng.uniform(1.0, 40.0)
            nu = rng.uniform(0.1, 1.9)
            base = matern_correlation(h, MaternParams(rho, nu))
            eps = 1e-7
            for dh, drho, dnu in [(eps * h, 0, 0), (0, eps * rho, 0), (0, 0, eps * nu)]:
                moved = matern_correlation(h + dh, MaternParams(rho + drho, nu + dnu))
                assert abs(moved - base) < 1e-4

    def test_rejects_bad_distances(self):
        p = MaternParams(1.0, 1.0)
        with pytest.raises(ValueError):
            matern_correlation(-1.0, p)
        with pytest.raises(ValueError):
            matern_correlation(np.nan, p)
        with pytest.raises(ValueError):
            matern_correlation(np.inf, p)

    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            MaternParams(-1.0, 1.0)
        with pytest.raises(ValueError):
            MaternParams(1.0, 0.0)


class TestCorrelationMatrix:
    def test_single_location(self):
        dom = SpatialDomain(np.array([[0.0, 0.0]]), np.array([[0.0, 0.0]]), 1.0)
        c = correlation_matrix(dom, MaternParams(5.0, 1.0))
        np.testing.assert_array_equal(c, np.eye(1))

    def test_two_locations_match_scalar(self):
        locs = np.array([[0.0, 0.0], [3.0, 4.0]])
        dom = SpatialDomain(locs, np.array([[0.0, 0.0]]), 1.0)
        params = MaternParams(7.0, 1.2)
        c = correlation_matrix(dom, params)
        assert c[0, 1] == pytest.approx(matern_correlation(5.0, params), rel=1e-14)

    def test_elementwise_oracle(self):
        rng = np.random.default_rng(5)
        dom = random_domain(rng, n=5)
        params = MaternParams(20.0, 0.9)
        c = correlation_matrix(dom, params)
        for i in range(5):
            for j in range(5):
                expected = matern_correlation(dom.distances[i, j], params)
                assert c[i, j] == pytest.approx(expected, abs=1e-14)

    def test_pd_over_prior_support(self):
        rng = np.random.default_rng(7)
        dom = random_domain(rng, n=12)
        lo, hi = dom.distance_bounds
        for _ in range(60):
            params = MaternParams(rng.uniform(lo, hi), rng.uniform(0.01, 1.99))
            c = matern_correlation(dom.distances, params)
            np.fill_diagonal(c, 1.0)
            cholesky_jitter(c, ladder=(0.0, 1e-10, 1e-8))  # must not raise

    def test_singular_failure_names_params(self):
        mat = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalue -1: unfixable
        with pytest.raises(SingularCorrelationError, match="rho"):
            cholesky_jitter(mat, ladder=(0.0, 1e-10), params="rho=1 nu=2")


class TestBasis:
    def test_on_knot_value(self):
        dom = SpatialDomain(np.array([[0.0, 0.0]]),
                            np.array([[1.0, 2.0], [5.0, 5.0]]), 2.0)
        psi = basis_vector([1.0, 2.0], dom)
        assert psi[0] == pytest.approx(1.0 / np.sqrt(2 * np.pi), rel=1e-14)
        assert np.argmax(psi) == 0

    def test_one_bandwidth_away(self):
        dom = SpatialDomain(np.array([[0.0, 0.0]]), np.array([[0.0, 0.0]]), 2.0)
        psi = basis_vector([2.0, 0.0], dom)
        expected = np.exp(-0.5) / np.sqrt(2 * np.pi)  # standard normal pdf at 1
        assert psi[0] == pytest.approx(expected, rel=1e-12)
        assert psi[0] == pytest.approx(0.241971, abs=1e-6)

    def test_matches_direct_density(self):
        rng = np.random.default_rng(2)
        knots = rng.uniform(0, 10, (3, 2))
        dom = SpatialDomain(np.array([[0.0, 0.0]]), knots, 3.5)
        s = rng.uniform(0, 10, 2)
        psi = basis_vector(s, dom)
        for l in range(3):
            z = np.linalg.norm(s - knots[l]) / 3.5
            assert psi[l] == pytest.approx(np.exp(-z * z / 2) / np.sqrt(2 * np.pi),
                                           rel=1e-12)

    def test_basis_matrix_rows(self):
        rng = np.random.default_rng(3)
        dom = random_domain(rng, n=4, nx=3, ny=2)
        pts = rng.uniform(0, 100, (6, 2))
        mat = basis_matrix(pts, dom)
        assert mat.shape == (6, 6)
        for i in range(6):
            np.testing.assert_allclose(mat[i], basis_vector(pts[i], dom), atol=1e-15)


class TestDomain:
    def test_distance_invariants(self):
        rng = np.random.default_rng(4)
        dom = random_domain(rng, n=20)
        d = dom.distances
        np.testing.assert_array_equal(d, d.T)
        assert np.all(np.diag(d) == 0)
        assert np.all(d >= 0)

    def test_rejects_asymmetric_distances(self):
        locs = np.zeros((3, 2))
        bad = np.array([[0.0, 1.0, 2.0], [1.5, 0.0, 1.0], [2.0, 1.0, 0.0]])
        with pytest.raises(ValueError):
            SpatialDomain(locs, np.zeros((1, 2)), 1.0, distances=bad)

    def test_knot_grid_default(self):
        rng = np.random.default_rng(6)
        locs = rng.uniform(0, 100, (30, 2))
        knots, spacing = knot_grid(locs)
        assert knots.shape == (25, 2)
        assert spacing > 0
        dom = SpatialDomain.from_locations(locs)
        assert dom.n_basis == 25
        assert dom.bandwidth == pytest.approx(spacing)

    def test_projection_round_trip(self):
        rng = np.random.default_rng(8)
        lat = 41.0 + rng.uniform(-1, 1, 15)
        lon = -76.5 + rng.uniform(-1.5, 1.5, 15)
        xy, origin = project_latlon(lat, lon)
        lat2, lon2 = unproject_xy(xy, origin)
        np.testing.assert_allclose(lat2, lat, atol=1e-10)
        np.testing.assert_allclose(lon2, lon, atol=1e-10)
        # one degree of latitude is ~111 km on the projected plane
        xy_ref, _ = project_latlon([41.0, 42.0], [-76.5, -76.5], origin=origin)
        assert abs((xy_ref[1, 1] - xy_ref[0, 1]) - 111.19) < 0.1

    def test_pairwise_distance_is_euclidean(self):
        locs = np.array([[0.0, 0.0], [3.0, 4.0]])
        assert pairwise_distances(locs)[0, 1] == pytest.approx(5.0)
