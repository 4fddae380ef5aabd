import numpy as np
import pytest

from swg.analogue import (AnalogueGraph, Embedding, FieldStack, analogue_weights,
                          build_analogue_inputs, calibrate_tau, compute_eof_basis,
                          cross_distances, embedding_distances, lag_embed,
                          load_eof_basis, load_field_stacks, project_loadings,
                          save_eof_basis, save_field_stacks, stack_loadings)


def toy_stack(rng, t=20, shape=(8, 8), name="hgt500"):
    return FieldStack(name, rng.standard_normal((t,) + shape), list(range(t)))


class TestEof:
    def test_constant_stack_gives_zero_loadings(self):
        base = np.random.default_rng(0).standard_normal((6, 6))
        stack = FieldStack("x", np.repeat(base[None], 10, axis=0) + 0.0, list(range(10)))
        try:
            basis = compute_eof_basis(stack, 1)
        except ValueError:
            return  # refusing the rank-zero centered stack is also acceptable
        loadings = stack_loadings(stack, basis)
        np.testing.assert_allclose(loadings, 0.0, atol=1e-12)

    def test_rank_one_stack(self):
        rng = np.random.default_rng(1)
        pattern = rng.standard_normal(36)
        coef = rng.standard_normal(12)
        vals = (coef[:, None] * pattern[None]).reshape(12, 6, 6)
        basis = compute_eof_basis(FieldStack("x", vals, list(range(12))), 1)
        # first pattern proportional to the generating one
        cos = abs(basis.patterns[0] @ pattern) / np.linalg.norm(pattern)
        assert cos == pytest.approx(1.0, abs=1e-10)
        # and it explains all the variance
        assert basis.singular_values[0] > 0
        loadings = stack_loadings(FieldStack("x", vals, list(range(12))), basis)
        recon = loadings @ basis.patterns
        centered = vals.reshape(12, -1) - vals.reshape(12, -1).mean(axis=0)
        np.testing.assert_allclose(recon, centered, atol=1e-10)

    def test_full_svd_reconstruction(self):
        rng = np.random.default_rng(2)
        stack = toy_stack(rng, t=20)
        basis = compute_eof_basis(stack, 19)  # full rank of the centered data
        loadings = stack_loadings(stack, basis)
        recon = loadings @ basis.patterns
        centered = stack.values.reshape(20, -1) - stack.values.reshape(20, -1).mean(0)
        np.testing.assert_allclose(recon, centered, atol=1e-8)

    def test_orthonormal_patterns_and_ordering(self):
        rng = np.random.default_rng(3)
        basis = compute_eof_basis(toy_stack(rng, t=30), 8)
        gram = basis.patterns @ basis.patterns.T
        np.testing.assert_allclose(gram, np.eye(8), atol=1e-8)
        assert np.all(np.diff(basis.singular_values) <= 1e-12)

    def test_project_mean_field_is_zero(self):
        rng = np.random.default_rng(4)
        stack = toy_stack(rng)
        basis = compute_eof_basis(stack, 3)
        mean_field = stack.values.mean(axis=0)
        np.testing.assert_allclose(project_loadings(mean_field, basis),
                                   np.zeros(3), atol=1e-10)

    def test_project_mean_plus_pattern(self):
        rng = np.random.default_rng(5)
        stack = toy_stack(rng)
        basis = compute_eof_basis(stack, 3)
        field = stack.values.mean(axis=0) + basis.patterns[0].reshape(8, 8)
        np.testing.assert_allclose(project_loadings(field, basis),
                                   [1.0, 0.0, 0.0], atol=1e-10)

    def test_project_matches_training_loading(self):
        rng = np.random.default_rng(6)
        stack = toy_stack(rng)
        basis = compute_eof_basis(stack, 4)
        all_loadings = stack_loadings(stack, basis)
        np.testing.assert_allclose(project_loadings(stack.values[7], basis),
                                   all_loadings[7], atol=1e-12)

    def test_grid_mismatch(self):
        rng = np.random.default_rng(7)
        basis = compute_eof_basis(toy_stack(rng), 2)
        with pytest.raises(ValueError):
            project_loadings(np.zeros((5, 5)), basis)

    def test_basis_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        b1 = compute_eof_basis(toy_stack(rng, name="hgt500"), 3)
        b2 = compute_eof_basis(toy_stack(rng, name="tsurf"), 3)
        path = tmp_path / "basis.swg"
        save_eof_basis(path, [b1, b2])
        loaded = load_eof_basis(path)
        assert [b.variable for b in loaded] == ["hgt500", "tsurf"]
        np.testing.assert_array_equal(loaded[0].patterns, b1.patterns)
        np.testing.assert_array_equal(loaded[1].mean, b2.mean)


class TestLagEmbed:
    def test_zero_lags(self):
        x = np.arange(12.0).reshape(6, 2)
        emb = lag_embed(x, 0)
        assert emb.matrices.shape == (6, 2, 1)
        np.testing.assert_array_equal(emb.matrices[:, :, 0], x)
        assert emb.valid.all()

    def test_constant_series_columns_identical(self):
        x = np.tile([1.5, -2.0], (8, 1))
        emb = lag_embed(x, 2)
        for t in range(2, 8):
            for j in range(3):
                np.testing.assert_array_equal(emb.matrices[t, :, j], [1.5, -2.0])
        assert not emb.valid[:2].any() and emb.valid[2:].all()

    def test_shifted_indexing_oracle(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((15, 3))
        emb = lag_embed(x, 3)
        for t in range(3, 15):
            for j in range(4):
                np.testing.assert_array_equal(emb.matrices[t, :, j], x[t - j])

    def test_lag_bounds(self):
        with pytest.raises(ValueError):
            lag_embed(np.zeros((3, 2)), 3)
        with pytest.raises(ValueError):
            lag_embed(np.zeros((3, 2)), -1)


class TestEmbeddingDistances:
    def test_identical_days_zero(self):
        x = np.tile([1.0, 2.0], (6, 1))
        d = embedding_distances(lag_embed(x, 1))
        valid = slice(1, None)
        np.testing.assert_allclose(d[valid, valid], 0.0, atol=1e-15)

    def test_two_scalar_days(self):
        x = np.array([[3.0], [7.0]])
        d = embedding_distances(lag_embed(x, 0))
        assert d[0, 1] == pytest.approx(4.0)

    def test_frobenius_oracle(self):
        rng = np.random.default_rng(10)
        emb = lag_embed(rng.standard_normal((10, 4)), 2)
        d = embedding_distances(emb)
        for t in range(2, 10):
            for s in range(2, 10):
                expected = np.sqrt(((emb.matrices[t] - emb.matrices[s]) ** 2).sum())
                assert d[t, s] == pytest.approx(expected, abs=1e-12)

    def test_invalid_days_infinite(self):
        rng = np.random.default_rng(11)
        d = embedding_distances(lag_embed(rng.standard_normal((8, 2)), 3))
        assert np.all(np.isinf(d[:3, 4:]))
        assert np.all(np.isinf(d[4:, :3]))
        assert np.all(np.diag(d) == 0)

    def test_cross_distances(self):
        rng = np.random.default_rng(12)
        tr = lag_embed(rng.standard_normal((10, 2)), 1)
        new = lag_embed(rng.standard_normal((5, 2)), 1)
        d = cross_distances(new, tr)
        assert d.shape == (5, 10)
        assert np.all(np.isinf(d[0]))  # first lag day of the new block
        assert np.all(np.isinf(d[:, 0]))
        expected = np.sqrt(((new.matrices[3] - tr.matrices[6]) ** 2).sum())
        assert d[3, 6] == pytest.approx(expected)


class TestCalibrateTau:
    def test_integer_line_distances(self):
        # d_{t,t'} = |t - t'|, T=11, m=2: counting oracle puts tau in (1, 2]
        t = 11
        idx = np.arange(t)
        d = np.abs(idx[:, None] - idx[None, :]).astype(float)
        tau = calibrate_tau(d, 2)
        assert 1.0 < tau <= 2.0
        counts = [(np.sort(d[i][d[i] > 0]) < tau).sum() for i in range(t)]
        assert abs(np.mean(counts) - 2) <= 0.5

    def test_near_full_neighbourhood(self):
        # m = T-2 keeps every day inside the threshold (no fallback days)
        rng = np.random.default_rng(13)
        t = 12
        pts = rng.standard_normal((t, 3))
        d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
        tau = calibrate_tau(d, t - 2)
        counts = (d + np.diag(np.full(t, np.inf)) < tau).sum(axis=1)
        assert np.all(counts >= 1)
        assert abs(counts.mean() - (t - 2)) <= 0.5

    def test_counting_oracle_random(self):
        rng = np.random.default_rng(14)
        t = 60
        pts = rng.standard_normal((t, 5))
        d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
        tau = calibrate_tau(d, 25)
        counts = (d + np.diag(np.full(t, np.inf)) < tau).sum(axis=1)
        assert abs(counts.mean() - 25) <= 0.5

    def test_all_equal_distances_error(self):
        d = np.ones((8, 8))
        np.fill_diagonal(d, 0.0)
        with pytest.raises(ValueError, match="tie"):
            calibrate_tau(d, 3)

    def test_m_bounds(self):
        d = np.abs(np.subtract.outer(np.arange(5.0), np.arange(5.0)))
        with pytest.raises(ValueError):
            calibrate_tau(d, 0)
        with pytest.raises(ValueError):
            calibrate_tau(d, 4)


class TestAnalogueWeights:
    def test_equal_distances_split_evenly(self):
        w = analogue_weights(np.array([2.0, 2.0]), theta=1.0, tau=3.0)
        np.testing.assert_allclose(w, [0.5, 0.5])

    def test_single_inside_threshold(self):
        w = analogue_weights(np.array([1.0, 5.0, 9.0]), theta=1.0, tau=3.0)
        np.testing.assert_allclose(w, [1.0, 0.0, 0.0])

    def test_scalar_arithmetic_oracle(self):
        w = analogue_weights(np.array([1.0, 2.0]), theta=1.0, tau=3.0)
        raw = np.array([np.exp(-0.5), np.exp(-2.0)])
        np.testing.assert_allclose(w, raw / raw.sum(), atol=1e-12)
        assert w[0] == pytest.approx(0.8176, abs=1e-4)
        assert w[1] == pytest.approx(0.1824, abs=1e-4)

    def test_empty_support_signals_fallback(self):
        assert analogue_weights(np.array([5.0, 6.0]), theta=1.0, tau=3.0) is None

    def test_self_weight_forced_zero(self):
        w = analogue_weights(np.array([0.0, 1.0, 1.0]), 1.0, 2.0, self_index=0)
        assert w[0] == 0.0
        np.testing.assert_allclose(w[1:], [0.5, 0.5])

    def test_normalization_property(self):
        rng = np.random.default_rng(15)
        for _ in range(50):
            d = rng.uniform(0, 5, size=20)
            w = analogue_weights(d, theta=rng.uniform(0.1, 4), tau=2.5)
            if w is None:
                assert np.all(d >= 2.5)
                continue
            assert abs(w.sum() - 1.0) < 1e-12
            assert np.all(w >= 0)

    def test_bandwidth_flattens_weights(self):
        # ratio of largest to smallest positive weight non-increasing in theta
        rng = np.random.default_rng(16)
        for _ in range(30):
            d = rng.uniform(0.1, 2.4, size=12)
            thetas = np.sort(rng.uniform(0.05, 5.0, size=6))
            ratios = []
            for th in thetas:
                w = analogue_weights(d, theta=th, tau=2.5)
                pos = w[w > 0]
                ratios.append(pos.max() / pos.min())
            assert np.all(np.diff(ratios) <= 1e-9)


class TestAnalogueGraph:
    def build(self, seed=17, t=40, m=6):
        rng = np.random.default_rng(seed)
        emb = lag_embed(rng.standard_normal((t, 3)), 2)
        d = embedding_distances(emb)
        return AnalogueGraph.from_distances(d, m)

    def test_weight_matrix_rows(self):
        g = self.build()
        w = g.weights_matrix(theta=1.0)
        assert np.all(np.diag(w) == 0)
        has = g.has_neighbors
        np.testing.assert_allclose(w[has].sum(axis=1), 1.0, atol=1e-12)
        assert np.all(w[~has] == 0)
        assert np.all((w >= 0) & (w <= 1))

    def test_independence_graph(self):
        g = AnalogueGraph.independence(10)
        assert not g.has_neighbors.any()
        assert g.weight_pairs(3, 1.0) is None
        assert g.prior_mean(3, 1.0, np.ones(10)) == 0.0

    def test_theta_bounds_are_squared_distance_percentiles(self):
        g = self.build()
        finite = g.distances[np.isfinite(g.distances) & (g.distances > 0)] ** 2
        lo, hi = np.percentile(finite, [1, 99])
        assert g.theta_bounds[0] == pytest.approx(lo)
        assert g.theta_bounds[1] == pytest.approx(hi)

    def test_prior_mean_matches_dense(self):
        g = self.build()
        rng = np.random.default_rng(0)
        gamma = rng.standard_normal(g.n_days)
        w = g.weights_matrix(0.8)
        for t in range(g.n_days):
            assert g.prior_mean(t, 0.8, gamma) == pytest.approx(w[t] @ gamma, abs=1e-12)


class TestFieldStackIo:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(18)
        stacks = [toy_stack(rng, name="hgt500"), toy_stack(rng, name="tsurf")]
        save_field_stacks(tmp_path / "fs", stacks)
        loaded = load_field_stacks(tmp_path / "fs")
        assert [s.variable for s in loaded] == ["hgt500", "tsurf"]
        for a, b in zip(stacks, loaded):
            np.testing.assert_array_equal(a.values, b.values)
            assert list(map(str, a.days)) == b.days

    def test_missing_header(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_field_stacks(tmp_path / "nowhere")

    def test_rejects_nan_snapshots(self):
        vals = np.zeros((3, 2, 2))
        vals[1, 0, 0] = np.nan
        with pytest.raises(ValueError, match="missing"):
            FieldStack("x", vals, [0, 1, 2])


class TestBuildAnalogueInputs:
    def test_end_to_end(self):
        rng = np.random.default_rng(19)
        t = 50
        stacks = [toy_stack(rng, t=t, name="hgt500"), toy_stack(rng, t=t, name="tsurf")]
        inputs = build_analogue_inputs(stacks, q=3, lags=2, m=8)
        assert inputs.loadings.shape == (t, 6)
        # standardized loadings have unit training sd
        np.testing.assert_allclose(inputs.loadings.std(axis=0, ddof=1), 1.0, atol=1e-12)
        assert inputs.covariates.shape == (t, 7)
        np.testing.assert_array_equal(inputs.covariates[:, 0], 1.0)
        # projecting the training stacks reproduces the stored loadings
        np.testing.assert_allclose(inputs.project_days(stacks), inputs.loadings,
                                   atol=1e-10)
        new = inputs.embed_new(inputs.project_days(stacks))
        d = cross_distances(new, inputs.embedding)
        diag = np.diag(d)[2:]
        np.testing.assert_allclose(diag, 0.0, atol=1e-8)
