import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal

from netpls.clustering import (
    COV_RIDGE,
    cluster_latent,
    fit_gmm,
    n_parameters,
    residual_blocks,
    select_k,
)
from netpls.errors import DegenerateClusterError, InvalidArgumentError
from netpls.model import Signature


def two_blobs(rng, n=120, d=2, sep=6.0):
    z = np.repeat([0, 1], n // 2)
    pts = rng.normal(size=(n, d)) + sep * z[:, None] * np.eye(d)[0]
    return pts, z


class TestParameterCount:
    @pytest.mark.parametrize("K, d, model, expected", [
        (1, 1, "spherical", 2),
        (2, 2, "spherical", 1 + 4 + 2),
        (2, 2, "diagonal", 1 + 4 + 4),
        (3, 2, "full", 2 + 6 + 9),
    ])
    def test_counts(self, K, d, model, expected):
        assert n_parameters(K, d, model) == expected


class TestFitGmm:
    def test_single_component_is_closed_form_mle(self, rng):
        pts = rng.normal(size=(200, 3)) @ np.array([[1, 0.3, 0], [0, 1, 0.2], [0, 0, 0.5]])
        g = fit_gmm(pts, 1, "full", seed=0)
        mu = pts.mean(axis=0)
        S = np.cov(pts.T, bias=True)
        np.testing.assert_allclose(g.means[0], mu, atol=1e-10)
        ridge = COV_RIDGE * np.trace(S) / 3
        np.testing.assert_allclose(g.covariances[0], S + ridge * np.eye(3), atol=1e-10)
        ll = multivariate_normal(mu, S + ridge * np.eye(3)).logpdf(pts).sum()
        assert g.loglik == pytest.approx(ll, rel=1e-10)
        assert g.bic == pytest.approx(-2 * ll + n_parameters(1, 3, "full") * np.log(200), rel=1e-10)

    def test_spherical_single_component(self, rng):
        pts = rng.normal(size=(100, 2)) * [1.0, 3.0]
        g = fit_gmm(pts, 1, "spherical", seed=0)
        var = np.mean((pts - pts.mean(axis=0)) ** 2)
        np.testing.assert_allclose(np.diag(g.covariances[0]), var, rtol=1e-5)
        assert g.covariances[0][0, 1] == 0.0

    def test_recovers_two_blobs(self, rng):
        pts, z = two_blobs(rng)
        g = fit_gmm(pts, 2, "full", seed=1)
        lab = g.assignments
        assert (lab == z).all() or (lab == 1 - z).all()
        np.testing.assert_allclose(np.sort(g.weights), [0.5, 0.5], atol=1e-2)

    @pytest.mark.parametrize("model", ["spherical", "diagonal", "full"])
    def test_loglik_monotone(self, rng, model):
        pts, _ = two_blobs(rng, sep=2.0)
        trace = np.asarray(fit_gmm(pts, 3, model, seed=2).loglik_trace)
        assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[1:]))

    def test_deterministic_seed(self, rng):
        pts, _ = two_blobs(rng, sep=2.0)
        a, b = fit_gmm(pts, 3, seed=5), fit_gmm(pts, 3, seed=5)
        np.testing.assert_array_equal(a.means, b.means)

    def test_invalid(self, rng):
        with pytest.raises(InvalidArgumentError):
            fit_gmm(rng.normal(size=(5, 2)), 6)
        with pytest.raises(InvalidArgumentError):
            fit_gmm(rng.normal(size=(5, 2)), 2, "tied")

    def test_weighted_single_component_is_weighted_mle(self, rng):
        pts = rng.normal(size=(150, 2)) @ np.array([[1, 0.5], [0, 0.7]])
        w = rng.exponential(size=150)
        g = fit_gmm(pts, 1, "full", seed=0, sample_weight=w)
        mu = w @ pts / w.sum()
        S = ((pts - mu).T * w) @ (pts - mu) / w.sum()
        ridge = COV_RIDGE * np.trace(np.cov(pts.T, bias=True)) / 2
        np.testing.assert_allclose(g.means[0], mu, atol=1e-10)
        np.testing.assert_allclose(g.covariances[0], S + ridge * np.eye(2), atol=1e-10)
        ll = (w * 150 / w.sum()) @ multivariate_normal(mu, S + ridge * np.eye(2)).logpdf(pts)
        assert g.loglik == pytest.approx(ll, rel=1e-10)

    def test_integer_weights_match_repeated_points(self, rng):
        pts, _ = two_blobs(rng, n=60)
        counts = rng.integers(1, 4, size=60)
        a = fit_gmm(pts, 2, "full", seed=3, sample_weight=counts)
        b = fit_gmm(np.repeat(pts, counts, axis=0), 2, "full", seed=3)
        order_a, order_b = np.argsort(a.means[:, 0]), np.argsort(b.means[:, 0])
        np.testing.assert_allclose(a.means[order_a], b.means[order_b], atol=1e-8)
        np.testing.assert_allclose(a.weights[order_a], b.weights[order_b], atol=1e-8)
        # The ridge scales with the unweighted spread, so covariances differ at its level.
        np.testing.assert_allclose(a.covariances[order_a], b.covariances[order_b], rtol=1e-5)

    def test_unit_weights_change_nothing(self, rng):
        pts, _ = two_blobs(rng, sep=2.0)
        a = fit_gmm(pts, 3, "diagonal", seed=4)
        b = fit_gmm(pts, 3, "diagonal", seed=4, sample_weight=np.full(len(pts), 2.5))
        np.testing.assert_allclose(a.means, b.means, rtol=1e-12)
        assert a.loglik == pytest.approx(b.loglik, rel=1e-12)

    @pytest.mark.parametrize("w", [np.zeros(10), -np.ones(10), np.ones(9), np.full(10, np.nan)])
    def test_invalid_weights(self, rng, w):
        with pytest.raises(InvalidArgumentError):
            fit_gmm(rng.normal(size=(10, 2)), 2, sample_weight=w)

    def test_coincident_points_do_not_crash(self):
        pts = np.zeros((10, 2))
        g = fit_gmm(pts, 1, "full", seed=0)
        assert np.isfinite(g.loglik)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.sampled_from(["spherical", "diagonal", "full"]))
def test_em_loglik_never_decreases(seed, K, model):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(40, 2)) + rng.integers(0, 3, size=40)[:, None] * 2.0
    trace = np.asarray(fit_gmm(pts, K, model, seed=seed, n_init=2).loglik_trace)
    assert np.all(np.diff(trace) >= -1e-8 * np.maximum(np.abs(trace[1:]), 1.0))


class TestSelectK:
    def test_picks_two(self, rng):
        pts, _ = two_blobs(rng)
        g = select_k(pts, k_max=5, seed=0)
        assert g.K == 2
        assert g.bic == min(g.bic_table.values())

    def test_one_dimension_fits_first_family_only(self, rng):
        pts = np.concatenate([rng.normal(0, 0.1, 50), rng.normal(2, 0.1, 50)])
        g = select_k(pts, k_max=4, seed=0)
        assert g.K == 2
        assert {fam for _, fam in g.bic_table} == {"spherical"}

    def test_single_cluster(self, rng):
        assert select_k(rng.normal(size=(150, 2)), k_max=4, seed=0).K == 1

    def test_errors(self, rng):
        with pytest.raises(InvalidArgumentError):
            select_k(rng.normal(size=(10, 2)), k_max=0)
        with pytest.raises(InvalidArgumentError):
            select_k(rng.normal(size=(10, 2)), cov_models=("tied",))

    def test_threads_identical(self, rng):
        pts, _ = two_blobs(rng, n=60)
        a = select_k(pts, k_max=3, seed=4)
        b = select_k(pts, k_max=3, seed=4, threads=2)
        assert a.bic_table == b.bic_table


class TestResidualBlocks:
    def test_theta_from_means(self, rng):
        pts, z = two_blobs(rng)
        sig = Signature(1, 1)
        gmm, blocks = cluster_latent(pts, sig, K=2, seed=0)
        D = np.diag([1.0, -1.0])
        np.testing.assert_allclose(blocks.theta, gmm.means @ D @ gmm.means.T)
        np.testing.assert_array_equal(blocks.assignments, gmm.assignments)

    def test_dimension_mismatch(self, rng):
        pts, _ = two_blobs(rng)
        g = fit_gmm(pts, 2, seed=0)
        with pytest.raises(InvalidArgumentError):
            residual_blocks(g, Signature(1))


class TestSpecExamples:
    def test_point_masses(self, rng):
        from netpls.metrics import adjusted_rand_index
        z = np.repeat([0, 1], 100)
        pts = np.where(z == 0, -1.0, 1.0)[:, None] + rng.normal(0, 0.01, size=(200, 1))
        g = fit_gmm(pts, 2, seed=0)
        assert adjusted_rand_index(g.assignments, z) == 1.0

    def test_identical_points(self):
        g = fit_gmm(np.full((20, 2), 3.0), 1, seed=0)
        np.testing.assert_allclose(g.means[0], [3.0, 3.0])
        assert np.all(np.linalg.eigvalsh(g.covariances[0]) > 0)

    def test_single_cluster_at_origin(self):
        _, blocks = cluster_latent(np.zeros((10, 1)), Signature(1), K=1)
        np.testing.assert_array_equal(blocks.theta, [[0.0]])

    def test_type2_means(self):
        from netpls.clustering import GmmFit
        means = np.sqrt([[0.6, 0.3], [0.2, 0.4]])
        gmm = GmmFit(2, "full", np.array([0.5, 0.5]), means, np.stack([np.eye(2)] * 2), 0.0, 0.0,
                     np.array([[1.0, 0.0], [0.0, 1.0]]))
        np.testing.assert_allclose(residual_blocks(gmm, Signature(1, 1)).theta, [[0.3, 0.0], [0.0, -0.2]],
                                   atol=1e-15)

    def test_weights_and_responsibilities_normalized(self, rng):
        pts, _ = two_blobs(rng, sep=2.0)
        g = fit_gmm(pts, 3, seed=0)
        assert abs(g.weights.sum() - 1) < 1e-10
        np.testing.assert_allclose(g.responsibilities.sum(axis=1), 1.0, atol=1e-10)

    def test_label_symmetry(self, rng):
        # Component relabeling leaves the likelihood unchanged.
        from netpls.clustering import _Moments, _log_gauss, _logsumexp
        pts, _ = two_blobs(rng, sep=2.0)
        g = fit_gmm(pts, 3, seed=0)
        perm = [2, 0, 1]

        def ll(w, m, c):
            lp = _log_gauss(pts, _Moments(pts), m[None], c[None], "full") + np.log(w)[None, None, :]
            return _logsumexp(lp, axis=2).sum()

        assert ll(g.weights, g.means, g.covariances) == pytest.approx(
            ll(g.weights[perm], g.means[perm], g.covariances[perm]), rel=1e-12)

    def test_forcing_k_reduces_uncertainty(self):
        # Three-component BIC fits on two-block data split a cluster and leave
        # ambiguous memberships; K=2 is nearly certain.
        from netpls.estimator import FitConfig, fit
        from netpls.simulate import simulate_type1
        A, truth = simulate_type1(300, "a", seed=0)
        res = fit(A, truth.X, FitConfig(num_inits=3, max_iter=100))
        g2 = fit_gmm(res.Lambda, 2, seed=0)
        g3 = fit_gmm(res.Lambda, 3, seed=0)
        assert g2.mean_uncertainty < 0.1 * g3.mean_uncertainty
