"""
Multiplicative replacement family: simple, lognormal, Kaplan-Meier and
Bayesian-multiplicative.
"""
import numpy as np
import pytest

from core.errors import ContractError
from core.imputers import gbm_cmult, get_imputer, impute, mult_km, mult_lognorm, mult_repl
from core.imputers.multiplicative import geometric_prior
from core.models.outcome import Status
from core.schemas import DirichletPrior


def zero_bearing(rng, n=60, D=6, p=0.2):
    """Lognormal matrix with the lowest p-fraction of columns 0 and 2 zeroed."""
    x = rng.lognormal(mean=3.0, sigma=1.0, size=(n, D))
    truth = x.copy()
    dl = np.tile(x.min(axis=0), (n, 1))
    for j in (0, 2):
        limit = np.quantile(x[:, j], p)
        dl[:, j] = limit
        x[x[:, j] < limit, j] = 0.0
    return truth, x, dl


def ratio_spread(x, out):
    """Per row, largest over smallest out/x among the positive input cells; 1 when ratios are kept."""
    positive = x > 0
    factor = np.where(positive, out / np.where(positive, x, 1.0), np.nan)
    return np.nanmax(factor, axis=1) / np.nanmin(factor, axis=1)


@pytest.mark.parametrize(
    "method, params",
    [
        ("mult_repl", {}),
        ("mult_repl", {"fraction": 0.5}),
        ("mult_lognorm", {}),
        ("mult_lognorm", {"random": True}),
        ("mult_KMSS", {}),
        ("mult_KMSS", {"random": True}),
    ],
)
def test_observed_ratios_preserved(method, params):
    gen = np.random.default_rng(41)
    _, x, dl = zero_bearing(gen, n=1000)
    out = impute(method, x, dl, rng=gen, **params)
    assert out.ok
    np.testing.assert_allclose(ratio_spread(x, out.imputed), 1.0, rtol=1e-12)


@pytest.mark.parametrize("prior", ["Perks", "Jeffreys", "BayesLaplace", "geometric"])
@pytest.mark.parametrize("output", ["prop", "p-counts"])
def test_gbm_observed_ratios_preserved(prior, output):
    counts = np.random.default_rng(42).integers(0, 20, size=(1000, 8))
    counts[:, 0] += 1
    out = gbm_cmult(counts, prior=prior, output=output)
    assert out.ok
    np.testing.assert_allclose(ratio_spread(counts.astype(float), out.imputed), 1.0, rtol=1e-12)


class TestMultRepl:
    def test_hand_row(self):
        out = mult_repl(np.array([0.0, 2.0, 8.0]), 1.0, fraction=0.65)
        np.testing.assert_allclose(out.imputed[0], [0.65, 1.87, 7.48], atol=1e-12)
        assert out.ok

    def test_no_zeros_unchanged(self):
        x = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        np.testing.assert_array_equal(mult_repl(x, 1.0).imputed, x)

    def test_row_total_preserved(self, rng):
        _, x, dl = zero_bearing(rng)
        out = mult_repl(x, dl).imputed
        np.testing.assert_allclose(out.sum(axis=1), x.sum(axis=1), rtol=1e-12)

    def test_negative_factor_is_degenerate(self):
        x = np.array([[0.0, 0.0, 1.0], [2.0, 3.0, 4.0]])
        out = mult_repl(x, 10.0)
        assert out.status is Status.DEGENERATE
        assert out.negative_rows.tolist() == [True, False]
        assert out.n_negative_rows == 1

    def test_missing_limits(self):
        with pytest.raises(ContractError):
            mult_repl(np.array([[0.0, 1.0], [1.0, 1.0]]), None)

    def test_bad_fraction(self):
        with pytest.raises(ContractError):
            mult_repl(np.array([[0.0, 1.0], [1.0, 1.0]]), 1.0, fraction=1.5)


class TestMultLognorm:
    def test_untouched_columns_and_bounds(self, rng):
        _, x, dl = zero_bearing(rng)
        out = mult_lognorm(x, dl)
        assert out.ok
        mask = x == 0
        assert np.all(out.imputed[mask] > 0)
        assert np.all(out.imputed[mask] < dl[mask])
        factor = out.imputed[:, 1] / x[:, 1]
        np.testing.assert_allclose(out.imputed[:, 3] / x[:, 3], factor, rtol=1e-12)

    def test_random_mode(self, rng):
        _, x, dl = zero_bearing(rng)
        out = mult_lognorm(x, dl, rng=np.random.default_rng(1), random=True)
        mask = x == 0
        assert np.all((out.imputed[mask] > 0) & (out.imputed[mask] < dl[mask]))
        again = mult_lognorm(x, dl, rng=np.random.default_rng(1), random=True)
        np.testing.assert_array_equal(out.imputed, again.imputed)

    def test_random_needs_rng(self, rng):
        _, x, dl = zero_bearing(rng)
        with pytest.raises(ContractError):
            mult_lognorm(x, dl, random=True)

    def test_fallback_column(self):
        x = np.array([[0.0, 5.0], [3.0, 6.0], [0.0, 7.0], [0.0, 8.0]])
        out = mult_lognorm(x, 2.0)
        assert out.notes["fallback_columns"] == [0]
        np.testing.assert_allclose(out.imputed[0, 0], 0.65 * 2.0)

    @pytest.mark.slow
    def test_beats_simple_replacement(self):
        wins = 0
        for seed in range(100):
            gen = np.random.default_rng(seed)
            truth = gen.lognormal(0.0, 2.0, size=(200, 3))
            x = truth.copy()
            limit = np.quantile(truth[:, 0], 0.2)
            mask = truth[:, 0] < limit
            x[mask, 0] = 0.0
            lognorm = mult_lognorm(x, limit).imputed
            simple = mult_repl(x, limit).imputed
            err_lognorm = np.abs(np.log(lognorm[mask, 0] / truth[mask, 0])).mean()
            err_simple = np.abs(np.log(simple[mask, 0] / truth[mask, 0])).mean()
            wins += err_lognorm < err_simple
        assert wins >= 50


class TestMultKm:
    def test_bounds_and_untouched(self, rng):
        _, x, dl = zero_bearing(rng)
        out = mult_km(x, dl)
        assert out.ok
        mask = x == 0
        assert np.all((out.imputed[mask] > 0) & (out.imputed[mask] < dl[mask]))
        np.testing.assert_allclose(out.imputed[:, 3] / x[:, 3], out.imputed[:, 1] / x[:, 1], rtol=1e-12)

    def test_random_draws_below_limit(self, rng):
        _, x, dl = zero_bearing(rng)
        out = mult_km(x, dl, rng=np.random.default_rng(4), random=True)
        mask = x == 0
        assert np.all(out.imputed[mask] < dl[mask])

    def test_single_distinct_value_fails(self):
        x = np.array([[0.0, 5.0], [3.0, 6.0], [3.0, 7.0], [0.0, 8.0]])
        out = mult_km(x, 2.0)
        assert out.is_failed
        assert "column 0" in out.reason

    def test_no_censoring(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(mult_km(x, 1.0).imputed, x)


class TestGbm:
    def test_bayes_laplace_hand_row(self):
        counts = np.array([[0, 3, 7], [2, 4, 4]])
        out = gbm_cmult(counts, prior="BayesLaplace")
        np.testing.assert_allclose(out.imputed[0], [1 / 13, 0.3 * 12 / 13, 0.7 * 12 / 13], atol=1e-12)

    def test_rows_sum_to_one(self, rng):
        counts = rng.integers(0, 20, size=(50, 8))
        counts[:, 0] += 1
        for prior in ("Perks", "Jeffreys", "BayesLaplace", "geometric"):
            out = gbm_cmult(counts, prior=prior)
            np.testing.assert_allclose(out.imputed.sum(axis=1), 1.0, atol=1e-12)
            assert np.all(out.imputed > 0)

    def test_no_zeros_is_closure(self):
        counts = np.array([[1, 3, 6], [2, 2, 6]])
        out = gbm_cmult(counts, prior="Perks")
        np.testing.assert_allclose(out.imputed, counts / counts.sum(axis=1, keepdims=True))

    def test_p_counts_keeps_totals(self):
        counts = np.array([[0, 3, 7], [2, 4, 4]])
        out = gbm_cmult(counts, prior="BayesLaplace", output="p-counts")
        np.testing.assert_allclose(out.imputed.sum(axis=1), [10, 10])
        assert out.imputed[0, 0] == pytest.approx(10 / 13)

    def test_haldane_is_degenerate(self):
        out = gbm_cmult(np.array([[0, 3, 7], [2, 4, 4]]), prior="Haldane")
        assert out.is_degenerate

    def test_custom_prior(self):
        prior = DirichletPrior.named("custom", 3, center=[0.5, 0.25, 0.25], strength=2.0)
        out = gbm_cmult(np.array([[0, 3, 7], [2, 4, 4]]), prior=prior)
        assert out.imputed[0, 0] == pytest.approx(2 / 12 * 0.5)

    def test_geometric_prior_shape(self, rng):
        counts = rng.integers(1, 30, size=(10, 5)).astype(float)
        strengths, centers = geometric_prior(counts)
        assert strengths.shape == (10,)
        np.testing.assert_allclose(centers.sum(axis=1), 1.0)
        assert np.all(strengths >= 5 - 1e-9)

    def test_bad_output(self):
        with pytest.raises(ContractError):
            gbm_cmult(np.array([[0, 3, 7], [2, 4, 4]]), output="counts")


class TestRegistry:
    def test_unknown_method_lists_ids(self):
        with pytest.raises(ContractError, match="mult_repl"):
            get_imputer("mult_rep")

    def test_dispatch_records_method_and_runtime(self):
        out = impute("mult_repl", np.array([[0.0, 2.0, 8.0], [1.0, 1.0, 1.0]]), 1.0)
        assert out.method == "mult_repl"
        assert out.runtime_s >= 0
