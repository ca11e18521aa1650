"""
Log-ratio EM (least squares and PLS) and data augmentation.
"""
import numpy as np
import pytest

from core.coda import alr, closure
from core.errors import ContractError
from core.imputers import impute, lr_da, lr_em, pls_em


@pytest.mark.parametrize(
    "method, params",
    [
        ("lr_em", {}),
        ("PLS", {"n_components": 2}),
        ("PLS", {"cv_folds": 5}),
        ("lr_da", {"n_iter": 200, "burn_in": 50}),
        ("lr_SVD", {"rank": 2}),
    ],
)
def test_observed_cells_untouched(aln_instance, method, params):
    _, x, dl = aln_instance
    out = impute(method, x, dl, rng=np.random.default_rng(9), **params)
    assert out.ok
    observed = x > 0
    np.testing.assert_array_equal(out.imputed[observed], x[observed])
    assert np.all(out.imputed[~observed] > 0)


class TestLrEm:
    def test_no_zeros_identity(self):
        x = np.array([[1.0, 2.0, 3.0], [2.0, 2.0, 1.0], [4.0, 1.0, 2.0]])
        out = lr_em(x, 1.0)
        np.testing.assert_array_equal(out.imputed, x)
        assert out.iterations == 0

    def test_imputations_respect_limits(self, aln_instance):
        _, x, dl = aln_instance
        out = lr_em(x, dl)
        assert out.ok
        mask = x == 0
        limits = np.broadcast_to(dl, x.shape)
        assert np.all(out.imputed[mask] <= limits[mask] * (1 + 1e-9))
        assert np.all(out.imputed[mask] > 0)
        np.testing.assert_array_equal(out.imputed[~mask], x[~mask])

    def test_reference_invariance(self, aln_instance):
        _, x, dl = aln_instance
        a = lr_em(x, dl, reference=3, tol=1e-10, max_iter=500)
        b = lr_em(x, dl, reference=4, tol=1e-10, max_iter=500)
        assert a.notes["reference"] == 3 and b.notes["reference"] == 4
        np.testing.assert_allclose(closure(a.imputed), closure(b.imputed), atol=1e-6)

    def test_default_reference_is_last_observed_part(self, aln_instance):
        _, x, dl = aln_instance
        assert lr_em(x, dl).notes["reference"] == 4

    def test_censored_reference_rejected(self, aln_instance):
        _, x, dl = aln_instance
        with pytest.raises(ContractError):
            lr_em(x, dl, reference=0)

    def test_no_reference_available(self):
        x = np.array([[0.0, 2.0, 3.0], [2.0, 0.0, 1.0], [4.0, 1.0, 0.0], [1.0, 2.0, 3.0]])
        out = lr_em(x, 0.5)
        assert out.is_failed
        assert "reference" in out.reason

    def test_too_few_rows(self):
        with pytest.raises(ContractError):
            lr_em(np.array([[0.0, 1.0, 2.0], [1.0, 1.0, 1.0]]), 0.5)

    def test_diagnostics(self, aln_instance):
        _, x, dl = aln_instance
        out = lr_em(x, dl, tol=1e-8, max_iter=1000)
        assert out.converged
        assert len(out.notes["max_change"]) == out.iterations
        assert out.notes["max_change"][-1] < 1e-8


class TestPlsEm:
    def test_full_rank_matches_lr_em(self, aln_instance):
        _, x, dl = aln_instance
        em = lr_em(x, dl, tol=1e-12, max_iter=1000)
        pls = pls_em(x, dl, n_components=3, tol=1e-12, max_iter=1000)
        assert pls.ok
        np.testing.assert_allclose(closure(pls.imputed), closure(em.imputed), atol=1e-6)

    def test_components_recorded_per_column(self, aln_instance):
        _, x, dl = aln_instance
        out = pls_em(x, dl, rng=np.random.default_rng(0), cv_folds=5)
        assert out.ok
        assert set(out.notes["n_components"]) == {0, 1, 2}
        assert all(1 <= c <= 3 for c in out.notes["n_components"].values())

    def test_respects_limits(self, aln_instance):
        _, x, dl = aln_instance
        out = pls_em(x, dl, n_components=2)
        mask = x == 0
        limits = np.broadcast_to(dl, x.shape)
        assert np.all(out.imputed[mask] <= limits[mask] * (1 + 1e-9))

    def test_screened_predictors(self, aln_instance):
        _, x, dl = aln_instance
        out = pls_em(x, dl, n_components=1, n_predictors=2)
        assert out.ok
        assert out.notes["n_components"] == {0: 1, 1: 1, 2: 1}

    def test_component_bounds(self, aln_instance):
        _, x, dl = aln_instance
        with pytest.raises(ContractError):
            pls_em(x, dl, n_components=4)
        with pytest.raises(ContractError):
            pls_em(x, dl, n_predictors=1)


class TestLrDa:
    def test_reproducible(self, aln_instance):
        _, x, dl = aln_instance
        a = lr_da(x, dl, rng=np.random.default_rng(5), n_iter=300, burn_in=100)
        b = lr_da(x, dl, rng=np.random.default_rng(5), n_iter=300, burn_in=100)
        np.testing.assert_array_equal(a.imputed, b.imputed)

    def test_below_limits(self, aln_instance):
        _, x, dl = aln_instance
        out = lr_da(x, dl, rng=np.random.default_rng(6), n_iter=300, burn_in=100)
        assert out.ok
        mask = x == 0
        limits = np.broadcast_to(dl, x.shape)
        assert np.all(out.imputed[mask] < limits[mask])
        assert out.notes["burn_in"] == 100

    def test_needs_rng(self, aln_instance):
        _, x, dl = aln_instance
        with pytest.raises(ContractError):
            lr_da(x, dl)

    def test_burn_in_bounds(self, aln_instance):
        _, x, dl = aln_instance
        with pytest.raises(ContractError):
            lr_da(x, dl, rng=np.random.default_rng(0), n_iter=100, burn_in=100)

    def test_wide_matrix_fails(self):
        gen = np.random.default_rng(2)
        x = gen.uniform(1, 10, size=(4, 8))
        x[0, 0] = 0.0
        out = lr_da(x, 0.5, rng=gen, n_iter=20, burn_in=5)
        assert out.is_failed

    @pytest.mark.slow
    def test_approaches_lr_em(self):
        gen = np.random.default_rng(3)
        n = 200
        z = gen.multivariate_normal([0.5, 0.2, -0.1], 0.3 * np.eye(3) + 0.1, size=n)
        x = np.exp(np.column_stack([z, np.zeros(n)]))
        dl = np.quantile(x, 0.2, axis=0)
        dl[2:] = x[:, 2:].min(axis=0)
        x[:, :2] = np.where(x[:, :2] < dl[:2], 0.0, x[:, :2])
        mask = (x == 0)[:, :3]
        em = alr(lr_em(x, dl, tol=1e-10, max_iter=1000).imputed).values
        diffs = []
        for seed in range(10):
            da = alr(lr_da(x, dl, rng=np.random.default_rng(seed), n_iter=1500, burn_in=500).imputed).values
            diffs.append(np.abs(da - em)[mask].mean())
        assert np.mean(diffs) < 0.1
