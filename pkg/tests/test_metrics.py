"""
ADCS, CED, failure accounting and the plot aggregates.
"""
import numpy as np
import pandas as pd
import pytest

from bench.plotdata import aggregate, summarize
from core.coda import ilr_pivot
from core.errors import ContractError, DegenerateInputError
from core.metrics import adcs, ced, ced_reference_rows, failure_accounting, records_frame
from core.schemas import MetricRecord


def clr_rows(x):
    logs = np.log(np.asarray(x, dtype=float))
    return logs - logs.mean(axis=1, keepdims=True)


def adcs_by_clr(a, b):
    # the CLR covariance is the ILR covariance rotated into R^D
    diff = np.cov(clr_rows(a), rowvar=False) - np.cov(clr_rows(b), rowvar=False)
    return np.sqrt((diff**2).sum()) / (a.shape[1] - 1)


def aitchison_loop(x, y):
    cx, cy = clr_rows([x])[0], clr_rows([y])[0]
    return np.sqrt(sum((u - v) ** 2 for u, v in zip(cx, cy)))


class TestAdcs:
    def test_identity(self, strict_compositions):
        assert adcs(strict_compositions, strict_compositions) == 0.0

    def test_matches_clr_covariance(self):
        a = np.array([[1.0, 2.0, 3.0], [2.0, 1.0, 4.0], [3.0, 3.0, 1.0], [1.0, 5.0, 2.0]])
        b = a.copy()
        b[0, 0] = 0.4
        b[2, 1] = 0.9
        assert adcs(a, b) == pytest.approx(adcs_by_clr(a, b), abs=1e-12)

    def test_closure_invariant(self, rng):
        a = rng.dirichlet(np.ones(5), size=30)
        b = rng.dirichlet(np.ones(5), size=30)
        scales = rng.uniform(1, 1000, size=(30, 1))
        assert adcs(a * scales, b) == pytest.approx(adcs(a, b), abs=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            adcs(np.ones((3, 3)), np.ones((3, 4)))

    def test_symmetric(self, rng):
        a = rng.dirichlet(np.ones(5), size=30)
        b = rng.dirichlet(np.full(5, 3.0), size=30)
        assert adcs(a, b) == pytest.approx(adcs(b, a), abs=1e-15)

    @pytest.mark.parametrize("pivot", range(5))
    def test_pivot_independent(self, rng, pivot):
        a = rng.dirichlet(np.ones(5), size=30)
        b = rng.dirichlet(np.full(5, 3.0), size=30)
        S = np.cov(ilr_pivot(a, pivot=pivot).values, rowvar=False)
        S_imp = np.cov(ilr_pivot(b, pivot=pivot).values, rowvar=False)
        by_pivot = np.linalg.norm(S - S_imp, ord="fro") / 4
        assert adcs(a, b) == pytest.approx(by_pivot, abs=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_part_order_independent(self, seed):
        gen = np.random.default_rng(seed)
        a = gen.dirichlet(np.ones(6), size=25)
        b = gen.dirichlet(np.full(6, 2.0), size=25)
        order = gen.permutation(6)
        assert adcs(a[:, order], b[:, order]) == pytest.approx(adcs(a, b), abs=1e-12)


class TestCed:
    truth = np.array(
        [
            [10.0, 20.0, 30.0],
            [15.0, 5.0, 40.0],
            [30.0, 30.0, 5.0],
            [8.0, 16.0, 2.0],
            [12.0, 12.0, 12.0],
        ]
    )

    def test_perfect_imputation(self):
        mask = np.zeros(self.truth.shape, dtype=bool)
        mask[0, 0] = True
        assert ced(self.truth, self.truth, mask) == 0.0

    def test_hand_oracle(self):
        imputed = self.truth.copy()
        imputed[0, 0] = 4.0
        imputed[1, 1] = 1.0
        mask = np.zeros(self.truth.shape, dtype=bool)
        mask[0, 0] = mask[1, 1] = True
        numerator = np.mean([aitchison_loop(self.truth[i], imputed[i]) for i in (0, 1)])
        spread = max(aitchison_loop(self.truth[i], self.truth[j]) for i in (2, 3, 4) for j in (2, 3, 4))
        assert ced(self.truth, imputed, mask) == pytest.approx(numerator / spread, abs=1e-12)

    def test_all_rows_denominator(self):
        imputed = self.truth.copy()
        imputed[0, 0] = 4.0
        mask = np.zeros(self.truth.shape, dtype=bool)
        mask[0, 0] = True
        spread = max(aitchison_loop(self.truth[i], self.truth[j]) for i in range(5) for j in range(5))
        expected = aitchison_loop(self.truth[0], imputed[0]) / spread
        assert ced(self.truth, imputed, mask, denominator="all") == pytest.approx(expected, abs=1e-12)

    def test_auto_falls_back_to_all(self):
        mask = np.zeros(self.truth.shape, dtype=bool)
        mask[:4, 0] = True
        reference, basis = ced_reference_rows(mask, "auto")
        assert basis == "all" and reference.all()
        with pytest.raises(ContractError):
            ced(self.truth, self.truth, mask, denominator="observed")

    def test_auto_prefers_observed(self):
        mask = np.zeros(self.truth.shape, dtype=bool)
        mask[0, 0] = True
        reference, basis = ced_reference_rows(mask, "auto")
        assert basis == "observed"
        assert reference.tolist() == [False, True, True, True, True]

    def test_identical_reference_rows(self):
        truth = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [5.0, 1.0, 1.0]])
        mask = np.zeros(truth.shape, dtype=bool)
        mask[3, 1] = True
        with pytest.raises(DegenerateInputError):
            ced(truth, truth, mask)

    @pytest.mark.parametrize("row", [0, 1, 3])
    @pytest.mark.parametrize("c", [0.1, 7.0])
    def test_row_scaling_invariant(self, row, c):
        imputed = self.truth.copy()
        imputed[0, 0] = 4.0
        imputed[1, 1] = 1.0
        mask = np.zeros(self.truth.shape, dtype=bool)
        mask[0, 0] = mask[1, 1] = True
        base = ced(self.truth, imputed, mask)
        truth_scaled, imputed_scaled = self.truth.copy(), imputed.copy()
        truth_scaled[row] *= c
        imputed_scaled[row] *= c
        assert ced(truth_scaled, imputed_scaled, mask) == pytest.approx(base, abs=1e-12)
        # rescaling only the imputed row leaves its composition unchanged too
        assert ced(self.truth, imputed_scaled, mask) == pytest.approx(base, abs=1e-12)

    def test_needs_censored_row(self):
        with pytest.raises(ContractError):
            ced(self.truth, self.truth, np.zeros(self.truth.shape, dtype=bool))


def record(method="lr_em", variant="raw", m=4, p=0.2, rep=0, status="ok", ced=0.1, adcs=0.2, runtime_s=1.0, neg_rows=0):
    if status != "ok":
        ced = adcs = None
    return MetricRecord(
        method=method, variant=variant, m=m, p=p, rep=rep, status=status,
        ced=ced, adcs=adcs, runtime_s=runtime_s, neg_rows=neg_rows,
    )


class TestFailureAccounting:
    def test_rates(self):
        records = [
            record(rep=0, runtime_s=1.0),
            record(rep=1, runtime_s=3.0),
            record(rep=2, status="failed", runtime_s=None),
            record(rep=3, status="degenerate", neg_rows=2),
        ]
        records += [r.model_copy(update={"variant": "ceil"}) for r in records]
        table = failure_accounting(records)
        assert len(table) == 1
        row = table.iloc[0]
        assert row["failure_rate"] == 0.25
        assert row["degenerate_rate"] == 0.25
        assert row["negative_row_rate"] == 0.25
        assert row["mean_runtime_s"] == 2.0
        assert row["n"] == 4

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_order_independent(self, seed):
        gen = np.random.default_rng(seed)
        statuses = ["ok", "ok", "failed", "degenerate"]
        records = [
            record(
                method=method,
                m=m,
                p=p,
                rep=rep,
                status=statuses[(rep + m) % 4],
                runtime_s=float(gen.uniform(0.1, 2.0)),
                neg_rows=int(rep % 3 == 0),
            )
            for method in ("lr_em", "GBM")
            for m in (4, 8)
            for p in (0.2, 0.4)
            for rep in range(6)
        ]
        shuffled = [records[i] for i in gen.permutation(len(records))]
        pd.testing.assert_frame_equal(failure_accounting(shuffled), failure_accounting(records))

    def test_empty(self):
        assert failure_accounting([]).empty

    def test_records_frame_columns(self):
        frame = records_frame([record()])
        assert list(frame.columns) == ["method", "variant", "m", "p", "rep", "status", "ced", "adcs", "runtime_s", "neg_rows"]


class TestPlotData:
    def test_quartiles(self):
        records = [record(rep=i, ced=float(i + 1), adcs=float(i + 1)) for i in range(4)]
        stats = summarize(records_frame(records), ["method", "variant", "m", "p"])
        row = stats.iloc[0]
        assert (row["ced_q1"], row["ced_median"], row["ced_q3"]) == pytest.approx((1.75, 2.5, 3.25))
        assert row["ced_mean"] == pytest.approx(2.5)
        assert row["n_ok"] == 4

    def test_aggregate_tables(self):
        records = [record(p=p, rep=r, ced=0.1 * (r + 1)) for p in (0.2, 0.5) for r in range(2)]
        records.append(record(p=0.5, rep=2, status="failed", runtime_s=None))
        frames = aggregate(records)
        assert set(frames) == {"metrics_by_p", "metrics_avg_p", "runtime", "failures"}
        assert len(frames["metrics_by_p"]) == 2
        avg = frames["metrics_avg_p"].iloc[0]
        assert avg["n_ok"] == 4
        assert avg["ced_mean"] == pytest.approx(0.15)
        runtime = frames["runtime"]
        assert list(runtime["n"]) == [2, 2]

    def test_empty_is_rejected(self):
        with pytest.raises(ContractError):
            aggregate([])
