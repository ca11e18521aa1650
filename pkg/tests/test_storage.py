"""
Run directory persistence.
"""
import json
import os
from datetime import datetime, timezone

import pandas as pd
import pytest

from core.errors import StorageError
from core.schemas import MetricRecord, RunManifest
from core.storage_service import MANIFEST_NAME, PARTIAL_NAME, RESULTS_NAME, ResultStore, get_storage_config


def make_record(method="add1", m=3, p=0.2, rep=0, status="ok", runtime_s=0.5, ced_basis="observed"):
    metrics = {"ced": 0.25, "adcs": 0.125} if status == "ok" else {}
    return MetricRecord(
        method=method, m=m, p=p, rep=rep, status=status, runtime_s=runtime_s, ced_basis=ced_basis, **metrics
    )


class TestResultStore:
    def test_creates_directory(self, tmp_path):
        out = tmp_path / "runs" / "a"
        store = ResultStore(str(out))
        assert out.is_dir()
        assert store.path("x.csv") == os.path.join(str(out), "x.csv")

    def test_append_and_reload(self, tmp_path):
        store = ResultStore(str(tmp_path))
        store.append([make_record(rep=0), make_record(rep=0, method="lr_em", status="failed", runtime_s=None)])
        store.append([make_record(rep=1)])
        with open(store.path(PARTIAL_NAME)) as f:
            lines = f.read().splitlines()
        assert lines[0] == "method,variant,m,p,rep,status,ced,adcs,runtime_s,neg_rows,ced_basis"
        assert lines[1].endswith(",observed")
        assert len(lines) == 4

        loaded = store.load_partial()
        assert len(loaded) == 3
        failed = [r for r in loaded if r.status == "failed"][0]
        assert failed.ced is None and failed.runtime_s is None
        assert loaded[0].ced == 0.25
        assert loaded[0].ced_basis == "observed"
        assert store.completed_cells(loaded) == {(3, 0.2, 0), (3, 0.2, 1)}

    def test_nothing_to_resume(self, tmp_path):
        store = ResultStore(str(tmp_path))
        assert store.load_partial() == []
        assert store.completed_cells() == set()

    def test_finalize_sorts(self, tmp_path):
        store = ResultStore(str(tmp_path))
        records = [make_record(method="lr_em", rep=1), make_record(method="add1", rep=1), make_record(method="add1", rep=0)]
        path = store.finalize(records)
        frame = pd.read_csv(path)
        assert list(frame["method"]) == ["add1", "add1", "lr_em"]
        assert list(frame["rep"]) == [0, 1, 1]

    def test_omit_runtime(self, tmp_path):
        store = ResultStore(str(tmp_path), omit_runtime=True)
        store.finalize([make_record()])
        with open(store.path(RESULTS_NAME)) as f:
            row = f.read().splitlines()[1]
        assert row == "add1,raw,3,0.2,0,ok,0.25,0.125,,0"

    def test_manifest(self, tmp_path):
        store = ResultStore(str(tmp_path))
        manifest = RunManifest(
            run_id="a",
            command="zerobench bench-sparsity",
            config={"methods": ["add1"]},
            base_seed=7,
            started=datetime(2024, 1, 1, tzinfo=timezone.utc),
            n_records=2,
            n_failed=1,
            ced_basis={"all": 1, "observed": 3},
        )
        path = store.write_manifest(manifest)
        assert os.path.basename(path) == MANIFEST_NAME
        with open(path) as f:
            data = json.load(f)
        assert data["base_seed"] == 7
        assert data["n_failed"] == 1
        assert data["config"] == {"methods": ["add1"]}
        assert data["ced_basis"] == {"all": 1, "observed": 3}

    def test_aggregates(self, tmp_path):
        store = ResultStore(str(tmp_path))
        paths = store.write_aggregates({"runtime": pd.DataFrame({"method": ["add1"], "n": [3]})})
        assert paths == [os.path.join(str(tmp_path), "aggregates", "runtime.csv")]
        assert pd.read_csv(paths[0]).iloc[0]["n"] == 3

    def test_unwritable_location(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(StorageError):
            ResultStore(str(blocker / "run"))

    def test_mirror_is_noop_locally(self, tmp_path):
        store = ResultStore(str(tmp_path))
        assert store.mirror() == 0

    def test_storage_config(self, tmp_path):
        info = get_storage_config(str(tmp_path))
        assert info["out_dir"] == os.path.abspath(str(tmp_path))
        assert info["gcs_bucket"] is None
