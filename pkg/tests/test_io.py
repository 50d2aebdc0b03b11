import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from netpls.errors import (
    AsymmetricAdjacencyError,
    DimensionMismatchError,
    InputError,
    MissingValueError,
    SelfLoopError,
)
from netpls.io import (
    Dataset,
    load_adjacency,
    load_dataset,
    load_matrix,
    read_assignments,
    read_json,
    read_manifest,
    save_dataset,
    save_matrix,
    write_assignments,
    write_json,
    write_manifest,
)


def write_text(path, text):
    path.write_text(text)
    return path


class TestMatrices:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        M = rng.normal(size=(7, 5)) * 10.0 ** rng.integers(-20, 20, size=(7, 5))
        save_matrix(tmp_path / "m.csv", M)
        np.testing.assert_array_equal(load_matrix(tmp_path / "m.csv"), M)

    def test_missing_value(self, tmp_path):
        with pytest.raises(MissingValueError):
            load_matrix(write_text(tmp_path / "m.csv", "0,nan\n1,0\n"))

    def test_not_numeric(self, tmp_path):
        with pytest.raises(InputError):
            load_matrix(write_text(tmp_path / "m.csv", "0,x\n1,0\n"))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_matrix_csv_round_trip(tmp_path_factory, M):
    path = tmp_path_factory.mktemp("rt") / "m.csv"
    save_matrix(path, M)
    np.testing.assert_array_equal(load_matrix(path), M)


class TestAdjacency:
    def test_edge_list(self, tmp_path):
        A, fmt = load_adjacency(write_text(tmp_path / "e.csv", "1,2\n2,3\n"))
        assert fmt == "edgelist"
        np.testing.assert_array_equal(A, [[0, 1, 0], [1, 0, 1], [0, 1, 0]])

    def test_dense_two_by_two(self, tmp_path):
        A, fmt = load_adjacency(write_text(tmp_path / "a.csv", "0,1\n1,0\n"))
        assert fmt == "dense" and A[0, 1] == 1

    def test_single_edge_list(self, tmp_path):
        A, fmt = load_adjacency(write_text(tmp_path / "e.csv", "1,2\n"))
        assert fmt == "edgelist" and A.shape == (2, 2)

    def test_edge_list_with_isolated_nodes(self, tmp_path):
        A, _ = load_adjacency(write_text(tmp_path / "e.csv", "1,2\n"), "edgelist", n=4)
        assert A.shape == (4, 4) and A.sum() == 2

    @pytest.mark.parametrize("text, error", [
        ("0,1,0\n0,0,1\n0,1,0\n", AsymmetricAdjacencyError),
        ("1,1,0\n1,0,1\n0,1,0\n", SelfLoopError),
        ("0,nan,0\nnan,0,1\n0,1,0\n", MissingValueError),
        ("0,1,0\n1,0,1\n", DimensionMismatchError),
        ("0,2,0\n2,0,1\n0,1,0\n", InputError),
    ])
    def test_distinct_errors(self, tmp_path, text, error):
        with pytest.raises(error):
            load_adjacency(write_text(tmp_path / "a.csv", text), "dense")

    def test_edge_list_self_loop(self, tmp_path):
        with pytest.raises(SelfLoopError):
            load_adjacency(write_text(tmp_path / "e.csv", "1,2\n3,3\n"))


class TestDataset:
    def make(self, tmp_path):
        write_text(tmp_path / "adj.csv", "1,2\n2,3\n")
        write_text(tmp_path / "grp.csv", "group\nA\nA\nB\n")
        write_text(tmp_path / "age.csv", "age\n1.0\n3.0\n4.5\n")
        write_text(tmp_path / "dist.csv", "5,1,2\n1,0,3\n2,3.5,0\n")
        write_manifest(tmp_path / "manifest.csv", [
            dict(name="group", level="node", kind="categorical", path="grp.csv"),
            dict(name="age", level="node", kind="quantitative", path="age.csv"),
            dict(name="dist", level="edge", kind="quantitative", path="dist.csv"),
        ])
        return load_dataset(tmp_path / "adj.csv", tmp_path / "manifest.csv")

    def test_construction(self, tmp_path, caplog):
        ds = self.make(tmp_path)
        assert ds.covariate_names == ["group", "age", "dist"] and ds.p == 3 and ds.n == 3
        np.testing.assert_array_equal(ds.edge_covariates[0], [[0, 1, 0], [1, 0, 0], [0, 0, 0]])
        np.testing.assert_array_equal(ds.edge_covariates[1], [[0, 2, 3.5], [2, 0, 1.5], [3.5, 1.5, 0]])
        # Asymmetric entry averaged, diagonal cleared.
        np.testing.assert_array_equal(ds.edge_covariates[2], [[0, 1, 2], [1, 0, 3.25], [2, 3.25, 0]])
        assert any("asymmetric" in r.message for r in caplog.records)
        assert any("diagonal set to zero" in s for s in ds.provenance["construction"])

    def test_round_trip(self, tmp_path):
        ds = self.make(tmp_path)
        adj, manifest = save_dataset(ds, tmp_path / "out")
        back = load_dataset(adj, manifest)
        np.testing.assert_array_equal(back.adjacency, ds.adjacency)
        np.testing.assert_array_equal(back.edge_covariates, ds.edge_covariates)
        assert back.covariate_names == ds.covariate_names
        assert [c["kind"] for c in back.provenance["covariates"]] == ["categorical", "quantitative", "quantitative"]

    def test_node_count_mismatch(self, tmp_path):
        write_text(tmp_path / "adj.csv", "0,1\n1,0\n")
        write_text(tmp_path / "x.csv", "x\n1\n2\n3\n")
        write_manifest(tmp_path / "m.csv", [dict(name="x", level="node", kind="quantitative", path="x.csv")])
        with pytest.raises(DimensionMismatchError):
            load_dataset(tmp_path / "adj.csv", tmp_path / "m.csv")

    def test_missing_covariate_value(self, tmp_path):
        write_text(tmp_path / "adj.csv", "0,1\n1,0\n")
        write_text(tmp_path / "x.csv", "x\n1\nNA\n")
        write_manifest(tmp_path / "m.csv", [dict(name="x", level="node", kind="quantitative", path="x.csv")])
        with pytest.raises(MissingValueError):
            load_dataset(tmp_path / "adj.csv", tmp_path / "m.csv")

    def test_bad_manifest(self, tmp_path):
        write_text(tmp_path / "m.csv", "name,level,kind,path\nx,graph,quantitative,x.csv\n")
        with pytest.raises(InputError):
            read_manifest(tmp_path / "m.csv")

    def test_no_covariates(self, tmp_path):
        write_text(tmp_path / "adj.csv", "0,1\n1,0\n")
        ds = load_dataset(tmp_path / "adj.csv")
        assert ds.p == 0 and ds.edge_covariates.shape == (0, 2, 2)


class TestJsonAndAssignments:
    def test_json_numpy(self, tmp_path):
        write_json(tmp_path / "r.json", {"a": np.arange(3), "b": np.float64(0.5), "c": np.nan})
        assert read_json(tmp_path / "r.json") == {"a": [0, 1, 2], "b": 0.5, "c": None}

    def test_bad_json(self, tmp_path):
        with pytest.raises(InputError):
            read_json(write_text(tmp_path / "r.json", "{"))

    def test_assignments_one_based(self, tmp_path):
        write_assignments(tmp_path / "a.csv", [1, 0, 1], nodes=[2, 0, 1])
        assert (tmp_path / "a.csv").read_text().splitlines()[1] == "3,2"
        np.testing.assert_array_equal(read_assignments(tmp_path / "a.csv"), [0, 1, 1])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(0, 8), min_size=1, max_size=40))
    def test_assignment_round_trip(self, tmp_path_factory, labels):
        path = tmp_path_factory.mktemp("as") / "a.csv"
        write_assignments(path, labels)
        np.testing.assert_array_equal(read_assignments(path), labels)
