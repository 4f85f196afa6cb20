import numpy as np
import pytest

from refresh.errors import ConfigError, ParseError, SchemaError, ValidationError
from refresh.tabular import FeatureTable, Schema, load_csv, preprocess, split


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_sensitive_column_routed_to_vault(self, tmp_path):
        path = write(tmp_path, "f1,f2,label,race\n1,2,0,a\n3,4,1,b\n5,6,1,a\n")
        table, labels, vault = load_csv(path, Schema(label="label", sensitive="race"))
        assert table.names == ("f1", "f2")
        assert "race" not in table.names
        assert vault.attribute == "race"
        assert list(vault.values) == ["a", "b", "a"]
        assert labels.tolist() == [0, 1, 1]

    def test_roles_mapping(self, tmp_path):
        path = write(tmp_path, "id,f1,y,g\n1,0.5,1,m\n2,0.7,0,f\n")
        schema = Schema.from_roles({"id": "drop", "f1": "feature", "y": "label", "g": "sensitive"})
        table, labels, vault = load_csv(path, schema)
        assert table.names == ("f1",)
        assert vault.privileged == "m" and vault.reference == "f"

    def test_declared_label_mapping(self, tmp_path):
        path = write(tmp_path, "f1,outcome\n1,yes\n2,no\n3,yes\n")
        _, labels, _ = load_csv(path, Schema(label="outcome", label_map={"yes": 1, "no": 0}))
        assert labels.tolist() == [1, 0, 1]
        assert labels.dtype == np.int8

    def test_non_binary_label_rejected(self, tmp_path):
        path = write(tmp_path, "f1,label\n1,0\n2,2\n")
        with pytest.raises(ValidationError):
            load_csv(path, Schema(label="label"))

    def test_row_length_mismatch_cites_line(self, tmp_path):
        lines = ["a,b,c,label"] + [f"{i},{i},{i},{i % 2}" for i in range(5)] + ["1,2,1"]
        path = write(tmp_path, "\n".join(lines) + "\n")
        with pytest.raises(ParseError, match="line 7") as info:
            load_csv(path, Schema(label="label"))
        assert info.value.line == 7

    def test_missing_header(self, tmp_path):
        with pytest.raises(SchemaError):
            load_csv(write(tmp_path, ""), Schema(label="label"))

    def test_schema_column_absent(self, tmp_path):
        with pytest.raises(SchemaError):
            load_csv(write(tmp_path, "f1,y\n1,0\n"), Schema(label="label"))

    def test_empty_field_is_missing(self, tmp_path):
        table, _, _ = load_csv(write(tmp_path, "f1,label\n1,0\n,1\n"), Schema(label="label"))
        assert np.isnan(table.columns[0][1])

    def test_roles_reject_two_labels(self):
        with pytest.raises(ConfigError):
            Schema.from_roles({"a": "label", "b": "label"})


class TestPreprocess:
    def test_mean_imputation_then_standardization(self):
        table = FeatureTable(("x",), (np.array([1.0, 3.0, np.nan]),))
        out, report = preprocess(table)
        assert report.imputed == {"x": 1}
        assert report.means["x"] == pytest.approx(2.0)
        expected = (np.array([1.0, 3.0, 2.0]) - 2.0) / np.std([1.0, 3.0, 2.0])
        np.testing.assert_allclose(out.columns[0], expected, atol=1e-12)
        assert abs(out.columns[0].mean()) < 1e-12

    def test_categorical_one_hot(self):
        table = FeatureTable(("c", "x"), (np.array(["A", "B", "A", None], dtype=object),
                                          np.array([1.0, 2.0, 3.0, 4.0])))
        out, report = preprocess(table, categorical={"c"})
        assert report.onehot == {"c": ["c=A", "c=B"]}
        assert out.names == ("c=A", "c=B", "x")
        assert report.source_of("c=B") == "c"

    def test_constant_and_all_missing_dropped(self):
        table = FeatureTable(("k", "m", "x"), (np.full(4, 7.0), np.full(4, np.nan), np.arange(4.0)))
        out, report = preprocess(table)
        assert out.names == ("x",)
        assert report.dropped == {"k": "constant", "m": "all-missing"}

    def test_unknown_categorical(self):
        table = FeatureTable(("x",), (np.arange(3.0),))
        with pytest.raises(ConfigError):
            preprocess(table, categorical={"nope"})

    def test_standardized_on_training_rows(self, rng):
        X = rng.normal(5.0, 3.0, size=(300, 4))
        X[rng.random(X.shape) < 0.1] = np.nan
        table = FeatureTable.from_matrix(["a", "b", "c", "d"], X)
        train_rows = np.arange(0, 300, 3)
        out, _ = preprocess(table, fit_rows=train_rows)
        Z = out.matrix()[train_rows]
        assert np.all(np.abs(Z.mean(axis=0)) < 1e-9)
        assert np.all(np.abs(Z.std(axis=0) - 1) < 1e-9)


class TestSplit:
    def test_stratified_80_20(self):
        labels = np.array([1] * 40 + [0] * 60)
        s = split(None, labels, test_fraction=0.2, seed=7)
        assert len(s.test) == 20 and len(s.train) == 80
        assert abs(labels[s.test].sum() - 8) <= 1
        assert set(s.train) | set(s.test) == set(range(100))
        assert not set(s.train) & set(s.test)

    def test_deterministic(self):
        labels = np.array([0, 1] * 50)
        a = split(None, labels, test_fraction=0.2, seed=7)
        b = split(None, labels, test_fraction=0.2, seed=7)
        assert np.array_equal(a.train, b.train) and np.array_equal(a.test, b.test)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, 1.5])
    def test_fraction_out_of_range(self, fraction):
        with pytest.raises(ConfigError):
            split(None, np.array([0, 1] * 5), test_fraction=fraction, seed=0)

    def test_single_class_rejected(self):
        with pytest.raises(ValidationError):
            split(None, np.zeros(10), test_fraction=0.2, seed=0)


def test_round_trip_deterministic(tmp_path, rng):
    rows = ["a,b,cat,label,grp"]
    for i in range(60):
        a = "" if i % 11 == 0 else f"{rng.normal():.6f}"
        rows.append(f"{a},{rng.normal():.6f},{'xyz'[i % 3]},{i % 2},{'pq'[i % 2]}")
    path = write(tmp_path, "\n".join(rows) + "\n")
    outs = []
    for _ in range(2):
        table, labels, vault = load_csv(path, Schema(label="label", sensitive="grp"))
        table, _ = preprocess(table, categorical={"cat"})
        outs.append((table.matrix().copy(), split(table, labels, vault, 0.25, seed=3)))
    assert np.array_equal(outs[0][0], outs[1][0])
    assert np.array_equal(outs[0][1].test, outs[1][1].test)


def test_feature_table_invariants():
    with pytest.raises(ValueError):
        FeatureTable(("a", "a"), (np.zeros(2), np.zeros(2)))
    with pytest.raises(ValueError):
        FeatureTable(("a", "b"), (np.zeros(2), np.zeros(3)))
