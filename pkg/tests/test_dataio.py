import numpy as np
import pytest

from ganids.dataio import (
    CICIDS2017_GROUPING,
    ClassGrouping,
    CleanDataset,
    clean,
    format_counts,
    load_csv,
    load_dir,
    normalize_label,
    read_cache,
    regroup_labels,
    write_cache,
)
from ganids.errors import DataError, EmptyDatasetError, ParseError, UnmappedLabelError


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_two_rows(tmp_path):
    t = load_csv(write(tmp_path / "a.csv", "x,y,Label\n1,2,BENIGN\n3,4,Bot\n"))
    assert t.n_rows == 2
    assert t.feature_names == ("x", "y")
    assert t.values.tolist() == [[1.0, 2.0], [3.0, 4.0]]


def test_infinity_cell_is_marked_not_dropped(tmp_path):
    t = load_csv(write(tmp_path / "a.csv", "x,y,Label\n1,Infinity,BENIGN\n3,4,Bot\n"))
    assert t.n_rows == 2
    assert t.invalid_mask().tolist() == [[False, True], [False, False]]


@pytest.mark.parametrize("cell", ["Infinity", "-Infinity", "inf", "INF", "NaN", "nan", "", "abc"])
def test_invalid_spellings(tmp_path, cell):
    t = load_csv(write(tmp_path / "a.csv", f"x,Label\n{cell},A\n1,A\n"))
    assert not np.isfinite(t.values[0, 0])
    assert clean(t).n_rows == 1


def test_header_whitespace_and_label_column(tmp_path):
    t = load_csv(write(tmp_path / "a.csv", " x , Label\n1, BENIGN \n"))
    assert t.column_names == ("x", "Label")
    with pytest.raises(ParseError, match="label column"):
        load_csv(write(tmp_path / "b.csv", "x,y\n1,2\n"))


def test_ragged_row_reports_line(tmp_path):
    with pytest.raises(ParseError, match="line 3"):
        load_csv(write(tmp_path / "a.csv", "x,y,Label\n1,2,A\n1,A\n"))


def test_empty_file(tmp_path):
    with pytest.raises(ParseError):
        load_csv(write(tmp_path / "a.csv", ""))


def test_clean_drops_inf_rows_and_keeps_values(tmp_path):
    t = load_csv(write(tmp_path / "a.csv", "x,y,Label\n0.1,2,A\n3,inf,B\n5,6e300,A\n"))
    ds = clean(t)
    assert ds.n_rows == 2
    assert ds.features.tolist() == [[0.1, 2.0], [5.0, 6e300]]
    assert ds.class_counts == {"A": 2}


def test_clean_empty():
    from ganids.dataio import RawFlowTable

    t = RawFlowTable(("x", "Label"), "Label", np.array([[np.inf]]), np.array(["A"], dtype=object))
    with pytest.raises(EmptyDatasetError):
        clean(t)


def test_duplicates_kept(tmp_path):
    ds = clean(load_csv(write(tmp_path / "a.csv", "x,Label\n1,A\n1,A\n")))
    assert ds.n_rows == 2


def test_normalize_label_variants():
    assert normalize_label("  Web Attack – Brute Force ") == "Web Attack - Brute Force"
    assert normalize_label("Web Attack � XSS") == "Web Attack - XSS"
    assert normalize_label("DoS   Hulk") == "DoS Hulk"


def test_grouping_table():
    g = ClassGrouping.cicids2017()
    assert g.lookup("DoS Hulk") == "DoS"
    assert g.lookup("Heartbleed") == "DoS"
    assert g.lookup("BENIGN") == "Benign"
    assert g.lookup("Bot") == "Botnet"
    assert g.lookup("Web Attack – Sql Injection") == "Web Attack"
    assert len(g.general_classes) == 8
    assert len(set(CICIDS2017_GROUPING.values())) == 8
    with pytest.raises(UnmappedLabelError):
        g.lookup("Mystery")


def test_identity_grouping_unchanged():
    ds = CleanDataset.from_arrays(np.arange(6.0).reshape(3, 2), ["a", "b"], ["x", "y", "x"])
    out = regroup_labels(ds, ClassGrouping.identity(["x", "y"]))
    assert out.labels.tolist() == ds.labels.tolist()
    assert np.array_equal(out.features, ds.features)


def test_regroup_preserves_rows_and_totals():
    labels = ["DoS Hulk", "BENIGN", "Heartbleed", "DoS slowloris", "Bot"]
    ds = CleanDataset.from_arrays(np.arange(10.0).reshape(5, 2), ["a", "b"], labels)
    out = regroup_labels(ds, ClassGrouping.cicids2017())
    assert out.labels.tolist() == ["DoS", "Benign", "DoS", "DoS", "Botnet"]
    assert sum(out.class_counts.values()) == sum(ds.class_counts.values())
    assert np.array_equal(out.features, ds.features)


def test_grouping_from_file(tmp_path):
    p = write(tmp_path / "g.json", '{"A": "One", "B": "One"}')
    assert ClassGrouping.from_file(p).lookup("a") == "One"


def test_load_dir_order_and_empty(tmp_path):
    write(tmp_path / "b.csv", "x,Label\n2,B\n")
    write(tmp_path / "a.csv", "x,Label\n1,A\n")
    t = load_dir(tmp_path)
    assert t.values[:, 0].tolist() == [1.0, 2.0]
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(DataError, match="no input files"):
        load_dir(empty)


def test_load_dir_header_mismatch(tmp_path):
    write(tmp_path / "a.csv", "x,Label\n1,A\n")
    write(tmp_path / "b.csv", "y,Label\n1,A\n")
    with pytest.raises(ParseError):
        load_dir(tmp_path)


def test_cache_roundtrip(tmp_path, rng):
    X = rng.normal(size=(50, 4))
    labels = rng.choice(["Benign", "Botnet", "DoS"], size=50)
    ds = CleanDataset.from_arrays(X, ["a", "b", "c", "d"], labels)
    write_cache(ds, tmp_path / "c.bin")
    back = read_cache(tmp_path / "c.bin")
    assert np.array_equal(back.features, ds.features)
    assert back.labels.tolist() == ds.labels.tolist()
    assert back.feature_names == ds.feature_names
    (tmp_path / "bad").write_bytes(b"nope")
    with pytest.raises(DataError):
        read_cache(tmp_path / "bad")


def test_format_counts():
    text = format_counts({"Bot": 1956, "BENIGN": 2271320}, "Label")
    lines = text.splitlines()
    assert lines[2].split() == ["BENIGN", "2271320"]
    assert lines[3].split() == ["Bot", "1956"]
