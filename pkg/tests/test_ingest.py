import numpy as np
import pytest

from cyclic_rca.datagen import Dataset
from cyclic_rca.ingest import PreprocessConfig, PreprocessReport, load_csv, map_back, preprocess


def frame(columns, labels):
    return Dataset(np.column_stack(columns).astype(float), tuple(labels))


def noise_columns(rng, m, k):
    return [rng.standard_normal(m) for _ in range(k)]


# -- CSV loading -------------------------------------------------------------

def test_load_csv_basic(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("a,b\n1,2\n3,4\n5,6\n")
    ds = load_csv(path)
    assert ds.column_labels == ("a", "b")
    np.testing.assert_array_equal(ds.values, [[1, 2], [3, 4], [5, 6]])


def test_load_csv_non_numeric_cells_become_nan(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("a,b\n1,NaN\nx,4\n")
    ds = load_csv(path)
    assert np.isnan(ds.values[0, 1]) and np.isnan(ds.values[1, 0])
    assert ds.values[1, 1] == 4


def test_load_csv_header_only(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("a,b\n")
    with pytest.raises(ValueError, match="no data rows"):
        load_csv(path)


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_csv(tmp_path / "absent.csv")


# -- column removal ----------------------------------------------------------

def test_constant_column_dropped():
    rng = np.random.default_rng(0)
    a, b = noise_columns(rng, 40, 2)
    normal = frame([a, np.full(40, 3.0), b], ["a", "flat", "b"])
    anom = frame([[1.0], [9.0], [0.0]], ["a", "flat", "b"])
    n, x, rep = preprocess(normal, anom)
    assert rep.dropped_constant == ("flat",)
    assert n.column_labels == ("a", "b")
    assert x.values.shape == (1, 2)


def test_duplicate_and_nan_columns_dropped():
    rng = np.random.default_rng(1)
    a, b, c = noise_columns(rng, 30, 3)
    c[:10] = np.nan  # 10 of 31 rows missing
    normal = frame([a, a.copy(), b, c], ["a", "a2", "b", "c"])
    anom = frame([[0.5], [0.5], [1.0], [2.0]], ["a", "a2", "b", "c"])
    _, _, rep = preprocess(normal, anom)
    assert rep.dropped_duplicate == ("a2",)
    assert rep.dropped_nan == ("c",)
    assert rep.output_labels == ("a", "b")


def test_rows_with_remaining_nan_dropped():
    rng = np.random.default_rng(2)
    a, b = noise_columns(rng, 30, 2)
    a[3] = np.nan
    normal = frame([a, b], ["a", "b"])
    anom = frame([[0.0, np.nan], [1.0, 1.0]], ["a", "b"])
    n, x, rep = preprocess(normal, anom)
    assert rep.dropped_rows_normal == 1 and rep.dropped_rows_anomalous == 1
    assert n.values.shape == (29, 2) and x.values.shape == (1, 2)


def test_metric_filter_forms():
    rng = np.random.default_rng(3)
    cols = noise_columns(rng, 20, 3)
    labels = ["cpu_a", "cpu_b", "mem_a"]
    normal = frame(cols, labels)
    anom = frame([[0.0], [0.0], [0.0]], labels)
    for flt in ("^cpu", ["cpu_a", "cpu_b"], lambda c: c.startswith("cpu")):
        _, _, rep = preprocess(normal, anom, PreprocessConfig(metric_filter=flt))
        assert rep.output_labels == ("cpu_a", "cpu_b")
        assert rep.dropped_filtered == ("mem_a",)


def test_everything_dropped():
    normal = frame([np.ones(10), np.full(10, 2.0)], ["a", "b"])
    anom = frame([[1.0], [2.0]], ["a", "b"])
    with pytest.raises(ValueError, match="empty after preprocessing"):
        preprocess(normal, anom)


def test_config_validation():
    with pytest.raises(ValueError):
        PreprocessConfig(variance_explained=0.0)
    with pytest.raises(ValueError):
        PreprocessConfig(corr_threshold=1.5)


def test_column_mismatch():
    with pytest.raises(ValueError, match="same columns"):
        preprocess(frame([np.ones(3)], ["a"]), frame([[1.0]], ["b"]))


# -- standardization and merging ---------------------------------------------

def test_standardization_uses_normal_period():
    rng = np.random.default_rng(4)
    z = rng.standard_normal(500)
    z = (z - z.mean()) / z.std(ddof=1)
    other = rng.standard_normal(500)
    normal = frame([5 + 2 * z, other], ["a", "b"])
    anom = frame([[9.0], [0.0]], ["a", "b"])
    n, x, rep = preprocess(normal, anom)
    assert x.values[0, 0] == pytest.approx(2.0, abs=1e-12)
    assert rep.center["a"] == pytest.approx(5.0) and rep.scale["a"] == pytest.approx(2.0)
    np.testing.assert_allclose(n.values.std(axis=0, ddof=1), 1.0)


def test_exactly_collinear_pair_merges_into_one_component():
    rng = np.random.default_rng(5)
    a, b = noise_columns(rng, 100, 2)
    normal = frame([a, 2 * a, b], ["x", "x2", "y"])
    anom = frame([[1.0], [2.0], [0.0]], ["x", "x2", "y"])
    n, _, rep = preprocess(normal, anom)
    assert len(rep.merged_groups) == 1
    grp = rep.merged_groups[0]
    assert grp.sources == ("x", "x2")
    assert len(grp.components) == 1
    l1, l2 = grp.loadings[0]
    assert abs(l1) == pytest.approx(abs(l2), rel=1e-10)  # equal after standardization
    assert grp.variance_retained == pytest.approx(1.0)
    assert n.column_labels == (grp.components[0], "y")
    assert rep.output_sources[grp.components[0]] == ("x", "x2")


def test_merge_components_orthonormal_and_retain_variance():
    rng = np.random.default_rng(6)
    base = rng.standard_normal(300)
    cols = [base + 0.05 * rng.standard_normal(300) for _ in range(4)] + [rng.standard_normal(300)]
    labels = ["a", "b", "c", "d", "e"]
    cfg = PreprocessConfig(variance_explained=0.999, corr_threshold=0.95)
    n, _, rep = preprocess(frame(cols, labels), frame([[0.0]] * 5, labels), cfg)
    grp = rep.merged_groups[0]
    L = np.array(grp.loadings)
    np.testing.assert_allclose(L @ L.T, np.eye(L.shape[0]), atol=1e-8)
    assert grp.variance_retained >= cfg.variance_explained
    assert len(grp.components) >= 2
    # whitened components are uncorrelated with unit variance in the normal period
    comp = n.values[:, : len(grp.components)]
    np.testing.assert_allclose(np.cov(comp, rowvar=False), np.eye(comp.shape[1]), atol=1e-10)


def test_pipeline_idempotent():
    rng = np.random.default_rng(7)
    a, b, c = noise_columns(rng, 80, 3)
    labels = ["a", "a_copy", "b", "c"]
    normal = frame([a, -3 * a + 1e-3 * b, b, c], labels)
    anom = frame([[1.0, 2.0], [-3.0, -6.0], [0.5, 0.0], [4.0, 1.0]], labels)
    n1, x1, _ = preprocess(normal, anom)
    n2, x2, rep2 = preprocess(n1, x1)
    np.testing.assert_allclose(n2.values, n1.values, atol=1e-10)
    np.testing.assert_allclose(x2.values, x1.values, atol=1e-10)
    assert not rep2.merged_groups


def test_anomalous_row_order_does_not_matter():
    rng = np.random.default_rng(8)
    a, b = noise_columns(rng, 60, 2)
    normal = frame([a, 2 * a, b], ["a", "b", "c"])
    rows = rng.standard_normal((5, 3))
    _, x1, _ = preprocess(normal, Dataset(rows, ("a", "b", "c")))
    perm = np.array([3, 0, 4, 1, 2])
    _, x2, _ = preprocess(normal, Dataset(rows[perm], ("a", "b", "c")))
    np.testing.assert_allclose(x2.values, x1.values[perm], atol=1e-12)


# -- mapping scores back -----------------------------------------------------

def group_report(loadings):
    from cyclic_rca.ingest import MergedGroup

    rep = PreprocessReport()
    rep.output_labels = ("pca[u+v]#1", "w")
    rep.final_dim = 2
    rep.merged_groups = [MergedGroup("pca[u+v]", ("u", "v"), [list(loadings)], ("pca[u+v]#1",), 1.0)]
    return rep


def test_map_back_unmerged_pass_through():
    rep = group_report([0.7, 0.7])
    assert map_back([1.0, 3.5], rep)["w"] == 3.5


def test_map_back_equal_loadings_share_score():
    out = map_back([4.0, 0.0], group_report([2 ** -0.5, 2 ** -0.5]))
    assert out["u"] == pytest.approx(4.0) and out["v"] == pytest.approx(4.0)


def test_map_back_unequal_loadings():
    out = map_back([10.0, 0.0], group_report([0.9, 0.1]))
    assert out["u"] == pytest.approx(10.0)
    assert out["v"] == pytest.approx(10.0 * 0.1 / 0.9)


def test_map_back_length_mismatch():
    with pytest.raises(ValueError, match="label mismatch"):
        map_back([1.0, 2.0, 3.0], group_report([1.0, 0.0]))


def test_map_back_after_real_merge_covers_all_sources():
    rng = np.random.default_rng(9)
    a, b = noise_columns(rng, 50, 2)
    normal = frame([a, 2 * a, b], ["x", "x2", "y"])
    _, _, rep = preprocess(normal, frame([[0.0], [0.0], [0.0]], ["x", "x2", "y"]))
    out = map_back(np.arange(1.0, rep.final_dim + 1), rep)
    assert set(out) == {"x", "x2", "y"}


def test_report_json_roundtrip():
    import json

    rng = np.random.default_rng(10)
    a, b = noise_columns(rng, 50, 2)
    _, _, rep = preprocess(frame([a, 2 * a, b], "pqr"), frame([[0.0]] * 3, "pqr"))
    d = json.loads(rep.to_json())
    assert d["final_dim"] == 2
    assert d["merged_groups"][0]["sources"] == ["p", "q"]
