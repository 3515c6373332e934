import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftboost.dataset import (
    CellError,
    Dataset,
    FeatureSchema,
    FeatureSpec,
    SchemaError,
    SplitSpec,
    canonical_schema,
    feature_stats,
    load_csv,
    planted_midr,
    synth_generate,
    train_test_split,
    validate_ranges,
    write_csv,
)


@pytest.fixture
def tiny_schema():
    return FeatureSchema(features=(FeatureSpec("a"), FeatureSpec("b", "m", (0.0, 10.0))), target="t")


def test_canonical_schema_shape():
    schema = canonical_schema()
    assert schema.num_features == 18
    assert schema.target == "MIDR"
    assert len(set(schema.feature_names)) == 18
    pga = schema.features[schema.index_of("PGA")]
    assert pga.physical_range == (0.004, 0.822)
    assert pga.unit == "g"
    for f in schema.features:
        lo, hi = f.physical_range
        assert lo <= hi


def test_schema_rejects_duplicate_names():
    with pytest.raises(SchemaError):
        FeatureSchema(features=(FeatureSpec("a"), FeatureSpec("a")), target="t")


def test_dataset_rejects_nan(tiny_schema):
    with pytest.raises(CellError):
        Dataset(tiny_schema, np.array([[1.0, np.nan]]), np.array([1.0]))
    with pytest.raises(CellError):
        Dataset(tiny_schema, np.array([[1.0, 2.0]]), np.array([np.inf]))


def test_dataset_is_read_only(tiny_schema):
    ds = Dataset(tiny_schema, np.array([[1.0, 2.0]]), np.array([1.0]))
    with pytest.raises(ValueError):
        ds.X[0, 0] = 5.0


# -- CSV --------------------------------------------------------------------


def test_csv_round_trip_is_bit_exact(tmp_path):
    ds = synth_generate(37, seed=5, noise_sd=0.25)
    path = tmp_path / "t.csv"
    write_csv(ds, path)
    back = load_csv(path, ds.schema)
    assert np.array_equal(back.X, ds.X)
    assert np.array_equal(back.y, ds.y)


def test_load_csv_reorders_columns(tmp_path, tiny_schema):
    path = tmp_path / "t.csv"
    path.write_text("t,b,a\n1.0,2.0,3.0\n")
    ds = load_csv(path, tiny_schema)
    assert ds.X.tolist() == [[3.0, 2.0]]
    assert ds.y.tolist() == [1.0]


def test_load_csv_names_bad_cell(tmp_path):
    schema = canonical_schema()
    ds = synth_generate(3, seed=1)
    path = tmp_path / "t.csv"
    write_csv(ds, path)
    lines = path.read_text().splitlines()
    cells = lines[2].split(",")
    cells[schema.index_of("PGA")] = "abc"
    lines[2] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CellError) as err:
        load_csv(path, schema)
    assert err.value.row == 2
    assert err.value.column == "PGA"


def test_load_csv_missing_column(tmp_path, tiny_schema):
    path = tmp_path / "t.csv"
    path.write_text("a,t\n1.0,2.0\n")
    with pytest.raises(SchemaError) as err:
        load_csv(path, tiny_schema)
    assert "'b'" in str(err.value)


def test_load_csv_extra_and_duplicate_and_empty(tmp_path, tiny_schema):
    p = tmp_path / "extra.csv"
    p.write_text("a,b,t,zz\n1,2,3,4\n")
    with pytest.raises(SchemaError):
        load_csv(p, tiny_schema)
    p = tmp_path / "dup.csv"
    p.write_text("a,a,b,t\n1,1,2,3\n")
    with pytest.raises(SchemaError):
        load_csv(p, tiny_schema)
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(SchemaError):
        load_csv(p, tiny_schema)


# -- range validation --------------------------------------------------------


def test_validate_ranges_clean_on_synth():
    assert validate_ranges(synth_generate(500, seed=2, noise_sd=0.3)) == []


def test_validate_ranges_flags_cell():
    schema = canonical_schema()
    ds = synth_generate(5, seed=3)
    X = ds.X.copy()
    X[2, schema.index_of("PGA")] = 1.5
    warnings = validate_ranges(Dataset(schema, X, ds.y))
    assert len(warnings) == 1
    w = warnings[0]
    assert (w.row, w.column, w.value) == (3, "PGA", 1.5)
    assert "PGA" in str(w)


def test_validate_ranges_skips_undeclared(tiny_schema):
    ds = Dataset(tiny_schema, np.array([[99.0, 5.0]]), np.array([0.0]))
    assert validate_ranges(ds) == []  # feature 'a' has no declared range


# -- synthetic generator ------------------------------------------------------


def test_synth_deterministic():
    a = synth_generate(100, seed=7, noise_sd=0.0)
    b = synth_generate(100, seed=7, noise_sd=0.0)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    c = synth_generate(100, seed=8, noise_sd=0.0)
    assert not np.array_equal(a.X, c.X)


def test_synth_respects_ranges():
    ds = synth_generate(1000, seed=7)
    j = ds.schema.index_of("PGA")
    assert ds.X[:, j].min() >= 0.004
    assert ds.X[:, j].max() <= 0.822
    for k, spec in enumerate(ds.schema.features):
        lo, hi = spec.physical_range
        assert ds.X[:, k].min() >= lo and ds.X[:, k].max() <= hi


def test_synth_zero_noise_equals_planted_function():
    ds = synth_generate(200, seed=9, noise_sd=0.0)
    assert np.array_equal(ds.y, planted_midr(ds.X, ds.schema))


def test_planted_function_monotonicity():
    schema = canonical_schema()
    ds = synth_generate(50, seed=4)
    X = ds.X.copy()

    def bump(name, delta):
        Xb = X.copy()
        j = schema.index_of(name)
        Xb[:, j] = Xb[:, j] + delta
        return planted_midr(Xb, schema)

    base = planted_midr(X, schema)
    assert np.all(bump("PGA", 1e-4) > base)
    assert np.all(bump("HI", 1e-2) > base)
    assert np.all(bump("n_vx", 1.0) < base)
    assert np.all(bump("n_vy", 1.0) < base)


def test_synth_target_strictly_positive_even_with_noise():
    ds = synth_generate(2000, seed=11, noise_sd=2.0)
    assert ds.y.min() > 0


def test_synth_rejects_bad_args():
    with pytest.raises(ValueError):
        synth_generate(0, seed=1)
    with pytest.raises(ValueError):
        synth_generate(5, seed=1, noise_sd=-0.1)


# -- split --------------------------------------------------------------------


def test_split_sizes():
    ds = synth_generate(10, seed=1)
    train, test = train_test_split(ds, SplitSpec(0.2, seed=0))
    assert (train.n, test.n) == (8, 2)


def test_split_deterministic():
    ds = synth_generate(50, seed=1)
    a1, b1 = train_test_split(ds, SplitSpec(0.3, seed=5))
    a2, b2 = train_test_split(ds, SplitSpec(0.3, seed=5))
    assert np.array_equal(a1.X, a2.X) and np.array_equal(b1.y, b2.y)


def test_split_clamps_to_at_least_one():
    ds = synth_generate(2, seed=1)
    train, test = train_test_split(ds, SplitSpec(0.001, seed=0))
    assert (train.n, test.n) == (1, 1)


def test_split_needs_two_rows():
    with pytest.raises(ValueError):
        train_test_split(synth_generate(1, seed=1), SplitSpec(0.5, 0))


@given(st.integers(2, 60), st.floats(0.01, 0.99), st.integers(0, 1000))
@settings(max_examples=60, deadline=None)
def test_split_partitions_rows(n, fraction, seed):
    ds = synth_generate(n, seed=3)
    train, test = train_test_split(ds, SplitSpec(fraction, seed=seed))
    assert train.n + test.n == n
    combined = np.vstack([train.X, test.X])
    original = np.sort(ds.X, axis=0)
    assert np.array_equal(np.sort(combined, axis=0), original)


def test_split_spec_validates_fraction():
    with pytest.raises(ValueError):
        SplitSpec(0.0, 1)
    with pytest.raises(ValueError):
        SplitSpec(1.0, 1)


# -- stats --------------------------------------------------------------------


def test_feature_stats_hand_case(tiny_schema):
    ds = Dataset(tiny_schema, np.array([[1.0, 5.0], [3.0, 5.0]]), np.array([0.0, 1.0]))
    stats = feature_stats(ds)
    a = stats[0]
    assert (a.mean, a.sd, a.min, a.max) == (2.0, 1.0, 1.0, 3.0)
    b = stats[1]
    assert (b.mean, b.sd) == (5.0, 0.0)


def test_feature_stats_single_row(tiny_schema):
    ds = Dataset(tiny_schema, np.array([[4.0, 2.0]]), np.array([0.0]))
    assert all(s.sd == 0.0 for s in feature_stats(ds))
