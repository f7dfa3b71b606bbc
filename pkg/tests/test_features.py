import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cpw_automl import dataset, physics
from cpw_automl.features import (
    FEATURE_NAMES,
    FeaturePipeline,
    Standardizer,
    create_feature_matrix,
    create_features,
    fit_medians,
    fit_standardizer,
    impute_missing,
    select_features,
)
from cpw_automl.fixture import MEASURED, PRINTED_CPW


def test_feature_layout():
    v = create_features([4.0, 2.0, 8.0])
    np.testing.assert_allclose(v, [4, 2, 8, np.log10(4), 1.0, 2.0, 4.0, 16.0])
    assert len(FEATURE_NAMES) == v.size


def test_zero_alpha_columns():
    v = dict(zip(FEATURE_NAMES, create_features([1e9, 0.0, 30.0])))
    assert v["alpha"] == v["alpha_over_sqrt_f"] == v["alpha_times_beta"] == 0


def test_one_hertz():
    v = dict(zip(FEATURE_NAMES, create_features([1.0, 0.7, 3.0])))
    assert v["log10_freq"] == 0 and v["alpha_over_sqrt_f"] == 0.7


@pytest.mark.parametrize("f", [0.0, -1.0])
def test_nonpositive_frequency(f):
    with pytest.raises(ValueError):
        create_features([f, 1.0, 1.0])


def test_beta_over_f_tracks_sqrt_eeff():
    f = physics.band_grid(50)
    a, b = physics.alpha_beta(PRINTED_CPW, MEASURED, f)
    col = create_feature_matrix(np.column_stack([f, a, b]))[:, FEATURE_NAMES.index("beta_over_f")]
    ee = physics.cpw_eeff(PRINTED_CPW, MEASURED).eps_eff
    np.testing.assert_allclose(col, 2 * np.pi / physics.C0 * np.sqrt(ee), rtol=1e-14)


def test_standardizer_hand_values():
    s = fit_standardizer(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]))
    out = s.apply(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]))
    np.testing.assert_allclose(out[:, 0], [-1.224744871391589, 0, 1.224744871391589])
    np.testing.assert_array_equal(out[:, 1], 5.0)


def test_standardizer_reuses_train_statistics():
    s = Standardizer.fit(np.array([[0.0], [2.0]]))
    assert s.apply(np.array([[5.0], [7.0]])).mean() != 0


def test_standardizer_needs_two_rows():
    with pytest.raises(ValueError):
        fit_standardizer(np.empty((0, 3)))
    with pytest.raises(ValueError):
        fit_standardizer(np.ones((1, 3)))


def test_impute():
    raw = np.array([[1.0, 2.0, 3.0], [np.nan, 4.0, 9.0], [5.0, np.nan, 6.0]])
    med = fit_medians(raw)
    np.testing.assert_array_equal(med, [3.0, 3.0, 6.0])
    out = impute_missing(raw, med)
    assert not np.isnan(out).any()
    assert out[1, 0] == 3.0 and out[2, 1] == 3.0
    full = np.array([[1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(impute_missing(full, med), full)


def test_impute_train_median_five():
    train = np.array([[4.0, 1, 1], [5.0, 1, 1], [6.0, 1, 1]])
    out = impute_missing(np.array([[np.nan, 1.0, 1.0]]), fit_medians(train))
    assert out[0, 0] == 5.0


def test_impute_all_missing_column():
    with pytest.raises(ValueError, match="alpha_np_m"):
        fit_medians(np.array([[1.0, np.nan, 2.0], [2.0, np.nan, 3.0]]))


def test_select_duplicate_and_constant():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 1))
    m = np.hstack([x, np.ones((50, 1)), x, rng.normal(size=(50, 1))])
    assert select_features(m, 0.98) == [0, 3]
    assert select_features(m, 1.0) == [0, 2, 3]


def test_select_rejects_threshold():
    with pytest.raises(ValueError):
        select_features(np.ones((3, 2)), 0.0)


def test_default_dataset_drops_beta_over_f_square():
    ds = dataset.generate(dataset.SweepConfig())
    full = create_feature_matrix(ds.inputs)
    i, j = FEATURE_NAMES.index("beta_over_f"), FEATURE_NAMES.index("beta_over_f_sq")
    assert abs(np.corrcoef(full[:, i], full[:, j])[0, 1]) > 0.98
    kept = select_features(full)
    assert i in kept and j not in kept


@settings(max_examples=30, deadline=None)
@given(arrays(float, (12, 3), elements=st.floats(0.1, 1e3)))
def test_pipeline_pure_and_row_preserving(raw):
    raw = raw.copy()
    raw[:, 0] += np.arange(12)  # guarantee a non-constant column
    pipe = FeaturePipeline().fit(raw)
    a = pipe.transform(raw)
    b = pipe.transform(raw)
    assert a.shape[0] == raw.shape[0]
    np.testing.assert_array_equal(a, b)
    again = FeaturePipeline().fit(raw).transform(raw)
    np.testing.assert_array_equal(a, again)


def test_no_leakage_negative_control(small_ds):
    part = dataset.partition(small_ds, "P75_20_5", 0)
    train = FeaturePipeline().fit(small_ds.inputs[part.train])
    val = FeaturePipeline().fit(small_ds.inputs[part.validation])
    assert not np.array_equal(train.scaler.mean, val.scaler.mean)
    z = train.transform(small_ds.inputs[part.validation])
    assert np.abs(z.mean(axis=0)).max() > 1e-6


def test_pipeline_json_round_trip(tmp_path, small_ds):
    pipe = FeaturePipeline().fit(small_ds.inputs)
    p = tmp_path / "pipe.json"
    pipe.save(p)
    back = FeaturePipeline.load(p)
    np.testing.assert_array_equal(back.transform(small_ds.inputs), pipe.transform(small_ds.inputs))
    assert back.output_names == pipe.output_names


def test_unfitted_pipeline():
    with pytest.raises(RuntimeError):
        FeaturePipeline().transform(np.ones((2, 3)))
