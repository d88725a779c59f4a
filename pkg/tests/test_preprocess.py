"""Tests for categorical relabelling, z-score normalization and windowing."""

import numpy as np
import pytest

from errors import ContractError, MissingVariableWarning
from preprocess import (NAN_CATEGORY, NormStats, WindowGenerator, apply_normalizer, fit_normalizer,
                        make_windows, raw_window_features, record_windows, relabel_categorical,
                        relabel_categorical_block, windows_to_arrays)
from psv_ingest import NUM_NUMERIC, NUMERIC_COLUMNS, PatientRecord


def make_record(numeric, categorical=None, labels=None, patient_id='p'):
    numeric = np.asarray(numeric, dtype=np.float64)
    n = len(numeric)
    if categorical is None:
        categorical = np.tile([0.0, 1.0, np.nan], (n, 1))
    if labels is None:
        labels = np.zeros(n, dtype=np.int64)
    return PatientRecord(patient_id, numeric, np.asarray(categorical, dtype=np.float64),
                         np.asarray(labels, dtype=np.int64))


def constant_numeric(n, value=1.0):
    return np.full((n, NUM_NUMERIC), value)


class TestRelabelCategorical:

    def test_index_map(self):
        assert relabel_categorical(0, 0) == 0
        assert relabel_categorical(0, 1) == 1
        assert relabel_categorical(1, 0) == 2
        assert relabel_categorical(2, 1) == 5

    def test_missing_is_six(self):
        assert relabel_categorical(1, None) == 6
        assert relabel_categorical(0, float('nan')) == NAN_CATEGORY

    def test_bijection(self):
        seen = {relabel_categorical(v, raw) for v in range(3) for raw in (0, 1)}
        assert seen == set(range(6))

    def test_bad_value(self):
        with pytest.raises(ContractError):
            relabel_categorical(0, 2)
        with pytest.raises(ContractError):
            relabel_categorical(3, 0)

    def test_block_matches_scalar(self):
        block = np.array([[0, 1, np.nan], [1, np.nan, 0]])
        expected = [[relabel_categorical(j, None if np.isnan(v) else int(v)) for j, v in enumerate(row)]
                    for row in block]
        np.testing.assert_array_equal(relabel_categorical_block(block), expected)


class TestFitNormalizer:

    def test_two_point_population_std(self):
        numeric = constant_numeric(2)
        numeric[:, 0] = [1.0, 3.0]
        stats = fit_normalizer([make_record(numeric)])
        assert stats.mean[0] == pytest.approx(2.0)
        assert stats.std[0] == pytest.approx(1.0)

    def test_constant_variable_floored(self):
        stats = fit_normalizer([make_record(constant_numeric(3, 5.0))], std_floor=1e-6)
        assert np.all(stats.std == 1e-6)
        normalized = apply_normalizer(make_record(constant_numeric(3, 5.0)), stats)
        np.testing.assert_array_equal(normalized.numeric, 0.0)

    def test_fully_missing_variable(self):
        numeric = constant_numeric(3)
        numeric[:, 4] = np.nan
        with pytest.warns(MissingVariableWarning, match=NUMERIC_COLUMNS[4]):
            stats = fit_normalizer([make_record(numeric)])
        assert stats.mean[4] == 0.0
        assert stats.std[4] == 1.0

    def test_normalized_moments(self, small_cohort):
        stats = fit_normalizer(small_cohort)
        normalized = [apply_normalizer(r, stats) for r in small_cohort]
        values = np.concatenate([r.numeric for r in normalized])
        raw = np.concatenate([r.numeric for r in small_cohort])
        for j in range(NUM_NUMERIC):
            observed = values[~np.isnan(values[:, j]), j]
            if len(observed) == 0 or np.nanstd(raw[:, j]) < 1e-6:
                continue
            assert abs(observed.mean()) < 1e-9
            assert abs(observed.std() - 1.0) < 1e-6

    def test_uses_training_rows_only(self, small_cohort):
        train, held = small_cohort[:12], small_cohort[12:]
        before = fit_normalizer(train)
        perturbed = [r.with_numeric(r.numeric * 7.0 + 3.0) for r in held]
        assert perturbed[0] is not held[0]
        after = fit_normalizer(train)
        np.testing.assert_array_equal(before.mean, after.mean)
        np.testing.assert_array_equal(before.std, after.std)

    def test_stats_dict_round_trip(self, small_cohort):
        stats = fit_normalizer(small_cohort)
        again = NormStats.from_dict(stats.to_dict())
        np.testing.assert_array_equal(again.mean, stats.mean)
        np.testing.assert_array_equal(again.std, stats.std)


class TestApplyNormalizer:

    def test_mean_maps_to_zero_and_std_to_one(self):
        stats = NormStats(np.full(NUM_NUMERIC, 10.0), np.full(NUM_NUMERIC, 2.0))
        numeric = constant_numeric(2, 10.0)
        numeric[1] = 12.0
        numeric[0, 3] = np.nan
        out = apply_normalizer(make_record(numeric), stats)
        assert out.numeric[0, 0] == 0.0
        assert out.numeric[1, 0] == 1.0
        assert np.isnan(out.numeric[0, 3])


class TestMakeWindows:

    def test_short_stay_padding(self):
        record = make_record(constant_numeric(3))
        windows = make_windows(record, 24)
        assert len(windows) == 3
        assert windows[0].pad_mask.sum() == 23
        assert windows[2].pad_mask.sum() == 21

    def test_single_hour_no_padding(self):
        windows = make_windows(make_record(constant_numeric(1)), 1)
        assert len(windows) == 1
        assert not windows[0].pad_mask.any()

    def test_boundary_window_unpadded(self):
        L = 5
        windows = make_windows(make_record(constant_numeric(8)), L)
        assert windows[L - 1].pad_mask.sum() == 0

    def test_window_count_equals_hours(self, small_cohort):
        for L in (1, 6, 24):
            for record in small_cohort[:5]:
                assert len(record_windows(record, L)) == record.n_hours

    def test_rows_reproduced(self, small_cohort):
        record = small_cohort[0]
        L = 6
        batch = record_windows(record, L)
        observed = ~np.isnan(record.numeric)
        for t in range(record.n_hours):
            for k in range(L):
                src = t - L + 1 + k
                if src < 0:
                    assert batch.pad_mask[t, k]
                    assert not batch.obs_mask[t, k].any()
                    assert np.all(batch.cat_idx[t, k] == NAN_CATEGORY)
                    continue
                np.testing.assert_array_equal(batch.obs_mask[t, k], observed[src])
                np.testing.assert_array_equal(batch.values[t, k][observed[src]], record.numeric[src][observed[src]])
                assert np.all(batch.values[t, k][~observed[src]] == 0.0)
            assert batch.labels[t] == record.labels[t]
            assert batch.t_end[t] == t

    def test_cat_idx_range(self, small_cohort):
        batch = record_windows(small_cohort[1], 24)
        assert batch.cat_idx.min() >= 0 and batch.cat_idx.max() <= 6

    def test_invalid_length(self):
        with pytest.raises(ContractError):
            make_windows(make_record(constant_numeric(2)), 0)


class TestBatches:

    def test_windows_to_arrays_shapes(self, small_cohort):
        windows = make_windows(small_cohort[0], 6)
        batch = windows_to_arrays(windows)
        assert batch.values.shape == (len(windows), 6, 37)
        assert batch.cat_idx.shape == (len(windows), 6, 3)
        assert batch.pad_mask.shape == (len(windows), 6)

    def test_empty_stack(self):
        with pytest.raises(ContractError):
            windows_to_arrays([])

    def test_raw_features(self, small_cohort):
        batch = record_windows(small_cohort[0], 4)
        dense = raw_window_features(batch, nan_category_value=0.5)
        mlp = raw_window_features(batch, nan_category_value=0.0)
        assert dense.shape == (len(batch), 4, 40)
        missing = batch.cat_idx == NAN_CATEGORY
        np.testing.assert_array_equal(dense[..., 37:][missing], 0.5)
        np.testing.assert_array_equal(mlp[..., 37:][missing], 0.0)
        np.testing.assert_array_equal(dense[..., 37:][~missing], (batch.cat_idx % 2)[~missing])

    def test_generator_requires_fit(self, small_cohort):
        with pytest.raises(ContractError):
            WindowGenerator(6).transform(small_cohort)

    def test_generator_summary(self, small_cohort):
        generator = WindowGenerator(6)
        generator.fit(small_cohort)
        batch = generator.transform(small_cohort)
        summary = generator.get_window_summary(batch)
        assert summary['total_windows'] == sum(r.n_hours for r in small_cohort)
        assert summary['patients'] == len(small_cohort)
        assert summary['positive_windows'] == sum(int(r.labels.sum()) for r in small_cohort)
