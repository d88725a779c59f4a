"""Tests for the synthetic cohort generator."""

import numpy as np
import pytest

from cohort_simulator import CohortSimulator, generate_cohort, random_window_batch
from errors import ContractError
from preprocess import NAN_CATEGORY
from psv_ingest import NUMERIC_COLUMNS, read_directory


class TestCohortSimulator:

    def test_septic_count_and_ids(self):
        records = CohortSimulator(seed=1, septic_fraction=0.3).simulate_cohort(20)
        assert sum(r.is_septic for r in records) == 6
        assert [r.patient_id for r in records][:2] == ['p000000', 'p000001']

    def test_seeded_cohorts_identical(self):
        a = CohortSimulator(seed=5).simulate_cohort(4)
        b = CohortSimulator(seed=5).simulate_cohort(4)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.numeric, y.numeric)
            np.testing.assert_array_equal(x.labels, y.labels)

    def test_labels_are_a_suffix(self):
        for record in CohortSimulator(seed=2, septic_fraction=1.0).simulate_cohort(10):
            first = int(np.argmax(record.labels))
            assert record.labels[first:].all()
            assert not record.labels[:first].any()
            assert record.labels.sum() <= 15

    def test_ramp_variable_rises_after_first_label(self):
        simulator = CohortSimulator(seed=3, septic_fraction=1.0, noise_scale=0.0, min_hours=30, max_hours=30)
        record = simulator.simulate_patient('x', septic=True)
        hr = record.numeric[:, NUMERIC_COLUMNS.index('HR')]
        first = int(np.argmax(record.labels))
        np.testing.assert_allclose(np.diff(hr[first - 1:]), 5.0, atol=0.02)
        assert np.ptp(hr[:first]) < 0.02

    def test_bookkeeping_columns_always_present(self, small_cohort):
        for record in small_cohort:
            for name in ('Age', 'HospAdmTime', 'ICULOS', 'HR'):
                assert not np.isnan(record.numeric[:, NUMERIC_COLUMNS.index(name)]).any()
            np.testing.assert_array_equal(record.numeric[:, NUMERIC_COLUMNS.index('ICULOS')],
                                          np.arange(1, record.n_hours + 1))
            assert not np.isnan(record.categorical[:, 0]).any()

    def test_invalid_arguments(self):
        with pytest.raises(ContractError):
            CohortSimulator(ramp_variable='Gender')
        with pytest.raises(ContractError):
            CohortSimulator(septic_fraction=1.5)
        with pytest.raises(ContractError):
            CohortSimulator(min_hours=10, max_hours=5)

    def test_generate_cohort_round_trips(self, tmp_path):
        records = generate_cohort(str(tmp_path), n_patients=5, seed=4)
        again = read_directory(tmp_path)
        assert [r.patient_id for r in again] == [r.patient_id for r in records]
        for x, y in zip(records, again):
            np.testing.assert_array_equal(x.numeric, y.numeric)


class TestRandomWindowBatch:

    def test_window_invariants(self, rng):
        batch = random_window_batch(rng, 4, 6, observe_prob=0.5, pad_hours=2)
        assert batch.values.shape == (4, 6, 37)
        assert np.all(batch.values[~batch.obs_mask] == 0.0)
        assert not batch.obs_mask[:, :2].any()
        assert np.all(batch.cat_idx[:, :2] == NAN_CATEGORY)
        np.testing.assert_array_equal(batch.t_end, 5)
