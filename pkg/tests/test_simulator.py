import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vfdenoise.core import DB_MAX, DB_MIN
from vfdenoise.simulator import (
    NO_DECAY, PROGRESSION_RATES, SCENARIOS, Baseline, DecayPattern, NoiseModel, Pattern,
    Scenario, ScenarioSpec, add_noise, baseline_field, eye_rng, read_cohort, scotoma_table,
    simulate_cohort, simulate_eye, true_trajectory, write_cohort,
)


def loop_trajectory(base, pattern, spec, k):
    """Visit-by-visit accumulation, independent of the closed form."""
    sens = list(base.sensitivities)
    dt = spec.duration / (spec.n_exams - 1)
    for _ in range(k):
        for i in range(52):
            sens[i] += spec.age_slope * dt
            if i in pattern.affected_indices:
                sens[i] += pattern.rate * dt
    return np.clip(sens, 0.0, 40.0)


class TestTrajectory:
    base = baseline_field(Baseline.INFERIOR_NASAL)

    def test_exam_zero_is_baseline(self):
        spec = ScenarioSpec(Scenario.FAST)
        pat = DecayPattern.make(Pattern.FOCAL_LARGE, self.base.name, -2.0)
        np.testing.assert_array_equal(true_trajectory(self.base, pat, spec, 0),
                                      self.base.sensitivities)

    def test_age_decline_end(self):
        spec = ScenarioSpec(Scenario.AGE_DECLINE)
        end = true_trajectory(self.base, NO_DECAY, spec, spec.n_exams - 1)
        np.testing.assert_allclose(end, self.base.sensitivities - 0.95, atol=1e-12)

    def test_focal_small_at_five_years(self):
        spec = ScenarioSpec(Scenario.FAST, n_exams=20, duration=9.5)
        pat = DecayPattern.make(Pattern.FOCAL_SMALL, self.base.name, -2.0)
        k = 10  # t = 5 years at a 0.5 year spacing
        assert spec.times[k] == pytest.approx(5.0)
        got = true_trajectory(self.base, pat, spec, k)
        want = np.where(pat.mask, np.maximum(self.base.sensitivities - 0.5 - 10.0, 0),
                        self.base.sensitivities - 0.5)
        np.testing.assert_allclose(got, want, atol=1e-12)
        np.testing.assert_allclose(got, loop_trajectory(self.base, pat, spec, k), atol=1e-9)

    @pytest.mark.parametrize("pattern", list(Pattern))
    @pytest.mark.parametrize("rate", PROGRESSION_RATES)
    def test_matches_loop_oracle(self, pattern, rate):
        spec = ScenarioSpec(Scenario.SLOW)
        for name in Baseline:
            base = baseline_field(name)
            pat = DecayPattern.make(pattern, name, rate)
            for k in (0, 5, 13, 19):
                np.testing.assert_allclose(true_trajectory(base, pat, spec, k),
                                           loop_trajectory(base, pat, spec, k), atol=1e-9)

    def test_all_exams_shape(self):
        spec = ScenarioSpec(Scenario.CATARACT)
        assert true_trajectory(self.base, NO_DECAY, spec).shape == (20, 52)


def test_scotoma_sizes():
    sizes = {(r["baseline"], r["pattern"]): r["n"] for r in scotoma_table()}
    for b in Baseline:
        assert sizes[(b.value, Pattern.FOCAL_SMALL.value)] == 4
        assert sizes[(b.value, Pattern.FOCAL_MEDIUM.value)] == 8
        assert sizes[(b.value, Pattern.FOCAL_LARGE.value)] == 16
    assert len(DecayPattern.make(Pattern.DIFFUSE, Baseline.SUPERIOR_ARCUATE, -1).affected_indices) == 52


class TestNoise:
    def test_zero_sd_is_identity(self):
        s = np.linspace(0, 40, 52)
        out = add_noise(s, NoiseModel(constant=0.0), np.random.default_rng(0))
        np.testing.assert_array_equal(out, s)

    def test_seeded_bit_identical(self):
        s = np.full(52, 25.0)
        a = add_noise(s, NoiseModel(), eye_rng(7, Scenario.SLOW, 3))
        b = add_noise(s, NoiseModel(), eye_rng(7, Scenario.SLOW, 3))
        assert a.tobytes() == b.tobytes()

    def test_monte_carlo_sd(self):
        model = NoiseModel()
        out = add_noise(np.full(10_000, 30.0), model, np.random.default_rng(11))
        assert abs(out.std(ddof=1) / model.sd(30.0) - 1) < 0.05

    def test_sd_cap(self):
        assert NoiseModel().sd(0.0) == 6.0
        assert NoiseModel().sd(35.0) == pytest.approx(np.exp(-0.081 * 35 + 3.27))

    @settings(max_examples=50)
    @given(st.integers(0, 2**32 - 1), st.floats(0, 40))
    def test_output_in_range(self, seed, level):
        out = add_noise(np.full(52, level), NoiseModel(), np.random.default_rng(seed))
        assert out.min() >= DB_MIN and out.max() <= DB_MAX


class TestCohort:
    def test_age_decline_truth(self):
        eyes = simulate_cohort(ScenarioSpec(Scenario.AGE_DECLINE, n_eyes=376), seed=1)
        assert len(eyes) == 376
        assert {e.truth for e in eyes} == {"nonprogressing"}
        assert all(len(e.exams) == 20 for e in eyes)

    def test_truth_labels(self):
        for sc in SCENARIOS:
            eyes = simulate_cohort(ScenarioSpec(sc, n_eyes=3), seed=1)
            want = "progressing" if sc.progressing else "nonprogressing"
            assert {e.truth for e in eyes} == {want}

    def test_factorial_each_combination_once(self):
        spec = ScenarioSpec(Scenario.FAST, n_eyes=24, factorial=True)
        eyes = simulate_cohort(spec, seed=3, as_series=False)
        used = [(e.baseline, e.pattern.kind, e.pattern.rate) for e in eyes]
        assert sorted(used) == sorted(itertools.product(Baseline, Pattern, PROGRESSION_RATES))

    def test_pinned_rate(self):
        eyes = simulate_cohort(ScenarioSpec(Scenario.MEDIUM, n_eyes=8), seed=3, as_series=False)
        assert {e.pattern.rate for e in eyes} == {-1.0}

    def test_deterministic(self):
        spec = ScenarioSpec(Scenario.SLOW, n_eyes=5, factorial=True)
        a = simulate_cohort(spec, seed=9, as_series=False)
        b = simulate_cohort(spec, seed=9, as_series=False)
        assert all(x.sens.tobytes() == y.sens.tobytes() for x, y in zip(a, b))
        c = simulate_cohort(spec, seed=10, as_series=False)
        assert a[0].sens.tobytes() != c[0].sens.tobytes()

    def test_eye_stream_independent_of_cohort_size(self):
        small = simulate_cohort(ScenarioSpec(Scenario.CATARACT, n_eyes=2), 5, as_series=False)
        alone = simulate_eye(ScenarioSpec(Scenario.CATARACT, n_eyes=50), 1, 5)
        assert small[1].sens.tobytes() == alone.sens.tobytes()

    def test_noise_free_recovers_rate(self):
        spec = ScenarioSpec(Scenario.FAST, n_eyes=24, factorial=True)
        for eye in simulate_cohort(spec, 0, noise=NoiseModel(constant=0.0), as_series=False):
            slope = np.polyfit(eye.times, eye.sens, 1)[0]
            unclamped = eye.true_sens.min(axis=0) > 0
            want = -0.1 + eye.pattern.mask * eye.pattern.rate
            np.testing.assert_allclose(slope[unclamped], want[unclamped], atol=1e-9)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            simulate_cohort(ScenarioSpec(Scenario.SLOW, n_eyes=0), seed=1)

    def test_csv_roundtrip(self, tmp_path):
        eyes = simulate_cohort(ScenarioSpec(Scenario.SLOW, n_eyes=3), seed=2)
        write_cohort(eyes, tmp_path / "c.csv")
        back = read_cohort(tmp_path / "c.csv")
        assert [e.eye_id for e in back] == [e.eye_id for e in eyes]
        for a, b in zip(eyes, back):
            assert a.truth == b.truth and a.scenario == b.scenario
            np.testing.assert_array_equal(a.sensitivities, b.sensitivities)
            np.testing.assert_array_equal(a.td, b.td)
            np.testing.assert_array_equal(a.times, b.times)
        write_cohort(back, tmp_path / "d.csv")
        assert (tmp_path / "c.csv").read_bytes() == (tmp_path / "d.csv").read_bytes()
