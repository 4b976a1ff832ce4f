import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vfdenoise.core import EyeSeries, VisualField, default_normative
from vfdenoise.progression import (
    Method, PERModel, ProgressionVerdict, Thresholds, analyze_cohort, apply_rule,
    cohort_summary, gri, gri_scores, linreg, md, md_criterion, outlier_mask, per_fit,
    plr_counts, plr_criterion, progressive_harness,
)
from vfdenoise.simulator import (
    Baseline, NoiseModel, Pattern, Scenario, ScenarioSpec, simulate_cohort,
)

from oracles import normal_equations

NORM = default_normative()
QUIET = NoiseModel(constant=0.0)


def noise_free_eye(kind, pattern=None, rate=None, baseline=Baseline.INFERIOR_NASAL):
    spec = ScenarioSpec(kind, n_eyes=24, factorial=True)
    for eye in simulate_cohort(spec, 0, noise=QUIET, as_series=False):
        if eye.baseline is baseline and (pattern is None or
                                         (eye.pattern.kind is pattern and eye.pattern.rate == rate)):
            return eye.to_series()
    raise LookupError


def series_from(sens, times=None, age=60.0):
    sens = np.asarray(sens, dtype=float)
    times = np.arange(len(sens)) * 0.5 if times is None else times
    exams = [VisualField.from_sensitivities(s, t, age + t, NORM) for s, t in zip(sens, times)]
    return EyeSeries("x", exams, "progressing", "test")


# --- regression -------------------------------------------------------------------

class TestLinreg:
    def test_exact_line(self):
        fit = linreg([0, 1, 2], [30, 29, 28])
        assert fit.slope == pytest.approx(-1.0, abs=1e-12)
        assert fit.intercept == pytest.approx(30.0, abs=1e-12)
        assert fit.p_value < 1e-12

    def test_constant(self):
        fit = linreg([0, 1, 2, 3], [25.0] * 4)
        assert fit.slope == 0.0 and fit.p_value == 1.0

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_normal_equations(self, seed):
        rng = np.random.default_rng(seed)
        t = np.sort(rng.uniform(0, 10, 20))
        y = 28 - 0.3 * t + rng.normal(0, 1.5, 20)
        fit = linreg(t, y)
        slope, intercept, p = normal_equations(t, y)
        assert fit.slope == pytest.approx(slope, abs=1e-9)
        assert fit.intercept == pytest.approx(intercept, abs=1e-9)
        assert fit.p_value == pytest.approx(p, abs=1e-6)

    @settings(max_examples=60)
    @given(st.floats(-0.5, 0.5), st.floats(-3, 3), st.floats(0.3, 5.0),
           st.integers(0, 10_000))
    def test_translation_and_scale(self, offset, slope, scale, seed):
        rng = np.random.default_rng(seed)
        t = np.arange(8) * 0.5
        y = 25 + slope * t + rng.normal(0, 1, 8)
        base = linreg(t, y)
        shifted = linreg(t + offset * 10, y)
        assert shifted.slope == pytest.approx(base.slope, abs=1e-9)
        assert shifted.p_value == pytest.approx(base.p_value, abs=1e-9)
        scaled = linreg(t, y * scale)
        assert scaled.slope == pytest.approx(base.slope * scale, abs=1e-9)
        assert scaled.p_value == pytest.approx(base.p_value, abs=1e-9)

    def test_errors(self):
        with pytest.raises(ValueError):
            linreg([0, 1], [1, 2])
        with pytest.raises(ValueError):
            linreg([1, 1, 1], [1, 2, 3])


# --- PLR ---------------------------------------------------------------------------

class TestPLR:
    def test_age_decline_never(self):
        eye = noise_free_eye(Scenario.AGE_DECLINE)
        assert not any(plr_criterion(eye, k) for k in range(6, 21))

    def test_focal_small_fast(self):
        eye = noise_free_eye(Scenario.FAST, Pattern.FOCAL_SMALL, -2.0)
        assert plr_criterion(eye, 20)

    def test_count_threshold(self):
        t = np.arange(10) * 0.5
        sens = np.full((10, 52), 28.0)
        sens[:, :2] -= 2.0 * t[:, None]
        assert not plr_criterion(series_from(sens, t))
        sens[:, 2] -= 2.0 * t
        assert plr_criterion(series_from(sens, t))

    @settings(max_examples=40)
    @given(st.integers(0, 10_000), st.integers(0, 51))
    def test_adding_a_qualifying_location_is_monotone(self, seed, loc):
        rng = np.random.default_rng(seed)
        t = np.arange(10) * 0.5
        sens = 28 + rng.normal(0, 1, (10, 52))
        before = plr_counts(t, sens)
        sens[:, loc] = 30 - 3.0 * t  # exact steep decline
        after = plr_counts(t, sens)
        assert np.all(after >= before)


# --- MD -------------------------------------------------------------------------------

class TestMD:
    def test_values(self):
        assert md(np.zeros(52)) == 0.0
        assert md(np.full(52, -5.0)) == -5.0
        rng = np.random.default_rng(0)
        td = rng.normal(-3, 4, 52)
        total = 0.0
        for v in td:
            total += v
        assert md(td) == pytest.approx(total / 52, abs=1e-12)

    def test_cataract(self):
        eye = noise_free_eye(Scenario.CATARACT)
        assert all(md_criterion(eye, k) for k in range(6, 21))

    def test_age_decline(self):
        eye = noise_free_eye(Scenario.AGE_DECLINE)
        assert not any(md_criterion(eye, k) for k in range(6, 21))

    def test_flat(self):
        sens = np.tile(NORM.mean_at_60, (10, 1))
        assert not md_criterion(series_from(sens, age=60.0))


# --- PER and GRI --------------------------------------------------------------------

class TestPER:
    t = np.arange(20) * 0.5

    def test_decay(self):
        fit = per_fit(self.t, np.exp(3 - 0.1 * self.t), s0=35.0)
        assert fit.model is PERModel.DECAY
        assert fit.b == pytest.approx(-0.1, abs=1e-6)
        assert fit.prc == pytest.approx(np.exp(-0.1) - 1, abs=1e-6)

    def test_constant(self):
        fit = per_fit(self.t, np.full(20, 22.0), s0=35.0)
        assert fit.b == pytest.approx(0.0, abs=1e-12)
        assert fit.prc == pytest.approx(0.0, abs=1e-12)
        assert fit.p_value == 1.0

    def test_improvement(self):
        fit = per_fit(self.t, 35.0 - np.exp(1 - 0.2 * self.t), s0=35.0)
        assert fit.model is PERModel.IMPROVEMENT
        assert fit.b == pytest.approx(-0.2, abs=1e-6)
        assert fit.prc > 0

    @settings(max_examples=40)
    @given(st.floats(-0.3, -1e-3), st.floats(1.0, 3.4))
    def test_decay_recovery(self, b, a):
        s = np.exp(a + b * self.t)
        assert per_fit(self.t, s, 40.0).b == pytest.approx(b, abs=1e-6)


def test_outlier_mask_drops_spike():
    t = np.arange(12) * 0.5
    y = 25 - 0.5 * t + np.random.default_rng(1).normal(0, 0.3, 12)
    y[7] -= 8
    keep = outlier_mask(t, y)
    assert not keep[7] and keep.sum() == 11


class TestGRI:
    def test_age_decline_zero(self):
        eye = noise_free_eye(Scenario.AGE_DECLINE)
        assert all(gri(eye, NORM, k).value == 0.0 for k in range(6, 21))

    def test_large_fast_below_small_slow(self):
        for b in Baseline:
            large = noise_free_eye(Scenario.FAST, Pattern.FOCAL_LARGE, -2.0, b)
            small = noise_free_eye(Scenario.SLOW, Pattern.FOCAL_SMALL, -0.5, b)
            assert gri(large, NORM).value < gri(small, NORM).value

    @settings(max_examples=30)
    @given(st.integers(0, 10_000))
    def test_bounds(self, seed):
        rng = np.random.default_rng(seed)
        sens = np.clip(rng.uniform(0, 35, (12, 52)) - rng.uniform(0, 4) * np.arange(12)[:, None],
                       0, 40)
        g = gri_scores(np.arange(12) * 0.5, sens, NORM)
        assert g.shape == (7,)
        assert np.all(np.abs(g) <= 10.0)

    def test_vectorised_matches_single(self):
        eyes = simulate_cohort(ScenarioSpec(Scenario.MEDIUM, n_eyes=6, factorial=True), 4)
        stacked = gri_scores(np.stack([e.times for e in eyes]),
                             np.stack([e.sensitivities for e in eyes]), NORM)
        for eye, row in zip(eyes, stacked):
            assert gri(eye, NORM).value == row[-1]


# --- harness --------------------------------------------------------------------------

class TestRule:
    times = np.arange(15) * 0.5 + 2.5

    def test_late_conversion(self):
        trace = [False, False] + [True] * 13
        assert apply_rule(trace, self.times) == (True, 3.5)

    def test_not_at_last(self):
        assert apply_rule([True, True, False], self.times[:3]) == (False, None)

    def test_all_false(self):
        assert apply_rule([False] * 15, self.times) == (False, None)

    def test_isolated_positive_ignored(self):
        trace = [True, False, False, True, True]
        assert apply_rule(trace, self.times[:5]) == (True, self.times[3])

    def test_single_last_positive(self):
        assert apply_rule([False, False, True], self.times[:3]) == (False, None)


def test_harness_matches_cohort_path():
    eyes = simulate_cohort(ScenarioSpec(Scenario.FAST, n_eyes=8, factorial=True), 2)
    for method in Method:
        batch = analyze_cohort(eyes, method)
        for eye, v in zip(eyes, batch):
            single = progressive_harness(eye, method)
            assert (single.progressed, single.conversion_time, single.trace) == \
                   (v.progressed, v.conversion_time, v.trace)


def test_noise_free_fast_focal_large_progresses_under_all_methods():
    eye = noise_free_eye(Scenario.FAST, Pattern.FOCAL_LARGE, -2.0)
    for method in Method:
        v = progressive_harness(eye, method)
        assert v.progressed, method


def verdict(progressed, t=None):
    return ProgressionVerdict("e", Method.PLR, progressed, t)


class TestSummary:
    def test_none(self):
        assert cohort_summary([verdict(False)] * 376) == (0.0, None)

    def test_all_at_five(self):
        assert cohort_summary([verdict(True, 5.0)] * 10) == (100.0, 5.0)

    def test_mixed(self):
        vs = [verdict(True, 3.0), verdict(False), verdict(True, 6.0), verdict(False)]
        assert cohort_summary(vs) == (50.0, 4.5)

    def test_empty(self):
        with pytest.raises(ValueError):
            cohort_summary([])


def test_custom_thresholds():
    t = np.arange(10) * 0.5
    sens = np.full((10, 52), 28.0)
    sens[:, :2] -= 2.0 * t[:, None]
    assert plr_criterion(series_from(sens, t), th=Thresholds(plr_min_locations=2))
