"""Progression detection: pointwise linear regression, MD trend and GRI.

Every criterion is evaluated on growing prefixes of an eye's exam series
(first 6 exams, first 7, ... all of them).  The array functions here work
on stacked input of shape (..., n_exams, 52) and return one value per
prefix, so whole cohorts are analysed in a handful of numpy calls.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import N_LOCATIONS, EyeSeries, NormativeModel, default_normative

MIN_VISITS = 6


class Method(str, enum.Enum):
    PLR = "PLR"
    MD = "MD"
    GRI = "GRI"


@dataclass(frozen=True)
class Thresholds:
    plr_slope: float = -1.0
    plr_p: float = 0.01
    plr_min_locations: int = 3
    md_slope: float = -0.5
    md_p: float = 0.05
    gri_p: float = 0.05
    gri_scale: float = 5.2
    gri_cutoff: float = -1.0
    outlier_z: float = 3.0
    log_floor: float = 0.1
    min_visits: int = MIN_VISITS


DEFAULT_THRESHOLDS = Thresholds()


# --- least squares ---------------------------------------------------------------

@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    p_value: float
    n: int
    residual_se: float


def ols(t, y, w=None):
    """Batched simple linear regression along the last axis.

    ``w`` is an optional 0/1 inclusion mask.  Returns arrays
    ``(slope, intercept, p_value, n, residual_se)``; the p-value is the
    two-sided t-test of a zero slope with n - 2 degrees of freedom.  Exact
    fits get p = 0, or p = 1 when the fitted slope is also zero.
    """
    y = np.asarray(y, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), y.shape)
    w = np.ones_like(y) if w is None else np.broadcast_to(np.asarray(w, dtype=float), y.shape)
    n = w.sum(-1)
    tm = (w * t).sum(-1) / n
    ym = (w * y).sum(-1) / n
    dt = t - tm[..., None]
    dy = y - ym[..., None]
    sxx = (w * dt * dt).sum(-1)
    slope = (w * dt * dy).sum(-1) / sxx
    intercept = ym - slope * tm
    resid = dy - slope[..., None] * dt
    rss = (w * resid * resid).sum(-1)
    df = n - 2
    with np.errstate(divide="ignore", invalid="ignore"):
        resid_se = np.sqrt(rss / df)
        tstat = slope / (resid_se / np.sqrt(sxx))
        p = 2.0 * stats.t.sf(np.abs(tstat), df)
    scale = np.maximum(1.0, np.max(np.abs(np.where(w > 0, y, 0.0)), axis=-1))
    span = np.max(np.where(w > 0, t, -np.inf), -1) - np.min(np.where(w > 0, t, np.inf), -1)
    exact = resid_se <= 1e-12 * scale
    flat = np.abs(slope) * span <= 1e-10 * scale
    p = np.where(exact, np.where(flat, 1.0, 0.0), p)
    return slope, intercept, p, n, resid_se


def linreg(times, values) -> RegressionFit:
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.ndim != 1:
        raise ValueError("times and values must be 1-D and of equal length")
    if len(times) < 3:
        raise ValueError("at least 3 points are needed")
    if np.ptp(times) == 0:
        raise ValueError("times are all equal")
    s, a, p, n, se = ols(times, values)
    return RegressionFit(float(s), float(a), float(p), int(n), float(se))


def _prefix_fits(t, y, k):
    """OLS on the first ``k`` points along the last axis."""
    return ols(t[..., :k], y[..., :k])


# --- PLR -----------------------------------------------------------------------

def plr_counts(times, sens, th: Thresholds = DEFAULT_THRESHOLDS) -> np.ndarray:
    """Number of significantly deteriorating locations for each prefix.

    ``sens`` has shape (..., n_exams, 52); the result (..., n_exams - 5).
    """
    y = np.swapaxes(np.asarray(sens, dtype=float), -1, -2)
    t = np.asarray(times, dtype=float)[..., None, :]
    out = []
    for k in range(th.min_visits, y.shape[-1] + 1):
        slope, _, p, _, _ = _prefix_fits(t, y, k)
        out.append(np.sum((slope <= th.plr_slope) & (p <= th.plr_p), axis=-1))
    return np.stack(out, axis=-1)


def plr_flags(times, sens, th: Thresholds = DEFAULT_THRESHOLDS) -> np.ndarray:
    return plr_counts(times, sens, th) >= th.plr_min_locations


def plr_criterion(series: EyeSeries, k: int | None = None,
                  th: Thresholds = DEFAULT_THRESHOLDS) -> bool:
    """PLR rule on the first ``k`` exams (all exams by default)."""
    k = len(series.exams) if k is None else k
    if k < th.min_visits:
        raise ValueError(f"need at least {th.min_visits} exams")
    return bool(plr_flags(series.times[:k], series.sensitivities[:k], th)[-1])


# --- MD ------------------------------------------------------------------------

def md(td) -> np.ndarray | float:
    """Unweighted mean of the 52 total-deviation values."""
    td = np.asarray(td, dtype=float)
    if td.shape[-1] != N_LOCATIONS:
        raise ValueError("expected 52 TD values")
    out = td.mean(axis=-1)
    return float(out) if out.ndim == 0 else out


def md_slopes(times, td, th: Thresholds = DEFAULT_THRESHOLDS):
    m = md(td)
    t = np.asarray(times, dtype=float)
    fits = [_prefix_fits(t, m, k) for k in range(th.min_visits, m.shape[-1] + 1)]
    return np.stack([f[0] for f in fits], -1), np.stack([f[2] for f in fits], -1)


def md_flags(times, td, th: Thresholds = DEFAULT_THRESHOLDS) -> np.ndarray:
    slope, p = md_slopes(times, td, th)
    return (slope <= th.md_slope) & (p <= th.md_p)


def md_criterion(series: EyeSeries, k: int | None = None,
                 th: Thresholds = DEFAULT_THRESHOLDS) -> bool:
    k = len(series.exams) if k is None else k
    if k < th.min_visits:
        raise ValueError(f"need at least {th.min_visits} exams")
    return bool(md_flags(series.times[:k], series.td[:k], th)[-1])


# --- PER / GRI -------------------------------------------------------------------

class PERModel(str, enum.Enum):
    DECAY = "Decay"
    IMPROVEMENT = "Improvement"


@dataclass(frozen=True)
class PERFit:
    model: PERModel
    a: float
    b: float
    p_value: float
    prc: float


def _per(t, s, s0, w, floor):
    """Batched exponential fit; returns (is_decay, a, b, p, prc)."""
    trend = ols(t, s, w)[0]
    decay = trend <= 0
    target = np.where(decay[..., None], np.maximum(s, floor),
                      np.maximum(np.asarray(s0)[..., None] - s, floor))
    b, a, p, _, _ = ols(t, np.log(target), w)
    growth = np.expm1(b)
    prc = np.where(decay, growth, -growth)
    return decay, a, b, p, prc


def per_fit(times, values, s0: float, floor: float = 0.1) -> PERFit:
    """Pointwise exponential regression of one location.

    A falling series is fitted as ``S = exp(a + b t)``, a rising one as
    ``S0 - S = exp(a + b t)``.  ``prc`` is the yearly proportional change
    ``exp(b) - 1``, sign-flipped for the improvement model so that a
    positive value always means improvement.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(times) < 3:
        raise ValueError("at least 3 points are needed")
    if np.ptp(times) == 0:
        raise ValueError("times are all equal")
    decay, a, b, p, prc = _per(times, values, s0, None, floor)
    return PERFit(PERModel.DECAY if decay else PERModel.IMPROVEMENT,
                  float(a), float(b), float(p), float(prc))


def outlier_mask(t, y, z: float = 3.0) -> np.ndarray:
    """Keep-mask dropping points whose externally studentized residual from
    a straight-line fit exceeds ``z`` in magnitude (single pass)."""
    y = np.asarray(y, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), y.shape)
    n = y.shape[-1]
    if n < 4:
        return np.ones_like(y, dtype=bool)
    slope, intercept, _, _, _ = ols(t, y)
    resid = y - (intercept[..., None] + slope[..., None] * t)
    dt = t - t.mean(-1, keepdims=True)
    h = 1.0 / n + dt * dt / (dt * dt).sum(-1, keepdims=True)
    rss = (resid * resid).sum(-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        s2_loo = (rss - resid * resid / (1.0 - h)) / (n - 3)
        tstud = resid / np.sqrt(s2_loo * (1.0 - h))
    scale = np.maximum(1.0, np.abs(y).max(-1, keepdims=True))
    tiny = np.sqrt(np.maximum(rss, 0.0) / n) <= 1e-12 * scale
    return ~((np.abs(tstud) > z) & ~tiny & np.isfinite(tstud))


@dataclass(frozen=True)
class GRIScore:
    value: float
    n_locations: int


def gri_scores(times, sens, norm: NormativeModel | None = None, baseline_age: float = 60.0,
               th: Thresholds = DEFAULT_THRESHOLDS, return_counts: bool = False):
    """GRI for each prefix of stacked series (..., n_exams, 52).

    Sensitivities are age-adjusted by removing the normal ageing slope,
    outliers are dropped, and each location gets a PER fit; significant
    PRCs are summed and scaled by ``10 / gri_scale`` into [-10, 10].
    """
    norm = norm or default_normative()
    y = np.swapaxes(np.asarray(sens, dtype=float), -1, -2)
    t = np.asarray(times, dtype=float)
    rel = t - t[..., :1]
    y = y - norm.age_slope * rel[..., None, :]
    s0 = norm.normative(baseline_age) + 2.0 * norm.sd
    tt = t[..., None, :]
    scores, counts = [], []
    for k in range(th.min_visits, y.shape[-1] + 1):
        yk, tk = y[..., :k], tt[..., :k]
        keep = outlier_mask(tk, yk, th.outlier_z)
        _, _, _, p, prc = _per(tk, yk, s0, keep, th.log_floor)
        sig = p <= th.gri_p
        total = np.where(sig, prc, 0.0).sum(-1)
        scores.append(np.clip(10.0 * total / th.gri_scale, -10.0, 10.0))
        counts.append(sig.sum(-1))
    out = np.stack(scores, -1)
    return (out, np.stack(counts, -1)) if return_counts else out


def gri(series: EyeSeries, norm: NormativeModel | None = None, k: int | None = None,
        th: Thresholds = DEFAULT_THRESHOLDS) -> GRIScore:
    k = len(series.exams) if k is None else k
    if k < th.min_visits:
        raise ValueError(f"need at least {th.min_visits} exams")
    v, c = gri_scores(series.times[:k], series.sensitivities[:k], norm,
                      series.exams[0].age_at_exam, th, return_counts=True)
    return GRIScore(float(v[-1]), int(c[-1]))


def gri_flags(times, sens, norm=None, baseline_age=60.0, th: Thresholds = DEFAULT_THRESHOLDS):
    return gri_scores(times, sens, norm, baseline_age, th) <= th.gri_cutoff


# --- harness ---------------------------------------------------------------------

@dataclass
class ProgressionVerdict:
    eye_id: str
    method: Method
    progressed: bool
    conversion_time: float | None
    trace: list[bool] = field(default_factory=list)
    scenario: str | None = None
    pipeline: str = "Raw"


def apply_rule(trace, times):
    """Two consecutive positive analysis points, and positive at the last one.

    ``times[j]`` is the follow-up time of analysis point ``j``.  Returns
    ``(progressed, conversion_time)``; conversion is the first point of
    the earliest positive pair.
    """
    trace = np.asarray(trace, dtype=bool)
    if len(trace) < 2 or not trace[-1]:
        return False, None
    pairs = np.flatnonzero(trace[:-1] & trace[1:])
    if len(pairs) == 0:
        return False, None
    return True, float(times[pairs[0]])


def criterion_traces(method, times, sens, ages=None, norm: NormativeModel | None = None,
                     th: Thresholds = DEFAULT_THRESHOLDS) -> np.ndarray:
    """Boolean criterion per analysis point for stacked series (..., n_exams, 52)."""
    method = Method(method)
    norm = norm or default_normative()
    times = np.asarray(times, dtype=float)
    if ages is None:
        ages = 60.0 + times - times[..., :1]
    ages = np.asarray(ages, dtype=float)
    if method is Method.PLR:
        return plr_flags(times, sens, th)
    if method is Method.MD:
        return md_flags(times, np.asarray(sens) - norm.normative(ages), th)
    return gri_flags(times, sens, norm, ages[..., 0], th)


def progressive_harness(series: EyeSeries, method, denoiser=None,
                        norm: NormativeModel | None = None,
                        th: Thresholds = DEFAULT_THRESHOLDS,
                        pipeline: str = "Raw") -> ProgressionVerdict:
    """Run ``method`` on prefixes 6..n of one eye and apply the persistence rule.

    ``denoiser`` is an optional checkpoint; every exam is reconstructed by
    it before analysis.
    """
    if len(series.exams) < th.min_visits:
        raise ValueError(f"need at least {th.min_visits} exams")
    sens = series.sensitivities
    if denoiser is not None:
        from .neural.training import denoise_series
        cats = np.stack([e.p_categories for e in series.exams])
        sens = denoise_series(denoiser, sens, cats)
    trace = criterion_traces(method, series.times, sens, series.ages, norm, th)
    analysis_times = series.times[th.min_visits - 1:]
    progressed, conv = apply_rule(trace, analysis_times)
    return ProgressionVerdict(series.eye_id, Method(method), progressed, conv,
                              trace.tolist(), series.scenario, pipeline)


def analyze_cohort(eyes: list[EyeSeries], method, sens=None, norm=None,
                   th: Thresholds = DEFAULT_THRESHOLDS,
                   pipeline: str = "Raw") -> list[ProgressionVerdict]:
    """Vectorised :func:`progressive_harness` for eyes sharing a visit count.

    ``sens`` optionally replaces the stored sensitivities (e.g. denoised
    fields) with an array of shape (n_eyes, n_exams, 52).
    """
    times = np.stack([e.times for e in eyes])
    ages = np.stack([e.ages for e in eyes])
    sens = np.stack([e.sensitivities for e in eyes]) if sens is None else sens
    traces = criterion_traces(method, times, sens, ages, norm, th)
    out = []
    for eye, tr, t in zip(eyes, traces, times):
        progressed, conv = apply_rule(tr, t[th.min_visits - 1:])
        out.append(ProgressionVerdict(eye.eye_id, Method(method), progressed, conv,
                                      tr.tolist(), eye.scenario, pipeline))
    return out


def cohort_summary(verdicts: list[ProgressionVerdict]):
    """Percent progressed and mean conversion time among progressors (None if none)."""
    if not verdicts:
        raise ValueError("empty cohort")
    conv = [v.conversion_time for v in verdicts if v.progressed]
    pct = 100.0 * len(conv) / len(verdicts)
    return pct, (float(np.mean(conv)) if conv else None)
