"""Kaplan-Meier estimation with log-Greenwood confidence bands."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class SurvivalInput:
    time: float
    event: bool

    def __post_init__(self):
        if not self.time > 0:
            raise ValueError("survival times must be positive")


@dataclass
class KMCurve:
    """Product-limit estimate on every distinct observed time.

    Row 0 is t = 0 with S = 1.  ``at_risk`` counts subjects with time >= t;
    at a time carrying both events and censorings the events are applied
    first, so the censored subjects are still at risk for that step.
    """

    times: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray
    censored: np.ndarray
    survival: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray

    @property
    def event_times(self) -> np.ndarray:
        return self.times[self.events > 0]

    def at(self, t) -> np.ndarray | float:
        """S(t) as a right-continuous step function."""
        idx = np.searchsorted(self.times, t, side="right") - 1
        out = self.survival[np.maximum(idx, 0)]
        return float(out) if np.ndim(out) == 0 else out


def km_estimate(inputs, conf_level: float = 0.95) -> KMCurve:
    """Kaplan-Meier curve from :class:`SurvivalInput` items or (time, event) pairs."""
    inputs = [x if isinstance(x, SurvivalInput) else SurvivalInput(float(x[0]), bool(x[1]))
              for x in inputs]
    if not inputs:
        raise ValueError("no observations")
    t = np.array([x.time for x in inputs])
    e = np.array([x.event for x in inputs], dtype=bool)
    uniq = np.unique(t)
    d = np.array([np.sum(e & (t == u)) for u in uniq])
    c = np.array([np.sum(~e & (t == u)) for u in uniq])
    n = len(t) - np.concatenate([[0], np.cumsum(d + c)[:-1]])

    surv = np.cumprod((n - d) / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        gw = np.cumsum(np.where(n > d, d / (n * (n - d)), np.inf))
    z = stats.norm.ppf(0.5 + conf_level / 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        half = z * np.sqrt(gw)
        lo = np.where(surv > 0, surv * np.exp(-half), 0.0)
        hi = np.where(surv > 0, np.minimum(surv * np.exp(half), 1.0), 0.0)
    lo = np.clip(np.nan_to_num(lo), 0.0, 1.0)

    head = lambda a, v: np.concatenate([[v], a])  # noqa: E731
    return KMCurve(head(uniq, 0.0), head(n, len(t)), head(d, 0), head(c, 0),
                   head(surv, 1.0), head(lo, 1.0), head(hi, 1.0))


def survival_inputs(verdicts, follow_up: dict[str, float] | float) -> list[SurvivalInput]:
    """Event at the conversion time for progressors, censoring at last follow-up otherwise."""
    out = []
    for v in verdicts:
        last = follow_up if np.isscalar(follow_up) else follow_up[v.eye_id]
        out.append(SurvivalInput(v.conversion_time if v.progressed else float(last), v.progressed))
    return out


def write_km_csv(curves: KMCurve | dict[str, KMCurve], path) -> None:
    """Write one curve, or several labelled curves stacked in one table."""
    labelled = isinstance(curves, dict)
    items = curves.items() if labelled else [(None, curves)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((["curve"] if labelled else [])
                   + ["time", "at_risk", "events", "censored", "S", "ci_low", "ci_high"])
        for label, cv in items:
            for t, n, d, c, s, lo, hi in zip(cv.times, cv.at_risk, cv.events, cv.censored,
                                             cv.survival, cv.ci_low, cv.ci_high):
                w.writerow(([label] if labelled else [])
                           + [repr(float(t)), int(n), int(d), int(c),
                              f"{s:.6f}", f"{lo:.6f}", f"{hi:.6f}"])


def plot_km(curves: dict[str, KMCurve], path, title: str = "") -> None:
    """Overlay step curves with shaded bands and save as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "vfdenoise", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, cv in curves.items():
            (line,) = ax.step(cv.times, cv.survival, where="post", label=label)
            ax.fill_between(cv.times, cv.ci_low, cv.ci_high, step="post", alpha=0.15,
                            color=line.get_color(), linewidth=0)
        ax.set_xlabel("Follow-up (years)")
        ax.set_ylabel("Proportion without progression")
        ax.set_ylim(0, 1.02)
        ax.set_title(title)
        ax.legend(loc="lower left", fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
