"""Longitudinal 24-2 field simulation with sensitivity-dependent noise.

Each simulated eye starts from one of two glaucomatous baseline fields,
declines by normal ageing at every location, and (for the progression
settings) declines further at a scotoma-shaped subset of locations.
Measurement noise is Gaussian with an SD that grows as sensitivity falls.
"""

from __future__ import annotations

import csv
import enum
import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import (
    DB_MAX, DB_MIN, N_LOCATIONS, EyeSeries, NormativeModel, VisualField,
    build_grid, categorize_pvalue, default_normative, hill_of_vision,
)


class Scenario(str, enum.Enum):
    AGE_DECLINE = "AgeDecline"
    SLOW = "SlowProgression"
    MEDIUM = "MediumProgression"
    FAST = "FastProgression"
    CATARACT = "Cataract"

    @property
    def progressing(self) -> bool:
        return self in (Scenario.SLOW, Scenario.MEDIUM, Scenario.FAST)


SCENARIOS = tuple(Scenario)
SCENARIO_RATE = {Scenario.SLOW: -0.5, Scenario.MEDIUM: -1.0, Scenario.FAST: -2.0}
PROGRESSION_RATES = (-0.5, -1.0, -2.0)
CATARACT_RATE = -1.0


class Pattern(str, enum.Enum):
    FOCAL_SMALL = "FocalSmall"
    FOCAL_MEDIUM = "FocalMedium"
    FOCAL_LARGE = "FocalLarge"
    DIFFUSE = "Diffuse"


class Baseline(str, enum.Enum):
    INFERIOR_NASAL = "InferiorNasalDefect"
    SUPERIOR_ARCUATE = "SuperiorArcuate"


# Defect depth (dB below the age-60 normal) of the two baseline fields.
_BASELINE_DEFECTS = {
    Baseline.INFERIOR_NASAL: {
        (-27, -3): 12, (-21, -3): 10, (-15, -3): 8, (-21, -9): 15, (-15, -9): 12,
        (-9, -9): 8, (-15, -15): 13, (-9, -15): 10, (-9, -21): 11, (-3, -21): 8,
    },
    Baseline.SUPERIOR_ARCUATE: {
        (-27, 3): 8, (-21, 9): 12, (-15, 9): 14, (-9, 9): 10, (-15, 15): 15,
        (-9, 15): 13, (-3, 15): 11, (3, 15): 9, (-9, 21): 12, (-3, 21): 10,
    },
}

_SUPERIOR_ARCUATE = [(-21, 9), (-15, 9), (-9, 9), (-15, 15), (-9, 15), (-3, 15), (-9, 21), (-3, 21)]
_INFERIOR_ARCUATE = [(x, -y) for x, y in _SUPERIOR_ARCUATE]

# Progressing locations per (baseline, pattern).  Small: nasal scotoma or
# paracentral; medium: nasal step or arcuate reaching 5 deg from fixation;
# large: paired superior and inferior arcuates.
_SCOTOMAS = {
    (Baseline.INFERIOR_NASAL, Pattern.FOCAL_SMALL): [(-27, 3), (-21, 3), (-27, -3), (-21, -3)],
    (Baseline.INFERIOR_NASAL, Pattern.FOCAL_MEDIUM): [
        (-27, 3), (-21, 3), (-15, 3), (-27, -3), (-21, -3), (-15, -3), (-21, 9), (-21, -9)],
    (Baseline.SUPERIOR_ARCUATE, Pattern.FOCAL_SMALL): [(-3, 3), (3, 3), (-3, 9), (3, 9)],
    (Baseline.SUPERIOR_ARCUATE, Pattern.FOCAL_MEDIUM): [
        (-3, 3), (-9, 3), (-9, 9), (-15, 9), (-21, 9), (-15, 15), (-9, 15), (-3, 15)],
}
for _b in Baseline:
    _SCOTOMAS[(_b, Pattern.FOCAL_LARGE)] = _SUPERIOR_ARCUATE + _INFERIOR_ARCUATE


@dataclass(frozen=True)
class BaselineField:
    name: Baseline
    sensitivities: np.ndarray


@lru_cache(maxsize=None)
def baseline_field(name: Baseline) -> BaselineField:
    name = Baseline(name)
    grid = build_grid()
    sens = hill_of_vision(grid)
    for xy, depth in _BASELINE_DEFECTS[name].items():
        sens[grid.location(*xy)] -= depth
    sens = np.clip(sens, DB_MIN, DB_MAX)
    sens.flags.writeable = False
    return BaselineField(name, sens)


@dataclass(frozen=True)
class DecayPattern:
    kind: Pattern
    affected_indices: tuple[int, ...]
    rate: float

    @classmethod
    def make(cls, kind: Pattern, baseline: Baseline, rate: float) -> "DecayPattern":
        kind = Pattern(kind)
        if kind is Pattern.DIFFUSE:
            idx = tuple(range(N_LOCATIONS))
        else:
            idx = tuple(sorted(build_grid().locations(_SCOTOMAS[(Baseline(baseline), kind)])))
        return cls(kind, idx, float(rate))

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(N_LOCATIONS, dtype=bool)
        m[list(self.affected_indices)] = True
        return m


NO_DECAY = DecayPattern(Pattern.DIFFUSE, (), 0.0)


@dataclass(frozen=True)
class NoiseModel:
    """Measurement noise SD as a function of the true sensitivity.

    ``sd(s) = min(exp(slope * s + intercept), cap)`` unless ``constant`` is
    given, in which case the SD is that constant everywhere.
    """

    slope: float = -0.081
    intercept: float = 3.27
    cap: float = 6.0
    constant: float | None = None

    def sd(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.constant is not None:
            return np.full_like(s, self.constant)
        return np.minimum(np.exp(self.slope * s + self.intercept), self.cap)


@dataclass(frozen=True)
class ScenarioSpec:
    kind: Scenario
    n_eyes: int = 376
    n_exams: int = 20
    duration: float = 9.5
    baseline_age: float = 60.0
    age_slope: float = -0.1
    factorial: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", Scenario(self.kind))
        if self.n_exams < 6:
            raise ValueError("n_exams must be at least 6")
        if self.duration <= 0:
            raise ValueError("duration must be positive")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_exams) * (self.duration / (self.n_exams - 1))

    def combinations(self) -> list[tuple[Baseline, DecayPattern]]:
        """Per-eye (baseline, decay) assignments cycled round-robin."""
        if self.kind is Scenario.AGE_DECLINE:
            return [(b, NO_DECAY) for b in Baseline]
        if self.kind is Scenario.CATARACT:
            return [(b, DecayPattern.make(Pattern.DIFFUSE, b, CATARACT_RATE)) for b in Baseline]
        rates = PROGRESSION_RATES if self.factorial else (SCENARIO_RATE[self.kind],)
        return [(b, DecayPattern.make(p, b, r))
                for b, p, r in itertools.product(Baseline, Pattern, rates)]


def true_trajectory(baseline: BaselineField, pattern: DecayPattern, spec: ScenarioSpec,
                    k=None) -> np.ndarray:
    """Noise-free sensitivities at exam ``k`` (or all exams when ``k`` is None)."""
    t = spec.times if k is None else spec.times[k]
    t = np.asarray(t, dtype=float)[..., None]
    sens = baseline.sensitivities + spec.age_slope * t + pattern.mask * pattern.rate * t
    return np.clip(sens, DB_MIN, DB_MAX)


def add_noise(sens, model: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Perturb every location independently and clamp to [0, 40] dB."""
    sens = np.asarray(sens, dtype=float)
    eps = rng.standard_normal(sens.shape) * model.sd(sens)
    return np.clip(sens + eps, DB_MIN, DB_MAX)


def noisy_field(field: VisualField, model: NoiseModel, rng: np.random.Generator,
                norm: NormativeModel | None = None) -> VisualField:
    return VisualField.from_sensitivities(add_noise(field.sensitivities, model, rng),
                                          field.exam_time, field.age_at_exam, norm)


def eye_rng(seed: int, scenario: Scenario, eye_index: int) -> np.random.Generator:
    """Independent stream for one eye, addressable without generating the others."""
    ss = np.random.SeedSequence(seed, spawn_key=(SCENARIOS.index(Scenario(scenario)), eye_index))
    return np.random.default_rng(ss)


@dataclass
class SimulatedEye:
    """Compact array form of a simulated eye; see :meth:`to_series`."""

    eye_id: str
    scenario: Scenario
    baseline: Baseline
    pattern: DecayPattern
    times: np.ndarray
    ages: np.ndarray
    true_sens: np.ndarray
    sens: np.ndarray

    @property
    def truth(self) -> str:
        return "progressing" if self.scenario.progressing else "nonprogressing"

    def to_series(self, norm: NormativeModel | None = None) -> EyeSeries:
        exams = [VisualField.from_sensitivities(s, t, a, norm)
                 for s, t, a in zip(self.sens, self.times, self.ages)]
        return EyeSeries(self.eye_id, exams, self.truth, self.scenario.value)


def simulate_eye(spec: ScenarioSpec, eye_index: int, seed: int,
                 noise: NoiseModel | None = None) -> SimulatedEye:
    noise = noise or NoiseModel()
    combos = spec.combinations()
    base_name, pattern = combos[eye_index % len(combos)]
    base = baseline_field(base_name)
    truth = true_trajectory(base, pattern, spec)
    noisy = add_noise(truth, noise, eye_rng(seed, spec.kind, eye_index))
    return SimulatedEye(
        eye_id=f"{spec.kind.value}-{eye_index:04d}", scenario=spec.kind, baseline=base_name,
        pattern=pattern, times=spec.times, ages=spec.baseline_age + spec.times,
        true_sens=truth, sens=noisy,
    )


def simulate_cohort(spec: ScenarioSpec, seed: int, noise: NoiseModel | None = None,
                    as_series: bool = True, norm: NormativeModel | None = None):
    """Simulate ``spec.n_eyes`` eyes.

    Returns a list of :class:`EyeSeries` (default) or of
    :class:`SimulatedEye` when ``as_series`` is false.
    """
    if spec.n_eyes <= 0:
        raise ValueError("n_eyes must be positive")
    eyes = [simulate_eye(spec, i, seed, noise) for i in range(spec.n_eyes)]
    if as_series:
        return [e.to_series(norm) for e in eyes]
    return eyes


def derive_cutoffs(n_exams: int = 10_000, seed: int = 20240601,
                   noise: NoiseModel | None = None,
                   norm: NormativeModel | None = None) -> np.ndarray:
    """Per-location TD quantiles (5, 2, 1, 0.5 %) of a simulated healthy cohort.

    Healthy exams are the age-adjusted normal field plus measurement noise,
    at ages spread uniformly over 40-80 years.
    """
    noise = noise or NoiseModel()
    mean = norm.mean_at_60 if norm is not None else hill_of_vision()
    model = NormativeModel(mean, -0.1 if norm is None else norm.age_slope)
    rng = np.random.default_rng(seed)
    ages = rng.uniform(40.0, 80.0, n_exams)
    truth = model.normative(ages)
    td = add_noise(truth, noise, rng) - truth
    return np.quantile(td, [0.05, 0.02, 0.01, 0.005], axis=0).T


# --- cohort files -----------------------------------------------------------

def _cohort_header() -> list[str]:
    return (["eye_id", "scenario", "truth", "exam_index", "t_years", "age"]
            + [f"s{i}" for i in range(1, 53)] + [f"td{i}" for i in range(1, 53)]
            + [f"p{i}" for i in range(1, 53)])


def write_cohort(eyes: list[EyeSeries], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_cohort_header())
        for eye in eyes:
            for k, ex in enumerate(eye.exams):
                w.writerow([eye.eye_id, eye.scenario, eye.truth, k, repr(ex.exam_time),
                            repr(ex.age_at_exam)]
                           + [repr(float(v)) for v in ex.sensitivities]
                           + [repr(float(v)) for v in ex.td]
                           + [int(c) for c in ex.p_categories])


def read_cohort(path) -> list[EyeSeries]:
    eyes: dict[str, list] = {}
    meta: dict[str, tuple] = {}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != _cohort_header():
            raise ValueError(f"{path}: unexpected cohort header")
        for row in r:
            eid = row[0]
            meta.setdefault(eid, (row[1], row[2]))
            vals = np.array(row[4:6 + 104], dtype=float)
            cats = np.array(row[6 + 104:], dtype=np.int8)
            eyes.setdefault(eid, []).append(VisualField(
                vals[2:54], float(vals[0]), float(vals[1]), vals[54:106], cats))
    return [EyeSeries(eid, exams, meta[eid][1], meta[eid][0]) for eid, exams in eyes.items()]


def scotoma_table() -> list[dict]:
    """Rows describing every (baseline, pattern) location set, for documentation."""
    grid = build_grid()
    rows = []
    for (b, p), xy in sorted(_SCOTOMAS.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        idx = grid.locations(xy)
        rows.append({"baseline": b.value, "pattern": p.value, "n": len(idx),
                     "grid_index": [grid.kept_indices[i] for i in idx], "xy": xy})
    return rows


def p_categories(sens, ages, norm: NormativeModel | None = None) -> np.ndarray:
    norm = norm or default_normative()
    return categorize_pvalue(np.asarray(sens) - norm.normative(ages), norm.quantile_cutoffs)
