"""24-2 grid geometry, normative model, total deviation and p-value categories.

Locations are numbered 1..54 in row-major order (top row first, left to
right, right-eye orientation).  The two blind-spot locations 26 and 35 are
dropped everywhere else in the package, so arrays of length 52 are the
working representation.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

ROW_SIZES = (4, 6, 8, 9, 9, 8, 6, 4)
ROW_Y = (21, 15, 9, 3, -3, -9, -15, -21)
BLIND_SPOT = frozenset({26, 35})
N_LOCATIONS = 52
SCALE_DB = 40.0
DB_MIN, DB_MAX = 0.0, 40.0

NORMATIVE_VERSION = 1
NORMATIVE_FILE = "normative_24_2.csv"


@dataclass(frozen=True)
class Grid24_2:
    """Test-point layout of the 24-2 pattern.

    ``points[j]`` is the (x, y) position in degrees of 1-based location
    ``j + 1``.
    """

    points: tuple[tuple[int, int], ...]
    blind_spot_indices: frozenset[int] = BLIND_SPOT

    @property
    def kept_indices(self) -> tuple[int, ...]:
        """1-based indices of the 52 analysed locations."""
        return tuple(i for i in range(1, len(self.points) + 1)
                     if i not in self.blind_spot_indices)

    @property
    def coords(self) -> np.ndarray:
        """(52, 2) array of analysed-location coordinates."""
        return np.array([self.points[i - 1] for i in self.kept_indices], dtype=float)

    def row_sizes(self) -> list[int]:
        ys = [p[1] for p in self.points]
        return [ys.count(y) for y in sorted(set(ys), reverse=True)]

    def location(self, x: int, y: int) -> int:
        """0-based position in the 52-vector of the point at (x, y)."""
        try:
            return self.kept_indices.index(self.points.index((x, y)) + 1)
        except ValueError:
            raise KeyError(f"({x}, {y}) is not an analysed 24-2 location") from None

    def locations(self, xy) -> list[int]:
        return [self.location(x, y) for x, y in xy]


@lru_cache(maxsize=None)
def build_grid() -> Grid24_2:
    points = []
    for size, y in zip(ROW_SIZES, ROW_Y):
        # rows of 9 extend nasally (negative x) to 27 degrees
        x0 = -27 if size == 9 else -3 * (size - 1)
        points.extend((x0 + 6 * j, y) for j in range(size))
    return Grid24_2(points=tuple(points))


class PCategory(enum.IntEnum):
    """Total-deviation probability category, ordered by severity."""

    NS = 0
    P5 = 1
    P2 = 2
    P1 = 3
    P05 = 4

    @property
    def code(self) -> float:
        return self.value / 4.0


CUTOFF_LEVELS = (0.05, 0.02, 0.01, 0.005)


@dataclass(frozen=True)
class NormativeModel:
    """Age-dependent normal sensitivities and TD probability cutoffs.

    Parameters
    ----------
    mean_at_60 : (52,) array
        Normal sensitivity in dB at age 60.
    age_slope : float
        Normal ageing rate in dB/year.
    quantile_cutoffs : (52, 4) array
        TD thresholds at the 5, 2, 1 and 0.5 % levels, strictly decreasing
        along each row.
    """

    mean_at_60: np.ndarray
    age_slope: float = -0.1
    quantile_cutoffs: np.ndarray = field(default=None)

    def __post_init__(self):
        mean = np.asarray(self.mean_at_60, dtype=float)
        if mean.shape != (N_LOCATIONS,):
            raise ValueError("mean_at_60 must have 52 entries")
        object.__setattr__(self, "mean_at_60", mean)
        if self.quantile_cutoffs is not None:
            cuts = np.asarray(self.quantile_cutoffs, dtype=float)
            if cuts.shape != (N_LOCATIONS, 4):
                raise ValueError("quantile_cutoffs must have shape (52, 4)")
            if not np.all(np.diff(cuts, axis=1) < 0):
                raise ValueError("quantile cutoffs must be strictly decreasing per location")
            object.__setattr__(self, "quantile_cutoffs", cuts)

    def normative(self, age) -> np.ndarray:
        """Normal sensitivities at ``age``; broadcasts over an array of ages."""
        age = np.asarray(age, dtype=float)
        return self.mean_at_60 + self.age_slope * (age[..., None] - 60.0)

    @property
    def sd(self) -> np.ndarray:
        """Per-location normal SD implied by the 5 % cutoff (Gaussian)."""
        return -self.quantile_cutoffs[:, 0] / 1.6448536269514722

    def with_cutoffs(self, cutoffs) -> "NormativeModel":
        return NormativeModel(self.mean_at_60, self.age_slope, cutoffs)


def hill_of_vision(grid: Grid24_2 | None = None, center=30.0, edge=26.0) -> np.ndarray:
    """Normal sensitivity at age 60, falling linearly with eccentricity."""
    grid = grid or build_grid()
    ecc = np.hypot(*grid.coords.T)
    frac = (ecc - ecc.min()) / (ecc.max() - ecc.min())
    return np.round(center - (center - edge) * frac, 2)


def write_normative(model: NormativeModel, path) -> None:
    grid = build_grid()
    with open(path, "w", newline="") as fh:
        fh.write(f"# vfdenoise normative table v{NORMATIVE_VERSION}; age_slope={model.age_slope!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x", "y", "mean_at_60", "cut_5", "cut_2", "cut_1", "cut_05"])
        for j, idx in enumerate(grid.kept_indices):
            x, y = grid.points[idx - 1]
            w.writerow([idx, x, y, repr(float(model.mean_at_60[j])),
                        *(repr(float(c)) for c in model.quantile_cutoffs[j])])


def read_normative(path) -> NormativeModel:
    with open(path, newline="") as fh:
        header = fh.readline()
        if not header.startswith("# vfdenoise normative table v"):
            raise ValueError(f"{path}: not a normative table")
        version = int(header.split("table v", 1)[1].split(";")[0])
        if version != NORMATIVE_VERSION:
            raise ValueError(f"{path}: unsupported normative table version {version}")
        age_slope = float(header.rsplit("age_slope=", 1)[1])
        rows = list(csv.DictReader(fh))
    if len(rows) != N_LOCATIONS:
        raise ValueError(f"{path}: expected 52 rows, got {len(rows)}")
    mean = [float(r["mean_at_60"]) for r in rows]
    cuts = [[float(r[k]) for k in ("cut_5", "cut_2", "cut_1", "cut_05")] for r in rows]
    return NormativeModel(np.array(mean), age_slope, np.array(cuts))


@lru_cache(maxsize=None)
def default_normative() -> NormativeModel:
    """The shipped normative model (``data/normative_24_2.csv``)."""
    ref = resources.files("vfdenoise") / "data" / NORMATIVE_FILE
    with resources.as_file(ref) as p:
        return read_normative(Path(p))


def total_deviation(sensitivities, age, norm: NormativeModel | None = None) -> np.ndarray:
    """Sensitivity minus age-matched normal; works on stacked fields."""
    norm = norm or default_normative()
    return np.asarray(sensitivities, dtype=float) - norm.normative(age)


def categorize_pvalue(td, cutoffs) -> np.ndarray | PCategory:
    """Map TD values to p-value categories.

    A value exactly on a cutoff falls in that cutoff's category, so the
    result is the count of cutoffs at or above ``td``.  ``cutoffs`` has the
    four thresholds on its last axis and broadcasts against ``td``.
    """
    td = np.asarray(td, dtype=float)
    cutoffs = np.asarray(cutoffs, dtype=float)
    cat = np.sum(td[..., None] <= cutoffs, axis=-1)
    if cat.ndim == 0:
        return PCategory(int(cat))
    return cat.astype(np.int8)


@dataclass
class VisualField:
    """One exam: 52 sensitivities plus derived TD and p-value categories."""

    sensitivities: np.ndarray
    exam_time: float
    age_at_exam: float
    td: np.ndarray = None
    p_categories: np.ndarray = None

    @classmethod
    def from_sensitivities(cls, sens, exam_time, age_at_exam, norm=None) -> "VisualField":
        norm = norm or default_normative()
        sens = np.clip(np.asarray(sens, dtype=float), DB_MIN, DB_MAX)
        if sens.shape != (N_LOCATIONS,) or not np.all(np.isfinite(sens)):
            raise ValueError("a visual field needs 52 finite sensitivities")
        td = total_deviation(sens, age_at_exam, norm)
        return cls(sens, float(exam_time), float(age_at_exam), td,
                   categorize_pvalue(td, norm.quantile_cutoffs))


@dataclass
class EyeSeries:
    eye_id: str
    exams: list[VisualField]
    truth: str | None = None
    scenario: str | None = None

    def __post_init__(self):
        if len(self.exams) < 6:
            raise ValueError(f"eye {self.eye_id}: at least 6 exams required")
        t = self.times
        if np.any(np.diff(t) <= 0):
            raise ValueError(f"eye {self.eye_id}: exam times must be strictly increasing")

    @property
    def times(self) -> np.ndarray:
        return np.array([e.exam_time for e in self.exams])

    @property
    def ages(self) -> np.ndarray:
        return np.array([e.age_at_exam for e in self.exams])

    @property
    def sensitivities(self) -> np.ndarray:
        return np.stack([e.sensitivities for e in self.exams])

    @property
    def td(self) -> np.ndarray:
        return np.stack([e.td for e in self.exams])


def encode_input(field: VisualField, with_pvalues: bool) -> np.ndarray:
    """Network input vector: sensitivities / 40, optionally followed by
    the 52 category codes mapped to 0, .25, .5, .75, 1."""
    return encode_arrays(field.sensitivities, field.p_categories if with_pvalues else None)


def encode_arrays(sens, categories=None) -> np.ndarray:
    x = np.asarray(sens, dtype=float) / SCALE_DB
    if categories is None:
        return x
    return np.concatenate([x, np.asarray(categories, dtype=float) / 4.0], axis=-1)


def decode_sensitivities(features) -> np.ndarray:
    return np.asarray(features, dtype=float)[..., :N_LOCATIONS] * SCALE_DB
