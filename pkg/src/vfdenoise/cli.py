"""Command-line pipeline: simulate -> train -> denoise -> analyze -> report.

All artifacts live under one output directory::

    config.json                     resolved configuration
    cohorts/<Scenario>.csv          simulated exams, plus manifest.json
    checkpoints/<variant>.json      trained networks, plus <variant>_loss.csv
    denoised/<pipeline>/<Scenario>.csv
    verdicts/<pipeline>_<method>.csv
    report/                         tables and Kaplan-Meier curves

Exit status is 0 on success, 1 for usage errors and 2 for data errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__
from .config import METHODS, PIPELINE_VARIANT, PIPELINES, RunConfig
from .core import EyeSeries, VisualField, default_normative
from .neural.models import VARIANTS
from .neural.training import TrainingData, denoise_series, fit, load_checkpoint, save_checkpoint
from .progression import analyze_cohort, cohort_summary
from .simulator import read_cohort, scotoma_table, simulate_cohort, write_cohort
from .survival import km_estimate, plot_km, survival_inputs, write_km_csv

log = logging.getLogger("vfdenoise")

VERDICT_HEADER = ["eye_id", "scenario", "method", "pipeline", "progressed", "conversion_time",
                  "last_follow_up"]


class DataError(Exception):
    """Missing or malformed input artifacts."""


class UsageError(Exception):
    pass


# --- artifact helpers --------------------------------------------------------------

def _mkdir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {path}: {exc}") from exc
    return path


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def load_cohorts(cfg: RunConfig, root: Path, pipeline: str = "Raw") -> dict:
    base = root / "cohorts" if pipeline == "Raw" else root / "denoised" / pipeline
    out = {}
    for sc in cfg.scenarios:
        path = base / f"{sc}.csv"
        if not path.exists():
            raise DataError(f"missing cohort file {path}; run 'simulate' first")
        try:
            out[sc] = read_cohort(path)
        except (ValueError, IndexError) as exc:
            raise DataError(f"malformed cohort file {path}: {exc}") from exc
    return out


def write_verdicts(verdicts, follow_up, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VERDICT_HEADER)
        for v in verdicts:
            conv = "" if v.conversion_time is None else repr(v.conversion_time)
            w.writerow([v.eye_id, v.scenario, v.method.value, v.pipeline, int(v.progressed), conv,
                        repr(float(follow_up[v.eye_id]))])


def read_verdicts(path: Path) -> list[dict]:
    if not path.exists():
        raise DataError(f"missing verdict file {path}; run 'analyze' first")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        for r in rows:
            r["progressed"] = r["progressed"] == "1"
            r["conversion_time"] = float(r["conversion_time"]) if r["conversion_time"] else None
            r["last_follow_up"] = float(r["last_follow_up"])
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"malformed verdict file {path}: {exc}") from exc
    return rows


# --- commands -----------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, root: Path) -> list[Path]:
    """Write one cohort file per scenario and a manifest of seeds and location sets."""
    out_dir = _mkdir(root / "cohorts")
    paths = []
    for sc in cfg.scenarios:
        eyes = simulate_cohort(cfg.scenario_spec(sc), cfg.seed, cfg.noise)
        path = out_dir / f"{sc}.csv"
        try:
            write_cohort(eyes, path)
        except OSError as exc:
            raise DataError(f"cannot write {path}: {exc}") from exc
        log.info("simulated %s: %d eyes x %d exams", sc, len(eyes), cfg.n_exams)
        paths.append(path)
    manifest = {
        "seed": cfg.seed, "n_eyes": cfg.n_eyes, "n_exams": cfg.n_exams,
        "factorial": cfg.factorial, "scenarios": cfg.scenarios,
        "files": [p.name for p in paths],
        "scotomas": [{**r, "xy": [list(p) for p in r["xy"]]} for r in scotoma_table()],
    }
    _write_text(out_dir / "manifest.json", json.dumps(manifest, indent=1) + "\n")
    return paths


def cmd_train(cfg: RunConfig, root: Path, variants) -> list[Path]:
    cohorts = load_cohorts(cfg, root)
    data = TrainingData.from_series([e for eyes in cohorts.values() for e in eyes])
    out_dir = _mkdir(root / "checkpoints")
    paths = []
    for variant in variants:
        rec = fit(variant, data, cfg.train)
        path = out_dir / f"{variant}.json"
        save_checkpoint(rec, path)
        with open(out_dir / f"{variant}_loss.csv", "w", newline="") as fh:
            keys = list(rec.history[0])
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(keys)
            for row in rec.history:
                w.writerow([repr(row[k]) for k in keys])
        log.info("trained %s: best epoch %d of %d, val loss %.6g", variant, rec.epoch,
                 len(rec.history), rec.val_loss)
        paths.append(path)
    return paths


def _checkpoint(root: Path, pipeline: str):
    path = root / "checkpoints" / f"{PIPELINE_VARIANT[pipeline]}.json"
    if not path.exists():
        raise DataError(f"missing checkpoint {path} for pipeline {pipeline}; run 'train' first")
    try:
        return load_checkpoint(path)
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"unreadable checkpoint {path}: {exc}") from exc


def _stack(eyes):
    sens = np.stack([e.sensitivities for e in eyes])
    cats = np.stack([np.stack([x.p_categories for x in e.exams]) for e in eyes])
    return sens, cats


def cmd_denoise(cfg: RunConfig, root: Path, pipelines) -> list[Path]:
    """Write denoised copies of every cohort (TD and categories recomputed)."""
    cohorts = load_cohorts(cfg, root)
    norm = default_normative()
    paths = []
    for pipe in pipelines:
        ckpt = _checkpoint(root, pipe)
        out_dir = _mkdir(root / "denoised" / pipe)
        for sc, eyes in cohorts.items():
            den = denoise_series(ckpt, *_stack(eyes))
            new = [EyeSeries(e.eye_id, [VisualField.from_sensitivities(s, x.exam_time,
                                                                       x.age_at_exam, norm)
                                        for s, x in zip(d, e.exams)], e.truth, e.scenario)
                   for e, d in zip(eyes, den)]
            path = out_dir / f"{sc}.csv"
            write_cohort(new, path)
            paths.append(path)
    return paths


def cmd_analyze(cfg: RunConfig, root: Path, pipelines, methods) -> list[Path]:
    cohorts = load_cohorts(cfg, root)
    out_dir = _mkdir(root / "verdicts")
    paths = []
    for pipe in pipelines:
        ckpt = None if pipe == "Raw" else _checkpoint(root, pipe)
        sens_by_sc = {}
        for sc, eyes in cohorts.items():
            sens, cats = _stack(eyes)
            sens_by_sc[sc] = sens if ckpt is None else denoise_series(ckpt, sens, cats)
        for method in methods:
            verdicts, follow_up = [], {}
            for sc, eyes in cohorts.items():
                verdicts += analyze_cohort(eyes, method, sens_by_sc[sc], th=cfg.thresholds,
                                           pipeline=pipe)
                follow_up.update({e.eye_id: e.times[-1] for e in eyes})
            path = out_dir / f"{pipe}_{method}.csv"
            write_verdicts(verdicts, follow_up, path)
            log.info("analyzed %s/%s: %.2f%% progressed", pipe, method,
                     cohort_summary(verdicts)[0])
            paths.append(path)
    return paths


def _fmt(x) -> str:
    return "" if x is None else f"{x:.2f}"


def summarize(rows: list[dict]):
    """(percent progressed, mean conversion time) from verdict rows."""
    if not rows:
        raise DataError("no verdicts to summarize")
    conv = [r["conversion_time"] for r in rows if r["progressed"]]
    return 100.0 * len(conv) / len(rows), (float(np.mean(conv)) if conv else None)


def cmd_report(cfg: RunConfig, root: Path, pipelines=PIPELINES, methods=METHODS) -> list[Path]:
    """Tables of progression percentages / conversion times and KM overlays.

    ``summary.csv`` holds every number the tables show; the tables are
    re-layouts of it.
    """
    out_dir = _mkdir(root / "report")
    verdicts = {(p, m): read_verdicts(root / "verdicts" / f"{p}_{m}.csv")
                for p in pipelines for m in methods}
    scenarios = cfg.scenarios
    summary = {}
    for (p, m), rows in verdicts.items():
        for sc in scenarios:
            summary[(p, m, sc)] = summarize([r for r in rows if r["scenario"] == sc])
        summary[(p, m, "All")] = summarize(rows)
    paths = []

    path = out_dir / "summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pipeline", "method", "scenario", "percent_progressed",
                    "mean_conversion_time"])
        for (p, m, sc), (pct, conv) in summary.items():
            w.writerow([p, m, sc, _fmt(pct), _fmt(conv)])
    paths.append(path)

    # progression percentage per setting, one block per method
    path = out_dir / "table1_progression_by_setting.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "pipeline", *scenarios])
        for m in ("GRI", "MD", "PLR"):
            if m not in methods:
                continue
            for p in pipelines:
                w.writerow([m, p, *(_fmt(summary[(p, m, sc)][0]) for sc in scenarios)])
    paths.append(path)

    # pooled percentage and mean conversion time per pipeline
    for name, col in (("table2a_progression_percent.csv", 0),
                      ("table2b_conversion_time.csv", 1)):
        path = out_dir / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pipeline", *methods])
            for p in pipelines:
                w.writerow([p, *(_fmt(summary[(p, m, "All")][col]) for m in methods)])
        paths.append(path)

    for m in methods:
        curves = {}
        for p in pipelines:
            curves[p] = verdict_curve(verdicts[(p, m)])
        csv_path = out_dir / f"km_{m}.csv"
        write_km_csv(curves, csv_path)
        svg_path = out_dir / f"km_{m}.svg"
        plot_km(curves, svg_path, title=f"Progression by {m}")
        paths += [csv_path, svg_path]
    return paths


def verdict_curve(rows: list[dict]):
    """Kaplan-Meier curve from verdict rows (censored at each eye's last exam)."""
    verdicts = [SimpleNamespace(**r) for r in rows]
    return km_estimate(survival_inputs(verdicts, {r["eye_id"]: r["last_follow_up"] for r in rows}))


# --- argument handling -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--eyes", type=int, help="eyes per setting (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--epochs", type=int, help="maximum training epochs (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="vfdenoise", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="simulate the five settings")
    t = sub.add_parser("train", parents=[common], help="train denoising networks")
    t.add_argument("--variant", choices=VARIANTS, action="append",
                   help="variant to train (repeatable; default all four)")
    d = sub.add_parser("denoise", parents=[common], help="write denoised cohorts")
    d.add_argument("--pipeline", choices=PIPELINES[1:], action="append")
    a = sub.add_parser("analyze", parents=[common], help="progression verdicts")
    a.add_argument("--pipeline", choices=PIPELINES, action="append")
    a.add_argument("--method", choices=METHODS, action="append")
    sub.add_parser("report", parents=[common], help="tables and survival curves")
    sub.add_parser("run", parents=[common], help="all stages in order")
    sub.add_parser("config", parents=[common], help="print the resolved configuration")
    return p


def resolve_config(args) -> RunConfig:
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
    except FileNotFoundError as exc:
        raise DataError(f"config file not found: {args.config}") from exc
    except (ValueError, TypeError) as exc:
        raise DataError(f"invalid config {args.config}: {exc}") from exc
    if args.seed is not None:
        cfg.seed = args.seed
    if args.eyes is not None:
        if args.eyes <= 0:
            raise UsageError("--eyes must be positive")
        cfg.n_eyes = args.eyes
    if args.out is not None:
        cfg.out = args.out
    if args.epochs is not None:
        if args.epochs <= 0:
            raise UsageError("--epochs must be positive")
        cfg.train = replace(cfg.train, max_epochs=args.epochs)
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"vfdenoise: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        root = Path(cfg.out)
        if args.command == "config":
            sys.stdout.write(cfg.dumps())
            return 0
        _mkdir(root)
        _write_text(root / "config.json", cfg.dumps())
        if args.command in ("simulate", "run"):
            cmd_simulate(cfg, root)
        if args.command == "train":
            cmd_train(cfg, root, args.variant or VARIANTS)
        if args.command == "run":
            cmd_train(cfg, root, VARIANTS)
        if args.command == "denoise":
            cmd_denoise(cfg, root, args.pipeline or PIPELINES[1:])
        if args.command == "analyze":
            cmd_analyze(cfg, root, args.pipeline or PIPELINES, args.method or METHODS)
        if args.command == "run":
            cmd_analyze(cfg, root, PIPELINES, METHODS)
        if args.command in ("report", "run"):
            cmd_report(cfg, root)
    except UsageError as exc:
        print(f"vfdenoise: error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"vfdenoise: data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
