"""Deterministic CSV export of evaluation reports with bootstrap intervals."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .navigation import NavigationReport

BOOTSTRAP_RESAMPLES = 1000
BOOTSTRAP_SEED = 0


@dataclass
class LocalizationReport:
    variant: str
    episode_len: int
    apes: list[float] = field(default_factory=list)
    baseline_ape: float = float("nan")

    @property
    def n_episodes(self) -> int:
        return len(self.apes)

    @property
    def mean_ape(self) -> float:
        return float(np.mean(self.apes)) if self.apes else float("nan")


def bootstrap_ci(values, n_resamples: int = BOOTSTRAP_RESAMPLES,
                 seed: int = BOOTSTRAP_SEED) -> tuple[float, float]:
    """95% percentile bootstrap interval of the mean."""
    vals = np.asarray(values, dtype=np.float64)
    if len(vals) == 0:
        return float("nan"), float("nan")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(vals), size=(n_resamples, len(vals)))
    means = vals[idx].mean(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return float(lo), float(hi)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "nan" if np.isnan(x) else f"{x:.6f}"
    return str(x)


LOC_COLUMNS = ("variant", "episode_len", "n_episodes", "mean_ape_mm",
               "ape_ci_lo", "ape_ci_hi", "baseline_ape_mm")
NAV_COLUMNS = ("variant", "n_episodes", "n_skipped", "success_rate_pct",
               "success_ci_lo", "success_ci_hi", "mean_ratio",
               "ratio_ci_lo", "ratio_ci_hi")


def export_localization(reports: list[LocalizationReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOC_COLUMNS)
        for r in reports:
            lo, hi = bootstrap_ci(r.apes)
            w.writerow([r.variant, r.episode_len, r.n_episodes,
                        _fmt(r.mean_ape), _fmt(lo), _fmt(hi),
                        _fmt(r.baseline_ape)])


def export_navigation(reports: list[NavigationReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(NAV_COLUMNS)
        for r in reports:
            succ = [100.0 * rec.success for rec in r.records]
            ratios = [rec.ratio for rec in r.records if rec.success]
            slo, shi = bootstrap_ci(succ)
            rlo, rhi = bootstrap_ci(ratios)
            w.writerow([r.variant, r.n_episodes, r.n_skipped,
                        _fmt(r.success_rate), _fmt(slo), _fmt(shi),
                        _fmt(r.mean_ratio), _fmt(rlo), _fmt(rhi)])


def read_report_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def export_episode_records(report: NavigationReport, path) -> None:
    """Per-episode rows, with the pose trajectory when recorded."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene_seed", "start", "target_class", "shortest", "steps",
                    "success", "ratio", "trajectory"])
        for rec in report.records:
            traj = ";".join(f"{p[0]},{p[1]},{p[2]}" for p in rec.poses)
            w.writerow([rec.scene_seed, f"{rec.start[0]},{rec.start[1]},{rec.start[2]}",
                        rec.target_class, rec.shortest, rec.steps,
                        int(rec.success), _fmt(rec.ratio), traj])
