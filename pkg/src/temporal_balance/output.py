"""Plot-ready tabular output: CSV summaries, timecourses, histograms.

All floats are written with 17 significant digits so repeated runs with
the same seed produce byte-identical files. The manifest records the
scientific parameters and the code version; execution knobs (worker count,
output directory, emit flags) are deliberately excluded so outputs compare
equal across parallelism degrees.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from . import __version__
from .config import ConfigFile
from .experiments import EnsembleStats, SweepRow

__all__ = ["emit_results", "emit_sweep", "write_manifest", "fmt_float"]


def fmt_float(x: float) -> str:
    return f"{x:.17g}"


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_manifest(path: Path, config: ConfigFile) -> None:
    scientific = {
        "n": config.n,
        "mu": config.mu,
        "sigma": config.sigma,
        "r_bound": config.r_bound,
        "epsilon": config.epsilon,
        "tau_grid": list(config.tau_grid),
        "variant": config.variant,
        "scheduler": config.scheduler,
        "runs": config.runs,
        "t_max": config.t_max,
        "sample_interval": config.sample_interval,
    }
    doc = {
        "config": scientific,
        "master_seed": config.master_seed,
        "code_version": __version__,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_results(stats: EnsembleStats, config: ConfigFile) -> list[Path]:
    """Write the ensemble outputs into ``config.out_dir``; returns the paths."""
    out_dir = Path(config.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    written: list[Path] = []

    summary_rows = []
    for ts in stats.per_tau:
        trivial = (not math.isnan(ts.updates_per_link)
                   and ts.updates_per_link <= stats.coupon_line)
        summary_rows.append([
            fmt_float(ts.tau),
            str(ts.finished_count),
            fmt_float(ts.mean_t),
            fmt_float(ts.updates_per_link),
            fmt_float(stats.coupon_line),
            "1" if trivial else "0",
        ])
    path = out_dir / "summary.csv"
    _write_csv(path, ["tau", "finished", "mean_T", "updates_per_link",
                      "coupon_line", "trivial_flag"], summary_rows)
    written.append(path)

    path = out_dir / "discards.csv"
    _write_csv(path, ["run_index"],
               [[str(int(r))] for r in stats.discarded_indices])
    written.append(path)

    if config.emit_histograms:
        for ts in stats.per_tau:
            rows = [[fmt_float(ts.hist_edges[b]), fmt_float(ts.hist_edges[b + 1]),
                     str(int(ts.hist_counts[b]))]
                    for b in range(len(ts.hist_counts))]
            path = out_dir / f"t_histogram_{ts.tau:g}.csv"
            _write_csv(path, ["bin_lo", "bin_hi", "count"], rows)
            written.append(path)

    if config.emit_timecourses:
        for ts in stats.per_tau:
            tc = ts.timecourse
            rows = [[fmt_float(tc.t[idx]), fmt_float(tc.mean_fraction[idx]),
                     str(int(tc.runs_contributing[idx]))]
                    for idx in range(len(tc.t))]
            path = out_dir / f"timecourse_{ts.tau:g}.csv"
            _write_csv(path, ["t", "mean_unbalanced_fraction",
                              "runs_contributing"], rows)
            written.append(path)

    if config.emit_raw:
        path = out_dir / "runs.jsonl"
        with open(path, "w") as fh:
            for run_idx in range(stats.config.runs):
                for tau_idx, tau in enumerate(stats.config.tau_grid):
                    fin = bool(stats.finished[run_idx, tau_idx])
                    t_bal = stats.t_values[run_idx, tau_idx]
                    rec = {
                        "run": run_idx,
                        "tau_index": tau_idx,
                        "tau": tau,
                        "finished": fin,
                        "t_balance": t_bal if fin else None,
                        "events": int(stats.event_counts[run_idx, tau_idx]),
                    }
                    fh.write(json.dumps(rec) + "\n")
        written.append(path)

    manifest = out_dir / "manifest.json"
    write_manifest(manifest, config)
    written.append(manifest)
    return written


def emit_sweep(rows: list[SweepRow], out_dir: Path) -> Path:
    """Write the size-sweep table (one row per (n, tau) cell)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    table = [[str(r.n), fmt_float(r.tau), str(r.finished_count),
              str(r.discarded), fmt_float(r.updates_per_link),
              fmt_float(r.normalized), fmt_float(r.coupon_normalized),
              fmt_float(r.trivial_line)] for r in rows]
    path = out_dir / "sweep.csv"
    _write_csv(path, ["n", "tau", "finished", "discarded", "updates_per_link",
                      "normalized", "coupon_normalized", "trivial_line"], table)
    return path
