"""Report rendering: results CSV plus standalone SVG figures.

Figures mirror the benchmark's standard views: tracking error versus
horizon length, error versus plant friction, per-controller time bars
(log scale), an error/time scatter with mean markers, and optionally the
error trajectory over a maneuver.  Output is deterministic for a fixed
results table (hashed SVG ids, no timestamps).
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "bench"
import matplotlib.pyplot as plt

from .bench import CellResult, ControllerSpec, Metrics
from .simloop import ClosedLoopTrace, Scenario

__all__ = ["results_to_csv", "results_from_csv", "emit_report"]

_RESULT_FIELDS = [
    "label", "kind", "scenario", "maneuver", "np", "mu", "steering_scale",
    "seed", "config_hash", "mean_rel_err", "max_rel_err", "mean_wall_time",
    "max_wall_time", "mean_total_time", "fallback_count", "max_gg",
    "max_kamm", "failed", "error",
]

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def results_to_csv(results: list[CellResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_RESULT_FIELDS)
        for cell in results:
            m = cell.metrics
            row = [cell.label, cell.controller.kind, cell.scenario.kind,
                   cell.scenario.maneuver, cell.controller.np_steps,
                   f"{cell.scenario.mu:.17g}",
                   f"{cell.scenario.steering_scale:.17g}", cell.seed,
                   cell.config_hash]
            if m is None:
                row += [""] * 9 + [cell.error or "unknown"]
            else:
                row += [f"{m.mean_rel_err:.17g}", f"{m.max_rel_err:.17g}",
                        f"{m.mean_wall_time:.17g}", f"{m.max_wall_time:.17g}",
                        f"{m.mean_total_time:.17g}", m.fallback_count,
                        f"{m.max_gg:.17g}", f"{m.max_kamm:.17g}",
                        int(m.failed), ""]
            writer.writerow(row)


def results_from_csv(path: str | Path) -> list[CellResult]:
    """Inverse of results_to_csv (controller specs rebuilt from the label)."""
    out: list[CellResult] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != _RESULT_FIELDS:
            raise ValueError(f"{path}: unexpected results CSV header")
        for row in reader:
            rec = dict(zip(_RESULT_FIELDS, row))
            if rec["kind"] == "hybrid":
                model, form = rec["label"].split("--", 1)
                spec = ControllerSpec(kind="hybrid", model_preset=model,
                                      constraint_form=form.lower(),
                                      np_steps=int(rec["np"]),
                                      seed=int(rec["seed"]))
            else:
                spec = ControllerSpec(kind=rec["kind"],
                                      np_steps=int(rec["np"]),
                                      seed=int(rec["seed"]))
            scenario = Scenario(kind=rec["scenario"],
                                maneuver=int(rec["maneuver"]),
                                np_steps=int(rec["np"]),
                                mu=float(rec["mu"]),
                                steering_scale=float(rec["steering_scale"]),
                                seed=int(rec["seed"]))
            if rec["error"]:
                metrics = None
            else:
                metrics = Metrics(
                    mean_rel_err=float(rec["mean_rel_err"]),
                    max_rel_err=float(rec["max_rel_err"]),
                    mean_wall_time=float(rec["mean_wall_time"]),
                    max_wall_time=float(rec["max_wall_time"]),
                    mean_total_time=float(rec["mean_total_time"]),
                    fallback_count=int(rec["fallback_count"]),
                    max_gg=float(rec["max_gg"]),
                    max_kamm=float(rec["max_kamm"]),
                    failed=bool(int(rec["failed"])))
            out.append(CellResult(scenario=scenario, controller=spec,
                                  metrics=metrics,
                                  config_hash=rec["config_hash"],
                                  seed=int(rec["seed"]),
                                  error=rec["error"] or None))
    return out


def _grouped(results: list[CellResult]):
    ok = [c for c in results if c.metrics is not None]
    labels = sorted({c.label for c in ok})
    return ok, labels


def _write_figure_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _error_vs_np(ok, labels, out: Path) -> None:
    rows = sorted((c.label, c.controller.np_steps, c.metrics.mean_rel_err,
                   c.metrics.max_rel_err) for c in ok)
    _write_figure_csv(out / "fig_error_vs_np.csv",
                      ["label", "np", "mean_rel_err", "max_rel_err"], rows)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for label in labels:
        pts = sorted((c.controller.np_steps, c.metrics.mean_rel_err)
                     for c in ok if c.label == label)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=label)
    ax.set_xlabel("prediction horizon Np")
    ax.set_ylabel("mean rel. err. (%)")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out / "fig_error_vs_np.svg", **_SAVE_KW)
    plt.close(fig)


def _error_vs_mu(ok, labels, out: Path) -> None:
    cells = [c for c in ok if c.scenario.kind == "friction_offset"]
    if not cells:
        return
    rows = sorted((c.label, c.scenario.mu, c.metrics.mean_rel_err) for c in cells)
    _write_figure_csv(out / "fig_error_vs_mu.csv",
                      ["label", "mu", "mean_rel_err"], rows)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for label in sorted({c.label for c in cells}):
        pts = sorted((c.scenario.mu, c.metrics.mean_rel_err)
                     for c in cells if c.label == label)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="s", label=label)
    ax.set_xlabel("plant friction (relative)")
    ax.set_ylabel("mean rel. err. (%)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out / "fig_error_vs_mu.svg", **_SAVE_KW)
    plt.close(fig)


def _time_bars(ok, labels, out: Path) -> None:
    rows = []
    means = []
    for label in labels:
        walls = [c.metrics.mean_wall_time for c in ok if c.label == label]
        mean = sum(walls) / len(walls)
        means.append(mean)
        rows.append([label, f"{mean:.17g}"])
    _write_figure_csv(out / "fig_time_bars.csv", ["label", "mean_wall_time"], rows)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(range(len(labels)), means)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("mean solve time (s/step)")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(out / "fig_time_bars.svg", **_SAVE_KW)
    plt.close(fig)


def _scatter(ok, labels, out: Path) -> None:
    rows = sorted((c.label, c.metrics.mean_wall_time, c.metrics.mean_rel_err)
                  for c in ok)
    _write_figure_csv(out / "fig_scatter.csv",
                      ["label", "mean_wall_time", "mean_rel_err"], rows)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for label in labels:
        xs = [c.metrics.mean_wall_time for c in ok if c.label == label]
        ys = [c.metrics.mean_rel_err for c in ok if c.label == label]
        ax.scatter(xs, ys, s=14, alpha=0.6, label=label)
        # Mean marker per controller over its cells.
        ax.scatter([sum(xs) / len(xs)], [sum(ys) / len(ys)], s=70, marker="x")
    ax.set_xlabel("mean solve time (s/step)")
    ax.set_ylabel("mean rel. err. (%)")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out / "fig_scatter.svg", **_SAVE_KW)
    plt.close(fig)


def _error_trajectory(traces: dict[str, ClosedLoopTrace], out: Path) -> None:
    import numpy as np
    from .bench import state_weights
    w = state_weights()
    rows = []
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for label in sorted(traces):
        trace = traces[label]
        err = np.abs(trace.states - trace.ref_states) @ w
        denom = float(np.mean(np.abs(trace.ref_states) @ w))
        rel = err / denom * 100.0
        ts = [rec.t for rec in trace.records]
        rows += [[label, f"{t:.17g}", f"{e:.17g}"] for t, e in zip(ts, rel)]
        ax.plot(ts, rel, label=label)
    _write_figure_csv(out / "fig_error_trajectory.csv",
                      ["label", "t", "rel_err"], rows)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("rel. err. (%)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out / "fig_error_trajectory.svg", **_SAVE_KW)
    plt.close(fig)


def emit_report(results: list[CellResult], out_dir: str | Path,
                traces: dict[str, ClosedLoopTrace] | None = None) -> list[Path]:
    """Write results.csv plus figure CSV/SVG pairs; returns written paths."""
    if not results:
        raise ValueError("no results to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_to_csv(results, out / "results.csv")
    ok, labels = _grouped(results)
    if ok:
        _error_vs_np(ok, labels, out)
        _error_vs_mu(ok, labels, out)
        _time_bars(ok, labels, out)
        _scatter(ok, labels, out)
    if traces:
        _error_trajectory(traces, out)
    return sorted(out.iterdir())
