# thalassa/reporting.py - Sweep reports, parameter-axis tables, SVG figures and output manifests

"""
Reporting
=========
Aggregates per-case results into the per-axis error table, writes the
per-profile detail CSV, the example profile and two figures (error
histogram with 0.1 m/s bins, true vs inverted example profile).

Figures use matplotlib's SVG backend with a fixed hash salt and no date
metadata, so re-running a command rewrites identical bytes. Every output
directory gets a manifest.json with the config hash, seed and SHA-256 of
each file.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import matplotlib
import numpy as np
import pandas as pd
from loguru import logger
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from thalassa.experiment import INVERSE_CRIME_NOTE, CaseResult
from thalassa.profiles import DepthGrid, ProfileSet, rms_error

HISTOGRAM_BIN_MPS = 0.1
CLIMATOLOGY_RMS_MPS = 2.62      # cited climatology comparison, not recomputed
SVG_HASH_SALT = "thalassa"

# Axis name -> column label used in tables
AXIS_LABELS = {
    "beams_pings": "Number of beams×pings",
    "swath_deg": "Swath angle width (deg)",
    "n_eof": "Number of EOFs",
    "spatial_error_cm": "Spatial error (cm)",
    "n_ping": "Number of pings",
    "n_beam": "Number of beams",
}


# ---------------------------------------------------------------------------
# Plain output helpers
# ---------------------------------------------------------------------------

def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    return path


def write_json(payload: Dict[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")
    return path


def file_sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir: Union[str, Path], config_hash: str, seed: int, command: str) -> Path:
    """manifest.json listing every file of out_dir (recursively) with its SHA-256"""
    out_dir = Path(out_dir)
    files = {}
    for path in sorted(p for p in out_dir.rglob("*") if p.is_file() and p.name != "manifest.json"):
        files[path.relative_to(out_dir).as_posix()] = file_sha256(path)
    manifest = {"command": command, "config_hash": config_hash, "seed": seed, "files": files}
    return write_json(manifest, out_dir / "manifest.json")


def profile_frame(grid: DepthGrid, columns: Dict[str, np.ndarray]) -> pd.DataFrame:
    return pd.DataFrame({"depth_m": grid.depths, **{k: np.asarray(v) for k, v in columns.items()}})


# ---------------------------------------------------------------------------
# Sweep report
# ---------------------------------------------------------------------------

def _stats(values: np.ndarray) -> Dict[str, float]:
    if values.size == 0:
        return {"mean": float("nan"), "median": float("nan"), "std": float("nan")}
    return {
        "mean": float(np.mean(values)),
        "median": float(np.median(values)),
        "std": float(np.std(values, ddof=1)) if values.size > 1 else 0.0,
    }


@dataclass
class AxisPoint:
    """All cases inverted at one axis value"""
    value: float
    cases: List[CaseResult]

    @property
    def ok_cases(self) -> List[CaseResult]:
        return [c for c in self.cases if c.ok]

    @property
    def errors(self) -> np.ndarray:
        return np.array([c.rms_error for c in self.ok_cases], dtype=float)

    def summary(self) -> Dict[str, float]:
        ok = self.ok_cases
        stats = _stats(self.errors)
        return {
            "mean_rms_error": stats["mean"],
            "median_rms_error": stats["median"],
            "std_rms_error": stats["std"],
            "mean_oracle_rms_error": float(np.mean([c.oracle_rms_error for c in ok])) if ok else float("nan"),
            "mean_discrepancy_rms_error": float(np.mean([c.baseline_rms_error for c in ok])) if ok else float("nan"),
            "n_cases": len(self.cases),
            "n_failed": len(self.cases) - len(ok),
        }


@dataclass
class SweepReport:
    axis: str
    points: List[AxisPoint]
    selection_mode: str
    baselines: Dict[str, float] = field(default_factory=dict)
    config_hash: str = ""
    seed: Optional[int] = None

    def table(self) -> pd.DataFrame:
        """One row per statistic, one column per axis value"""
        summaries = [p.summary() for p in self.points]
        stats = list(summaries[0].keys()) if summaries else []
        data: Dict[str, list] = {"statistic": stats}
        for point, summary in zip(self.points, summaries):
            data[_value_label(point.value)] = [summary[s] for s in stats]
        return pd.DataFrame(data)

    def detail(self) -> pd.DataFrame:
        rows = []
        for point in self.points:
            for case in point.cases:
                rows.append({self.axis: point.value, **case.row()})
        return pd.DataFrame(rows)

    def aggregate(self) -> Dict[str, Any]:
        return {
            "axis": self.axis,
            "axis_label": AXIS_LABELS.get(self.axis, self.axis),
            "values": [p.value for p in self.points],
            "selection_mode": self.selection_mode,
            "points": [{"value": p.value, **p.summary()} for p in self.points],
            "baselines": self.baselines,
            "climatology_rms_error_cited": CLIMATOLOGY_RMS_MPS,
            "inverse_crime": INVERSE_CRIME_NOTE,
            "config_hash": self.config_hash,
            "seed": self.seed,
        }


def _value_label(value: float) -> str:
    return f"{value:g}"


def example_case(point: AxisPoint) -> Optional[CaseResult]:
    """Case whose error is closest to the mean error at this axis value"""
    ok = [c for c in point.ok_cases if c.inverted_speeds is not None]
    if not ok:
        return None
    mean = float(np.mean([c.rms_error for c in ok]))
    return min(ok, key=lambda c: (abs(c.rms_error - mean), c.index))


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def _save_svg(fig: Figure, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    FigureCanvasSVG(fig)
    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def histogram_edges(errors: np.ndarray, width: float = HISTOGRAM_BIN_MPS) -> np.ndarray:
    """Bin edges on multiples of width covering all errors"""
    lo = np.floor(np.min(errors) / width) * width
    hi = np.ceil(np.max(errors) / width) * width
    if hi <= lo:
        hi = lo + width
    n = int(round((hi - lo) / width))
    return lo + width * np.arange(n + 1)


def plot_error_histogram(errors: Sequence[float], path: Union[str, Path], title: str = "") -> Path:
    """Histogram of RMS errors, 0.1 m/s bins, mean as a dashed line"""
    errors = np.asarray([e for e in errors if np.isfinite(e)], dtype=float)
    fig = Figure(figsize=(6.0, 4.0))
    ax = fig.add_subplot(1, 1, 1)
    if errors.size:
        ax.hist(errors, bins=histogram_edges(errors), color="#4a78a8", edgecolor="white")
        mean = float(np.mean(errors))
        ax.axvline(mean, color="black", linestyle="--", label=f"mean {mean:.2f} m/s")
        ax.legend(loc="upper right")
    ax.set_xlabel("RMS error (m/s)")
    ax.set_ylabel("Number of profiles")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save_svg(fig, path)


def plot_profiles(grid: DepthGrid, curves: Dict[str, np.ndarray], path: Union[str, Path], title: str = "") -> Path:
    """Speed vs depth, depth increasing downwards"""
    fig = Figure(figsize=(4.5, 6.0))
    ax = fig.add_subplot(1, 1, 1)
    styles = ["-", "--", ":", "-."]
    for n, (label, speeds) in enumerate(curves.items()):
        ax.plot(speeds, grid.depths, linestyle=styles[n % len(styles)], label=label)
    ax.invert_yaxis()
    ax.set_xlabel("Sound speed (m/s)")
    ax.set_ylabel("Depth (m)")
    ax.legend(loc="lower left")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save_svg(fig, path)


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------

def write_sweep_report(report: SweepReport, test: ProfileSet, grid: DepthGrid, out_dir: Union[str, Path]) -> List[Path]:
    """Table, detail, aggregate JSON, example profile and figures for the first axis value"""
    out_dir = Path(out_dir)
    written = [
        write_csv(report.table(), out_dir / "table.csv"),
        write_csv(report.detail(), out_dir / "detail.csv"),
        write_json(report.aggregate(), out_dir / "report.json"),
    ]
    for point in report.points:
        label = _value_label(point.value)
        written.append(plot_error_histogram(
            point.errors, out_dir / f"histogram_{report.axis}_{label}.svg",
            title=f"{AXIS_LABELS.get(report.axis, report.axis)} = {label}",
        ))

    example = example_case(report.points[0]) if report.points else None
    if example is not None:
        truth = test[example.index]
        frame = profile_frame(grid, {"true_mps": truth.speeds, "inverted_mps": example.inverted_speeds})
        written.append(write_csv(frame, out_dir / "example_profile.csv"))
        written.append(plot_profiles(
            grid, {"true": truth.speeds, "inverted": example.inverted_speeds},
            out_dir / "example_profile.svg",
            title=f"{example.profile_id}: {example.rms_error:.2f} m/s",
        ))
    logger.info(f"📊 Sweep report written to {out_dir}")
    return written


def baseline_errors(train: ProfileSet, test: ProfileSet) -> Dict[str, Any]:
    """Mean RMS error of the training-mean and test-mean profiles against every test profile"""
    test.require_nonempty("test set")
    train_mean = train.mean_profile()
    test_mean = test.mean_profile()
    train_errors = np.array([rms_error(train_mean, p) for p in test])
    test_errors = np.array([rms_error(test_mean, p) for p in test])
    return {
        "train_mean_rms_error": float(np.mean(train_errors)),
        "test_mean_rms_error": float(np.mean(test_errors)),
        "climatology_rms_error_cited": CLIMATOLOGY_RMS_MPS,
        "n_train": len(train),
        "n_test": len(test),
        "per_profile": pd.DataFrame({
            "profile_id": [p.meta.profile_id for p in test],
            "train_mean_rms_error": train_errors,
            "test_mean_rms_error": test_errors,
        }),
    }


def render_table_text(table: pd.DataFrame, title: str) -> str:
    """Fixed-width text rendering of a report table"""
    return f"{title}\n{'=' * len(title)}\n{table.to_string(index=False, float_format=lambda v: f'{v:.3f}')}\n"


def load_detail(path: Union[str, Path]) -> pd.DataFrame:
    """Per-case detail table of a sweep; an empty failure cell means the case succeeded"""
    detail = pd.read_csv(path, keep_default_na=False, na_values=[""])
    if "failure" in detail.columns:
        detail["failure"] = detail["failure"].fillna("")
    return detail
