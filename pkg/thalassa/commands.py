# thalassa/commands.py - Command operations behind the CLI

"""
Commands
========
Each ``cmd_*`` takes a validated ExperimentConfig, writes its outputs under
``<output_dir>/<command>`` (plus the basis / net paths the config names),
finishes with a manifest.json and returns a CommandResult. Run logs go to
``observability.logging.log_dir``, never to the output directory.
"""

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger

from thalassa.alphasel import AlphaNet, train_alpha_net
from thalassa.config import (
    STREAM_ALPHA_TRAINING,
    STREAM_SIMULATE,
    ExperimentConfig,
    config_from_dict,
    config_hash,
    derive_rng,
)
from thalassa.eof import EofBasis, build_basis, reconstruct
from thalassa.errors import ConfigError, NoConvergedInversionError, PersistenceError
from thalassa.experiment import (
    INVERSE_CRIME_NOTE,
    build_dataset,
    run_cases,
    select_solution,
    settings_from_config,
)
from thalassa.invert import sweep
from thalassa.profiles import DepthGrid, ProfileSet, parse_profiles, rms_error, write_profiles
from thalassa.reporting import (
    AXIS_LABELS,
    CLIMATOLOGY_RMS_MPS,
    AxisPoint,
    SweepReport,
    baseline_errors,
    load_detail,
    plot_error_histogram,
    plot_profiles,
    profile_frame,
    render_table_text,
    write_csv,
    write_json,
    write_manifest,
    write_sweep_report,
)
from thalassa.synth import MeasurementSet, simulate_measurements
from thalassa.utils import RunLogger, StageTimer

SWEEP_AXES = tuple(AXIS_LABELS)
INTEGER_AXES = {"beams_pings", "n_eof", "n_ping", "n_beam"}


@dataclass
class CommandResult:
    out_dir: Path
    files: List[Path] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)


def _run_logger(config: ExperimentConfig, command: str) -> RunLogger:
    log_cfg = config.observability.logging
    return RunLogger(command, f"{command}-{config_hash(config)}", log_cfg.log_dir, enabled=log_cfg.run_log)


def _provenance(config: ExperimentConfig) -> Dict[str, Any]:
    return {"config_hash": config_hash(config), "seed": config.seed}


def _out_dir(config: ExperimentConfig, command: str) -> Path:
    out = config.out / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_net(config: ExperimentConfig, basis: EofBasis) -> Optional[AlphaNet]:
    if config.alpha_selection.mode != "net":
        return None
    net = AlphaNet.load(config.net_path())
    if net.n_eof != basis.n_eof:
        raise ConfigError(f"alpha net was trained for {net.n_eof} EOFs, the basis has {basis.n_eof}")
    return net


def _pick_test_profile(test: ProfileSet, profile: Union[int, str, None]) -> int:
    test.require_nonempty("test set")
    if profile is None:
        return 0
    if isinstance(profile, int) or str(profile).isdigit():
        idx = int(profile)
        if not 0 <= idx < len(test):
            raise ConfigError(f"test profile index {idx} outside [0, {len(test) - 1}]")
        return idx
    try:
        return test.index_of(str(profile))
    except KeyError:
        raise ConfigError(f"no test profile with id '{profile}'") from None


# ---------------------------------------------------------------------------
# eof-build
# ---------------------------------------------------------------------------

def cmd_eof_build(config: ExperimentConfig) -> CommandResult:
    """Build and persist the EOF basis from the training profiles"""
    run_log = _run_logger(config, "eof_build")
    out = _out_dir(config, "eof")
    try:
        t0 = time.perf_counter()
        dataset = build_dataset(config)
        run_log.log_step("dataset", details={
            "source": dataset.source, "loaded": dataset.n_loaded, "rejected": len(dataset.rejected),
            "train": len(dataset.train), "test": len(dataset.test),
        }, duration_ms=(time.perf_counter() - t0) * 1000)

        basis = build_basis(dataset.train, config.eof.n_eof)
        basis_path = config.basis_path()
        basis.save(basis_path)

        summary = pd.DataFrame(basis.summary())
        files = [
            basis_path,
            write_csv(summary, out / "eof_summary.csv"),
            write_csv(profile_frame(basis.grid, {
                "mean_mps": basis.mean,
                **{f"eof_{k + 1}": basis.modes[:, k] for k in range(basis.n_eof)},
            }), out / "eofs.csv"),
        ]
        if dataset.rejected:
            files.append(write_csv(pd.DataFrame([
                {"line": r.line, "reason": r.reason} for r in dataset.rejected
            ]), out / "rejected_records.csv"))
        result = {
            **_provenance(config),
            "n_eof": basis.n_eof,
            "n_training": basis.n_training,
            "n_test": len(dataset.test),
            "source": dataset.source,
            "sigma": basis.sigma.tolist(),
            "explained_variance": basis.explained_variance.tolist(),
            "basis_file": basis_path.name,
        }
        files.append(write_json(result, out / "eof_build.json"))
        write_manifest(out, config_hash(config), config.seed, "eof-build")
        run_log.log_step("basis", details={"n_eof": basis.n_eof, "sigma": np.round(basis.sigma, 4).tolist()})
        run_log.log_result(result)
        return CommandResult(out, files, result)
    except Exception as e:
        run_log.log_error(e, "eof-build")
        raise


def _load_basis(config: ExperimentConfig) -> EofBasis:
    path = config.basis_path()
    if not path.exists():
        raise PersistenceError(f"basis file not found: {path} (run eof-build first)")
    basis = EofBasis.load(path)
    if basis.n_eof != config.eof.n_eof:
        raise ConfigError(f"basis at {path} has {basis.n_eof} EOFs, config asks for {config.eof.n_eof}")
    return basis


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(config: ExperimentConfig, profile: Union[int, str, None] = None) -> CommandResult:
    """Simulate a survey over one test profile and persist measurements and truth"""
    run_log = _run_logger(config, "simulate")
    out = _out_dir(config, "simulate")
    try:
        dataset = build_dataset(config)
        idx = _pick_test_profile(dataset.test, profile)
        truth = dataset.test[idx]
        m = simulate_measurements(
            truth,
            config.geometry.to_geometry(),
            config.measurement.sigma_t,
            config.measurement.n_ping,
            derive_rng(config.seed, STREAM_SIMULATE, idx),
            truth_id=truth.meta.profile_id,
            seed=config.seed,
        )
        m = replace(m, extra={"config_hash": config_hash(config), "test_index": idx})
        meas_path = out / "measurements.csv"
        sidecar = m.save(meas_path)
        truth_path = out / "truth.csv"
        write_profiles(ProfileSet(truth.grid, (truth,)), truth_path)
        result = {
            **_provenance(config),
            "test_index": idx,
            "truth_id": truth.meta.profile_id,
            "n_obs": m.n_obs,
            "beams_used": m.beams_used,
            "sigma_t": m.sigma_t,
        }
        write_manifest(out, config_hash(config), config.seed, "simulate")
        run_log.log_result(result)
        logger.info(f"📡 Simulated {m.n_obs} observations over {truth.meta.profile_id}")
        return CommandResult(out, [meas_path, sidecar, truth_path], result)
    except Exception as e:
        run_log.log_error(e, "simulate")
        raise


# ---------------------------------------------------------------------------
# invert
# ---------------------------------------------------------------------------

def cmd_invert(
    config: ExperimentConfig,
    measurements_path: Union[str, Path],
    truth_path: Optional[Union[str, Path]] = None,
) -> CommandResult:
    """
    Invert one MeasurementSet.

    Writes sweep.csv, inverted_profile.csv and diagnostics.json. Failed alphas
    are listed in the diagnostics; the command fails only when no alpha
    converged.
    """
    run_log = _run_logger(config, "invert")
    out = _out_dir(config, "invert")
    try:
        basis = _load_basis(config)
        m = MeasurementSet.load(measurements_path)
        truth = parse_profiles(truth_path, basis.grid)[0] if truth_path else None
        settings = settings_from_config(config, _load_net(config, basis))

        timer = StageTimer("sweep")
        with timer.measure():
            result = sweep(m, basis, m.geometry, settings.inversion)
        run_log.log_step("sweep", details={"alphas": len(result), "converged": int(result.converged.sum())},
                         duration_ms=timer.mean_ms)
        sweep_path = out / "sweep.csv"
        result.to_csv(sweep_path)

        diagnostics: Dict[str, Any] = {
            **_provenance(config),
            "mode": settings.mode,
            "n_obs": m.n_obs,
            "beams_used": m.beams_used,
            "sigma_t": m.sigma_t,
            "n_alpha": len(result),
            "n_converged": int(result.converged.sum()),
            "flagged": [{"alpha": e.alpha, "reason": e.reason} for e in result.entries if not e.converged],
            "inverse_crime": INVERSE_CRIME_NOTE,
        }
        diag_path = out / "diagnostics.json"
        try:
            outcome = select_solution(result, m, basis, settings, truth)
        except NoConvergedInversionError:
            diagnostics["status"] = "failed"
            write_json(diagnostics, diag_path)
            write_manifest(out, config_hash(config), config.seed, "invert")
            raise

        inverted = reconstruct(basis, outcome.x)
        columns = {"speed_mps": inverted.speeds}
        diagnostics.update({
            "status": "ok",
            "selected_alpha": outcome.alpha,
            "selected_index": outcome.index,
            "misfit": outcome.misfit,
            "iterations": outcome.iterations,
            "converged": outcome.converged,
            "coefficients": outcome.x.tolist(),
        })
        if truth is not None:
            columns["true_mps"] = truth.speeds
            diagnostics["rms_error"] = rms_error(inverted, truth)
        profile_path = write_csv(profile_frame(basis.grid, columns), out / "inverted_profile.csv")
        write_json(diagnostics, diag_path)
        write_manifest(out, config_hash(config), config.seed, "invert")
        run_log.log_result({k: diagnostics[k] for k in ("selected_alpha", "misfit", "iterations", "converged")})
        logger.info(f"🎯 Inverted with alpha={outcome.alpha:.3g} ({settings.mode}), misfit {outcome.misfit:.3e} s²")
        return CommandResult(out, [sweep_path, profile_path, diag_path], diagnostics)
    except Exception as e:
        run_log.log_error(e, "invert")
        raise


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def apply_axis(config: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    """Copy of the config with one parameter-axis value applied"""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis '{axis}' (choose from {', '.join(SWEEP_AXES)})")
    if axis in INTEGER_AXES:
        if float(value) != int(value):
            raise ConfigError(f"axis {axis} takes integer values, got {value}")
        value = int(value)
    overrides = {
        "beams_pings": [f"geometry.n_beam={value}", "measurement.n_ping=1"],
        "swath_deg": [f"geometry.swath_width_deg={value}"],
        "n_eof": [f"eof.n_eof={value}"],
        "spatial_error_cm": [f"measurement.sigma_x_cm={value}", "measurement.sigma_t_s=null"],
        "n_ping": [f"measurement.n_ping={value}"],
        "n_beam": [f"geometry.n_beam={value}"],
    }[axis]
    return config_from_dict(config.model_dump(mode="json"), overrides)


def cmd_sweep(config: ExperimentConfig, axis: str, values: Sequence[float]) -> CommandResult:
    """Invert every test profile at every value of one parameter axis"""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis '{axis}' (choose from {', '.join(SWEEP_AXES)})")
    if not values:
        raise ConfigError("sweep needs at least one axis value")
    run_log = _run_logger(config, "sweep")
    out = _out_dir(config, f"sweep/{axis}")
    try:
        dataset = build_dataset(config)
        dataset.test.require_nonempty("test set")
        configs = [apply_axis(config, axis, v) for v in values]
        max_eof = max(c.eof.n_eof for c in configs)
        full_basis = build_basis(dataset.train, max_eof)

        points = []
        for value, cfg in zip(values, configs):
            basis = full_basis.truncated(cfg.eof.n_eof)
            settings = settings_from_config(cfg, _load_net(cfg, basis))
            timer = StageTimer(f"{axis}={value:g}")
            t0 = time.perf_counter()
            cases = run_cases(dataset.test, basis, settings, cfg.seed, cfg.performance.n_jobs)
            for case in cases:
                timer.record(case.runtime_ms)
            timer.log()
            point = AxisPoint(float(value), cases)
            points.append(point)
            summary = point.summary()
            run_log.log_step(f"{axis}={value:g}", details={**summary, **timer.stats()},
                             duration_ms=(time.perf_counter() - t0) * 1000)
            logger.info(f"📈 {axis}={value:g}: mean RMS error {summary['mean_rms_error']:.3f} m/s "
                        f"over {summary['n_cases'] - summary['n_failed']} profiles")

        baselines = baseline_errors(dataset.train, dataset.test)
        report = SweepReport(
            axis=axis,
            points=points,
            selection_mode=config.alpha_selection.mode,
            baselines={k: v for k, v in baselines.items() if k != "per_profile"},
            config_hash=config_hash(config),
            seed=config.seed,
        )
        files = write_sweep_report(report, dataset.test, full_basis.grid, out)
        write_manifest(out, config_hash(config), config.seed, "sweep")
        run_log.log_result({"axis": axis, "values": list(values),
                            "mean_rms_error": [p.summary()["mean_rms_error"] for p in points]})
        return CommandResult(out, files, report.aggregate())
    except Exception as e:
        run_log.log_error(e, "sweep")
        raise


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def cmd_baselines(config: ExperimentConfig) -> CommandResult:
    """Mean-profile baseline errors on the test set"""
    run_log = _run_logger(config, "baselines")
    out = _out_dir(config, "baselines")
    try:
        dataset = build_dataset(config)
        errors = baseline_errors(dataset.train, dataset.test)
        table = pd.DataFrame({
            "baseline": ["train_mean", "test_mean", "climatology_cited"],
            "mean_rms_error": [errors["train_mean_rms_error"], errors["test_mean_rms_error"], CLIMATOLOGY_RMS_MPS],
        })
        summary = {**_provenance(config), **{k: v for k, v in errors.items() if k != "per_profile"}}
        files = [
            write_csv(table, out / "baselines.csv"),
            write_csv(errors["per_profile"], out / "baselines_detail.csv"),
            write_json(summary, out / "baselines.json"),
        ]
        write_manifest(out, config_hash(config), config.seed, "baselines")
        run_log.log_result(summary)
        logger.info(f"📏 Baselines: train mean {errors['train_mean_rms_error']:.3f} m/s, "
                    f"test mean {errors['test_mean_rms_error']:.3f} m/s")
        return CommandResult(out, files, summary)
    except Exception as e:
        run_log.log_error(e, "baselines")
        raise


# ---------------------------------------------------------------------------
# train-alpha
# ---------------------------------------------------------------------------

def cmd_train_alpha(config: ExperimentConfig) -> CommandResult:
    """Train and persist the alpha-selection network"""
    run_log = _run_logger(config, "train_alpha")
    try:
        basis = _load_basis(config)
        net_path = config.net_path()
        out = net_path.parent
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        net = train_alpha_net(
            basis,
            config.geometry.to_geometry(),
            config.alpha_training,
            derive_rng(config.seed, STREAM_ALPHA_TRAINING),
            inversion=config.inversion,
            n_jobs=config.performance.n_jobs,
            seed=config.seed,
        )
        net.save(net_path, provenance=_provenance(config))
        report = {
            **_provenance(config),
            **{k: v for k, v in net.report.items() if not k.endswith("_history")},
            "layer_sizes": net.layer_sizes,
            "beats_constant_predictor": bool(net.report["val_loss"] < net.report["val_label_variance"]),
        }
        report_path = write_json(report, out / "training_report.json")
        write_manifest(out, config_hash(config), config.seed, "train-alpha")
        run_log.log_step("training", details=report, duration_ms=(time.perf_counter() - t0) * 1000)
        run_log.log_result({"net_path": net_path.as_posix(), "val_loss": report["val_loss"]})
        return CommandResult(out, [net_path, report_path], report)
    except Exception as e:
        run_log.log_error(e, "train-alpha")
        raise


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def cmd_report(config: ExperimentConfig, sweep_dir: Union[str, Path]) -> CommandResult:
    """Re-render figures and a text summary from a finished sweep directory"""
    sweep_dir = Path(sweep_dir)
    needed = [sweep_dir / name for name in ("table.csv", "detail.csv", "report.json")]
    missing = [p for p in needed if not p.exists()]
    if missing:
        raise PersistenceError(f"not a sweep output directory, missing {missing[0]}")
    aggregate = json.loads((sweep_dir / "report.json").read_text(encoding="utf-8"))
    axis = aggregate["axis"]
    run_log = _run_logger(config, "report")
    out = _out_dir(config, f"report/{axis}")
    try:
        table = pd.read_csv(sweep_dir / "table.csv")
        detail = load_detail(sweep_dir / "detail.csv")
        files = []
        for value in aggregate["values"]:
            rows = detail[np.isclose(detail[axis].astype(float), float(value))]
            errors = rows.loc[rows["failure"] == "", "rms_error"].astype(float).to_numpy()
            files.append(plot_error_histogram(
                errors, out / f"histogram_{axis}_{value:g}.svg",
                title=f"{AXIS_LABELS.get(axis, axis)} = {value:g}",
            ))
        example_path = sweep_dir / "example_profile.csv"
        if example_path.exists():
            example = pd.read_csv(example_path)
            grid = config.grid.to_grid()
            depths = example["depth_m"].to_numpy()
            if depths.size != grid.count:
                grid = DepthGrid(int(depths.size), float(depths[1] - depths[0]))
            files.append(plot_profiles(
                grid, {"true": example["true_mps"].to_numpy(), "inverted": example["inverted_mps"].to_numpy()},
                out / "example_profile.svg",
            ))

        baselines = aggregate.get("baselines", {})
        lines = [render_table_text(table, f"{aggregate['axis_label']} ({aggregate['selection_mode']} alpha)")]
        lines.append("Baselines (mean RMS error, m/s)")
        for key in ("train_mean_rms_error", "test_mean_rms_error"):
            if key in baselines:
                lines.append(f"  {key}: {baselines[key]:.3f}")
        lines.append(f"  climatology (cited, not recomputed): {aggregate['climatology_rms_error_cited']:.2f}")
        lines.append("")
        lines.append(aggregate["inverse_crime"])
        summary_path = out / "summary.txt"
        summary_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        files.append(summary_path)
        write_manifest(out, config_hash(config), config.seed, "report")
        run_log.log_result({"axis": axis, "files": len(files)})
        return CommandResult(out, files, {"axis": axis, "source_config_hash": aggregate.get("config_hash")})
    except Exception as e:
        run_log.log_error(e, "report")
        raise
