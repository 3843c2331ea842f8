"""Command-line front end.

Subcommands:

run            simulate one scenario; write trace.csv, metrics.csv, manifest.json
sweep          accuracy/cost study over keyframe intervals; write nrmse.csv,
               timing.csv, error_cdf.csv, manifest.json
scatter-study  windowed study of discrete-scatterer contributions; write
               tvcir_total.csv, tvcir_scatter.csv, power_split.csv,
               scatter_summary.csv, manifest.json
bench          micro-benchmarks of the solver stages; write bench.csv
validate-scene check a scene file and print its inventory

Exit codes: 0 success, 2 configuration/scene errors, 3 unexpected failures.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    DEFAULT_PRESET,
    ConfigError,
    ScenarioConfig,
    load_config_file,
    load_preset,
    preset_path,
)
from .dynamics import (
    SCATTER_MODES,
    Trajectory,
    apply_birth_death,
    interpolate_path,
    match_paths,
    stream_snapshots,
)
from .em import CarrierConfig
from .metrics import (
    compare_streams,
    metric_series,
    power_decomposition,
    synthesize_tv_cir,
)
from .rays import SCATTERING, TAG_SCATTER
from .scatter import ScatterEngine
from .scene import SceneError, load_scene_file
from .specular import SpecularTracer
from .traceio import (
    file_sha256,
    write_bench_csv,
    write_error_cdf_csv,
    write_manifest,
    write_metrics_csv,
    write_nrmse_csv,
    write_power_split_csv,
    write_scatter_summary_csv,
    write_timing_csv,
    write_trace_csv,
    write_tvcir_csv,
)


# ----------------------------------------------------------------------
# argument plumbing
# ----------------------------------------------------------------------
def _add_scenario_options(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="PATH", help="scenario JSON file")
    src.add_argument(
        "--preset",
        metavar="NAME",
        help=f"bundled scenario preset (default: {DEFAULT_PRESET})",
    )
    p.add_argument("--output-dir", metavar="DIR", help="directory for output files")
    p.add_argument("--duration", type=float, metavar="S", help="override duration_s")
    p.add_argument("--update-step", type=float, metavar="S", help="override update_step_s")
    p.add_argument("--kf-interval", type=float, metavar="S", help="override kf_interval_s")
    p.add_argument(
        "--scatter", choices=SCATTER_MODES, help="override scatter_mode"
    )
    p.add_argument("--seed", type=int, metavar="N", help="override seed")
    p.add_argument(
        "--threads", type=int, metavar="N", help="worker threads for keyframe solves"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="railchan",
        description="Deterministic dynamic radio-channel simulation for rail links.",
    )
    parser.add_argument("--version", action="version", version=f"railchan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one scenario and write the channel trace")
    _add_scenario_options(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser(
        "sweep", help="interpolation accuracy and cost across keyframe intervals"
    )
    _add_scenario_options(p_sweep)
    p_sweep.add_argument(
        "--intervals",
        metavar="S,S,...",
        help="comma-separated keyframe intervals overriding sweep_intervals_s",
    )
    p_sweep.set_defaults(func=cmd_sweep)

    p_sc = sub.add_parser(
        "scatter-study", help="windowed discrete-scatterer contribution study"
    )
    _add_scenario_options(p_sc)
    p_sc.add_argument(
        "--window",
        metavar="START:STOP",
        help="seconds window overriding scatter_window_s, e.g. 18.5:23.9",
    )
    p_sc.set_defaults(func=cmd_scatter_study)

    p_bench = sub.add_parser("bench", help="micro-benchmarks of the solver stages")
    _add_scenario_options(p_bench)
    p_bench.add_argument("--repeats", type=int, default=3, metavar="N", help="timing repeats")
    p_bench.set_defaults(func=cmd_bench)

    p_val = sub.add_parser("validate-scene", help="check a scene file and print its inventory")
    p_val.add_argument("scene", help="scene JSON path or bundled preset name")
    p_val.set_defaults(func=cmd_validate_scene)

    return parser


def _scenario_from_args(args) -> ScenarioConfig:
    overrides = {
        "duration_s": args.duration,
        "update_step_s": args.update_step,
        "kf_interval_s": args.kf_interval,
        "scatter_mode": args.scatter,
        "seed": args.seed,
    }
    if getattr(args, "intervals", None):
        try:
            vals = [float(v) for v in args.intervals.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--intervals must be comma-separated numbers, got {args.intervals!r}")
        if not vals:
            raise ConfigError("--intervals must name at least one interval")
        overrides["sweep_intervals_s"] = vals
    if getattr(args, "window", None):
        parts = args.window.split(":")
        if len(parts) != 2:
            raise ConfigError(f"--window must be START:STOP seconds, got {args.window!r}")
        try:
            overrides["scatter_window_s"] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise ConfigError(f"--window must be START:STOP seconds, got {args.window!r}")
    if args.config:
        return load_config_file(args.config, overrides=overrides)
    return load_preset(args.preset or DEFAULT_PRESET, overrides=overrides)


def _out_dir(args, command: str) -> Path:
    out = Path(args.output_dir) if args.output_dir else Path("railchan-out") / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _base_manifest(command: str, cfg: ScenarioConfig) -> dict:
    return {
        "command": command,
        "package_version": __version__,
        "config": cfg.echo(),
        "scene_sha256": file_sha256(cfg.scene_path),
        "seed": cfg.seed,
    }


def _digests(out: Path, names) -> dict:
    return {name: file_sha256(out / name) for name in names}


def _run_stream(cfg: ScenarioConfig, scene, threads, *, kf_interval=None, start_step=0, duration=None):
    traj = cfg.trajectory()
    if duration is not None:
        traj = Trajectory(waypoints=cfg.waypoints.copy(), speed=cfg.speed_mps, duration=duration)
    return stream_snapshots(
        scene,
        traj,
        cfg.tx_position,
        CarrierConfig(cfg.carrier_hz),
        cfg.update_step_s,
        kf_interval if kf_interval is not None else cfg.kf_interval_s,
        limits=cfg.limits,
        scatter_mode=cfg.scatter_mode,
        leg_policy=cfg.leg_policy,
        seed=cfg.seed,
        threads=threads,
        start_step=start_step,
    )


# ----------------------------------------------------------------------
# run
# ----------------------------------------------------------------------
def cmd_run(args) -> int:
    cfg = _scenario_from_args(args)
    out = _out_dir(args, "run")
    scene = cfg.load_scene()
    t0 = time.perf_counter()
    result = _run_stream(cfg, scene, args.threads)
    wall = time.perf_counter() - t0

    ids = write_trace_csv(out / "trace.csv", result.snapshots)
    timestamps = [s.timestamp for s in result.snapshots]
    series = metric_series(result.snapshots, cfg.tx_power_dbm)
    write_metrics_csv(out / "metrics.csv", timestamps, series)

    n_rows = sum(len(s.paths) for s in result.snapshots)
    manifest = _base_manifest("run", cfg)
    manifest.update(
        {
            "n_snapshots": len(result.snapshots),
            "n_path_rows": n_rows,
            "n_distinct_paths": len(ids),
            "rt_invocations": result.rt_invocations,
            "timings_s": {
                "keyframe": result.keyframe_seconds,
                "interpolation": result.interpolation_seconds,
                "scatter": result.scatter_seconds,
                "total": wall,
            },
            "outputs": _digests(out, ["trace.csv", "metrics.csv"]),
        }
    )
    write_manifest(out / "manifest.json", manifest)
    print(
        f"run: {len(result.snapshots)} snapshots, {n_rows} path rows, "
        f"{len(ids)} distinct paths, {result.rt_invocations} exact solves, "
        f"{wall:.2f} s"
    )
    print(f"outputs in {out}")
    return 0


# ----------------------------------------------------------------------
# sweep
# ----------------------------------------------------------------------
def cmd_sweep(args) -> int:
    cfg = _scenario_from_args(args)
    if not cfg.sweep_intervals_s:
        raise ConfigError("no sweep intervals configured; set 'sweep_intervals_s' or --intervals")
    out = _out_dir(args, "sweep")
    scene = cfg.load_scene()

    t0 = time.perf_counter()
    reference = _run_stream(cfg, scene, args.threads, kf_interval=cfg.update_step_s)
    ref_wall = time.perf_counter() - t0

    rows = []
    for interval in cfg.sweep_intervals_s:
        t0 = time.perf_counter()
        test = _run_stream(cfg, scene, args.threads, kf_interval=interval)
        test_wall = time.perf_counter() - t0
        report = compare_streams(reference.snapshots, test.snapshots, cfg.tx_power_dbm)
        report.reference_seconds = ref_wall
        report.test_seconds = test_wall
        report.normalized_compute_time = test_wall / ref_wall
        report.rt_invocations_reference = reference.rt_invocations
        report.rt_invocations_test = test.rt_invocations
        rows.append((interval, report))
        nrmse_vv = report.metrics["power_vv"].nrmse
        print(
            f"kf={interval:g}s: NRMSE(vv power)={nrmse_vv:.4f}, "
            f"time={test_wall:.2f}s ({report.normalized_compute_time:.3f}x ref), "
            f"solves={test.rt_invocations}"
        )

    write_nrmse_csv(out / "nrmse.csv", rows)
    write_timing_csv(out / "timing.csv", rows)
    write_error_cdf_csv(out / "error_cdf.csv", rows)
    manifest = _base_manifest("sweep", cfg)
    manifest.update(
        {
            "intervals_s": list(cfg.sweep_intervals_s),
            "reference_rt_invocations": reference.rt_invocations,
            "reference_seconds": ref_wall,
            "nrmse_vv_by_interval": {
                "%g" % interval: report.metrics["power_vv"].nrmse for interval, report in rows
            },
            "outputs": _digests(out, ["nrmse.csv", "timing.csv", "error_cdf.csv"]),
        }
    )
    write_manifest(out / "manifest.json", manifest)
    print(f"outputs in {out}")
    return 0


# ----------------------------------------------------------------------
# scatter-study
# ----------------------------------------------------------------------
def cmd_scatter_study(args) -> int:
    cfg = _scenario_from_args(args)
    out = _out_dir(args, "scatter-study")
    scene = cfg.load_scene()
    if not scene.scatterers:
        raise ConfigError("the scene has no discrete scatterers to study")
    if cfg.scatter_mode == "off":
        raise ConfigError("scatter-study needs scatter_mode 'exact' or 'interpolated'")

    w0, w1 = cfg.scatter_window_s
    w1 = min(w1, cfg.duration_s)
    if w0 >= w1:
        raise ConfigError(
            f"scatter window [{cfg.scatter_window_s[0]}, {cfg.scatter_window_s[1]}] s "
            f"lies outside the {cfg.duration_s} s run"
        )
    step = cfg.update_step_s
    start_step = int(round(w0 / step))
    if abs(start_step * step - w0) > 1e-6:
        raise ConfigError(f"window start {w0} must be an integer multiple of update_step_s {step}")

    t0 = time.perf_counter()
    result = _run_stream(cfg, scene, args.threads, start_step=start_step, duration=w1)
    wall = time.perf_counter() - t0

    cir_total = synthesize_tv_cir(result.snapshots, cfg.bandwidth_hz, cfg.rolloff, "vv")
    scatter_snaps = [
        replace(s, paths=[p for p in s.paths if p.tag == TAG_SCATTER]) for s in result.snapshots
    ]
    cir_scatter = synthesize_tv_cir(
        scatter_snaps, cfg.bandwidth_hz, cfg.rolloff, "vv", delay_grid=cir_total.delays
    )
    decomp = power_decomposition(result.snapshots, "vv", cfg.tx_power_dbm)

    summary = _scatter_summary(scene, result.snapshots, cfg.tx_power_dbm)

    write_tvcir_csv(out / "tvcir_total.csv", cir_total)
    write_tvcir_csv(out / "tvcir_scatter.csv", cir_scatter)
    write_power_split_csv(out / "power_split.csv", decomp)
    write_scatter_summary_csv(out / "scatter_summary.csv", summary)

    manifest = _base_manifest("scatter-study", cfg)
    manifest.update(
        {
            "window_s": [w0, w1],
            "n_snapshots": len(result.snapshots),
            "rt_invocations": result.rt_invocations,
            "specular_fraction": decomp.specular_fraction,
            "scattered_fraction": decomp.scattered_fraction,
            "wall_seconds": wall,
            "outputs": _digests(
                out,
                [
                    "tvcir_total.csv",
                    "tvcir_scatter.csv",
                    "power_split.csv",
                    "scatter_summary.csv",
                ],
            ),
        }
    )
    write_manifest(out / "manifest.json", manifest)
    print(
        f"scatter-study: window [{w0:g}, {w1:g}] s, {len(result.snapshots)} snapshots, "
        f"scattered power fraction {decomp.scattered_fraction:.3e}"
    )
    print(f"outputs in {out}")
    return 0


def _scatter_summary(scene, snapshots, tx_power_dbm: float) -> list[dict]:
    by_id: dict[int, dict] = {
        s.id: {"rows": 0, "snaps": 0, "power_acc": 0.0, "excess_acc": 0.0}
        for s in scene.scatterers
    }
    for snap in snapshots:
        spec_delays = [p.delay_s for p in snap.paths if p.tag != TAG_SCATTER]
        base = min(spec_delays) if spec_delays else None
        seen: set[int] = set()
        for p in snap.paths:
            if p.tag != TAG_SCATTER:
                continue
            sid = next(
                (rec.object_id for rec in p.interactions if rec.kind == SCATTERING), None
            )
            if sid is None or sid not in by_id:
                continue
            acc = by_id[sid]
            acc["rows"] += 1
            acc["power_acc"] += p.power
            if base is not None:
                acc["excess_acc"] += (p.delay_s - base) * 1e9
            seen.add(sid)
        for sid in seen:
            by_id[sid]["snaps"] += 1
    rows = []
    for s in scene.scatterers:
        acc = by_id[s.id]
        n = acc["rows"]
        if n and acc["power_acc"] > 0:
            mean_dbm = tx_power_dbm + 10.0 * np.log10(acc["power_acc"] / n)
        else:
            mean_dbm = -np.inf
        rows.append(
            {
                "scatterer_id": s.id,
                "n_path_rows": n,
                "n_snapshots_visible": acc["snaps"],
                "mean_power_dbm": mean_dbm,
                "mean_excess_delay_ns": acc["excess_acc"] / n if n else np.nan,
            }
        )
    return rows


# ----------------------------------------------------------------------
# bench
# ----------------------------------------------------------------------
def cmd_bench(args) -> int:
    cfg = _scenario_from_args(args)
    out = _out_dir(args, "bench")
    repeats = max(1, args.repeats)
    carrier = CarrierConfig(cfg.carrier_hz)

    rows = []
    t0 = time.perf_counter()
    scene = cfg.load_scene()
    rows.append(
        {
            "stage": "scene_load",
            "repeat": 0,
            "units": 1,
            "seconds": time.perf_counter() - t0,
            "per_unit_ms": (time.perf_counter() - t0) * 1e3,
        }
    )

    traj = cfg.trajectory()
    fractions = (0.2, 0.35, 0.5, 0.65, 0.8)
    rx_list = [traj.position(f * cfg.duration_s) for f in fractions]
    tracer = SpecularTracer(scene, carrier)
    tracer.trace(cfg.tx_position, rx_list[0], cfg.limits)  # warm the tables

    for rep in range(repeats):
        t0 = time.perf_counter()
        for rx in rx_list:
            tracer.trace(cfg.tx_position, rx, cfg.limits)
        el = time.perf_counter() - t0
        rows.append(
            {
                "stage": "specular_trace",
                "repeat": rep,
                "units": len(rx_list),
                "seconds": el,
                "per_unit_ms": el / len(rx_list) * 1e3,
            }
        )

    if scene.scatterers:
        engine = ScatterEngine(scene, carrier, leg_policy=cfg.leg_policy)
        engine.paths(cfg.tx_position, rx_list[0])  # warm the incident cache
        for rep in range(repeats):
            t0 = time.perf_counter()
            for rx in rx_list:
                engine.paths(cfg.tx_position, rx)
            el = time.perf_counter() - t0
            rows.append(
                {
                    "stage": "scatter_snapshot",
                    "repeat": rep,
                    "units": len(rx_list),
                    "seconds": el,
                    "per_unit_ms": el / len(rx_list) * 1e3,
                }
            )

    # interpolation microbench across one bracket at mid-run
    mid = 0.5 * cfg.duration_s
    kf_a_t = mid
    kf_b_t = mid + cfg.update_step_s * 10
    from .dynamics import Keyframe  # local import to keep the module header lean

    pa = tracer.trace(cfg.tx_position, traj.position(kf_a_t), cfg.limits)
    pb = tracer.trace(cfg.tx_position, traj.position(kf_b_t), cfg.limits)
    kf_a = Keyframe(index=0, timestamp=kf_a_t, rx_position=traj.position(kf_a_t), paths=pa)
    kf_b = Keyframe(index=1, timestamp=kf_b_t, rx_position=traj.position(kf_b_t), paths=pb)
    matched, births, deaths = match_paths(kf_a, kf_b)
    rng = np.random.default_rng(cfg.seed)
    from .dynamics import TrackedPath

    tracks = [
        TrackedPath(
            signature=x.signature, kind="matched", t_a=kf_a_t, t_b=kf_b_t, path_a=x, path_b=y
        )
        for x, y in matched
    ]
    tracks.extend(apply_birth_death(births, deaths, kf_a_t, kf_b_t, rng))
    times = [kf_a_t + cfg.update_step_s * i for i in range(1, 10)]
    for rep in range(repeats):
        t0 = time.perf_counter()
        count = 0
        for t in times:
            rx = traj.position(t)
            v = traj.velocity(t)
            for tr in tracks:
                if interpolate_path(tr, t, rx, v, carrier) is not None:
                    count += 1
        el = time.perf_counter() - t0
        rows.append(
            {
                "stage": "interpolate_snapshot",
                "repeat": rep,
                "units": len(times),
                "seconds": el,
                "per_unit_ms": el / len(times) * 1e3,
            }
        )

    write_bench_csv(out / "bench.csv", rows)
    stages = {}
    for r in rows:
        stages.setdefault(r["stage"], []).append(r["per_unit_ms"])
    for stage, vals in stages.items():
        print(f"{stage}: {min(vals):.2f} ms best of {len(vals)}")
    print(f"outputs in {out}")
    return 0


# ----------------------------------------------------------------------
# validate-scene
# ----------------------------------------------------------------------
def cmd_validate_scene(args) -> int:
    spec = args.scene
    if spec.endswith(".json"):
        path = Path(spec)
        if not path.is_file():
            raise ConfigError(f"scene file not found: {path}")
    else:
        path = preset_path(spec, "scene")
    scene = load_scene_file(path)
    n_wedges = len(scene.wedges())
    all_xy = np.concatenate([b.footprint for b in scene.buildings]) if scene.buildings else np.zeros((0, 2))
    print(f"scene OK: {path}")
    print(f"  buildings:  {len(scene.buildings)}")
    print(f"  facades:    {scene.n_facades}")
    print(f"  wedges:     {n_wedges}")
    print(f"  scatterers: {len(scene.scatterers)}")
    if len(all_xy):
        print(
            f"  extent:     x [{all_xy[:, 0].min():g}, {all_xy[:, 0].max():g}] m, "
            f"y [{all_xy[:, 1].min():g}, {all_xy[:, 1].max():g}] m, "
            f"max height {max(b.height for b in scene.buildings):g} m"
        )
    return 0


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------
def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SceneError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
