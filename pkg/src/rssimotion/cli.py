"""Command-line entry point: ``rssimotion <command> [options]``.

Exit codes: 0 success, 2 input error, 3 numerical failure. Every command
stages its outputs in memory and writes them with an atomic rename only once
everything succeeded.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import statistics
import sys
import tempfile
import time
import warnings
from dataclasses import asdict, dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Sequence

import numpy as np

from . import estimator, kalman, radio, synth, trace
from .errors import InputError, NumericalError

try:
    TOOL_VERSION = version("artifact")
except PackageNotFoundError:  # running from a source tree
    TOOL_VERSION = "0.1.0"

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
DEFAULT_GD_SEED = 42


@dataclass
class RunManifest:
    command: str
    inputs: list[str]
    config_hash: str
    seed: int | None
    tool_version: str = TOOL_VERSION
    timings: dict[str, float] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)  # name -> sha256

    @property
    def filename(self) -> str:
        return f"{self.command}.manifest.json"


class Outputs:
    """Output files staged in memory and committed atomically."""

    def __init__(self, out_dir: Path, manifest: RunManifest):
        self.out_dir = out_dir
        self.manifest = manifest
        self.files: dict[str, bytes] = {}

    def json(self, name: str, doc: dict) -> None:
        doc = {**doc, "manifest": self.manifest.filename}
        self.files[name] = (json.dumps(doc, indent=2) + "\n").encode()

    def table(self, stem: str, header: Sequence[str], rows: Sequence[Sequence], fmt: str) -> str:
        if fmt == "json":
            name = f"{stem}.json"
            self.json(name, {"columns": list(header), "rows": [list(r) for r in rows]})
            return name
        name = f"{stem}.csv"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        self.files[name] = buf.getvalue().encode()
        return name

    def raw(self, name: str, text: str) -> None:
        self.files[name] = text.encode()

    def commit(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        for name, data in self.files.items():
            self.manifest.outputs[name] = hashlib.sha256(data).hexdigest()
        staged = dict(self.files)
        staged[self.manifest.filename] = (json.dumps(asdict(self.manifest), indent=2) + "\n").encode()
        temps = []
        try:
            for name, data in staged.items():
                fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=self.out_dir)
                with os.fdopen(fd, "wb") as fh:
                    fh.write(data)
                temps.append((tmp, self.out_dir / name))
            for tmp, dest in temps:
                os.replace(tmp, dest)
        except BaseException:
            for tmp, _ in temps:
                if os.path.exists(tmp):
                    os.unlink(tmp)
            raise


def _fmt(v: float) -> str:
    return repr(float(v))


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _read_json(path: str) -> dict:
    try:
        return json.loads(_read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc


def _config_hash(args: argparse.Namespace) -> str:
    doc = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out_dir")}
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()


def _start(args: argparse.Namespace, inputs: Sequence[str]) -> Outputs:
    manifest = RunManifest(
        command=args.command,
        inputs=[str(p) for p in inputs],
        config_hash=_config_hash(args),
        seed=args.seed,
    )
    return Outputs(Path(args.out_dir), manifest)


def _load_series(path: str) -> trace.AlignedSeries:
    series = trace.AlignedSeries.from_dict(_read_json(path))
    if not series.normalized:
        raise InputError(f"{path}: series is not normalized")
    return series


# --------------------------------------------------------------------------
# commands


def cmd_ingest(args: argparse.Namespace) -> int:
    out = _start(args, [args.imu, args.rssi])
    t0 = time.perf_counter()
    imu = trace.parse_imu_csv(_read_bytes(args.imu))
    rssi = trace.parse_rssi_csv(_read_bytes(args.rssi))
    if args.window > 1 or args.overlap > 0:
        imu = trace.downsample_imu(imu, args.window, args.overlap)
        if not imu:
            raise InputError(f"fewer IMU samples than the window ({args.window})")
    series = trace.align(rssi, imu, args.tolerance_ms)
    if args.differenced:
        series = trace.difference(series)
    fixed = None
    if args.norm_params:
        fixed = trace.NormalizationParams.from_dict(_read_json(args.norm_params))
    series, params = trace.normalize(series, fixed)
    out.manifest.timings["ingest_s"] = time.perf_counter() - t0

    out.json("aligned.json", series.to_dict())
    out.json(
        "preprocess.json",
        trace.preprocessing_document(params, args.window, args.overlap, args.tolerance_ms, args.differenced),
    )
    out.commit()
    print(f"paired {len(series)} samples, dropped {series.dropped} RSSI samples without an IMU partner")
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    out = _start(args, args.series)
    series = [_load_series(p) for p in args.series]
    system = estimator.build_system(series[0]) if len(series) == 1 else estimator.build_pooled_system(series)
    t0 = time.perf_counter()
    if args.solver == "exact":
        coeffs = estimator.solve_exact(system)
        extra = {}
    else:
        seed = DEFAULT_GD_SEED if args.seed is None else args.seed
        cfg = estimator.GdConfig(max_iters=args.iters, grad_tol=args.tol, init=args.init, rng_seed=seed)
        report = estimator.solve_gd(system, cfg)
        coeffs = report.coefficients
        extra = {"iterations": report.iterations, "stop_reason": report.stop_reason.value}
        out.json("gd_report.json", {"solver": "gd", "init": cfg.init.value, "seed": seed, **report.to_dict()})
    out.manifest.timings["solve_s"] = time.perf_counter() - t0
    out.json("coefficients.json", {"solver": args.solver, **coeffs.to_dict(), **extra, "pairs": system.count})
    out.commit()
    print(json.dumps(coeffs.to_dict()))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    out = _start(args, [args.series, args.coefficients])
    series = _load_series(args.series)
    coeffs = estimator.Coefficients.from_dict(_read_json(args.coefficients))
    ev = estimator.evaluate(coeffs, series)
    report = {"n_predictions": len(ev.predicted), "mmse": ev.stats.to_dict()}
    header = ["t_ms", "rssi_actual", "rssi_pred"]
    cols = [ev.t_ms.tolist(), list(map(_fmt, ev.actual)), list(map(_fmt, ev.predicted))]
    if args.baseline == "kalman":
        params = kalman.calibrate(series, args.calib_fraction)
        kev = kalman.filter_series(series, params)
        report["kalman"] = {**kev.stats.to_dict(), **params.to_dict(), "calib_fraction": args.calib_fraction}
        header.append("rssi_kalman")
        cols.append(list(map(_fmt, kev.predicted)))
        out.json("kalman_params.json", params.to_dict())
        out.table(
            "kalman_predictions",
            ["t_ms", "rssi_pred", "rssi_actual"],
            list(zip(kev.t_ms.tolist(), map(_fmt, kev.predicted), map(_fmt, kev.actual))),
            args.format,
        )
    out.json("report.json", report)
    out.table("predictions", header, list(zip(*cols)), args.format)
    out.commit()
    print(json.dumps({k: v["rmse"] for k, v in report.items() if isinstance(v, dict)}))
    return EXIT_OK


def random_spd(rng: np.random.Generator, m: int, shift: float = 0.1) -> np.ndarray:
    """Random SPD matrix ``M'M / m + shift I``."""
    M = rng.standard_normal((m, m))
    E = M.T @ M / m + shift * np.eye(m)
    return (E + E.T) / 2


def _bench_system(m: int, seed: int) -> estimator.CorrelationSystem:
    rng = np.random.default_rng(seed)
    if m == 4:
        cfg = synth.preset("southbeach", seed=seed)
        return estimator.build_system(synth.linear_ground_truth(cfg, synth.generate_motion(cfg)))
    return estimator.CorrelationSystem(R=rng.random(m), E=random_spd(rng, m), count=m)


def bench_rows(sizes: Sequence[int], iterations: Sequence[int], reps: int, seed: int) -> list[tuple]:
    """Median CPU seconds of both solvers per (m, T) cell.

    Repetitions are interleaved across cells so that slow drift of the
    machine affects every cell alike instead of biasing ratios between them.
    """
    systems = {m: _bench_system(m, seed) for m in sizes}
    lists = {m: (s.E.tolist(), s.R.tolist()) for m, s in systems.items()}
    # time the descent itself; the exact objective trace is a diagnostic
    configs = {T: estimator.GdConfig(max_iters=T, grad_tol=0.0, record_objective=False) for T in iterations}
    samples: dict[tuple, list[float]] = {}
    clock = time.process_time
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(reps):
            for m in sizes:
                E, R = lists[m]
                for T in iterations:
                    t0 = clock()
                    estimator.solve_linear(E, R, check_condition=False)
                    t1 = clock()
                    estimator.solve_gd(systems[m], configs[T])
                    t2 = clock()
                    samples.setdefault((m, T, "exact"), []).append(t1 - t0)
                    samples.setdefault((m, T, "gd"), []).append(t2 - t1)
    return [(m, T, kind, statistics.median(samples[(m, T, kind)])) for m in sizes for T in iterations for kind in ("exact", "gd")]


def cmd_bench(args: argparse.Namespace) -> int:
    out = _start(args, [])
    seed = 0 if args.seed is None else args.seed
    t0 = time.perf_counter()
    rows = bench_rows(args.sizes, args.iters, args.reps, seed)
    out.manifest.timings["bench_s"] = time.perf_counter() - t0
    name = out.table("timing", ["m", "T", "method", "median_s"], [(m, T, k, _fmt(s)) for m, T, k, s in rows], args.format)
    out.commit()
    print(f"wrote {len(rows)} timing rows to {Path(args.out_dir) / name}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    inputs = [args.config] if args.config else []
    out = _start(args, inputs)
    if args.config:
        config = synth.SynthConfig.from_dict(_read_json(args.config))
    else:
        config = synth.preset(args.preset)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.duration is not None:
        overrides["duration"] = args.duration
    if overrides:
        config = synth.replace(config, **overrides)
    t0 = time.perf_counter()
    motion, rssi = synth.generate(config)
    out.manifest.timings["generate_s"] = time.perf_counter() - t0
    out.manifest.seed = config.seed

    buf = io.StringIO()
    trace.write_imu_csv(motion, buf)
    out.raw("imu.csv", buf.getvalue())
    buf = io.StringIO()
    trace.write_rssi_csv(rssi, buf)
    out.raw("rssi.csv", buf.getvalue())
    norm = synth.normalization_params(config).to_dict()
    out.json("normalization.json", norm)
    out.json(
        "truth.json",
        {"coefficients": config.true_coefficients.to_dict(), "config": config.to_dict(), "normalization": norm},
    )
    out.commit()
    print(f"generated {len(motion)} IMU and {len(rssi)} RSSI samples ({config.mode} mode, seed {config.seed})")
    return EXIT_OK


def power_schedule(
    coeffs: estimator.Coefficients,
    series: trace.AlignedSeries,
    profile: radio.RadioProfile,
    threshold: float,
    margin: float,
    ref_tx: float,
    step: float = radio.DEFAULT_TX_STEP_DB,
) -> tuple[list[tuple], dict]:
    """Closed-loop transmit-power schedule over a recorded series.

    The series is assumed recorded at ``ref_tx`` dBm, so the RSSI at any other
    power is shifted by the difference in dB. Each step predicts the next RSSI,
    picks the power for it, then checks the outcome against the actual RSSI.
    """
    params = series.normalization
    ev = estimator.evaluate(coeffs, series)
    current = ref_tx
    rows, met, feasible = [], 0, 0
    for t, pred, actual in zip(ev.t_ms.tolist(), ev.predicted, ev.actual):
        pred_ref = trace.denormalize(float(pred), "rssi", params)
        actual_ref = trace.denormalize(float(actual), "rssi", params)
        decision = radio.select_tx_power(pred_ref + current - ref_tx, current, threshold, profile, margin, step)
        rx = actual_ref + decision.tx - ref_tx
        ok = rx >= threshold
        met += ok
        feasible += decision.feasible
        rows.append((t, _fmt(pred_ref + decision.tx - ref_tx), _fmt(decision.tx), int(decision.feasible), _fmt(rx), int(ok)))
        current = decision.tx
    n = len(rows)
    summary = {
        "profile": profile.name,
        "threshold_dbm": threshold,
        "margin_db": margin,
        "ref_tx_dbm": ref_tx,
        "steps": n,
        "fraction_met": met / n,
        "fraction_feasible": feasible / n,
        "mean_tx_dbm": float(np.mean([float(r[2]) for r in rows])),
    }
    return rows, summary


def fixed_power_fraction(series: trace.AlignedSeries, tx: float, ref_tx: float, threshold: float) -> float:
    """Fraction of steps 1..N-1 meeting the threshold at a constant ``tx``."""
    rx = np.array([trace.denormalize(float(v), "rssi", series.normalization) for v in series.r[1:]])
    return float(np.mean(rx + tx - ref_tx >= threshold))


def cmd_power(args: argparse.Namespace) -> int:
    out = _start(args, [args.coefficients, args.series])
    coeffs = estimator.Coefficients.from_dict(_read_json(args.coefficients))
    series = _load_series(args.series)
    profile = radio.load_profile(args.profile)
    rows, summary = power_schedule(coeffs, series, profile, args.threshold, args.margin, args.ref_tx, args.tx_step)
    out.table(
        "schedule",
        ["t_ms", "pred_rx_dbm", "tx_dbm", "feasible", "actual_rx_dbm", "met"],
        rows,
        args.format,
    )
    out.json("power_summary.json", summary)
    out.commit()
    print(json.dumps({k: summary[k] for k in ("fraction_met", "fraction_feasible", "mean_tx_dbm")}))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default: command-specific)")
    common.add_argument("--out-dir", default=".", help="directory for output files (default: .)")
    common.add_argument(
        "--format", choices=("csv", "json"), default="csv", help="format of tabular outputs (default: csv)"
    )

    parser = argparse.ArgumentParser(
        prog="rssimotion", description="Predict RSSI from motion data with a linear MMSE model.", allow_abbrev=False
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {TOOL_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name: str, func, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help_, description=help_, allow_abbrev=False)
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, "Parse, align and normalize an IMU/RSSI trace pair.")
    p.add_argument("--imu", required=True, help="IMU CSV (t_ms,ax,ay,az[,gx,gy,gz])")
    p.add_argument("--rssi", required=True, help="RSSI CSV (t_ms,rssi_dbm,seq[,tx_dbm])")
    p.add_argument("--window", type=int, default=1, help="IMU downsampling window in samples (1 = off)")
    p.add_argument("--overlap", type=float, default=0.0, help="window overlap fraction in [0, 1)")
    p.add_argument("--tolerance-ms", type=int, default=trace.DEFAULT_TOLERANCE_MS, help="max pairing gap in ms")
    p.add_argument("--differenced", action="store_true", help="model first differences instead of raw values")
    p.add_argument("--norm-params", help="JSON with channel_min/channel_max to apply instead of min/max")

    p = add("fit", cmd_fit, "Fit predictor coefficients on one or more aligned series (pairs are pooled).")
    p.add_argument("series", nargs="+", help="aligned.json file(s) from ingest")
    p.add_argument("--solver", choices=("exact", "gd"), default="exact")
    p.add_argument("--iters", type=int, default=100, help="gradient-descent iteration cap T")
    p.add_argument("--tol", type=float, default=1e-10, help="gradient-norm stopping threshold")
    p.add_argument("--init", choices=("zero", "random"), default="zero", help="gradient-descent start point")

    p = add("eval", cmd_eval, "Evaluate one-step-ahead predictions, optionally against a Kalman baseline.")
    p.add_argument("--series", required=True)
    p.add_argument("--coefficients", required=True)
    p.add_argument("--baseline", choices=("none", "kalman"), default="none")
    p.add_argument("--calib-fraction", type=float, default=0.2, help="series prefix used to calibrate the Kalman filter")

    p = add("bench", cmd_bench, "Time the exact and gradient-descent solvers.")
    p.add_argument("--sizes", type=_int_list, default=[4, 16, 32], help="system sizes m (default 4,16,32)")
    p.add_argument("--iters", type=_int_list, default=[1000, 500, 100, 50, 10], help="iteration counts T")
    p.add_argument("--reps", type=int, default=5, help="repetitions per cell (median reported)")

    p = add("simulate", cmd_simulate, "Generate a synthetic IMU/RSSI trace with known coefficients.")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="SynthConfig JSON (may name a 'preset' plus overrides)")
    src.add_argument("--preset", choices=sorted(synth.PRESETS), default="southbeach")
    p.add_argument("--duration", type=float, default=None, help="override duration in seconds")

    p = add("power", cmd_power, "Compute an adaptive transmit-power schedule.")
    p.add_argument("--coefficients", required=True)
    p.add_argument("--series", required=True)
    p.add_argument("--profile", default="cc2538", help="built-in profile name or profile JSON path")
    p.add_argument("--threshold", type=float, required=True, help="receive threshold in dBm")
    p.add_argument("--margin", type=float, default=radio.DEFAULT_MARGIN_DB, help="fade margin in dB")
    p.add_argument("--ref-tx", type=float, default=0.0, help="tx power (dBm) the series was recorded at")
    p.add_argument("--tx-step", type=float, default=radio.DEFAULT_TX_STEP_DB, help="tx power quantization step")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
