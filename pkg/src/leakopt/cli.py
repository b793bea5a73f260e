"""Command-line harness.

Every command writes into its own directory below ``--out`` (default: the
``LEAKOPT_OUT`` environment variable, else ``./runs``). Result files are
deterministic for a fixed config and seed; wall-clock measurements go to a
separate ``walltime.json`` so that the rest can be compared by hash.

Exit codes: 0 success, 1 runtime failure, 2 input or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .clifford import ATOMIC_BY_LABEL, CliffordSet, sequence_set
from .cmaes import CmaesConfig
from .config import ConfigError, ExperimentConfig
from .cost import ParameterSet, PulseContext, Stage, evaluate_cost
from .optimizer import TIMING_KEYS, OptimizationAborted, _stage_config, calibrate, run_optimization
from .pulses import (
    CarrierConfig,
    PulseFileError,
    SampledPulse,
    _atomic_write,
    bandwidth_filter,
    export_awg,
    read_pulse,
    write_awg,
    write_pulse,
)
from .quantum import (
    NoiseModel,
    gate_fidelity,
    ground_state,
    populations,
    propagate_open,
)
from .rb import LeakageAnalysisError, analyze_leakage, fit_single_decay, generate_rb_dataset

log = logging.getLogger("leakopt")

OUT_ENV = "LEAKOPT_OUT"
EXIT_OK, EXIT_RUNTIME, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Bad user input: exit code 2."""


# -- output helpers ----------------------------------------------------------

def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


class Run:
    """Collects the files written by one command and their hashes."""

    def __init__(self, root: Path, command: str, config: ExperimentConfig):
        self.dir = root / command
        self.command = command
        self.config = config
        self.files: dict[str, str] = {}
        self.walltime: dict[str, float] = {}
        self._t0 = time.perf_counter()

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        _atomic_write(path, text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write(name, _json(obj))

    def record_pulse(self, name: str, pulse: SampledPulse, description: str) -> None:
        path = self.dir / name
        write_pulse(path, pulse, description)
        for p in (path, path.with_suffix(".json")):
            self.files[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()

    def finish(self) -> None:
        self.walltime["total_s"] = time.perf_counter() - self._t0
        manifest = {
            "command": self.command,
            "config": self.config.snapshot(),
            "outputs": dict(sorted(self.files.items())),
        }
        run_id = hashlib.sha256(_json(manifest).encode()).hexdigest()[:16]
        manifest["run_id"] = run_id
        _atomic_write(self.dir / "run.json", _json(manifest))
        _atomic_write(self.dir / "walltime.json", _json(self.walltime))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


# -- shared pieces -----------------------------------------------------------

def _load_params(path: Path) -> ParameterSet:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        return ParameterSet.from_dict(data["params"])
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: not a parameter artifact ({exc})") from None


def _load_pulse_source(path: Path, cfg: ExperimentConfig, context: PulseContext):
    """A pulse source is either a parameter artifact (``*.json`` with a
    ``params`` entry) or a pulse CSV, which is played on resonance."""
    if path.suffix == ".json":
        params = _load_params(path)
        if params.corrections is not None and len(params.corrections.a) != context.n_samples:
            raise InputError(f"{path}: {len(params.corrections.a)} samples, config has {context.n_samples}")
        return context.pulse(params), context.device_for(params)
    dt = None if path.with_suffix(".json").exists() else cfg.dt
    pulse = read_pulse(path, dt)
    return pulse, context.device


def _label(path: Path) -> str:
    return path.parent.name if path.name == "params.json" else path.stem


def _stage_outputs(run: Run, result, context: PulseContext, cfg: ExperimentConfig, stage: str) -> None:
    params = result.params
    run.write_json(
        "params.json",
        {
            "stage": stage,
            "n_samples": context.n_samples,
            "params": params.to_dict(),
            "ssb_freq_mhz": params.ssb_frequency / (2 * math.pi) * 1e3,
            "cost": result.cost,
            "best_params": result.best.to_dict(),
            "best_cost": result.best_cost,
            "iterations": len(result.trace),
        },
    )
    run.write("trace.jsonl", result.trace.to_jsonl(timings=False))
    run.write("candidates.csv", result.trace.to_candidates_csv())
    run.walltime["iterations_ns"] = [dict(r.timings_ns, wall=r.wall_ns) for r in result.trace.records]
    pulse = context.pulse(params)
    run.record_pulse("pulse.csv", pulse, f"{stage} +X/2 envelope")
    carrier = CarrierConfig(params.ssb_frequency)
    i, q = export_awg(pulse, carrier)
    write_awg(run.dir / "awg.csv", i, q)
    run.files["awg.csv"] = hashlib.sha256((run.dir / "awg.csv").read_bytes()).hexdigest()


def _save_aborted(run: Run, exc: OptimizationAborted) -> None:
    run.write("trace.jsonl", exc.trace.to_jsonl(timings=False))
    run.write("candidates.csv", exc.trace.to_candidates_csv())
    run.finish()


# -- commands ----------------------------------------------------------------

def cmd_simulate_pulse(args, cfg: ExperimentConfig, run: Run) -> dict:
    noise = NoiseModel.noiseless() if args.noiseless else cfg.noise()
    context = cfg.context()
    pulse, device = _load_pulse_source(Path(args.pulse), cfg, context)
    settings = cfg.simulation()
    sim = pulse
    if settings.rise_time is not None:
        sim = bandwidth_filter(pulse, settings.rise_time, settings.oversample)
    channel = propagate_open(sim, device, noise)
    p = populations(channel.apply(ground_state(device.dim)))
    report = {f"p{j}": float(x) for j, x in enumerate(p)}
    report["leakage"] = float(np.sum(p[2:]))
    report["fidelity_vs"] = {
        label: gate_fidelity(channel, ATOMIC_BY_LABEL["+" + label].unitary) for label in ("X/2", "Y/2")
    }
    report["noiseless"] = bool(args.noiseless)
    run.write_json("simulation.json", report)
    return report


def cmd_calibrate_drag(args, cfg: ExperimentConfig, run: Run) -> dict:
    context = cfg.context()
    d = cfg["drag"]
    a0 = d["initial_amplitude"] or context.initial_amplitude()
    start = ParameterSet(Stage.DRAG, [a0, d["initial_beta"], context.ssb_nominal])
    try:
        result = calibrate(
            start,
            context,
            cfg.cost(),
            cfg.stage_settings(),
            reference_amplitude=a0,
            workers=args.threads,
            objective=cfg["cost"]["objective"],
        )
    except OptimizationAborted as exc:
        _save_aborted(run, exc)
        raise
    _stage_outputs(run, result, context, cfg, "DRAG")
    return {"params": result.params.to_dict(), "cost": result.cost, "best_cost": result.best_cost}


def cmd_optimize_pwc(args, cfg: ExperimentConfig, run: Run) -> dict:
    context = cfg.context()
    drag_path = Path(args.drag) if args.drag else run.dir.parent / "calibrate-drag" / "params.json"
    drag = _load_params(drag_path)
    if drag.stage is not Stage.DRAG:
        raise InputError(f"{drag_path}: expected a DRAG artifact, got {drag.stage.value}")
    a0 = cfg["drag"]["initial_amplitude"] or context.initial_amplitude()
    start = drag.extend(context.n_samples)
    try:
        result = calibrate(
            start,
            context,
            cfg.cost(),
            cfg.stage_settings(pwc=True),
            reference_amplitude=a0,
            workers=args.threads,
            objective=cfg["cost"]["objective"],
        )
    except OptimizationAborted as exc:
        _save_aborted(run, exc)
        raise
    _stage_outputs(run, result, context, cfg, "PWC")
    base = context.base_pulse(result.params)
    opt = context.pulse(result.params)
    run.write(
        "envelopes.csv",
        _csv(
            ["index", "t_ns", "base_re", "base_im", "opt_re", "opt_im"],
            [
                (n, t, b.real, b.imag, o.real, o.imag)
                for n, (t, b, o) in enumerate(zip(base.times, base.samples, opt.samples))
            ],
        ),
    )
    return {"dimension": start.values.size, "cost": result.cost, "best_cost": result.best_cost}


def _cliffords_for(path: Path, cfg: ExperimentConfig, context: PulseContext) -> CliffordSet:
    pulse, device = _load_pulse_source(path, cfg, context)
    return CliffordSet.simulate(pulse, device, context.noise, context.settings, context.table)


def cmd_rb(args, cfg: ExperimentConfig, run: Run) -> dict:
    context = cfg.context()
    rb = cfg["rb"]
    cliffords = _cliffords_for(Path(args.pulse), cfg, context)
    data = generate_rb_dataset(cliffords, rb["lengths"], rb["K"], rb["shots"], cfg["cost"]["seed"])
    mean, err = data.mean("p0")
    run.write("dataset.csv", data.to_csv())
    run.write("rb_curve.csv", _csv(["m", "p0_mean", "p0_err"], zip(data.lengths.tolist(), mean, err)))
    fit = fit_single_decay(data.lengths, mean, err)
    lam = fit["lambda1"]
    result = {
        "A": fit["A"],
        "B": fit["B"],
        "lambda": lam,
        "F_avg": (1 + lam) / 2,
        "stderr": {"A": fit.error("A"), "B": fit.error("B"), "lambda": fit.error("lambda1"), "F_avg": fit.error("lambda1") / 2},
        "fit_diagnostics": fit.to_dict(),
    }
    run.write_json("rb_fit.json", result)
    return {"lambda": lam, "F_avg": result["F_avg"]}


def cmd_leakage_rb(args, cfg: ExperimentConfig, run: Run) -> dict:
    context = cfg.context()
    rb = cfg["rb"]
    rows = []
    labels: dict[str, int] = {}
    for p in args.pulses:
        path = Path(p)
        label = _label(path)
        labels[label] = labels.get(label, 0) + 1
        if labels[label] > 1:
            label = f"{label}-{labels[label]}"
        cliffords = _cliffords_for(path, cfg, context)
        data = generate_rb_dataset(cliffords, rb["lengths"], rb["K"], rb["shots"], cfg["cost"]["seed"])
        try:
            res = analyze_leakage(data)
        except LeakageAnalysisError as exc:
            raise RuntimeError(f"{label}: {exc}") from exc
        run.write(f"{label}_dataset.csv", data.to_csv())
        run.write_json(f"{label}_leakage.json", res.to_dict())
        rows.append((label, res.l1, res.stderr["L1"], 1 - res.lambda2, res.stderr["lambda2"], res.f_avg, res.stderr["F_avg"]))
    run.write(
        "comparison.csv",
        _csv(["pulse", "L1", "L1_err", "one_minus_lambda2", "one_minus_lambda2_err", "F_avg", "F_avg_err"], rows),
    )
    print(f"{'pulse':<20} {'L1 [%]':>16} {'1-lambda2 [%]':>16} {'F_avg [%]':>16}")
    for label, l1, l1e, e2, e2e, f, fe in rows:
        print(f"{label:<20} {100*l1:>9.4f}({100*l1e:.4f}) {100*e2:>9.4f}({100*e2e:.4f}) {100*f:>9.4f}({100*fe:.4f})")
    return {label: {"L1": l1, "F_avg": f} for label, l1, _, _, _, f, _ in rows}


def cmd_profile(args, cfg: ExperimentConfig, run: Run) -> dict:
    """One stage-1 iteration per population size, with an emulated fixed
    instrument setup latency per iteration."""
    context = cfg.context()
    cost = cfg.cost()
    prof = cfg["profile"]
    latency = prof["setup_latency_ms"] / 1e3
    a0 = cfg["drag"]["initial_amplitude"] or context.initial_amplitude()
    start = ParameterSet(Stage.DRAG, [a0, cfg["drag"]["initial_beta"], context.ssb_nominal])
    settings = cfg.stage_settings()

    records = []
    walltime = []
    for lam in prof["lambdas"]:
        cma = _stage_config(Stage.DRAG, context.n_samples, a0, start.values, settings)
        cma = CmaesConfig(**{**cma.__dict__, "popsize": lam, "max_iterations": 1, "target_cost": None})
        cache = {}

        def setup(it):
            cache[it] = sequence_set(cost.m, cost.n_sequences, context.table, cost.seed + it)
            if latency:
                time.sleep(latency)

        def objective(x, it, k):
            return evaluate_cost(ParameterSet(Stage.DRAG, x), cost, context, stream=(it, k), sequences=cache[it])

        res = run_optimization(objective, start.values, cma, prepare=setup, workers=args.threads)
        rec = res.trace.records[0]
        secs = {k: rec.timings_ns[k] / 1e9 for k in TIMING_KEYS}
        total = rec.wall_ns / 1e9
        walltime.append(
            {
                "lambda": lam,
                "iteration_s": total,
                "per_evaluation_s": total / lam,
                "categories_s": secs,
                "per_evaluation_categories_s": {k: v / lam for k, v in secs.items()},
                "category_sum_s": sum(secs.values()),
            }
        )
        records.append({"lambda": lam, "costs": [float(c) for c in rec.costs]})
    run.write_json("profile_costs.json", {"setup_latency_ms": prof["setup_latency_ms"], "records": records})
    report = {"setup_latency_ms": prof["setup_latency_ms"], "threads": args.threads, "records": walltime}
    # timing report: not reproducible by nature, so it is kept out of the hashed outputs
    _atomic_write(run.dir / "profile.json", _json(report))
    for r in walltime:
        print(f"lambda={r['lambda']:>3}  iteration {r['iteration_s']*1e3:8.1f} ms  per evaluation {r['per_evaluation_s']*1e3:7.2f} ms")
    return report


COMMANDS = {
    "simulate-pulse": cmd_simulate_pulse,
    "calibrate-drag": cmd_calibrate_drag,
    "optimize-pwc": cmd_optimize_pwc,
    "rb": cmd_rb,
    "leakage-rb": cmd_leakage_rb,
    "profile": cmd_profile,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leakopt", description="Closed-loop leakage-aware pulse optimization on a simulated transmon.")
    parser.add_argument("--config", help="JSON experiment config (defaults apply to missing keys)")
    parser.add_argument("--seed", type=int, help="override cost.seed (non-negative)")
    parser.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./runs)")
    parser.add_argument("--threads", type=int, default=1, help="parallel candidate evaluations")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-pulse", help="populations and X/2, Y/2 fidelity of one pulse")
    p.add_argument("pulse", help="pulse CSV (index,re,im) or parameter artifact JSON")
    p.add_argument("--noiseless", action="store_true", help="ignore the configured decoherence")

    sub.add_parser("calibrate-drag", help="stage 1: optimize amplitude, DRAG beta and sideband frequency")

    p = sub.add_parser("optimize-pwc", help="stage 2: add per-sample corrections to a calibrated DRAG pulse")
    p.add_argument("--drag", help="stage-1 params.json (default: <out>/calibrate-drag/params.json)")

    p = sub.add_parser("rb", help="full randomized benchmarking of one pulse")
    p.add_argument("pulse", help="pulse CSV or parameter artifact JSON")

    p = sub.add_parser("leakage-rb", help="leakage RB of one or more pulses, with a comparison table")
    p.add_argument("pulses", nargs="+", help="pulse CSVs or parameter artifact JSONs")

    sub.add_parser("profile", help="time one optimizer iteration per population size")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise InputError("--threads must be >= 1")
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({})
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise InputError("--seed must be an unsigned 64-bit integer")
            cfg = cfg.with_overrides(cost={"seed": args.seed})
        out = Path(args.out or os.environ.get(OUT_ENV) or "runs")
        run = Run(out, args.command, cfg)
        summary = COMMANDS[args.command](args, cfg, run)
        run.finish()
    except (InputError, ConfigError, PulseFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OptimizationAborted as exc:
        print(f"optimization aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (RuntimeError, ValueError, ArithmeticError, np.linalg.LinAlgError, OSError) as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(summary, indent=2, default=float))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
