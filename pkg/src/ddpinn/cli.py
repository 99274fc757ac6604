"""Command-line front end.

    ddpinn train <config|preset>
    ddpinn evaluate <checkpoint> [--signal S] [--horizon H] [--oracle]
    ddpinn benchmark <configA> <configB> [--epochs N]
    ddpinn simulate <system> [--signal S] [--duration D] [--step H]

Exit codes: 0 ok, 2 configuration error, 3 training divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod, io, rollout, signals
from .config import ConfigError
from .integrate import IntegrationError, simulate
from .train import LOG_COLUMNS, train_run

log = logging.getLogger("ddpinn")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3

METRIC_COLUMNS = ("arch", "f", "order", "horizon", "n_steps", "scaled_mse", "diverged",
                  "divergence_step")
LATENCY_COLUMNS = ("model_median_s", "reference", "reference_median_s", "ratio", "n_steps")
BENCHMARK_COLUMNS = ("label", "arch", "order", "n_collo", "n_ic", "epochs", "median_epoch_ms",
                     "final_val_phys", "pred_latency_s", "time_ratio")


def _label(spec: str) -> str:
    return Path(spec).stem if spec.endswith(".json") else spec.replace(":", "-")


def _signal_spec(text: str | None):
    """A JSON object, a path to one, or a bare signal kind."""
    if text is None:
        return None
    t = text.strip()
    if t.startswith("{"):
        try:
            return json.loads(t)
        except json.JSONDecodeError as e:
            raise ConfigError(f"--signal: {e.msg}") from None
    if Path(t).is_file():
        return json.loads(Path(t).read_text())
    return {"kind": t}


def _run_dir(args, name: str) -> Path:
    base = Path(args.out_dir) if args.out_dir else io.default_out_dir()
    d = base / name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _train(run_cfg, seed, epochs=None):
    tc = run_cfg.train_config(seed)
    if epochs is not None:
        from dataclasses import replace
        tc = replace(tc, epochs=epochs)
    box = run_cfg.box()
    sysm = run_cfg.system_spec()
    return tc, box, train_run(tc, box, sysm.rhs)


def cmd_train(args) -> int:
    run_cfg = cfgmod.load(args.config)
    seed = args.seed if args.seed is not None else run_cfg.train_config().seed
    out = _run_dir(args, args.name or f"{_label(args.config)}-s{seed}")
    tc, box, res = _train(run_cfg, seed, args.epochs)
    doc_cfg = run_cfg.to_dict()
    doc_cfg["training"]["seed"] = seed
    io.save_checkpoint(out / "checkpoint.json", res.model, doc_cfg, res.summary)
    io.write_csv(out / "train_log.csv", LOG_COLUMNS, res.log)
    io.write_csv(out / "timing.csv", ("epoch", "epoch_ms"),
                 [(i + 1, ms) for i, ms in enumerate(res.epoch_ms)])
    io.write_json(out / "manifest.json", io.manifest(run_cfg, seed, box, {"train_config": cfgmod.train_config_dict(tc)}))
    final = res.summary.get("final_val_phys")
    print(f"trained {tc.arch} for {res.summary['epochs']} epochs; "
          f"validation physics loss {final!r}; output in {out}")
    if res.diverged:
        print("training diverged; checkpoint holds the last finite epoch", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _truth(run_cfg, signal, x0, horizon, f, substeps):
    sysm = run_cfg.system_spec()
    return simulate(sysm.rhs, x0, signal, horizon, 1.0 / f / substeps)


def cmd_evaluate(args) -> int:
    path = Path(args.checkpoint)
    if path.suffix == ".json" and path.is_file() and "format_version" in path.read_text()[:200]:
        model, doc = io.load_checkpoint(path)
        run_cfg = cfgmod.from_dict(doc["config"])
    elif args.oracle:
        run_cfg, model = cfgmod.load(args.checkpoint), None
    else:
        raise ConfigError(f"{args.checkpoint} is not a checkpoint")
    sysm = run_cfg.system_spec()
    signal = run_cfg.test_signal(_signal_spec(args.signal))
    horizon = args.horizon if args.horizon is not None else run_cfg.horizon
    if not horizon > 0:
        raise ConfigError("horizon must be positive")
    if hasattr(signal, "duration") and horizon > signal.duration * (1 + 1e-12):
        raise ConfigError(f"horizon {horizon} exceeds the test signal duration {signal.duration}")
    x0 = run_cfg.test_x0()
    f = float(run_cfg.model["f"])
    substeps = int(run_cfg.evaluation.get("substeps", 100))
    n_steps = int(round(horizon * f))
    truth = _truth(run_cfg, signal, x0, n_steps / f, f, substeps)
    box = model.box if model is not None else run_cfg.box()
    oracle = rollout.RK4Oracle(sysm.rhs, f, signal, substeps=substeps, box=box)
    runner = oracle if args.oracle else model
    res = rollout.self_loop(runner, x0, signal, n_steps)
    mse = rollout.scaled_mse(res.trajectory, truth, box) if len(res.trajectory) > 1 else float("nan")
    out = _run_dir(args, args.name or f"eval-{path.stem if model is not None else _label(args.checkpoint)}")
    arch = "rk4" if args.oracle else model.arch
    order = "" if args.oracle else model.order
    io.write_csv(out / "metrics.csv", METRIC_COLUMNS, [{
        "arch": arch, "f": f, "order": order, "horizon": n_steps / f, "n_steps": n_steps,
        "scaled_mse": mse, "diverged": res.diverged, "divergence_step": res.divergence_step}])
    pred = res.trajectory.states
    ref = truth.states[::substeps][:len(pred)]
    traj = type(truth)(res.trajectory.times, ref, truth.inputs[::substeps][:len(pred)])
    io.write_trajectory(out / "trajectory.csv", traj, sysm.state_names, sysm.input_names, pred=pred)
    ref_name = "rk4" if args.reference is None else Path(args.reference).stem
    reference = oracle if args.reference is None else io.load_checkpoint(args.reference)[0]
    bench = rollout.benchmark_prediction_time(runner, reference, x0, signal,
                                              n_steps=args.latency_steps)
    io.write_csv(out / "latency.csv", LATENCY_COLUMNS, [{
        "model_median_s": bench["model_s"], "reference": ref_name,
        "reference_median_s": bench["reference_s"], "ratio": bench["ratio"],
        "n_steps": bench["n_steps"]}])
    status = f"diverged at step {res.divergence_step}" if res.diverged else "stable"
    print(f"scaled MSE {mse:.4g} over {n_steps / f:g} s ({status}); output in {out}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg_a, cfg_b = cfgmod.load(args.config_a), cfgmod.load(args.config_b)
    if cfg_a.system["name"] != cfg_b.system["name"]:
        raise ConfigError("benchmark configs must use the same system")
    seed = args.seed if args.seed is not None else 0
    ta, tb = cfg_a.train_config(seed), cfg_b.train_config(seed)
    if ta.n_collo != tb.n_collo:
        raise ConfigError(f"benchmark needs equal n_collo, got {ta.n_collo} and {tb.n_collo}")
    out = _run_dir(args, args.name or f"bench-{_label(args.config_a)}-vs-{_label(args.config_b)}")
    rows, curves = [], []
    results = []
    for label, rc in ((_label(args.config_a), cfg_a), (_label(args.config_b), cfg_b)):
        tc, box, res = _train(rc, seed, args.epochs)
        results.append((label, rc, tc, res))
    sysm = cfg_a.system_spec()
    signal, x0 = cfg_a.test_signal(), cfg_a.test_x0()
    lat = rollout.benchmark_prediction_time(results[0][3].model, results[1][3].model, x0, signal,
                                            n_steps=args.latency_steps)
    med = [float(np.median(r[3].epoch_ms[1:] or r[3].epoch_ms)) for r in results]
    for i, (label, rc, tc, res) in enumerate(results):
        rows.append({"label": label, "arch": tc.arch, "order": tc.order, "n_collo": tc.n_collo,
                     "n_ic": tc.n_ic, "epochs": len(res.log), "median_epoch_ms": med[i],
                     "final_val_phys": res.summary.get("final_val_phys"),
                     "pred_latency_s": lat["model_s"] if i == 0 else lat["reference_s"],
                     "time_ratio": med[i] / med[0]})
    io.write_csv(out / "benchmark.csv", BENCHMARK_COLUMNS, rows)
    n = max(len(r[3].log) for r in results)
    for e in range(n):
        row = [e + 1]
        for r in results:
            lg = r[3].log
            row += [lg[e]["val_phys"] if e < len(lg) else None, r[3].epoch_ms[e] if e < len(lg) else None]
        curves.append(row)
    io.write_csv(out / "benchmark_curves.csv",
                 ("epoch", "a_val_phys", "a_epoch_ms", "b_val_phys", "b_epoch_ms"), curves)
    print(f"median epoch time {rows[0]['label']}: {med[0]:.1f} ms, {rows[1]['label']}: {med[1]:.1f} ms "
          f"(B/A = {med[1] / med[0]:.2f}); output in {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    run_cfg = cfgmod.from_dict({"system": {"name": args.system}, "model": {"f": 100.0}})
    sysm = run_cfg.system_spec()
    spec = _signal_spec(args.signal)
    if spec is None:
        spec = {"kind": "constant"}
    signal = run_cfg.test_signal(spec)
    x0 = np.zeros(sysm.m) if args.x0 is None else np.array([float(v) for v in args.x0.split(",")])
    if x0.shape != (sysm.m,):
        raise ConfigError(f"--x0 needs {sysm.m} comma-separated values")
    if not args.duration > 0 or not args.step > 0:
        raise ConfigError("duration and step must be positive")
    traj = simulate(sysm.rhs, x0, signal, args.duration, args.step)
    out = Path(args.output) if args.output else _run_dir(args, "simulate") / f"{args.system}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_trajectory(out, traj, sysm.state_names, sysm.input_names)
    print(f"wrote {len(traj)} rows to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", default=None,
                        help="output directory (default: $DDPINN_OUT_DIR or ./runs)")
    common.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1)")
    common.add_argument("--name", default=None, help="run directory name")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ddpinn", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train a surrogate")
    t.add_argument("config", help="config file or preset (" + ", ".join(cfgmod.preset_names()) + ")")
    t.add_argument("--epochs", type=int, default=None, help="override the epoch budget")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", parents=[common], help="self-loop evaluation on a test path")
    e.add_argument("checkpoint")
    e.add_argument("--signal", default=None, help="JSON spec, file, or kind (chirp, multisine)")
    e.add_argument("--horizon", type=float, default=None)
    e.add_argument("--reference", default=None, help="checkpoint used as latency reference")
    e.add_argument("--oracle", action="store_true", help="use the RK4 integrator as the model")
    e.add_argument("--latency-steps", type=int, default=1000)
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("benchmark", parents=[common], help="compare training speed of two configs")
    b.add_argument("config_a")
    b.add_argument("config_b")
    b.add_argument("--epochs", type=int, default=20)
    b.add_argument("--latency-steps", type=int, default=1000)
    b.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("simulate", parents=[common], help="RK4 ground-truth trajectory")
    s.add_argument("system", choices=("msd", "chain", "twolink"))
    s.add_argument("--signal", default=None)
    s.add_argument("--duration", type=float, default=1.0)
    s.add_argument("--step", type=float, default=1e-3)
    s.add_argument("--x0", default=None, help="comma-separated initial state")
    s.add_argument("--output", default=None, help="CSV path")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from threadpoolctl import threadpool_limits
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as e:
        print(f"integration failed: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
