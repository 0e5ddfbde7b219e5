"""Command line entry points.

Subcommands: train, sweep, evaluate, timing, gradcheck, mmd-test.  Configs
are declarative JSON files; dotted --set overrides and the global --seed /
--out flags adjust them per invocation.  Failures exit nonzero and print a
machine-readable error object to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from .balancing import mmd_squared
from .checks import run_gradcheck
from .data import SyntheticSpec, generate
from .errors import KmbdfError
from .harness import ExperimentConfig, evaluate, run_sweep, timing_probe, train
from .kernels import KernelSpec, median_bandwidth
from .models import forward_batch, load_forecaster


def _load_config(path: str, overrides, seed=None, out=None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    for item in overrides or []:
        key, _, value = item.partition("=")
        if not _:
            raise KmbdfError(f"--set expects key.path=value, got {item!r}")
        node = raw
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = json.loads(value) if _looks_jsonish(value) else value
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["out"] = out
    return ExperimentConfig.from_dict(raw)


def _looks_jsonish(value: str) -> bool:
    try:
        json.loads(value)
    except json.JSONDecodeError:
        return False
    return True


def _cmd_train(args) -> int:
    config = _load_config(args.config, args.set, args.seed, args.out)
    report = train(config)
    print(report.to_json())
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args.config, args.set, args.seed, None)
    values = [json.loads(v) for v in args.values.split(",")]
    rows, _ = run_sweep(config, args.param, values, out_dir=args.out)
    print(json.dumps({"rows": rows}))
    return 0


def _cmd_evaluate(args) -> int:
    from .harness import build_dataset

    config = _load_config(args.config, args.set, args.seed, None)
    model = load_forecaster(args.checkpoint)
    dataset = build_dataset(config)
    windows = dataset["windows"][args.split]
    mse, mae = evaluate(model, windows)
    print(json.dumps({"split": args.split, "mse": mse, "mae": mae}))
    return 0


def _cmd_timing(args) -> int:
    horizons = [int(h) for h in args.horizons.split(",")]
    results = timing_probe(
        horizons,
        n=args.batch,
        channels=args.channels,
        history_len=args.history,
        reps=args.reps,
        seed=args.seed or 0,
    )
    print(json.dumps({"results": results}))
    return 0


def _cmd_gradcheck(args) -> int:
    results = run_gradcheck(trials=args.trials, tol=args.tol, seed=args.seed or 0)
    print(json.dumps({"results": results}))
    return 0 if all(r["pass"] for r in results) else 1


def _cmd_mmd_test(args) -> int:
    seed = args.seed or 0
    spec_a = SyntheticSpec(kind="ar", coeffs=(args.phi,), length=args.samples, channels=1, seed=seed)
    spec_b = SyntheticSpec(kind="ar", coeffs=(args.phi_b,), length=args.samples, channels=1, seed=seed + 1)
    a = generate(spec_a)
    b = generate(spec_b)
    width = args.window
    sample_p = [a[i : i + width] for i in range(0, len(a) - width, width)]
    sample_q = [b[i : i + width] for i in range(0, len(b) - width, width)]
    kernel = KernelSpec(family="exponential", sigma=median_bandwidth(sample_p))
    result = mmd_squared(kernel, sample_p, sample_q)
    print(json.dumps({"mmd_squared": result.value, "biased": result.biased}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kmbdf")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out", default=None, help="override output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY.PATH=VALUE")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sweep", help="grid sweep over one balance parameter")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True, choices=["alpha", "top_k", "margin_c"])
    p.add_argument("--values", required=True, help="comma-separated grid values")
    p.add_argument("--set", action="append", metavar="KEY.PATH=VALUE")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on one split")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--set", action="append", metavar="KEY.PATH=VALUE")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("timing", help="objective forward/backward timing probe")
    p.add_argument("--horizons", default="32,96,192,336,720")
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--channels", type=int, default=21)
    p.add_argument("--history", type=int, default=96)
    p.add_argument("--reps", type=int, default=100)
    p.set_defaults(func=_cmd_timing)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--tol", type=float, default=1e-5)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("mmd-test", help="two-sample MMD on synthetic AR data")
    p.add_argument("--phi", type=float, default=0.8)
    p.add_argument("--phi-b", type=float, default=0.8)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--window", type=int, default=16)
    p.set_defaults(func=_cmd_mmd_test)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KmbdfError as exc:
        json.dump(
            {"error": type(exc).__name__, "message": str(exc)},
            sys.stderr,
        )
        sys.stderr.write("\n")
        return 2
    except OSError as exc:
        json.dump({"error": "OSError", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
