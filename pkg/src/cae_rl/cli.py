"""Command-line entry point: ``cae-rl {train,eval,verify,ablate,params}``.

Exit codes: 0 success, 1 invalid input or configuration, 2 verification failure.
"""
from __future__ import annotations

import argparse
import sys

from .errors import (
    ConfigurationError,
    DimensionError,
    ImpossibleEvidenceError,
    OracleSizeError,
    ValidationError,
)
from .harness import ablate, evaluate, load_run_config, params_table, train, verify

EXIT_OK, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2
_INPUT_ERRORS = (ConfigurationError, DimensionError, ValidationError, OracleSizeError,
                 ImpossibleEvidenceError, FileNotFoundError)


def _lens(text: str) -> list[int]:
    try:
        lens = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not lens:
        raise argparse.ArgumentTypeError("need at least one history length")
    return lens


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cae-rl", description="History-encoding TD3 agents and tabular window-model checks.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run one seeded training job")
    t.add_argument("--config", required=True, help="TOML file with [run] and [agent] tables")
    t.add_argument("--seed", type=int, help="override run seed")
    t.add_argument("--env", help="po-integrator or po-pendulum")
    t.add_argument("--variant", help="cae, cae-fo, fwtd3, td3, v1, v2 or v3")
    t.add_argument("--history-len", type=int, dest="history_len", help="past steps N in the window")
    t.add_argument("--steps", type=int, dest="total_steps", help="total environment steps")
    t.add_argument("--warmup", type=int, dest="warmup_steps", help="random-action steps before updates")
    t.add_argument("--out", help="output directory")
    t.add_argument("--quiet", action="store_true", help="no per-eval progress lines")

    e = sub.add_parser("eval", help="deterministic rollouts of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--env", help="defaults to the training environment")
    e.add_argument("--episodes", type=int, default=5)
    e.add_argument("--seed", type=int, default=0)

    v = sub.add_parser("verify", help="check the window model against path enumeration")
    v.add_argument("--pomdp", required=True, help="TOML file with P, R, O tables")
    v.add_argument("--n", type=int, required=True, dest="N", help="history length N")
    v.add_argument("--policy", help="TOML file with a pi table (default uniform)")

    a = sub.add_parser("ablate", help="one run per history length plus a summary")
    a.add_argument("--config", required=True)
    a.add_argument("--lens", type=_lens, required=True, help="comma-separated history lengths")
    a.add_argument("--seed", type=int)
    a.add_argument("--steps", type=int, dest="total_steps")
    a.add_argument("--warmup", type=int, dest="warmup_steps")
    a.add_argument("--out")
    a.add_argument("--quiet", action="store_true")

    c = sub.add_parser("params", help="parameter counts per subnetwork")
    c.add_argument("--config", required=True)
    c.add_argument("--variant")
    c.add_argument("--history-len", type=int, dest="history_len")
    return p


def _overrides(args, *keys) -> dict:
    return {k: getattr(args, k, None) for k in keys}


def _log(args):
    return None if getattr(args, "quiet", False) else (lambda msg: print(msg, flush=True))


def run(args) -> int:
    if args.command == "train":
        cfg = load_run_config(args.config, _overrides(
            args, "seed", "env", "variant", "history_len", "total_steps", "warmup_steps", "out"))
        res = train(cfg, log=_log(args))
        print(f"wrote {res.out / 'metrics.csv'} and {res.out / 'checkpoint.ckpt'}")
        return EXIT_OK

    if args.command == "eval":
        if args.episodes < 1:
            raise ConfigurationError("--episodes must be positive")
        r = evaluate(args.checkpoint, args.env, args.episodes, args.seed)
        print(f"mean {r.mean:.6f}  std {r.std:.6f}")
        print("returns " + " ".join(f"{x:.6f}" for x in r.returns))
        return EXIT_OK

    if args.command == "verify":
        report = verify(args.pomdp, args.N, args.policy)
        for line in report.lines():
            print(line)
        return EXIT_OK if report.ok else EXIT_VERIFY

    if args.command == "ablate":
        cfg = load_run_config(args.config, _overrides(args, "seed", "total_steps", "warmup_steps", "out"))
        res = ablate(cfg, args.lens, log=_log(args))
        print("history_len,final_eval_mean,final_eval_std")
        for row in res.summary:
            print(f"{row['history_len']},{row['final_eval_mean']:.6f},{row['final_eval_std']:.6f}")
        return EXIT_OK

    if args.command == "params":
        cfg = load_run_config(args.config, _overrides(args, "variant", "history_len"))
        rows = params_table(cfg)
        width = max(len(name) for name, _ in rows)
        for name, n in rows:
            print(f"{name:<{width}}  {n:>9d}")
        return EXIT_OK
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
