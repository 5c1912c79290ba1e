"""Command-line surface.

Verbs: audit, harden, ablate, report, train, explain.  All take a JSON
config file (``--config``); individual flags override file values.  The
``EXPLEAK_OUT`` environment variable sets the default output root.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import pipeline
from .errors import ConfigError, ExpleakError
from .reporting import OUTPUT_ROOT_ENV, RunConfig, verify_replay


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", help="output directory (default: $%s/<name>-<command>)" % OUTPUT_ROOT_ENV)
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--name", help="override the run name")
    parser.add_argument("--epsilon", type=float, help="override the attack FPR budget")
    parser.add_argument("--k-seeds", type=int, help="override the number of attack seeds")
    parser.add_argument(
        "--replay", metavar="MANIFEST", help="re-run from a manifest (ignores --config)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expleak",
        description="Audit and harden model explanations against membership leakage.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_audit = sub.add_parser("audit", help="per-explainer leakage profile")
    _add_common(p_audit)

    p_harden = sub.add_parser("harden", help="hardening search with Pareto front")
    _add_common(p_harden)
    p_harden.add_argument("--explainer", help="explainer kind to harden")
    p_harden.add_argument("--trials", type=int, help="number of search trials")

    p_ablate = sub.add_parser("ablate", help="ablation studies")
    _add_common(p_ablate)
    p_ablate.add_argument(
        "which",
        choices=["ordering", "disjoint", "cross_architecture", "generalization_gap"],
    )

    p_report = sub.add_parser("report", help="consolidate run directories")
    p_report.add_argument("run_dirs", nargs="+", help="run directories to aggregate")
    p_report.add_argument("--out", required=True, help="report output directory")

    p_train = sub.add_parser("train", help="train and persist the target/shadow pair")
    _add_common(p_train)

    p_explain = sub.add_parser("explain", help="dump one sample's attribution")
    _add_common(p_explain)
    p_explain.add_argument("--sample", type=int, default=0, help="target-train sample index")
    p_explain.add_argument("--explainer", help="explainer kind")

    p_verify = sub.add_parser("verify-replay", help="check a replayed directory against a manifest")
    p_verify.add_argument("manifest")
    p_verify.add_argument("replay_dir")

    return parser


def _load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    payload = config.to_dict()
    if getattr(args, "seed", None) is not None:
        payload["master_seed"] = args.seed
    if getattr(args, "name", None) is not None:
        payload["name"] = args.name
    if getattr(args, "epsilon", None) is not None:
        payload["attack"] = {**payload["attack"], "epsilon": args.epsilon}
    if getattr(args, "k_seeds", None) is not None:
        payload["attack"] = {**payload["attack"], "k_seeds": args.k_seeds}
    if getattr(args, "explainer", None) is not None and args.command == "harden":
        payload["hardening"] = {**payload["hardening"], "explainer": args.explainer}
    if getattr(args, "trials", None) is not None:
        payload["hardening"] = {**payload["hardening"], "trials": args.trials}
    return RunConfig.from_dict(payload)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify-replay":
            result = verify_replay(args.manifest, args.replay_dir)
            print(json.dumps(result, indent=2, sort_keys=True))
            return 0 if result["identical"] else 3
        if args.command == "report":
            out = pipeline.cmd_report(args.run_dirs, args.out)
            print(out)
            return 0
        if getattr(args, "replay", None):
            out = pipeline.replay(args.replay, args.out)
            print(out)
            return 0
        config = _load_config(args)
        if args.command == "audit":
            out = pipeline.cmd_audit(config, args.out)
        elif args.command == "harden":
            out = pipeline.cmd_harden(config, args.out)
        elif args.command == "ablate":
            out = pipeline.cmd_ablate(config, args.which, args.out)
        elif args.command == "train":
            out = pipeline.cmd_train(config, args.out)
        elif args.command == "explain":
            out = pipeline.cmd_explain(
                config, sample_index=args.sample, explainer_kind=args.explainer, out_dir=args.out
            )
        else:  # pragma: no cover
            parser.error(f"unknown command {args.command}")
        print(out)
        return 0
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except ExpleakError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except FloatingPointError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
