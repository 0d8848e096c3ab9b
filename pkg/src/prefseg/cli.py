"""Command line entry points.

    prefseg gen-world --config world.json --out data/ --n 50
    prefseg run --manifest data/manifest.json --config run.json --mode sim --out out/
    prefseg eval --round out/round_003
    prefseg export-report --run out/ --out report.csv
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import threading
from pathlib import Path

from .core import load_manifest
from .orchestrator import RunConfig, report_from_round_dir, run, write_report_csv
from .service import FeedbackBridge, serve
from .world import SyntheticWorldConfig, generate_world


def _cmd_gen_world(args) -> int:
    config = SyntheticWorldConfig.from_json(args.config)
    manifest = generate_world(config, args.n, args.out)
    print(f"wrote {len(manifest.records)} records under {args.out}")
    return 0


def _cmd_run(args) -> int:
    manifest = load_manifest(args.manifest)
    config = RunConfig.from_json(args.config)
    overrides = {}
    if args.mode:
        overrides["oracle_mode"] = {"sim": "simulated", "human": "human"}[args.mode]
    if args.out:
        overrides["output_dir"] = str(args.out)
    if overrides:
        config = dataclasses.replace(config, **overrides)
    if config.oracle_mode == "human":
        bridge = FeedbackBridge(run_id=Path(config.output_dir).name)
        server = serve(bridge, bind=args.bind, ui_dir=args.ui_dir)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        print(f"feedback service on http://{args.bind}  (session {bridge.session_id})")
        try:
            result = run(manifest, config, bridge=bridge, resume=args.resume)
        finally:
            bridge.finish()
            server.shutdown()
    else:
        result = run(manifest, config, resume=args.resume)
    last = result.reports[-1]
    dice = last["mean_dice"]
    print(f"completed {len(result.reports)} rounds; "
          f"final mean dice: {dice if dice is not None else 'n/a (human mode)'}")
    print(f"artifacts in {result.out_dir}")
    return 0


def _cmd_eval(args) -> int:
    report = report_from_round_dir(args.round)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_export_report(args) -> int:
    run_dir = Path(args.run)
    rounds = sorted(run_dir.glob("round_*"))
    if not rounds:
        print(f"no round directories under {run_dir}", file=sys.stderr)
        return 2
    reports = [report_from_round_dir(r) for r in rounds]
    write_report_csv(Path(args.out), reports)
    print(f"wrote {args.out} ({len(reports)} rounds)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prefseg",
                                     description="better/worse feedback segmentation engine")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-world", help="generate a synthetic dataset")
    p.add_argument("--config", required=True, help="world config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, required=True, help="number of records")
    p.set_defaults(fn=_cmd_gen_world)

    p = sub.add_parser("run", help="execute a multi-round annotation run")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--mode", choices=["sim", "human"], help="override oracle mode")
    p.add_argument("--out", help="override output directory")
    p.add_argument("--bind", default="127.0.0.1:8765", help="service address (human mode)")
    p.add_argument("--ui-dir", help="static UI directory to serve (human mode)")
    p.add_argument("--resume", action="store_true", help="continue from last completed round")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("eval", help="print the report for one round directory")
    p.add_argument("--round", required=True)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("export-report", help="export per-round CSV from a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(fn=_cmd_export_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
