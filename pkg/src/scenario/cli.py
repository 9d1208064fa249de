"""
Command line entry point.

    cbdc-sim run --scenario scenarios/happy_path.json --seed 7
    cbdc-sim fuzz --rounds 200 --seed 7 --adversarial
    cbdc-sim corpus
    cbdc-sim serve --scenario scenarios/happy_path.json --instance A

Every command exits 0 iff all non-informational checks passed.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from ..models.scenario import RunReport, ScenarioConfig
from ..utils import get_logger, setup_logging
from ..utils.config import Settings, get_settings
from .engine import run_scenario
from .fuzz import fuzz_transfers
from .loader import ScenarioError, bundled_scenarios, load_scenario
from .report import render_text, summarize, write_report

logger = get_logger(__name__)

DEFAULT_FUZZ_BASE = "happy_path.json"


def _with_flags(config: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    """Command line flags override the scenario file."""
    update = {}
    if getattr(args, "imsc", None):
        update["imsc_mode"] = args.imsc
    if getattr(args, "finality_depth", None) is not None:
        update["finality_depth"] = args.finality_depth
    if getattr(args, "htlc_timeout", None) is not None:
        update["htlc_timeout_seconds"] = args.htlc_timeout
    if not update:
        return config
    return ScenarioConfig.model_validate({**config.model_dump(), **update})


def _emit(report: RunReport, args: argparse.Namespace) -> int:
    print(render_text(report, events=args.verbose))
    if args.report:
        path = write_report(report, args.report)
        print(f"report written to {path}")
    return 0 if report.passed else 1


def cmd_run(args: argparse.Namespace, settings: Settings) -> int:
    config = _with_flags(load_scenario(args.scenario), args)
    return _emit(run_scenario(config, settings, args.seed), args)


def cmd_fuzz(args: argparse.Namespace, settings: Settings) -> int:
    base = Path(args.scenario) if args.scenario else Path(settings.scenario_dir) / DEFAULT_FUZZ_BASE
    config = _with_flags(load_scenario(base), args)
    report = fuzz_transfers(config, args.rounds, args.seed, adversarial=args.adversarial, settings=settings)
    return _emit(report, args)


def cmd_corpus(args: argparse.Namespace, settings: Settings) -> int:
    paths = bundled_scenarios(args.directory or settings.scenario_dir)
    if not paths:
        raise ScenarioError(f"No scenarios in {args.directory or settings.scenario_dir}")
    reports = []
    for path in paths:
        report = run_scenario(load_scenario(path), settings, args.seed)
        reports.append(report)
        if args.report:
            write_report(report, Path(args.report) / f"{path.stem}.json")
    print(summarize(reports))
    return 0 if all(report.passed for report in reports) else 1


def cmd_serve(args: argparse.Namespace, settings: Settings) -> int:
    import uvicorn

    from ..api.main import create_app
    from .world import World

    config = _with_flags(load_scenario(args.scenario), args)
    world = World(config, settings, args.seed if args.seed is not None else settings.seed).build()
    name = args.instance or config.instances[0].name
    if name not in world.nodes:
        raise ScenarioError(f"{config.name} has no instance {name}")
    app = create_app(world.nodes[name], world.settings)
    uvicorn.run(app, host=args.host or settings.host, port=args.port or settings.port,
                log_level=settings.log_level.lower())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbdc-sim", description="Interoperable CBDC ecosystem simulator")
    parser.add_argument("--verbose", "-v", action="store_true", help="Include the event trace in text output")
    sub = parser.add_subparsers(dest="cmd", required=True)

    def overrides(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=None, help="Seed for keys, chain ordering and fuzzing")
        p.add_argument("--imsc", choices=("decentralized", "centralized"), default=None,
                       help="Registry flavour (overrides the scenario)")
        p.add_argument("--finality-depth", type=int, default=None)
        p.add_argument("--htlc-timeout", type=int, default=None, help="HTLC timeout in virtual seconds")

    r = sub.add_parser("run", help="Run one scenario file")
    r.add_argument("--scenario", required=True)
    overrides(r)
    r.add_argument("--report", default="", help="Write the report here (.json, or .txt for text)")
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("fuzz", help="Random concurrent transfers over a base scenario")
    f.add_argument("--rounds", type=int, default=100)
    f.add_argument("--scenario", default="", help=f"Base scenario (default: {DEFAULT_FUZZ_BASE} in the corpus)")
    f.add_argument("--adversarial", action="store_true", help="Add stalls, stops, leaks and aborts")
    overrides(f)
    f.add_argument("--report", default="")
    f.set_defaults(func=cmd_fuzz)

    c = sub.add_parser("corpus", help="Run every bundled scenario")
    c.add_argument("--directory", default="")
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--report", default="", help="Directory for per-scenario JSON reports")
    c.set_defaults(func=cmd_corpus)

    s = sub.add_parser("serve", help="Build a scenario world and serve one node over HTTP")
    s.add_argument("--scenario", required=True)
    s.add_argument("--instance", default="")
    s.add_argument("--host", default="")
    s.add_argument("--port", type=int, default=0)
    overrides(s)
    s.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()
    settings = get_settings()
    try:
        return args.func(args, settings)
    except ScenarioError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
