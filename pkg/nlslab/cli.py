# nlslab/cli.py
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from nlslab import __version__
from nlslab.errors import ConfigError, NlsLabError
from nlslab.models import ExperimentConfig, GridParams
from nlslab.service import ExperimentService

logger = logging.getLogger("nlslab.cli")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlslab", description="Mass-critical NLS laboratory")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run a scenario from a JSON config")
    run.add_argument("--config", required=True, help="path to an ExperimentConfig JSON document")
    run.add_argument("--out", help="output directory (overrides the config)")

    ground = commands.add_parser("ground-state", help="compute and certify Q")
    ground.add_argument("--d", type=int, default=4)
    ground.add_argument("--M", type=int, default=512)
    ground.add_argument("--rmax", type=float, default=30.0)
    ground.add_argument("--out", help="output directory")

    verify = commands.add_parser("verify-ops", help="run the operator probes")
    verify.add_argument("--grid", default="d=4,M=512,rmax=30", help="grid spec such as d=4,M=512,rmax=30")
    verify.add_argument("--out", help="output directory")

    serve = commands.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _config(args: argparse.Namespace) -> ExperimentConfig:
    if args.command == "run":
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"Config file {path} not found")
        data = json.loads(path.read_text())
    elif args.command == "ground-state":
        data = {"scenario": "ground-state", "grid": {"d": args.d, "M": args.M, "rmax": args.rmax}}
    else:
        try:
            grid = GridParams.parse_spec(args.grid)
        except ValueError as exc:
            raise ConfigError(f"Invalid grid spec {args.grid!r}: {exc}")
        data = {"scenario": "operator-suite", "grid": grid.model_dump()}
    if args.out:
        data["output_dir"] = args.out
    return ExperimentService.parse_config(data)


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        uvicorn.run("nlslab.main:app", host=args.host, port=args.port)
        return 0

    try:
        manifest = ExperimentService().run(_config(args))
    except NlsLabError as exc:
        logger.error(f"{exc.title}: {exc.message}")
        print(json.dumps(exc.detail, indent=2, default=str), file=sys.stderr)
        return 1
    print(manifest.model_dump_json(indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
