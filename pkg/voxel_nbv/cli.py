"""
Command-line front end.

    voxel-nbv suite  --out meshes/
    voxel-nbv prep   meshes/ --out caches/
    voxel-nbv run    --scenes caches/ --planner greedy --planner random --out results/
    voxel-nbv export results/traces/cube_c0_greedy_s0.jsonl --out export/ --format ply,csv
    voxel-nbv theory --k 64 4096 8000 --out theory/
    voxel-nbv serve  --scenes caches/ --bind 127.0.0.1:7654

Exit codes: 0 success, 1 partial failure, 2 invalid configuration.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from . import __version__
from .bench import cmd_export, cmd_prep, cmd_run, cmd_suite, cmd_theory, load_scene_set
from .exceptions import ConfigError, VoxelNBVError
from .models import BenchConfigFile, BenchSpec
from .protocol import EnvServer, serve_stdio, serve_tcp
from .utils import parse_bind_address, parse_centers

logger = logging.getLogger(__name__)

BIND_ENV_VAR = "VOXEL_NBV_BIND"
DEFAULT_BIND = "127.0.0.1:7654"

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


def load_config(path: Optional[str]) -> BenchConfigFile:
    """
    Raises:
        ConfigError: If the file cannot be read or parsed
        pydantic.ValidationError: If a value is invalid
    """
    if path is None:
        return BenchConfigFile()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    return BenchConfigFile.model_validate(data)


def _split(values: Optional[Sequence[str]]) -> List[str]:
    """Flatten repeated and comma separated option values."""
    out: List[str] = []
    for value in values or ():
        out.extend(v.strip() for v in value.split(",") if v.strip())
    return out


def build_spec(args: argparse.Namespace, config: BenchConfigFile) -> BenchSpec:
    """Config-file bench values with command-line flags taking precedence."""
    data: Dict[str, Any] = dict(config.bench)
    if args.scenes:
        data["scenes"] = list(args.scenes)
    if args.planner:
        data["planners"] = _split(args.planner)
    if args.centers:
        data["object_centers"] = parse_centers(args.centers)
    if args.budget is not None:
        data["views_budget"] = args.budget
    if args.seed:
        data["seeds"] = [int(s) for s in _split(args.seed)]
    if args.out:
        data["output_dir"] = args.out
    if args.workers is not None:
        data["workers"] = args.workers
    if args.debug_candidates:
        data["debug_candidates"] = True
    data["env"] = config.env
    data["scene"] = config.scene
    return BenchSpec.model_validate(data)


def _prep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    centers = parse_centers(args.centers) if args.centers else None
    result = cmd_prep(args.input, args.out, config.scene, config.env, centers)
    if not result.cache_files:
        logger.error("No cache could be prepared")
        return EXIT_PARTIAL
    return result.exit_code


def _run(args: argparse.Namespace) -> int:
    spec = build_spec(args, load_config(args.config))
    return cmd_run(spec).exit_code


def _export(args: argparse.Namespace) -> int:
    formats = _split(args.format) or ["ply", "csv"]
    for path in cmd_export(args.trace, args.out, formats):
        print(path)
    return EXIT_OK


def _theory(args: argparse.Namespace) -> int:
    for row in cmd_theory(args.k, args.trials, args.seed, args.out):
        closed = "-" if row.closed_form is None else f"{row.closed_form:.4f}"
        print(
            f"k={row.k:>6}  k^(-1/6)={closed}  stop-all-cubes={row.empirical_mean:.4f}"
            f"  k-ln-k-budget={row.fixed_budget_mean:.4f}"
        )
    return EXIT_OK


def _serve(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    server = EnvServer(load_scene_set(args.scenes), config.env, args.default_scene)
    if args.stdio:
        serve_stdio(server)
        return EXIT_OK
    bind = args.bind or os.environ.get(BIND_ENV_VAR, DEFAULT_BIND)
    try:
        host, port = parse_bind_address(bind)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    serve_tcp(server, host, port)
    return EXIT_OK


def _suite(args: argparse.Namespace) -> int:
    for path in cmd_suite(args.out):
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voxel-nbv", description="Voxel next-best-view benchmark")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    prep = sub.add_parser("prep", help="Build ground-truth caches from meshes")
    prep.add_argument("input", help="Mesh file or directory of .obj/.ply meshes")
    prep.add_argument("--out", required=True, help="Cache output directory")
    prep.add_argument("--centers", help="Object center indices, e.g. 0,1,2")
    prep.add_argument("--config", help="JSON config file")
    prep.set_defaults(handler=_prep)

    run = sub.add_parser("run", help="Run planners over scenes")
    run.add_argument("--scenes", nargs="+", help="Cache files/directories or meshes")
    run.add_argument("--planner", action="append", help="random, frontier, greedy or extern:<url>")
    run.add_argument("--centers", help="Object center indices, e.g. 0,1,2")
    run.add_argument("--budget", type=int, help="Views per episode (default 30)")
    run.add_argument("--seed", action="append", help="Episode seed(s)")
    run.add_argument("--out", help="Result directory")
    run.add_argument("--workers", type=int, help="Parallel episode workers")
    run.add_argument("--debug-candidates", action="store_true", help="Dump greedy candidate scores")
    run.add_argument("--config", help="JSON config file")
    run.set_defaults(handler=_run)

    export = sub.add_parser("export", help="Export artifacts of an episode trace")
    export.add_argument("trace", help="Trace JSONL written by run")
    export.add_argument("--out", required=True, help="Output directory")
    export.add_argument("--format", action="append", help="ply, csv, pgm, pfm (comma separated)")
    export.set_defaults(handler=_export)

    theory = sub.add_parser("theory", help="Coupon-collector coverage experiments")
    theory.add_argument("--k", type=int, nargs="+", default=[64, 4096, 8000], help="Cube counts")
    theory.add_argument("--trials", type=int, default=200)
    theory.add_argument("--seed", type=int, default=0)
    theory.add_argument("--out", required=True, help="Output directory")
    theory.set_defaults(handler=_theory)

    serve = sub.add_parser("serve", help="Serve environments over NDJSON")
    serve.add_argument("--scenes", nargs="+", required=True, help="Cache files or directories")
    serve.add_argument("--bind", help=f"host:port (default ${BIND_ENV_VAR} or {DEFAULT_BIND})")
    serve.add_argument("--stdio", action="store_true", help="Serve stdin/stdout instead of TCP")
    serve.add_argument("--default-scene", help="Scene used when reset names none")
    serve.add_argument("--config", help="JSON config file")
    serve.set_defaults(handler=_serve)

    suite = sub.add_parser("suite", help="Write the bundled benchmark meshes")
    suite.add_argument("--out", required=True, help="Output directory")
    suite.set_defaults(handler=_suite)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except (ConfigError, ValueError) as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except VoxelNBVError as e:
        logger.error(f"{e.error_code}: {e}")
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
