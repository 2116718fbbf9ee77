"""Command line entry point.

    geoloceval evaluate --truth truth.json --run sysA.json --run sysB.json \
        --provider offline --gazetteer places.csv --cache geo.cache \
        --out-dir results/

Exit codes: 0 success, 2 configuration error, 3 input validation error,
4 geocoding failure, 5 I/O error.
"""
from __future__ import annotations

import argparse
import sys

from .errors import EXIT_IO, ConfigError, GeolocEvalError
from .geo import Granularity
from .metrics import DEFAULT_THRESHOLD_KM
from .report import DEFAULT_CLIP_KM, EvalConfig, run_evaluation, write_outputs
from .stats import DEFAULT_ALPHA

_ENV_HELP = """\
provider credentials are read from the environment, never the command line:
  GEOLOCEVAL_NOMINATIM_EMAIL   contact email sent with Nominatim requests
  GEOLOCEVAL_GOOGLE_API_KEY    API key for the googlev3 provider
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geoloceval",
        description="Standardized evaluation of geolocation system predictions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    ev = sub.add_parser(
        "evaluate",
        help="resolve, score, test and correlate a set of prediction files",
        epilog=_ENV_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    ev.add_argument("--truth", required=True, help="ground-truth JSON file")
    ev.add_argument(
        "--run", action="append", required=True, metavar="FILE",
        help="prediction file; repeat once per system",
    )
    ev.add_argument(
        "--system-name", action="append", metavar="NAME",
        help="override the system name for the matching --run (default: file stem)",
    )
    ev.add_argument(
        "--provider", choices=["offline", "nominatim", "googlev3"], default="offline",
    )
    ev.add_argument("--gazetteer", help="CSV gazetteer for the offline provider")
    ev.add_argument("--cache", help="persistent reverse-geocoding cache file")
    ev.add_argument(
        "--rebuild-cache", action="store_true",
        help="discard the existing cache file instead of failing on corruption",
    )
    ev.add_argument("--endpoint", help="override the provider's HTTP endpoint")
    ev.add_argument(
        "--requests-per-day", type=int, metavar="N",
        help="provider request budget for this invocation",
    )
    ev.add_argument(
        "--granularity", default="city,county,state,country", metavar="LIST",
        help="comma-separated subset of city,county,state,country",
    )
    ev.add_argument("--threshold-km", type=float, default=DEFAULT_THRESHOLD_KM)
    ev.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--missing", choices=["error", "wrong"], default="error")
    ev.add_argument(
        "--baseline", action="append", choices=["mc", "ss"], default=[],
        help="add a trivial baseline as a pseudo-system; repeatable",
    )
    ev.add_argument("--workers", type=int, default=1)
    ev.add_argument("--clip-km", type=float, default=DEFAULT_CLIP_KM)
    ev.add_argument("--out-dir", required=True)
    return parser


def config_from_args(args: argparse.Namespace) -> EvalConfig:
    try:
        granularities = tuple(
            Granularity.parse(part) for part in args.granularity.split(",") if part.strip()
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return EvalConfig(
        truth_path=args.truth,
        run_paths=list(args.run),
        system_names=args.system_name,
        out_dir=args.out_dir,
        provider=args.provider,
        endpoint=args.endpoint,
        requests_per_day=args.requests_per_day,
        cache_path=args.cache,
        gazetteer_path=args.gazetteer,
        granularities=granularities,
        threshold_km=args.threshold_km,
        alpha=args.alpha,
        seed=args.seed,
        missing_policy=args.missing,
        baselines=tuple(dict.fromkeys(args.baseline)),
        workers=args.workers,
        clip_km=args.clip_km,
        rebuild_cache=args.rebuild_cache,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "evaluate":
            config = config_from_args(args)
            report = run_evaluation(config)
            out_dir = write_outputs(report)
            print(f"wrote {out_dir}")
    except GeolocEvalError as exc:
        print(f"geoloceval: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"geoloceval: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
