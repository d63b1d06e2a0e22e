"""Command line entry point.

    cavity-hubbard sweep --config fig4-desk --out results/fig4 --workers 1

``--config`` takes a JSON file or the name of a shipped preset.  The output
directory and worker count may also come from ``CAVITY_HUBBARD_OUT`` and
``CAVITY_HUBBARD_WORKERS``; explicit flags win over the environment, which
wins over the config file.

Exit status: 0 when every point succeeded, 2 when some points failed,
1 on configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import MODES, ConfigError, list_presets, load_config
from .io import OutputError, write_results, write_scaling
from .sweep import default_k_grid, run_scaling, run_sweep

ENV_OUT = "CAVITY_HUBBARD_OUT"
ENV_WORKERS = "CAVITY_HUBBARD_WORKERS"

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavity-hubbard", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--list-presets", action="store_true", help="print shipped preset names and exit")
    sub = parser.add_subparsers(dest="mode", metavar="MODE")
    for mode in MODES:
        p = sub.add_parser(mode, help=f"execute a config in {mode} mode")
        p.add_argument("--config", required=True, help="JSON config path or preset name")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--seed", type=int, help="random seed")
    return parser


def _env_overrides() -> dict:
    kw = {}
    if os.environ.get(ENV_OUT):
        kw["out_dir"] = os.environ[ENV_OUT]
    if os.environ.get(ENV_WORKERS):
        try:
            kw["workers"] = int(os.environ[ENV_WORKERS])
        except ValueError:
            raise ConfigError(f"workers: {ENV_WORKERS}={os.environ[ENV_WORKERS]!r} is not an integer") from None
    return kw


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    if args.list_presets:
        print("\n".join(list_presets()))
        return EXIT_OK
    if args.mode is None:
        parser.print_usage(sys.stderr)
        return EXIT_ERROR

    try:
        overrides = _env_overrides()
        flags = {"out_dir": args.out, "workers": args.workers, "seed": args.seed}
        overrides.update({k: v for k, v in flags.items() if v is not None})
        cfg = load_config(args.config, **overrides)
        if cfg.mode != args.mode:
            raise ConfigError(f"mode: config is a {cfg.mode!r} run, not {args.mode!r}")

        if cfg.mode == "scaling":
            result = run_scaling(cfg)
            paths = write_scaling(result, cfg.out_dir, cfg)
            failed = sum(r["status"] != "ok" for r in result["per_L"])
            total = len(result["per_L"])
            if result["fit"] is not None:
                print(f"fit U_c(L) = {result['fit']['a']:.6g} + {result['fit']['b']:.6g}/L + {result['fit']['c']:.6g}/L^2")
        else:
            results = run_sweep(cfg)
            paths = write_results(results, cfg.out_dir, cfg, k_grid=default_k_grid(cfg))
            failed = sum(not r.ok for r in results)
            total = len(results)
    except (ConfigError, FileNotFoundError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except (OutputError, OSError) as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_ERROR

    print(f"{total - failed}/{total} points ok; wrote {paths['csv']} and {paths['summary']}")
    return EXIT_PARTIAL if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
