"""Batch command-line front end.

The command and all model configuration live in one JSON config file; the
CLI only chooses the config, an optional seed override, the output
directory, and a thread cap.  Exit codes: 0 success, 1 validation error,
2 numerical failure.  Errors are reported as a single JSON line on stderr.

Usage:
    funcgp --config run.json [--seed 7] [--output-dir out/] [--threads 2]
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="funcgp",
        description="Gaussian process regression for functional data: "
                    "simulate, fit, predict, export-plot-data",
    )
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config's top-level seed")
    parser.add_argument("--output-dir", default=None,
                        help="directory for output artifacts (default: config directory)")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap the BLAS/OpenMP thread count")
    return parser.parse_args(argv)


def _fail(kind, message, code):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message)}) + "\n")
    return code


def main(argv=None) -> int:
    args = _parse_args(argv if argv is not None else sys.argv[1:])
    if args.threads is not None:
        # must happen before numpy is imported anywhere in this process
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(max(1, args.threads))
    from . import _runner
    from .errors import NumericalError, ValidationError

    try:
        summary = _runner.run(args.config, args.seed, args.output_dir)
    except ValidationError as exc:
        return _fail("validation", exc, 1)
    except NumericalError as exc:
        return _fail("numerical", exc, 2)
    except Exception as exc:  # pragma: no cover - defensive
        return _fail("internal", f"{type(exc).__name__}: {exc}", 2)
    sys.stdout.write(json.dumps({"status": "ok", **(summary or {})}) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
