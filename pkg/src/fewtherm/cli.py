from __future__ import annotations

import argparse
import json
import logging
import sys

from .cli_helpers import add_flags_from_model
from .cli_helpers import run_config_from_args
from .config import RunConfig
from .config import preset_names
from .errors import EXIT_NUMERICAL
from .errors import EXIT_OK
from .errors import EXIT_VERIFICATION
from .errors import FewthermError
from .io import dumps_json
from .runtime import export_schema
from .runtime import run_command
from .runtime import schema_for_config

COMMAND_HELP = {
    "simulate": "Integrate an ensemble and write trajectory CSV plus summary JSON.",
    "verify": "Run closure, antiderivative, stationarity, pushforward and histogram checks.",
    "thermo": "Tabulate U, X, S, Z along a parameter sweep with first-law residuals.",
    "sweep": "Run a short ensemble at each sweep point and compare time-averaged H with U.",
}


def _add_run_args(s: argparse.ArgumentParser) -> None:
    s.add_argument("--config", default=None, help="YAML, JSON or TOML run configuration.")
    s.add_argument("--preset", default=None, help=f"Shipped configuration: {', '.join(preset_names())}.")
    s.add_argument("--seed", type=int, default=None, help="Override ensemble.seed.")
    s.add_argument("--out", default=None, help="Override output.directory.")
    s.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    add_flags_from_model(s, RunConfig)


def main(argv=None):
    p = argparse.ArgumentParser(prog="fewtherm", description="Thermodynamic few-particle systems: simulate and verify.")
    sub = p.add_subparsers(dest="cmd", required=True)
    for name, help_text in COMMAND_HELP.items():
        _add_run_args(sub.add_parser(name, help=help_text))

    s = sub.add_parser("schema", help="Emit the JSON Schema and defaults of the run configuration.")
    s.add_argument("--out", default=None, help="Prefix for <out>.schema.json, <out>.json and <out>.yml.")

    args = p.parse_args(argv)

    if args.cmd == "schema":
        if args.out:
            export_schema(args.out)
        else:
            schema, defaults = schema_for_config()
            print(json.dumps({"schema": schema, "defaults": defaults}, indent=2, default=str))
        return EXIT_OK

    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = run_config_from_args(args)
        code, payload = run_command(args.cmd, cfg)
    except FewthermError as e:
        print(json.dumps(e.to_json(), default=str))
        print(f"fewtherm {args.cmd}: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        envelope = {"error": type(e).__name__, "message": str(e), "path": e.filename, "exit_code": EXIT_NUMERICAL}
        print(json.dumps(envelope, default=str))
        print(f"fewtherm {args.cmd}: cannot write {e.filename}: {e.strerror}", file=sys.stderr)
        return EXIT_NUMERICAL

    print(dumps_json(payload))
    if code == EXIT_VERIFICATION:
        failed = [c["name"] for c in payload["checks"] if c["asserted"] and c["passed"] is not True]
        print(f"fewtherm verify: failed checks: {', '.join(failed)}", file=sys.stderr)
    elif code != EXIT_OK:
        print(f"fewtherm {args.cmd}: finished with errors, see the output for details", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
