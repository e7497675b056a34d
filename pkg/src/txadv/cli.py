"""``txadv`` command line: run, validate and list presets.

Exit codes: 0 success, 1 runtime failure, 2 invalid config or usage.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import config as config_mod
from .errors import ConfigError, TxAdvError
from .presets import ALIASES, PRESETS, resolve

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"txadv: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="txadv", description="Adversarial robustness experiments for transaction classifiers.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config", help="path to a JSON config")
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.add_argument("--seed", type=int, help="global seed (overrides seed)")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    v.add_argument("--seed", type=int)
    s = sub.add_parser("presets", help="list presets, or print one as a config")
    s.add_argument("name", nargs="?")
    return p


def _summary(cfg: config_mod.ExperimentConfig) -> str:
    src = cfg.dataset.path or f"synthetic({cfg.dataset.synthetic['n_rows']} rows)"
    return (
        f"ok: {cfg.dataset.schema.value} data from {src}; "
        f"{len(cfg.models)} model(s), {len(cfg.attacks)} attack(s), "
        f"defense={'yes' if cfg.defense else 'no'}, scope={cfg.scope}"
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            if args.name is None:
                for name in sorted(n for n in PRESETS if n not in ALIASES):
                    aliases = sorted(a for a, t in ALIASES.items() if t == name)
                    desc = resolve(name).get("description", "")
                    extra = f" (alias: {', '.join(aliases)})" if aliases else ""
                    print(f"{name}{extra}: {desc}")
                return EXIT_OK
            if args.name not in PRESETS:
                raise ConfigError(f"unknown preset {args.name!r}")
            print(json.dumps(resolve(args.name), indent=2, sort_keys=True))
            return EXIT_OK
        cfg = config_mod.load(args.config, seed=args.seed)
        if args.command == "validate":
            print(_summary(cfg))
            return EXIT_OK
        from .runner import run

        result = run(cfg, args.out)
        print(f"wrote {len(result.manifest['files']) + 1} files to {result.out_dir}")
        print(f"manifest sha256 {result.manifest_digest}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"txadv: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TxAdvError, OSError, ValueError) as exc:
        print(f"txadv: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
