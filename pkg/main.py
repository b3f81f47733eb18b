#!/usr/bin/env python3
"""
CSG Pipeline - Main Entry Point

Synthetic ultrasound generation with context-semantic guidance, at phantom
scale. Each subcommand runs one pipeline stage inside a run directory keyed
by the configuration hash:

    dataset -> pair -> train -> train-maskgen -> genmask -> generate
            -> evaluate -> segval

`all` runs them in that order; `edit` applies a mask-edit program.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import torch

from data.config_manager import ConfigError, PipelineConfig
from data.logger import setup_logging
from data.session import (ConfigHashMismatchError, MissingArtifactError, RunLockedError,
                          RunSession, default_runs_root)
from stages.base_stage import StageContext
from stages.registry import ALL, StageRegistry

logger = logging.getLogger(__name__)

EXIT_CODES = (
    (ConfigError, 2),
    (MissingArtifactError, 3),
    (ConfigHashMismatchError, 4),
    (RunLockedError, 5),
)


def build_parser(registry: StageRegistry) -> argparse.ArgumentParser:
    """Argument parser with one subcommand per stage plus 'all'."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=Path, help="YAML or JSON config file")
    common.add_argument('--set', dest='overrides', action='append', default=[],
                        metavar='KEY=VALUE', help="Override a config value (repeatable)")
    common.add_argument('--dry-run', action='store_true',
                        help="Print the execution plan without writing anything")
    common.add_argument('--log-level', default='INFO',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    common.add_argument('--runs-root', type=Path, default=None,
                        help="Run-directory root (default: $CSG_RUNS_ROOT or ./runs)")

    parser = argparse.ArgumentParser(prog='csg', description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest='command', required=True, metavar='COMMAND')

    for stage_id, name, description in registry.get_stage_list():
        cmd = sub.add_parser(stage_id, parents=[common], help=description)
        if stage_id == 'edit':
            program = cmd.add_mutually_exclusive_group(required=True)
            program.add_argument('--program', help="Edit program, e.g. 'scale tendon x 1.2'")
            program.add_argument('--program-file', type=Path, help="File holding the edit program")
            cmd.add_argument('--mask', type=Path, required=True, help="Label mask PNG/PGM")
            cmd.add_argument('--image', type=Path, help="Image paired with the mask")
            cmd.add_argument('--source', type=Path,
                             help="Image whose texture is cloned into edited objects")
            cmd.add_argument('--tol', type=float, default=None,
                             help="Poisson solver tolerance (default: edit.tol, 1e-8)")

    sub.add_parser(ALL, parents=[common], help="Run the whole pipeline in order")
    return parser


def _options(args: argparse.Namespace) -> Dict:
    keys = ('program', 'program_file', 'mask', 'image', 'source', 'tol')
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _progress(percent: float, message: str):
    logger.debug("%5.1f%% %s", percent, message)


def _exit_code(error: Exception) -> int:
    for kind, code in EXIT_CODES:
        if isinstance(error, kind):
            return code
    return 1


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    registry = StageRegistry()
    args = build_parser(registry).parse_args(argv)
    ctx: Optional[StageContext] = None

    try:
        setup_logging(args.log_level)
        config = PipelineConfig(args.config, args.overrides)
        config_hash = config.config_hash()
        session = RunSession(config_hash, config_hash,
                             base_dir=args.runs_root or default_runs_root())
        ctx = StageContext(config, session, dry_run=args.dry_run, options=_options(args))

        if args.dry_run:
            print(json.dumps(registry.plan(args.command, ctx), indent=2))
            return 0

        torch.use_deterministic_algorithms(True, warn_only=True)
        session.create(config.to_dict())
        setup_logging(args.log_level, session.logs_dir / 'run.jsonl')
        logger.info("run %s: %s", session.run_id, args.command,
                    extra={'run_id': session.run_id, 'command': args.command})

        with session:
            records = registry.run_stage(args.command, ctx, _progress)

        print(json.dumps({
            'run_dir': str(session.run_dir),
            'config_hash': config_hash,
            'stages': [{'stage': r['stage'], 'duration_s': r['duration_s'],
                        'summary': r['summary']} for r in records],
        }, indent=2, default=str))
        return 0

    except Exception as e:
        logger.debug("command failed", exc_info=True)
        stage = ctx.current_stage if ctx is not None else None
        sys.stderr.write(json.dumps({'error': type(e).__name__, 'message': str(e),
                                     'stage': stage or args.command}) + "\n")
        return _exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
