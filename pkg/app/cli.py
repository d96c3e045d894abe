"""
Command-line face of the toolkit.

    run   train one configuration and write progress.csv + checkpoint
    eval  evaluate a saved checkpoint
    serve start the run-management HTTP API
"""
import argparse
import logging
import sys
from typing import Dict, List, Optional

from app.core.config import settings
from app.core.errors import ConfigError, NumericalError, PreconditionError, StructuralError

logger = logging.getLogger("ddpgpp")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="run.py",
        description="DDPG, TD3 and DDPG++ on desk-scale control tasks.",
    )
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="logging level (default: %(default)s)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one configuration")
    run.add_argument("--env", help="environment name: lqr2d or pendulum")
    run.add_argument("--algo", help="algorithm preset: ddpg, td3, ddpgpp or ddpgpp-prop")
    run.add_argument("--seed", type=int, help="root random seed")
    run.add_argument("--steps", type=int, help="total environment steps")
    run.add_argument("--eval-every", type=int, help="environment steps between evaluations")
    run.add_argument("--eval-episodes", type=int, help="episodes per evaluation")
    run.add_argument("--out", help="output directory (relative paths resolve under $OUTPUT_ROOT)")
    run.add_argument("--config", help="flat 'key = value' config file applied before --set and flags")
    run.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override any run or agent field; repeatable",
    )

    ev = sub.add_parser("eval", help="evaluate a checkpoint with the deterministic policy")
    ev.add_argument("--checkpoint", required=True, help="run directory or its checkpoint/ subdirectory")
    ev.add_argument("--episodes", type=int, default=10, help="evaluation episodes (default: %(default)s)")
    ev.add_argument("--seed", type=int, default=0, help="evaluation seed (default: %(default)s)")
    ev.add_argument("--env", help="evaluate on another environment than the one trained on")
    ev.add_argument("--discount", type=float, help="report discounted returns with this factor")

    serve = sub.add_parser("serve", help="start the run-management HTTP API")
    serve.add_argument("--host", default="0.0.0.0", help="bind address (default: %(default)s)")
    serve.add_argument("--port", type=int, default=settings.API_PORT, help="port (default: %(default)s)")
    return parser


def _run_values(args) -> Dict[str, object]:
    from app.services import harness

    values: Dict[str, object] = {}
    if args.config:
        values.update(harness.load_config_file(args.config))
    values.update(harness.parse_overrides(args.overrides))
    flags = {
        "env": args.env,
        "algo": args.algo,
        "seed": args.seed,
        "total_env_steps": args.steps,
        "eval_every": args.eval_every,
        "eval_episodes": args.eval_episodes,
        "out_dir": args.out,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    return values


def cmd_run(args) -> int:
    from app.services import harness

    cfg = harness.build_run_config(_run_values(args))
    logger.info("Effective configuration:\n" + harness.config_echo(cfg))
    records, _ = harness.train(cfg)
    out = harness.output_dir(cfg)
    if records:
        last = records[-1]
        print(f"{last.env_steps} steps: return {last.return_mean:.4f} +- {last.return_std:.4f}")
    print(f"progress written to {out / harness.PROGRESS_FILE}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from app.services import harness

    state, cfg = harness.load_checkpoint(settings.resolve_output(args.checkpoint))
    env_name = args.env or cfg.env
    mean, std, _ = harness.evaluate(state.actor, env_name, args.episodes, args.seed, discount=args.discount)
    print(f"{env_name}: {mean:.4f} +- {std:.4f} over {args.episodes} episodes")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port, reload=settings.DEBUG)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "eval": cmd_eval, "serve": cmd_serve}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=args.log_level.upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        parser.print_usage(sys.stderr)
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (PreconditionError, StructuralError) as e:
        parser.print_usage(sys.stderr)
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as e:
        logger.error(f"Numerical failure: {str(e)}")
        return EXIT_NUMERICAL
