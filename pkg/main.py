import argparse
import logging
import sys
from typing import Optional, Sequence

from dotenv import load_dotenv

from src.errors import SclabError, ValidationError
from src.logging_config import setup_logging
from src.models.experiment import ExperimentConfig, ExperimentKind
from src.services import experiment_runner
from src.utils.env_checker import LOG_LEVELS, check_environment, get_cache_dir, get_log_level

logger = logging.getLogger(__name__)


def _positive_int(value: str) -> int:
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{value!r} is not an integer")
    if number < 1:
        raise argparse.ArgumentTypeError(f"thread count must be >= 1, got {number}")
    return number


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sclab",
        description="Spectral cluster and quasimode experiments on model manifolds",
    )
    parser.add_argument("kind", choices=[kind.value for kind in ExperimentKind], help="Experiment to run")
    parser.add_argument("--config", required=True, help="Path to the JSON experiment configuration")
    parser.add_argument("--out", default=None, help="Output directory (overrides output.directory)")
    parser.add_argument("--threads", type=_positive_int, default=None,
                        help="Worker threads for grid work (overrides SCLAB_THREADS)")
    parser.add_argument("--log-level", choices=LOG_LEVELS, default=None,
                        help="Console log level (overrides SCLAB_LOG_LEVEL)")
    return parser


def run_cli(kind: str, config_path: str, out: Optional[str] = None, threads: Optional[int] = None) -> int:
    """Run one experiment from the command line and return its exit code."""
    logger.info(f"Starting {kind} with config {config_path}")
    try:
        settings = check_environment()
        config = ExperimentConfig.load(config_path)
        if config.experiment.value != kind:
            raise ValidationError(f"config describes a {config.experiment.value} experiment, not {kind}")
        if out:
            config = config.with_output_dir(out)
        max_concurrency = threads or settings["threads"]

        manifest = experiment_runner.run(config, max_concurrency, get_cache_dir())
        for name, digest in manifest.outputs.items():
            logger.info(f"  {name}  sha256={digest[:16]}")
        return 0

    except SclabError as e:
        logger.error(f"{kind} failed: {str(e)}")
        return e.exit_code
    except Exception as e:
        logger.error(f"CLI error: {str(e)}", exc_info=True)
        return 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level or get_log_level())
    return run_cli(args.kind, args.config, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
