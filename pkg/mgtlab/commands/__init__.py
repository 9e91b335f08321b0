"""CLI commands. Each module exposes `register(subparsers)`."""

import argparse
from pathlib import Path

from mgtlab.services.experiment_service import Experiment, experiment_service
from mgtlab.services.export_service import export_service


def load_experiment(config_path) -> Experiment:
    """Read, validate and build the experiment a config file describes."""
    config = export_service.read_config(config_path)
    return experiment_service.build(config, Path(config_path).parent)


def add_common_options(parser):
    """--out accepted after the command too; the top-level value is kept when absent."""
    parser.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
