from pathlib import Path

from mgtlab.commands import add_common_options
from mgtlab.services.experiment_service import experiment_service
from mgtlab.services.export_service import export_service


def register(subparsers):
    parser = subparsers.add_parser("stability-map", help="characteristic-root verdicts over parameter ranges")
    parser.add_argument("config", help="experiment config (INI) with an optional [stability] section")
    add_common_options(parser)
    parser.set_defaults(handler=run_stability_map)


def run_stability_map(args, out_dir: Path) -> int:
    # the map needs only the parameter ranges, not a buildable experiment
    config = export_service.read_config(args.config)
    rows = experiment_service.stability_map(config)
    out = export_service.ensure_dir(out_dir)
    path = experiment_service.export_stability_map(rows, out / "stability_map.csv")

    stable = sum(1 for row in rows if row["hurwitz"])
    print(f"✅ stability map: {len(rows)} rows, {stable} Hurwitz-stable -> {path}")
    return 0
