from pathlib import Path

from mgtlab.commands import add_common_options, load_experiment
from mgtlab.services.experiment_service import SWEEP_PARAMETERS, experiment_service, parse_values
from mgtlab.services.export_service import export_service


def register(subparsers):
    parser = subparsers.add_parser("sweep", help="rerun an experiment over a list of parameter values")
    parser.add_argument("config", help="experiment config (INI)")
    parser.add_argument("--param", required=True, help=f"one of {', '.join(SWEEP_PARAMETERS)}")
    parser.add_argument("--values", required=True, help="comma-separated values")
    parser.add_argument("--force", action="store_true", help="run rows that violate an assumption")
    add_common_options(parser)
    parser.set_defaults(handler=run_sweep)


def run_sweep(args, out_dir: Path) -> int:
    values = parse_values(args.values)
    experiment = load_experiment(args.config)
    rows = experiment_service.sweep(
        experiment.config, args.param, values, base_dir=Path(args.config).parent, force=args.force
    )
    out = experiment_service.export_sweep(rows, export_service.ensure_dir(out_dir) / "sweep.csv")

    failed = sum(1 for row in rows if row.exit_code)
    print(f"✅ sweep over {args.param}: {len(rows)} rows, {failed} failed -> {out}")
    return 0
