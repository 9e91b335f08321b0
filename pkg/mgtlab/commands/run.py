import logging
from pathlib import Path

from mgtlab.commands import add_common_options, load_experiment
from mgtlab.services.experiment_service import experiment_service

logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("run", help="simulate one experiment and write series.csv and report.json")
    parser.add_argument("config", help="experiment config (INI)")
    parser.add_argument("--force", action="store_true", help="run even when an assumption is violated")
    add_common_options(parser)
    parser.set_defaults(handler=run_experiment)


def run_experiment(args, out_dir: Path) -> int:
    experiment = load_experiment(args.config)
    report = experiment_service.run(experiment, out_dir, force=args.force)

    if report.exit_code:
        print(f"❌ {report.failure} (exit {report.exit_code}); report in {out_dir / 'report.json'}")
        return report.exit_code

    print(f"✅ run finished: {report.metadata.n_steps} steps, {report.metadata.n_modes} modes -> {out_dir}")
    for name, fit in report.decay_fits.items():
        print(f"   {name}: omega={fit.omega:.6g} r2={fit.r_squared:.4f}")
    if report.conservation_drift is not None:
        print(f"   conservation drift: {report.conservation_drift:.3e}")
    for audit in report.audits:
        if audit.winner:
            print(
                f"   {audit.identity_id.value}: {audit.convention.value} wins, "
                f"residual {audit.max_abs_residual:.2e}, order {audit.refinement_order:.2f}"
            )
    return 0
