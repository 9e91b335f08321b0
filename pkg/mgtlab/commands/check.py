from pathlib import Path
from typing import List

from pydantic import TypeAdapter

from mgtlab.commands import add_common_options, load_experiment
from mgtlab.errors import AssumptionViolation
from mgtlab.schemas import AssumptionReport
from mgtlab.services.experiment_service import experiment_service
from mgtlab.services.export_service import export_service

_reports = TypeAdapter(List[AssumptionReport])


def register(subparsers):
    parser = subparsers.add_parser("check", help="check the kernel and regime assumptions only")
    parser.add_argument("config", help="experiment config (INI)")
    add_common_options(parser)
    parser.set_defaults(handler=check_assumptions)


def check_assumptions(args, out_dir: Path) -> int:
    experiment = load_experiment(args.config)
    reports = experiment_service.check(experiment)
    out = export_service.ensure_dir(out_dir)
    (out / "assumptions.json").write_bytes(_reports.dump_json(reports, indent=2))

    for report in reports:
        witnesses = ", ".join(f"{k}={v:.6g}" for k, v in report.witnesses.items())
        if report.satisfied:
            print(f"✅ {report.assumption_id.value} satisfied ({witnesses})")
        else:
            print(f"❌ {report.assumption_id.value} violated: {', '.join(report.violations)} ({witnesses})")

    violated = [r for r in reports if not r.satisfied]
    return AssumptionViolation(violated).exit_code if violated else 0
