# mgtlab/services/experiment_service.py

import itertools
import logging
import math
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import pydantic
import scipy
from pydantic import ValidationError

from mgtlab import __version__
from mgtlab.errors import AssumptionViolation, ConfigError, MgtLabError, NumericalFailure
from mgtlab.models import MgtParameters, assumption_for, check_assumption
from mgtlab.schemas import (
    AssumptionId,
    AssumptionReport,
    AuditSummary,
    ExperimentConfig,
    GronwallCheck,
    IntegrationPath,
    MemoryType,
    Regime,
    RunMetadata,
    SweepRow,
    VerdictReport,
)
from mgtlab.services.analysis import (
    applicable_identities,
    audit_winner,
    characteristic_roots,
    equivalence_constants,
    fit_decay_rate,
    gronwall_integral_check,
    identity_audit,
)
from mgtlab.services.dynamics import InitialData, TimeGrid, Trajectory, simulate
from mgtlab.services.energy import LEDGER_FIELDS, EnergyLedger, build_ledger, energy_equivalence_bounds
from mgtlab.services.export_service import export_service, rows_to_table
from mgtlab.services.kernels import MemoryKernel
from mgtlab.services.spectrum import OperatorSpectrum, dirichlet_spectrum

logger = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("alpha", "b", "c2", "tau", "kernel_scale", "lambda")
FITTED_FIELDS = ("F0", "F1", "F2", "F3", "F3cr", "Ehat1", "Ehat")
STANDARD_FIELDS = ("F0", "F1", "F2", "F3", "F3cr")
EQUIVALENT_PAIRS = (("E0", "F0"), ("Ehat", "F0"), ("E1", "F1"), ("E2", "F2"), ("E3", "F3"), ("E3cr", "F3cr"))


class Experiment(NamedTuple):
    """Everything a run needs, built and validated from a config."""

    config: ExperimentConfig
    params: MgtParameters
    kernel: MemoryKernel
    spectrum: OperatorSpectrum
    initial: InitialData
    grid: TimeGrid
    path: IntegrationPath


def _versions() -> Dict[str, str]:
    return {"mgtlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "pydantic": pydantic.VERSION}


def _relative_drift(series: np.ndarray) -> float:
    ref = abs(float(series[0]))
    spread = float(np.max(np.abs(series - series[0])))
    return spread / ref if ref > 0 else spread


class ExperimentService:
    """Builds experiments from configs and turns runs into verdict reports"""

    # Building
    def build(self, config: ExperimentConfig, base_dir: Path = Path(".")) -> Experiment:
        m = config.model
        try:
            params = MgtParameters(
                tau=m.tau,
                alpha=m.alpha,
                b=m.b,
                c2=m.c2,
                memory_type=m.memory_type,
                lambda_=m.lambda_,
                k_override=m.k_override,
            )
        except ValidationError as e:
            raise ConfigError(e.errors()[0]["msg"], key="model") from None

        spectrum = self._spectrum(config)
        return Experiment(
            config=config,
            params=params,
            kernel=self._kernel(config, base_dir),
            spectrum=spectrum,
            initial=self._initial(config, spectrum),
            grid=TimeGrid(config.time.t_end, config.time.h),
            path=config.time.path,
        )

    def _kernel(self, config: ExperimentConfig, base_dir: Path) -> MemoryKernel:
        k = config.kernel
        if k.kind == "zero":
            kernel = MemoryKernel.zero()
        elif k.kind == "prony":
            kernel = MemoryKernel.prony(k.weights, k.rates)
        else:
            csv_path = Path(k.csv_path)
            kernel = MemoryKernel.from_csv(csv_path if csv_path.is_absolute() else base_dir / csv_path)
        return kernel.scaled(k.scale) if k.scale != 1.0 else kernel

    def _spectrum(self, config: ExperimentConfig) -> OperatorSpectrum:
        op = config.operator
        if op.kind == "dirichlet_1d":
            return dirichlet_spectrum(op.length, op.modes)
        try:
            return OperatorSpectrum(np.asarray(op.eigenvalues, dtype=float))
        except ConfigError as e:
            raise ConfigError(e.detail, key="operator.eigenvalues") from None

    def _initial(self, config: ExperimentConfig, spectrum: OperatorSpectrum) -> InitialData:
        init = config.initial
        n = spectrum.size
        if init.preset == "first_mode_bump":
            u0 = np.zeros(n)
            u0[0] = init.amplitude
            return InitialData(u0, np.zeros(n), np.zeros(n))
        if init.preset == "random_seeded":
            rng = np.random.default_rng(init.seed)
            scale = init.amplitude / np.sqrt(spectrum.eigenvalues)
            u0 = scale * rng.standard_normal(n)
            u1 = scale * rng.standard_normal(n)
            u2 = init.amplitude * rng.standard_normal(n)
            return InitialData(u0, u1, u2)

        vectors = []
        for name in ("u0", "u1", "u2"):
            values = getattr(init, name)
            if not values and name != "u0":
                values = [0.0] * n
            if len(values) != n:
                raise ConfigError(f"expected {n} values, got {len(values)}", key=f"initial.{name}")
            vectors.append(np.asarray(values, dtype=float))
        return InitialData(*vectors)

    # Assumption gate
    def check(self, experiment: Experiment) -> List[AssumptionReport]:
        reports = [check_assumption(experiment.params, experiment.kernel, AssumptionId.A0_kernel)]
        governing = assumption_for(experiment.params)
        if governing is not None:
            reports.append(check_assumption(experiment.params, experiment.kernel, governing))
        return reports

    def _metadata(self, experiment: Experiment, forced: bool) -> RunMetadata:
        p = experiment.params
        return RunMetadata(
            t_end=experiment.grid.t_end,
            h=experiment.grid.h,
            n_steps=experiment.grid.n_steps,
            path=experiment.path,
            memory_type=p.memory_type,
            regime=p.regime,
            gamma=p.gamma,
            k=p.k,
            n_modes=experiment.spectrum.size,
            forced=forced,
            versions=_versions(),
        )

    # Runs
    def run(self, experiment: Experiment, out_dir: Optional[Path] = None, force: bool = False) -> VerdictReport:
        """Gate, simulate, analyse; writes series.csv and report.json when out_dir is given"""
        reports = self.check(experiment)
        violated = [r for r in reports if not r.satisfied]
        metadata = self._metadata(experiment, forced=bool(violated) and force)
        if out_dir is not None:
            out_dir = export_service.ensure_dir(out_dir)

        if violated and not force:
            failure = AssumptionViolation(violated)
            logger.warning("run gated: %s", failure.detail)
            report = VerdictReport(
                metadata=metadata, assumptions=reports, failure=failure.detail, exit_code=failure.exit_code
            )
            return self._finish(report, out_dir)
        if violated:
            logger.warning("forced run outside the hypotheses: %s", AssumptionViolation(violated).detail)

        try:
            traj = simulate(
                experiment.params,
                experiment.spectrum,
                experiment.kernel,
                experiment.initial,
                experiment.grid,
                experiment.path,
            )
            ledger = build_ledger(traj)
            if out_dir is not None:
                export_service.export_series_csv(ledger, out_dir / "series.csv")
            audits = self._audits(traj, ledger, experiment.config) if experiment.config.analysis.audit else []
        except NumericalFailure as e:
            logger.error("numerical failure: %s", e.detail)
            return self._finish(
                VerdictReport(metadata=metadata, assumptions=reports, failure=e.detail, exit_code=e.exit_code),
                out_dir,
            )

        report = VerdictReport(
            metadata=metadata,
            assumptions=reports,
            decay_fits=self._fits(ledger, experiment.config.analysis.window_fraction),
            audits=audits,
            stability=[characteristic_roots(experiment.params, float(mu)) for mu in experiment.spectrum.eigenvalues],
            conservation_drift=self._conservation_drift(experiment, ledger),
            gronwall=self._gronwall(ledger),
            equivalence=self._equivalence(experiment, ledger),
        )
        return self._finish(report, out_dir)

    def _finish(self, report: VerdictReport, out_dir: Optional[Path]) -> VerdictReport:
        if out_dir is not None:
            export_service.export_report_json(report, out_dir / "report.json")
        return report

    def _fits(self, ledger: EnergyLedger, window_fraction: float):
        fits = {}
        for name in FITTED_FIELDS:
            if name not in ledger:
                continue
            try:
                fits[name] = fit_decay_rate(ledger.times, ledger[name], window_fraction)
            except MgtLabError as e:
                logger.warning("no decay fit for %s: %s", name, e.detail)
        return fits

    def _audits(self, traj: Trajectory, ledger: EnergyLedger, config: ExperimentConfig) -> List[AuditSummary]:
        summaries = []
        for identity_id in applicable_identities(traj.params):
            results = identity_audit(traj, identity_id, ledger, config.analysis.refinement_levels)
            winner = audit_winner(results)
            logger.info("audit %s: %s convention wins", identity_id.value, winner.convention.value)
            summaries.extend(
                AuditSummary(
                    identity_id=r.identity_id,
                    convention=r.convention,
                    max_abs_residual=r.max_abs_residual,
                    refinement_order=r.refinement_order,
                    level_residuals=r.level_residuals,
                    winner=r is winner,
                )
                for r in results
            )
        return summaries

    def _conservation_drift(self, experiment: Experiment, ledger: EnergyLedger) -> Optional[float]:
        p = experiment.params
        if p.regime != Regime.critical or not experiment.kernel.is_zero:
            return None
        if p.memory_type == MemoryType.none:
            return _relative_drift(ledger["Ehat1"])
        if p.memory_type == MemoryType.type3:
            return _relative_drift(ledger["E3cr"])
        return None

    def _gronwall(self, ledger: EnergyLedger) -> Dict[str, GronwallCheck]:
        checks = {}
        for name in STANDARD_FIELDS:
            if name in ledger:
                try:
                    checks[name] = gronwall_integral_check(ledger.times, ledger[name])
                except MgtLabError as e:
                    logger.warning("no Gronwall check for %s: %s", name, e.detail)
        return checks

    def _equivalence(self, experiment: Experiment, ledger: EnergyLedger):
        out = {}
        for energy, standard in EQUIVALENT_PAIRS:
            if energy not in ledger or standard not in ledger:
                continue
            try:
                constants = equivalence_constants(ledger[energy], ledger[standard])
            except MgtLabError as e:
                logger.warning("no equivalence constants for %s/%s: %s", energy, standard, e.detail)
                continue
            if experiment.kernel.is_zero and energy in ("E0", "Ehat"):
                bounds = energy_equivalence_bounds(experiment.params, experiment.spectrum, ledger.k, energy=energy)
                constants = constants.model_copy(update={"a_priori": bounds})
            out[f"{energy}/{standard}"] = constants
        return out

    # Sweeps and maps
    def with_value(self, config: ExperimentConfig, parameter: str, value: float) -> ExperimentConfig:
        if parameter == "kernel_scale":
            section, key = "kernel", "scale"
        else:
            section, key = "model", parameter
        data = config.model_dump(by_alias=True, exclude_none=True)
        data[section][key] = value
        return export_service.parse_sections(data)

    def sweep(
        self,
        config: ExperimentConfig,
        parameter: str,
        values: Sequence[float],
        base_dir: Path = Path("."),
        force: bool = False,
    ) -> List[SweepRow]:
        """One summary row per value; failed rows are recorded and the sweep continues"""
        if parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"must be one of {', '.join(SWEEP_PARAMETERS)}", key="--param")
        if not values:
            raise ConfigError("sweep needs at least one value", key="--values")

        rows = []
        for value in values:
            logger.info("sweep %s = %r", parameter, value)
            try:
                experiment = self.build(self.with_value(config, parameter, value), base_dir)
                report = self.run(experiment, force=force)
            except MgtLabError as e:
                rows.append(SweepRow(parameter=parameter, value=value, exit_code=e.exit_code, failure=e.detail))
                continue
            winners = [a.max_abs_residual for a in report.audits if a.winner]
            rows.append(
                SweepRow(
                    parameter=parameter,
                    value=value,
                    exit_code=report.exit_code,
                    gamma=report.metadata.gamma,
                    omegas={name: fit.omega for name, fit in report.decay_fits.items()},
                    max_audit_residual=max(winners) if winners else None,
                    violations=[v for a in report.assumptions for v in a.violations],
                    failure=report.failure,
                )
            )
        return rows

    def export_sweep(self, rows: List[SweepRow], path: Path) -> Path:
        fitted = [name for name in LEDGER_FIELDS if any(name in row.omegas for row in rows)]
        header = ["parameter", "value", "exit_code", "gamma", *(f"omega_{n}" for n in fitted)]
        header += ["max_audit_residual", "violations", "failure"]
        table = []
        for row in rows:
            cells = row.model_dump()
            cells.update({f"omega_{n}": row.omegas.get(n) for n in fitted})
            cells["violations"] = ";".join(row.violations)
            table.append(cells)
        return export_service.export_rows_csv(header, rows_to_table(table, header), path)

    def stability_map(self, config: ExperimentConfig) -> List[dict]:
        """Root verdicts over the product of the [stability] ranges and the μ grid"""
        ranges = config.stability
        spectrum = self._spectrum(config)
        m = config.model

        def grid(name, default):
            values = getattr(ranges, name) if ranges is not None else None
            return values if values is not None else default

        axes = (
            grid("tau", [m.tau]),
            grid("alpha", [m.alpha]),
            grid("b", [m.b]),
            grid("c2", [m.c2]),
            grid("mu", spectrum.eigenvalues.tolist()),
        )
        rows = []
        for tau, alpha, b, c2, mu in itertools.product(*axes):
            params = MgtParameters(tau=tau, alpha=alpha, b=b, c2=c2)
            verdict = characteristic_roots(params, float(mu))
            row = {
                "tau": tau,
                "alpha": alpha,
                "b": b,
                "c2": c2,
                "mu": float(mu),
                "gamma": verdict.gamma,
                "regime": params.regime.value,
                "max_real_part": verdict.max_real_part,
                "hurwitz": verdict.hurwitz,
                "routh_hurwitz": verdict.routh_hurwitz,
            }
            for i, (re, im) in enumerate(verdict.roots, start=1):
                row[f"root{i}_re"], row[f"root{i}_im"] = re, im
            rows.append(row)
        return rows

    def export_stability_map(self, rows: List[dict], path: Path) -> Path:
        header = ["tau", "alpha", "b", "c2", "mu", "gamma", "regime", "max_real_part", "hurwitz", "routh_hurwitz"]
        header += [f"root{i}_{part}" for i in range(1, 4) for part in ("re", "im")]
        return export_service.export_rows_csv(header, rows_to_table(rows, header), path)


experiment_service = ExperimentService()


def parse_values(text: str) -> List[float]:
    """Comma-separated sweep values."""
    values = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            value = float(item)
        except ValueError:
            raise ConfigError(f"not a number: {item!r}", key="--values") from None
        if not math.isfinite(value):
            raise ConfigError(f"not finite: {item!r}", key="--values")
        values.append(value)
    return values
