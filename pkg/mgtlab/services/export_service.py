import configparser
import csv
import logging
from pathlib import Path
from typing import Iterable, List, Sequence

from pydantic import ValidationError

from mgtlab.errors import ConfigError
from mgtlab.schemas import SECTION_ORDER, ExperimentConfig, VerdictReport
from mgtlab.services.energy import EnergyLedger

logger = logging.getLogger(__name__)

REQUIRED_SECTIONS = SECTION_ORDER[:-1]


def format_number(value) -> str:
    """Shortest round-trip decimal for floats; other values verbatim."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


class ExportService:
    """Reads experiment configs and writes run artifacts"""

    def read_config(self, path) -> ExperimentConfig:
        """Parse an INI experiment config strictly; errors name the offending section.key"""
        path = Path(path)
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}", key=str(path))
        except configparser.Error as e:
            raise ConfigError(f"malformed config: {e.message}", key=str(path))
        return self.parse_sections({name: dict(parser[name]) for name in parser.sections()})

    def parse_config_text(self, text: str) -> ExperimentConfig:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"malformed config: {e.message}")
        return self.parse_sections({name: dict(parser[name]) for name in parser.sections()})

    def parse_sections(self, sections: dict) -> ExperimentConfig:
        unknown = [name for name in sections if name not in SECTION_ORDER]
        if unknown:
            raise ConfigError("unknown section", key=unknown[0])
        missing = [name for name in REQUIRED_SECTIONS if name not in sections]
        if missing:
            raise ConfigError("missing section", key=missing[0])
        try:
            return ExperimentConfig.model_validate(sections)
        except ValidationError as e:
            err = e.errors()[0]
            key = ".".join(str(part) for part in err["loc"])
            raise ConfigError(err["msg"], key=key) from None

    def write_config(self, config: ExperimentConfig, path) -> Path:
        path = Path(path)
        path.write_text(config.to_ini(), encoding="utf-8")
        return path

    def export_series_csv(self, ledger: EnergyLedger, path) -> Path:
        """Columns t then every populated ledger field in the fixed ledger order"""
        fields = ledger.fields
        columns = [ledger.series[name] for name in fields]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", *fields])
            for i, t in enumerate(ledger.times):
                writer.writerow([repr(float(t))] + [repr(float(col[i])) for col in columns])
        logger.info("wrote %s (%d rows, %d fields)", path, ledger.times.size, len(fields))
        return Path(path)

    def export_rows_csv(self, header: Sequence[str], rows: Iterable[Sequence], path) -> Path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_number(v) for v in row])
        return Path(path)

    def export_report_json(self, report: VerdictReport, path) -> Path:
        Path(path).write_text(report.model_dump_json(indent=2), encoding="utf-8")
        return Path(path)

    def load_report_json(self, path) -> VerdictReport:
        return VerdictReport.model_validate_json(Path(path).read_text(encoding="utf-8"))

    def ensure_dir(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return out


export_service = ExportService()


def rows_to_table(rows: List[dict], columns: Sequence[str]):
    """Dict rows to value lists in column order; missing cells stay empty."""
    return [[row.get(col) for col in columns] for row in rows]
