"""
Result file exporters.

Writes the files of one experiment run:
- rows.csv: one row per (trial, algorithm)
- summary.csv: summary statistics and pass/fail checks
- region.csv: region-plot curve data (region-sweep only)
- meta.json: config echo, config hash, versions, schema version
- timing.csv / run_info.json: wall times and timestamps, kept apart so
  the files above are byte-identical across reruns
"""

import csv
import json
import math
import os
import platform
from datetime import datetime, timezone

import numpy as np

from occamlab import __version__
from occamlab.experiments import ROW_COLUMNS, TrialRecord

SCHEMA_VERSION = 'occamlab-rows/2'
SUMMARY_COLUMNS = ('experiment', 'm', 'algorithm', 'statistic', 'value', 'threshold',
                   'passed', 'kind')
REGION_COLUMNS = ('mu', 'lower_curve', 'upper_curve', 'mu_prime', 'observed_map_error')
TIMING_COLUMNS = ('m', 'trial', 'algorithm', 'selected', 'wall_ms')


def format_value(value):
    """Deterministic text form of one cell: shortest round-trip floats, 0/1 booleans."""
    if isinstance(value, (bool, np.bool_)):
        return '1' if value else '0'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return repr(value)
    return str(value)


class ResultExporter:
    """Base class for result exporters"""

    def __init__(self, result):
        """
        Initialize exporter.

        Args:
            result: ExperimentResult
        """
        self.result = result

    def export(self, filename):
        """Export to file. Override in subclasses."""
        raise NotImplementedError

    def _write_csv(self, filename, header, rows):
        with open(filename, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
        return filename


class RowsCSVExporter(ResultExporter):
    """Export per-trial rows"""

    def export(self, filename):
        rows = ([getattr(r, c) for c in ROW_COLUMNS] for r in self.result.rows)
        return self._write_csv(filename, ROW_COLUMNS, rows)


class SummaryCSVExporter(ResultExporter):
    """Export summary statistics followed by the checks"""

    def export(self, filename):
        experiment = self.result.config.experiment
        entries = list(self.result.summary) + list(self.result.checks)
        rows = ([experiment, c.m, c.algorithm, c.statistic, c.value, c.threshold,
                 c.passed, c.kind] for c in entries)
        return self._write_csv(filename, SUMMARY_COLUMNS, rows)


class RegionCSVExporter(ResultExporter):
    """Export region-plot curve data"""

    def export(self, filename):
        rows = ([entry[c] for c in REGION_COLUMNS] for entry in self.result.region or [])
        return self._write_csv(filename, REGION_COLUMNS, rows)


class MetadataExporter(ResultExporter):
    """Export the deterministic run metadata"""

    def export(self, filename):
        meta = dict(self.result.meta)
        meta['schema_version'] = SCHEMA_VERSION
        meta['code_version'] = __version__
        meta['row_columns'] = list(ROW_COLUMNS)
        meta['checks_failed'] = {
            'hard': len(self.result.hard_failures),
            'statistical': len(self.result.statistical_failures),
        }
        with open(filename, 'w', encoding='utf-8') as f:
            json.dump(meta, f, indent=2, sort_keys=True, default=_json_default)
            f.write('\n')
        return filename


class TimingExporter(ResultExporter):
    """Export wall times per (trial, algorithm) plus run timestamps"""

    def __init__(self, result, started=None, finished=None):
        """
        Initialize TimingExporter.

        Args:
            result: ExperimentResult
            started: Run start as an aware datetime (default: now)
            finished: Run end as an aware datetime (default: now)
        """
        super().__init__(result)
        now = datetime.now(timezone.utc)
        self.started = started or now
        self.finished = finished or now

    def export(self, filename):
        """
        Export timing.csv next to run_info.json.

        Args:
            filename: Path of timing.csv

        Returns:
            Path to the created CSV
        """
        rows = ([r.m, r.trial, r.algorithm, r.selected, r.wall_ms] for r in self.result.rows)
        self._write_csv(filename, TIMING_COLUMNS, rows)
        info = {
            'started': self.started.isoformat(),
            'finished': self.finished.isoformat(),
            'elapsed_s': (self.finished - self.started).total_seconds(),
            'total_trial_ms': float(sum(r.wall_ms for r in self.result.rows)),
            'workers': self.result.config.workers,
            'python': platform.python_version(),
            'numpy': np.__version__,
        }
        info_path = os.path.join(os.path.dirname(filename), 'run_info.json')
        with open(info_path, 'w', encoding='utf-8') as f:
            json.dump(info, f, indent=2, sort_keys=True)
            f.write('\n')
        return filename


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def export_run(result, out_dir, started=None, finished=None):
    """
    Write every file of a run into out_dir.

    Args:
        result: ExperimentResult
        out_dir: Output directory (created if missing)
        started: Run start timestamp for run_info.json
        finished: Run end timestamp for run_info.json

    Returns:
        Dict of file kind -> path
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        'rows': export_result(result, os.path.join(out_dir, 'rows.csv'), format='rows'),
        'summary': export_result(result, os.path.join(out_dir, 'summary.csv'), format='summary'),
        'meta': export_result(result, os.path.join(out_dir, 'meta.json'), format='meta'),
    }
    if result.region is not None:
        paths['region'] = export_result(result, os.path.join(out_dir, 'region.csv'),
                                        format='region')
    paths['timing'] = TimingExporter(result, started, finished).export(
        os.path.join(out_dir, 'timing.csv'))
    return paths


def export_result(result, output_file, format='rows'):
    """
    Export one view of a run.

    Args:
        result: ExperimentResult
        output_file: Output filename
        format: 'rows', 'summary', 'region' or 'meta'

    Returns:
        Path to created file
    """
    if format == 'rows':
        return RowsCSVExporter(result).export(output_file)
    elif format == 'summary':
        return SummaryCSVExporter(result).export(output_file)
    elif format == 'region':
        return RegionCSVExporter(result).export(output_file)
    elif format == 'meta':
        return MetadataExporter(result).export(output_file)
    else:
        raise ValueError(f"Unsupported format: {format}. Use 'rows', 'summary', 'region' or 'meta'")


def read_rows(filename):
    """
    Load rows.csv back into TrialRecord objects.

    Args:
        filename: Path of a rows.csv written by RowsCSVExporter

    Returns:
        List of TrialRecord
    """
    types = {f: type(getattr(TrialRecord('', 0, 0, 0, ''), f)) for f in ROW_COLUMNS}
    rows = []
    with open(filename, 'r', newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != ROW_COLUMNS:
            raise ValueError(f"{filename} does not match the row schema {SCHEMA_VERSION}")
        for raw in reader:
            values = {}
            for column in ROW_COLUMNS:
                kind = types[column]
                text = raw[column]
                if kind is bool:
                    values[column] = text == '1'
                elif kind is int:
                    values[column] = int(text)
                elif kind is float:
                    values[column] = float(text)
                else:
                    values[column] = text
            rows.append(TrialRecord(**values))
    return rows
