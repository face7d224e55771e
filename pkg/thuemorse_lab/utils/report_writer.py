"""
Report Writer
Writes schema-versioned JSON reports and CSV tables
"""

import csv
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

SCHEMA_VERSION = 1


class ReportWriter:
    """Deterministic JSON/CSV output: no timestamps, sorted keys, LF line endings"""

    def __init__(self, results_dir: Optional[str] = None):
        if results_dir is None:
            results_dir = Path.cwd() / "results"
        self.results_dir = Path(results_dir)
        self.results_dir.mkdir(parents=True, exist_ok=True)

    def render_json(self, kind: str, payload: Dict[str, Any]) -> str:
        report = {"schema_version": SCHEMA_VERSION, "kind": kind, **payload}
        return json.dumps(report, indent=2, sort_keys=True) + "\n"

    def write_json(self, kind: str, payload: Dict[str, Any], filename: Optional[str] = None) -> str:
        """Write `payload` with schema_version and kind fields added"""
        filepath = self.results_dir / (filename or f"{kind}.json")
        with open(filepath, 'w', encoding='utf-8', newline='\n') as f:
            f.write(self.render_json(kind, payload))
        return str(filepath)

    def write_csv(
        self,
        kind: str,
        rows: List[Dict[str, Any]],
        filename: Optional[str] = None,
        fieldnames: Optional[Sequence[str]] = None,
    ) -> str:
        """Header row from `fieldnames` or the first row's keys"""
        filepath = self.results_dir / (filename or f"{kind}.csv")
        if fieldnames is None:
            fieldnames = list(rows[0].keys()) if rows else []

        with open(filepath, 'w', encoding='utf-8', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator='\n')
            writer.writeheader()
            writer.writerows(rows)
        return str(filepath)

    def write(self, kind: str, payload: Dict[str, Any], rows: List[Dict[str, Any]], output_format: str) -> str:
        """JSON gets the whole payload, CSV gets the row table"""
        if output_format == "csv":
            return self.write_csv(kind, rows)
        return self.write_json(kind, payload)
