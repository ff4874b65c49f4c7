"""
Run reports.

A ReportBundle collects everything one CLI command produced and writes it
as machine-readable files (metrics.jsonl, one CSV per table, the resolved
config) plus a markdown brief and, optionally, its HTML rendering. Files
carry no timestamps, so identical runs write identical bytes.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import markdown2
import numpy as np
import yaml

from .. import __version__
from .config import SCHEMA_VERSION, ExperimentConfig, config_hash, config_to_dict

logger = logging.getLogger(__name__)


def _plain(value):
    """JSON-safe copy of numpy scalars/arrays and nested containers."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


class ReportBundle:
    """Metadata, resolved config, records, tables and summary sections of one run."""

    def __init__(self, command: str, config: ExperimentConfig, seed: Optional[int] = None):
        self.config = config
        self.config_hash = config_hash(config)
        self.metadata = {
            "command": command,
            "config_hash": self.config_hash,
            "seed": config.train.seed if seed is None else seed,
            "version": __version__,
            "schema_version": SCHEMA_VERSION,
        }
        self.records: List[Dict[str, Any]] = []
        self.tables: Dict[str, Tuple[List[str], List[List[Any]]]] = {}
        self.sections: List[Tuple[str, List[str]]] = []

    def add_record(self, record: str, **fields) -> None:
        self.records.append({"record": record, **_plain(fields)})

    def add_table(self, name: str, headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
        self.tables[name] = (list(headers), [list(_plain(list(r))) for r in rows])

    def add_section(self, title: str, lines: Sequence[str]) -> None:
        self.sections.append((title, list(lines)))

    # rendering

    def to_markdown(self) -> str:
        meta = self.metadata
        lines = [
            f"# dprompt {meta['command']} report",
            "",
            f"**Config hash:** `{meta['config_hash'][:16]}`",
            f"**Seed:** {meta['seed']}",
            f"**Version:** {meta['version']} (schema {meta['schema_version']})",
            "",
            "---",
            "",
        ]
        for title, body in self.sections:
            lines += [f"## {title}", ""] + body + [""]
        for name, (headers, rows) in self.tables.items():
            lines += [f"## {name}", "", "| " + " | ".join(headers) + " |",
                      "|" + "|".join("---" for _ in headers) + "|"]
            lines += ["| " + " | ".join(_cell(v) for v in row) + " |" for row in rows]
            lines.append("")
        return "\n".join(lines)

    def write(self, out_dir) -> Path:
        """
        Write every report file into out_dir (created if missing).

        Returns:
            Path of summary.md
        """
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

        with open(out / "metrics.jsonl", "w") as f:
            base = {"schema_version": SCHEMA_VERSION, "config_hash": self.config_hash}
            f.write(json.dumps({**base, "record": "metadata", **self.metadata}, sort_keys=True) + "\n")
            for rec in self.records:
                f.write(json.dumps({**base, **rec}, sort_keys=True) + "\n")

        for name, (headers, rows) in self.tables.items():
            with open(out / f"{name}.csv", "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(headers)
                writer.writerows(rows)

        with open(out / "config.yaml", "w") as f:
            yaml.safe_dump(config_to_dict(self.config), f, sort_keys=True)

        markdown = self.to_markdown()
        summary = out / "summary.md"
        summary.write_text(markdown)
        if "html" in self.config.output.formats:
            html = markdown2.markdown(markdown, extras=["tables", "fenced-code-blocks"])
            (out / "summary.html").write_text(html)

        logger.info("Wrote report bundle to %s", out)
        return summary


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.4g}" if abs(value) < 1e-3 and value != 0 else f"{value:.2f}"
    return str(value)
