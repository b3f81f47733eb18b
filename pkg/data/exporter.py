"""
Data Export Utilities

Writers and readers for the report formats: CSV tables (pandas), JSON
documents, JSON-lines manifests and matplotlib figures.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import pandas as pd

logger = logging.getLogger(__name__)


class DataExporter:
    """Export report data to various formats."""

    @staticmethod
    def export_csv(rows: Sequence[Dict], filepath: Path, metadata: Optional[Dict] = None,
                   columns: Optional[List[str]] = None):
        """
        Export rows to a CSV file with a metadata comment header.

        Args:
            rows: List of dicts (each dict = one row)
            filepath: Output file path
            metadata: Optional metadata written as '# key: value' comment lines
            columns: Optional explicit column order
        """
        filepath = Path(filepath)
        filepath.parent.mkdir(parents=True, exist_ok=True)

        frame = pd.DataFrame(list(rows), columns=columns)

        with open(filepath, 'w', newline='') as f:
            if metadata:
                for key, value in metadata.items():
                    if isinstance(value, (dict, list)):
                        value = json.dumps(value, sort_keys=True)
                    f.write(f"# {key}: {value}\n")
            frame.to_csv(f, index=False, lineterminator='\n')

        logger.debug("Exported %d rows to %s", len(frame), filepath)

    @staticmethod
    def export_json(data, filepath: Path, indent: int = 2):
        """
        Export data to JSON file.

        Args:
            data: Data dict or list to export
            filepath: Output file path
            indent: JSON indentation level
        """
        filepath = Path(filepath)
        filepath.parent.mkdir(parents=True, exist_ok=True)

        with open(filepath, 'w') as f:
            json.dump(data, f, indent=indent, sort_keys=True)
            f.write('\n')

        logger.debug("Exported JSON to %s", filepath)

    @staticmethod
    def export_jsonl(records: Iterable[Dict], filepath: Path):
        """Write one JSON object per line."""
        filepath = Path(filepath)
        filepath.parent.mkdir(parents=True, exist_ok=True)
        with open(filepath, 'w') as f:
            for record in records:
                f.write(json.dumps(record, sort_keys=True) + '\n')

    @staticmethod
    def read_jsonl(filepath: Path) -> List[Dict]:
        """Read a JSON-lines file, skipping blank lines."""
        with open(filepath, 'r') as f:
            return [json.loads(line) for line in f if line.strip()]

    @staticmethod
    def export_plot(figure, filepath: Path, dpi: int = 150, format: str = 'svg'):
        """
        Export matplotlib figure to an image file.

        Args:
            figure: Matplotlib Figure object
            filepath: Output file path
            dpi: Resolution in dots per inch
            format: Image format ('svg', 'png', 'pdf')
        """
        filepath = Path(filepath)
        filepath.parent.mkdir(parents=True, exist_ok=True)

        if not filepath.suffix:
            filepath = filepath.with_suffix(f".{format}")

        # Fixed metadata keeps SVG output byte-stable across runs.
        figure.savefig(filepath, dpi=dpi, bbox_inches='tight', format=format,
                       metadata={'Date': None} if format == 'svg' else None)
        logger.debug("Exported plot to %s", filepath)

    @staticmethod
    def read_csv(filepath: Path) -> Tuple[pd.DataFrame, Dict[str, str]]:
        """
        Read a CSV file written by export_csv.

        Args:
            filepath: Input CSV file path

        Returns:
            Tuple of (DataFrame, metadata dict)
        """
        filepath = Path(filepath)
        metadata = {}

        with open(filepath, 'r') as f:
            for line in f:
                if not line.startswith('#'):
                    break
                line = line.lstrip('#').strip()
                if ':' in line:
                    key, value = line.split(':', 1)
                    metadata[key.strip()] = value.strip()

        frame = pd.read_csv(filepath, comment='#')
        return frame, metadata
