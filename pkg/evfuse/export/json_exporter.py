"""
JSON Exporter for EvFuse

Exports run summaries and metric reports to JSON.

Author: Dragos Gontariu
License: GPL-3.0
"""

import json
import math
import os
from datetime import datetime

import numpy as np

from ..utils.logger import Logger


def _to_builtin(value):
    """Convert numpy scalars/arrays and other leftovers for json.dump."""
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, tuple)):
        return list(value)
    if hasattr(value, 'value'):
        return value.value
    return str(value)


def _clean_floats(value):
    """NaN/inf are not valid JSON: write them as null."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean_floats(v) for v in value]
    return value


class JSONExporter:
    """
    Export dictionaries (run summaries, metric reports) to JSON.
    """

    def __init__(self):
        """Constructor."""
        self.logger = Logger('JSONExporter')

    def export(self, payload, output_path, config=None):
        """
        Write `payload` as JSON.

        Args:
            payload (dict or object with to_dict()): data to export
            output_path (str): target file, or a directory (summary.json inside)
            config (dict): export options ('indent', 'add_metadata')

        Returns:
            tuple: (success, output_file_path, error_message)
        """
        config = config or {}
        try:
            self.logger.info('Starting JSON export')

            json_path = output_path
            if os.path.isdir(output_path):
                json_path = os.path.join(output_path, config.get('filename', 'summary.json'))
            elif not json_path.lower().endswith('.json'):
                json_path = output_path + '.json'

            data = payload.to_dict() if hasattr(payload, 'to_dict') else dict(payload)
            if config.get('add_metadata', False):
                data = {
                    'metadata': {
                        'generator': 'EvFuse',
                        'export_date': datetime.now().isoformat(),
                    },
                    **data,
                }
            # Round-trip through the encoder first so numpy values become plain numbers
            data = json.loads(json.dumps(data, default=_to_builtin))
            data = _clean_floats(data)

            directory = os.path.dirname(json_path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(json_path, 'w', encoding='utf-8') as f:
                json.dump(data, f, indent=config.get('indent', 2), ensure_ascii=False)

            self.logger.info(f'JSON exported: {json_path}')
            return True, json_path, ''

        except Exception as e:
            self.logger.error(f'JSON export failed: {str(e)}')
            import traceback
            self.logger.error(traceback.format_exc())
            return False, '', str(e)
