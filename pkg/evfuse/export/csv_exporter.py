"""
CSV Exporter for EvFuse

Exports metric reports to CSV format.
Creates clean, simple CSV files suitable for Excel, R, Python, etc.

Author: Dragos Gontariu
License: GPL-3.0
"""

import os

from ..utils.logger import Logger


class CSVExporter:
    """
    Export a MetricReport to CSV.

    One row per scored frame (timestamp_us, mse, ssim), followed by a
    commented summary line with the sequence means.
    """

    def __init__(self):
        """Constructor."""
        self.logger = Logger('CSVExporter')

    def export(self, report, output_path, config=None):
        """
        Export report to CSV.

        Args:
            report (MetricReport): scored sequence
            output_path (str): target file, or a directory (metrics.csv inside)
            config (dict): export options ('float_format', default '%.10g')

        Returns:
            tuple: (success, output_file_path, error_message)
        """
        config = config or {}
        try:
            self.logger.info('Starting CSV export')

            csv_path = output_path
            if os.path.isdir(output_path):
                csv_path = os.path.join(output_path, 'metrics.csv')
            elif not csv_path.lower().endswith('.csv'):
                csv_path = output_path + '.csv'

            directory = os.path.dirname(csv_path)
            if directory:
                os.makedirs(directory, exist_ok=True)

            table = report.to_dataframe()
            table.to_csv(csv_path, index=False, float_format=config.get('float_format', '%.10g'))
            with open(csv_path, 'a', encoding='utf-8') as f:
                f.write(f'# {report.summary_line()}\n')

            self.logger.info(f'Exported {len(table)} frames to CSV')
            return True, csv_path, ''

        except Exception as e:
            self.logger.error(f'CSV export failed: {str(e)}')
            import traceback
            self.logger.error(traceback.format_exc())
            return False, '', str(e)
