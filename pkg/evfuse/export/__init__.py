"""
EvFuse Export Package

Exporters return (success, output, error_message) tuples:
- CSVExporter: metric tables
- JSONExporter: run summaries and metric reports
- ImageExporter: timestamped snapshots and colour gradient images

Author: Dragos Gontariu
License: GPL-3.0
"""
