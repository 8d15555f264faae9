"""
EvFuse Data Package

Dataset readers and writers:
- events_io: text event files
- frames_io: frame index + grayscale images
- tables_io: CRF tables and kernel files
- manifest: dataset.cfg descriptions
- images_io: timestamped snapshot sequences

Author: Dragos Gontariu
License: GPL-3.0
"""
