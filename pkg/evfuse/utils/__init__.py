"""
EvFuse Utilities Package

Contains helper modules for:
- Logging
- Validation
- Configuration management
- Progress tracking

Author: Dragos Gontariu
License: GPL-3.0
"""
