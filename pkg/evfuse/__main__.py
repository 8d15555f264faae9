"""Entry point for `python -m evfuse`."""

import sys

from .cli import main

sys.exit(main())
