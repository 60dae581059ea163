#!/usr/bin/env python3
"""Entry point for running LPP Lab from a source checkout."""

import sys

from app.main import main

if __name__ == "__main__":
    sys.exit(main())
