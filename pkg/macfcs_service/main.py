# main.py - Command-line entry point for the MACFCS solver

import sys

from app.cli import main

if __name__ == "__main__":
    sys.exit(main())
