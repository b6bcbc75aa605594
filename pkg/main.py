"""
FDM CV-QKD simulator and key-rate engine.
Entry point for the command-line front end.

Usage:
    python main.py simulate configs/fdm4.ini --seed 1
    python main.py sweep-distance configs/fdm4.ini --channels 1,4
    python main.py --help
"""

import sys
import os

# Ensure the project root is on the Python path
app_dir = os.path.dirname(os.path.abspath(__file__))

if app_dir not in sys.path:
    sys.path.insert(0, app_dir)

from cli.app import main


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
