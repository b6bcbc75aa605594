from .app import build_parser, main
from .calibrate_cmd import CalibrationInfeasible
from .status_log import configure_logging
