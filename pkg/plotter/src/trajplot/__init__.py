"""Figure rendering for quadrotor attitude benchmark CSV logs."""

from .logfile import LogFile, SchemaMismatch, read_log
from .render import KINDS, render, render_paths

__version__ = "0.1.0"
