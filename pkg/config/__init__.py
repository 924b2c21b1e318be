"""
Configuration package for Drone FDI Lab
"""

from .config import *
from .logger import logger, get_logger, set_console_level
