"""
Logging configuration for Drone FDI Lab
"""

import logging
import logging.config
from .config import LOGGING_CONFIG

# Configure logging
logging.config.dictConfig(LOGGING_CONFIG)

# Create loggers
def get_logger(name):
    """Get a logger with the specified name"""
    return logging.getLogger(name)

def set_console_level(level):
    """Raise or lower the console handler threshold (CLI --verbose)"""
    for handler in logging.getLogger().handlers:
        if isinstance(handler, logging.StreamHandler) and not isinstance(handler, logging.FileHandler):
            handler.setLevel(level)

# Default logger
logger = get_logger('drone_fdi')
