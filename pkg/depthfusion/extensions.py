import logging

from config import current_config

LOGGER_NAME = 'depthfusion'
LOG_FORMAT = '%(asctime)s %(levelname)s [%(name)s] %(message)s'

# Service modules log under their own module names; route them through one namespace
LOGGED_PACKAGES = ('services', 'commands', 'utils', LOGGER_NAME)


def init_logging(level=None):
    """Configure the process loggers once; later calls only change the level"""
    level = (level or current_config.LOG_LEVEL).upper()
    handler_owner = logging.getLogger(LOGGER_NAME)
    if not handler_owner.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        for name in LOGGED_PACKAGES:
            logger = logging.getLogger(name)
            logger.addHandler(handler)
            logger.propagate = False
    for name in LOGGED_PACKAGES:
        logging.getLogger(name).setLevel(level)
    return handler_owner
