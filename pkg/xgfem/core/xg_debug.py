import logging
import os
import sys
import tempfile
from functools import wraps

import xgfem
from xgfem.core.constants import Constants

"""
Logging and error handling
"""

LOG_FORMAT = '%(asctime)s %(levelname)s: %(message)s'


def create_log_file() -> str:
    log_folder = os.environ.get('XG_LOG_DIR') or os.path.join(os.path.dirname(xgfem.__file__), 'logs')
    try:
        os.makedirs(log_folder, exist_ok=True)
        log_filename = os.path.join(log_folder, 'xgfem.log')
        with open(log_filename, 'w'):  # clear file contents
            pass
    except OSError:
        log_folder = tempfile.gettempdir()
        log_filename = os.path.join(log_folder, 'xgfem.log')
        with open(log_filename, 'w'):
            pass
    return log_filename


class XgLogger(logging.Logger):

    def __init__(self, name):
        super().__init__(name)
        self.setLevel(logging.DEBUG)
        fh = logging.FileHandler(create_log_file(), encoding='utf-8')
        fh.setLevel(logging.DEBUG)
        fh.setFormatter(logging.Formatter(LOG_FORMAT))
        self.addHandler(fh)
        ch = logging.StreamHandler()
        ch.setLevel(os.environ.get('XG_LOG_LEVEL', Constants.DEFAULT_LOG_LEVEL.value).upper())
        ch.setFormatter(logging.Formatter(LOG_FORMAT))
        self.addHandler(ch)

    def set_console_level(self, level: str) -> None:
        for handler in self.handlers:
            if not isinstance(handler, logging.FileHandler):
                handler.setLevel(level.upper())


logging.setLoggerClass(XgLogger)
logger = logging.getLogger(__name__)
logging.setLoggerClass(logging.Logger)


def uncaught_exception_handler(exctype, value, traceback):
    logger.critical('An unhandled exception occurred:', exc_info=(exctype, value, traceback))


sys.excepthook = uncaught_exception_handler

"""
Auxiliary debugging functions
"""


def debug(func):
    name = func.__qualname__

    @wraps(func)
    def wrapper(*args, **kwargs):
        logger.debug('Running ' + name)
        return func(*args, **kwargs)

    return wrapper


def debugmethods(cls):
    for k, v in vars(cls).items():
        if callable(v) and not k.startswith('__'):
            setattr(cls, k, debug(v))
    return cls
