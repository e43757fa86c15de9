import logging
import os

from xgfem.core.constants import Constants
from xgfem.core.xg_debug import XgLogger, debug, debugmethods, logger


def test_logger_class():
    assert isinstance(logger, XgLogger)
    assert logger.level == logging.DEBUG
    files = [h for h in logger.handlers if isinstance(h, logging.FileHandler)]
    assert len(files) == 1
    assert os.path.basename(files[0].baseFilename) == 'xgfem.log'


def test_console_level():
    console = [h for h in logger.handlers if not isinstance(h, logging.FileHandler)]
    previous = console[0].level
    logger.set_console_level('warning')
    try:
        assert all(h.level == logging.WARNING for h in console)
        assert all(h.level == logging.DEBUG for h in logger.handlers if isinstance(h, logging.FileHandler))
    finally:
        for handler in console:
            handler.setLevel(previous)


def test_debug_decorator(caplog):
    @debug
    def double(x):
        return 2 * x

    with caplog.at_level(logging.DEBUG, logger=logger.name):
        assert double(3) == 6
    assert any(record.getMessage().startswith('Running ') and 'double' in record.getMessage()
               for record in caplog.records)


def test_debugmethods(caplog):
    @debugmethods
    class Counter:
        def __init__(self):
            self.n = 0

        def bump(self):
            self.n += 1
            return self.n

    with caplog.at_level(logging.DEBUG, logger=logger.name):
        counter = Counter()
        assert counter.bump() == 1
    messages = [record.getMessage() for record in caplog.records]
    assert any(message.endswith('Counter.bump') for message in messages)
    assert not any('__init__' in message for message in messages)


def test_default_console_level(monkeypatch):
    monkeypatch.delenv('XG_LOG_LEVEL', raising=False)
    fresh = XgLogger('xgfem.fresh')
    try:
        console = [h for h in fresh.handlers if not isinstance(h, logging.FileHandler)]
        assert [h.level for h in console] == [logging.getLevelName(Constants.DEFAULT_LOG_LEVEL.value)]
    finally:
        for handler in fresh.handlers:
            handler.close()
