"""
This module defines a simple event bus for logging, allowing worker threads
to send log messages that are displayed in the UI, and a logging handler
that routes standard log records through it.
"""

# =============================
# services/logging_bus.py
# =============================
import logging

from PyQt5.QtCore import QObject, pyqtSignal


class LogBus(QObject):
    """
    A simple event bus for logging.

    It uses a PyQt signal so components in different threads can safely
    send log messages to the main UI thread.
    """

    sig_log = pyqtSignal(str)

    def log(self, msg: str):
        """
        Emits a log message.

        Args:
            msg (str): The message to log.
        """
        self.sig_log.emit(msg)


class QtLogHandler(logging.Handler):
    """Forwards formatted log records to a LogBus; warnings and errors are colored."""

    COLORS = {logging.WARNING: "#b60", logging.ERROR: "#c00", logging.CRITICAL: "#c00"}

    def __init__(self, bus: LogBus, level: int = logging.INFO):
        super().__init__(level)
        self.bus = bus
        self.setFormatter(logging.Formatter("%(asctime)s %(name)s: %(message)s", "%H:%M:%S"))

    def emit(self, record: logging.LogRecord):
        try:
            msg = self.format(record)
        except Exception:
            self.handleError(record)
            return
        color = self.COLORS.get(record.levelno)
        self.bus.log(f"<span style='color:{color}'>{msg}</span>" if color else msg)
