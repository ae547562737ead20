"""
This module persists application settings, such as the last used run
configuration and output folder, by using PyQt's QSettings.
"""

import logging
from typing import Optional

from PyQt5.QtCore import QSettings

from app.domain.config_model import RunConfig
from app.domain.errors import ConfigError

logger = logging.getLogger(__name__)


class AppSettings:
    """
    A wrapper around QSettings to save and load the run configuration.
    """

    KEY_LAST = "last_config"
    KEY_OUT_ROOT = "app/out_root"

    def __init__(self, settings: Optional[QSettings] = None):
        """Initializes the QSettings object."""
        self.s = settings if settings is not None else QSettings()
        if not self.s.value(self.KEY_OUT_ROOT):
            self.s.setValue(self.KEY_OUT_ROOT, "runs")

    def out_root(self) -> str:
        """Returns the folder new runs are written under."""
        return self.s.value(self.KEY_OUT_ROOT, "runs")

    def save_last_config(self, cfg: RunConfig):
        """
        Saves the given RunConfig as the last used configuration.

        Args:
            cfg (RunConfig): The configuration to save.
        """
        self.s.setValue(self.KEY_LAST, cfg.to_json())

    def load_last_config(self) -> Optional[RunConfig]:
        """
        Loads the last used configuration.

        Returns:
            Optional[RunConfig]: The loaded configuration, or None if absent or unreadable.
        """
        s = self.s.value(self.KEY_LAST, "")
        if s:
            try:
                return RunConfig.from_json(s)
            except (ConfigError, ValueError, TypeError) as e:
                logger.warning("Ignoring stored config: %s", e)
                return None
        return None
