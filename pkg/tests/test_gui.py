import logging
import os
from dataclasses import replace

import numpy as np
import pytest

os.environ.setdefault("QT_QPA_PLATFORM", "offscreen")
pytest.importorskip("PyQt5")

from PyQt5.QtCore import QSettings  # noqa: E402
from PyQt5.QtWidgets import QApplication  # noqa: E402

from app.domain.config_model import RunConfig  # noqa: E402
from app.domain.metrics import recall_heatmap  # noqa: E402
from app.infrastructure.plots import heatmap_rgba  # noqa: E402
from app.infrastructure.settings import AppSettings  # noqa: E402
from app.services.logging_bus import LogBus, QtLogHandler  # noqa: E402
from app.services.runner import ExperimentRunner  # noqa: E402

pytestmark = pytest.mark.gui


@pytest.fixture(scope="module")
def qapp():
    return QApplication.instance() or QApplication([])


@pytest.fixture
def app_settings(tmp_path):
    return AppSettings(QSettings(str(tmp_path / "settings.ini"), QSettings.IniFormat))


@pytest.fixture
def window(qapp, app_settings):
    from app.ui.main_window import MainWindow

    win = MainWindow(app_settings)
    yield win
    win.close()


def test_settings_round_trip(qapp, app_settings, tiny_cfg):
    assert app_settings.load_last_config() is None
    assert app_settings.out_root() == "runs"
    app_settings.save_last_config(tiny_cfg)
    assert app_settings.load_last_config() == tiny_cfg


def test_window_shows_and_gathers_config(window, tiny_cfg):
    window._apply_config(tiny_cfg)
    assert window._gather_config() == tiny_cfg
    assert window.K.value() == 4


def test_condition_preset_updates_profiles(window):
    window.condition.setCurrentText("low_arousal_focus")
    assert window.profile_b.currentText() == "low_arousal_focus"
    assert window.cb_interoception.isChecked()
    window.condition.setCurrentText("vision_audio")
    assert not window.cb_interoception.isChecked()


def test_invalid_config_is_not_started(window):
    window.K.setValue(2)
    window.out_dir.set_path("")
    window.on_start()
    assert window.runner is None
    assert "Output folder is required" in window.log.toPlainText()


def test_stats_and_previews(window):
    row = {"round": 3, "ari_a": 0.5, "ari_b": 0.25, "kappa": 0.1, "dbs_a": float("nan"), "dbs_b": 1.0, "topsim": 0.3}
    window.stats.update_stats(row)
    window.on_stats(row)
    assert "ARI (A): 0.500" in window.stats.lbl.text()
    assert "DBS (A): -" in window.stats.lbl.text()
    assert window.history.count() == 1

    labels = np.repeat(np.arange(8), 3)
    rgba = heatmap_rgba(recall_heatmap(labels, labels, K=9))
    assert rgba.ndim == 3 and rgba.shape[2] == 4 and rgba.dtype == np.uint8
    window.preview.show_heatmaps(rgba, None)
    assert window.preview.pane_a.pixmap().width() == rgba.shape[1]
    assert window.preview.pane_b.pixmap().width() == 400


def test_log_handler_colors_warnings(qapp):
    bus = LogBus()
    seen = []
    bus.sig_log.connect(seen.append)
    logger = logging.getLogger("app.test_gui")
    handler = QtLogHandler(bus)
    logger.addHandler(handler)
    logger.setLevel(logging.INFO)
    try:
        logger.warning("careful")
        logger.info("plain")
    finally:
        logger.removeHandler(handler)
        logger.setLevel(logging.NOTSET)
    assert "color:#b60" in seen[0] and "careful" in seen[0]
    assert "span" not in seen[1]


def test_runner_emits_progress_and_done(qapp, tiny_cfg):
    runner = ExperimentRunner(replace(tiny_cfg, rounds=1), LogBus())
    progress, stats, previews, done = [], [], [], []
    runner.sig_progress.connect(progress.append)
    runner.sig_stats.connect(stats.append)
    runner.sig_preview.connect(lambda a, b: previews.append((a.shape, b.shape)))
    runner.sig_done.connect(lambda ok, msg: done.append((ok, msg)))
    runner.run()
    assert progress == [100]
    assert [s["round"] for s in stats] == [0, 1]
    assert len(previews) == 2
    assert done and done[0][0] is True
    assert done[0][1].isascii()


def test_runner_cancel_keeps_rounds_written(qapp, tiny_cfg):
    bus = LogBus()
    lines = []
    bus.sig_log.connect(lines.append)
    runner = ExperimentRunner(tiny_cfg, bus)
    done = []
    runner.sig_done.connect(lambda ok, msg: done.append((ok, msg)))
    runner.pause()
    runner.resume()
    runner.cancel()
    runner.run()
    assert lines[:3] == ["Paused...", "Resumed.", "Cancel requested..."]
    assert all(line.isascii() for line in lines)
    assert done[0][0] is False
    assert "Cancelled after round 0" in done[0][1]
    assert os.path.isfile(os.path.join(tiny_cfg.out_dir, "metrics.csv"))


def test_default_config_when_settings_empty(window, app_settings):
    cfg = window._gather_config()
    assert cfg.out_dir == os.path.join("runs", "gui")
    assert cfg.validate() is None
    assert isinstance(cfg, RunConfig)
