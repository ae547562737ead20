"""
This module defines the main window of the run monitor, which provides the
user interface for configuring one experiment, running it on a worker thread
and following its metrics and heatmaps live.
"""

import logging
import os
from dataclasses import replace

from PyQt5.QtCore import QUrl
from PyQt5.QtGui import QDesktopServices

# =============================
# app/ui/main_window.py
# =============================
from PyQt5.QtWidgets import (
    QCheckBox,
    QComboBox,
    QDoubleSpinBox,
    QGridLayout,
    QHBoxLayout,
    QLabel,
    QListWidget,
    QMainWindow,
    QProgressBar,
    QPushButton,
    QSpinBox,
    QTabWidget,
    QTextEdit,
    QVBoxLayout,
    QWidget,
)

from app.domain.config_model import CONDITION_PRESETS, RunConfig
from app.domain.core_affect import ProfileKind
from app.domain.errors import ConfigError
from app.domain.mhng import Scenario
from app.infrastructure.settings import AppSettings
from app.services.logging_bus import LogBus, QtLogHandler
from app.services.runner import ExperimentRunner
from app.ui.widgets.path_picker import PathPicker
from app.ui.widgets.preview_view import PreviewView
from app.ui.widgets.stats_panel import StatsPanel


class MainWindow(QMainWindow):
    """
    Run monitor: config controls on the left, heatmaps and metrics in the
    middle, logs and per-round history on the right.
    """

    def __init__(self, settings: AppSettings = None):
        super().__init__()
        self.setWindowTitle("Emotion Co-construction Simulator")
        self.resize(1280, 800)

        self.settings = settings if settings is not None else AppSettings()
        self.logbus = LogBus()
        self._log_handler = QtLogHandler(self.logbus)
        logging.getLogger("app").addHandler(self._log_handler)

        self._base_cfg = RunConfig()
        self._build_ui()
        self._wire_signals()
        self._load_settings()

        self.runner = None

    # ---------------------- UI ----------------------
    def _build_ui(self):
        """Builds the main user interface."""
        central = QWidget(self)
        self.setCentralWidget(central)
        grid = QGridLayout(central)
        grid.setContentsMargins(10, 10, 10, 10)
        grid.setSpacing(10)

        self.left = QWidget()
        self.left.setObjectName("left_panel")
        left_layout = QVBoxLayout(self.left)
        left_layout.setContentsMargins(12, 12, 12, 12)
        left_layout.setSpacing(10)

        self.config_file = PathPicker(label="Config file", file_filter="TOML (*.toml)")
        self.out_dir = PathPicker(label="Output folder")

        self.condition = QComboBox()
        self.condition.addItems(list(CONDITION_PRESETS))
        self.scenario = QComboBox()
        self.scenario.addItems([s.value for s in Scenario])
        self.profile_a = QComboBox()
        self.profile_a.addItems([p.value for p in ProfileKind])
        self.profile_b = QComboBox()
        self.profile_b.addItems([p.value for p in ProfileKind])
        self.cb_interoception = QCheckBox("Interoception enabled")
        self.cb_interoception.setChecked(True)

        self.seed = QSpinBox()
        self.seed.setRange(0, 2**31 - 1)
        self.rounds = QSpinBox()
        self.rounds.setRange(0, 10000)
        self.K = QSpinBox()
        self.K.setRange(2, 64)
        self.epochs = QSpinBox()
        self.epochs.setRange(0, 10000)
        self.learning_rate = QDoubleSpinBox()
        self.learning_rate.setDecimals(5)
        self.learning_rate.setRange(0.0, 1.0)
        self.learning_rate.setSingleStep(1e-4)
        self.stimuli = QSpinBox()
        self.stimuli.setRange(1, 1000)

        def row(lbl, w):
            h = QHBoxLayout()
            h.addWidget(QLabel(lbl))
            h.addWidget(w)
            return h

        left_layout.addWidget(self.config_file)
        left_layout.addWidget(self.out_dir)
        left_layout.addLayout(row("Condition:", self.condition))
        left_layout.addLayout(row("Scenario:", self.scenario))
        left_layout.addLayout(row("Profile A:", self.profile_a))
        left_layout.addLayout(row("Profile B:", self.profile_b))
        left_layout.addWidget(self.cb_interoception)
        left_layout.addLayout(row("Random seed:", self.seed))
        left_layout.addLayout(row("Rounds:", self.rounds))
        left_layout.addLayout(row("Signs (K):", self.K))
        left_layout.addLayout(row("Epochs/round:", self.epochs))
        left_layout.addLayout(row("Learning rate:", self.learning_rate))
        left_layout.addLayout(row("Stimuli/emotion:", self.stimuli))
        left_layout.addStretch(1)

        self.preview = PreviewView()
        self.stats = StatsPanel()

        self.tabs = QTabWidget()
        self.log = QTextEdit()
        self.log.setReadOnly(True)
        self.history = QListWidget()
        self.tabs.addTab(self.log, "Logs")
        self.tabs.addTab(self.history, "Metrics history")

        runbar = QHBoxLayout()
        for attr, text in (
            ("btn_start", "Start"),
            ("btn_pause", "Pause"),
            ("btn_resume", "Resume"),
            ("btn_cancel", "Cancel"),
            ("btn_open_out", "Open Output"),
        ):
            button = QPushButton(text)
            button.setObjectName(attr)
            setattr(self, attr, button)
            runbar.addWidget(button)
        runbar.addStretch(1)
        self.progress = QProgressBar()
        self.progress.setRange(0, 100)
        runbar.addWidget(self.progress)
        self._set_running(False)

        grid.addWidget(self.left, 0, 0, 2, 1)
        grid.addWidget(self.preview, 0, 1, 1, 1)
        grid.addWidget(self.stats, 1, 1, 1, 1)
        grid.addWidget(self.tabs, 0, 2, 2, 1)
        grid.addLayout(runbar, 2, 0, 1, 3)
        grid.setColumnStretch(0, 1)
        grid.setColumnStretch(1, 2)
        grid.setColumnStretch(2, 2)

    def _wire_signals(self):
        """Connects UI element signals to corresponding slots."""
        self.btn_start.clicked.connect(self.on_start)
        self.btn_pause.clicked.connect(self.on_pause)
        self.btn_resume.clicked.connect(self.on_resume)
        self.btn_cancel.clicked.connect(self.on_cancel)
        self.btn_open_out.clicked.connect(self.on_open_out)
        self.condition.currentTextChanged.connect(self.on_condition_changed)
        self.config_file.sig_picked.connect(self.on_config_file)

        self.logbus.sig_log.connect(self._append_log)

    def _set_running(self, running: bool, paused: bool = False):
        self.btn_start.setEnabled(not running)
        self.btn_pause.setEnabled(running and not paused)
        self.btn_resume.setEnabled(running and paused)
        self.btn_cancel.setEnabled(running)

    def _append_log(self, text: str):
        """Appends a message to the log view."""
        self.log.append(text)

    # ---------------------- Settings ----------------------
    def _apply_config(self, cfg: RunConfig):
        """Shows `cfg` in the controls; fields without a control are kept as base."""
        self._base_cfg = cfg
        self.out_dir.set_path(cfg.out_dir)
        self.condition.blockSignals(True)
        self.condition.setCurrentText(cfg.condition)
        self.condition.blockSignals(False)
        self.scenario.setCurrentText(cfg.scenario)
        self.profile_a.setCurrentText(cfg.profile_a)
        self.profile_b.setCurrentText(cfg.profile_b)
        self.cb_interoception.setChecked(cfg.interoception)
        self.seed.setValue(cfg.seed)
        self.rounds.setValue(cfg.rounds)
        self.K.setValue(cfg.K)
        self.epochs.setValue(cfg.epochs)
        self.learning_rate.setValue(cfg.learning_rate)
        self.stimuli.setValue(cfg.stimuli_per_emotion)

    def _load_settings(self):
        """Loads the last used configuration from settings."""
        cfg = self.settings.load_last_config()
        if cfg is None:
            cfg = replace(RunConfig(), out_dir=os.path.join(self.settings.out_root(), "gui"))
        self._apply_config(cfg)

    def _gather_config(self) -> RunConfig:
        """Gathers the current configuration from the UI controls into a RunConfig."""
        return replace(
            self._base_cfg,
            out_dir=self.out_dir.path(),
            condition=self.condition.currentText(),
            scenario=self.scenario.currentText(),
            profile_a=self.profile_a.currentText(),
            profile_b=self.profile_b.currentText(),
            interoception=self.cb_interoception.isChecked(),
            seed=self.seed.value(),
            rounds=self.rounds.value(),
            K=self.K.value(),
            epochs=self.epochs.value(),
            learning_rate=self.learning_rate.value(),
            stimuli_per_emotion=self.stimuli.value(),
        )

    # ---------------------- Actions ----------------------
    def on_condition_changed(self, name: str):
        """Applies a condition preset to the profile and interoception controls."""
        cfg = self._gather_config().with_condition(name)
        self.profile_a.setCurrentText(cfg.profile_a)
        self.profile_b.setCurrentText(cfg.profile_b)
        self.cb_interoception.setChecked(cfg.interoception)

    def on_config_file(self, path: str):
        try:
            self._apply_config(RunConfig.from_toml(path))
            self._append_log(f"Loaded {path}")
        except ConfigError as e:
            self._append_log(f"<span style='color:#c00'>Config error: {e}</span>")

    def on_start(self):
        """Validates the configuration and starts the runner thread."""
        cfg = self._gather_config()
        err = cfg.validate() or (None if cfg.out_dir else "Output folder is required")
        if err:
            self._append_log(f"<span style='color:#c00'>Config error: {err}</span>")
            return

        self.settings.save_last_config(cfg)
        self.history.clear()
        self.preview.clear()

        self.progress.setValue(0)
        self._set_running(True)

        runner = ExperimentRunner(cfg, self.logbus)
        for signal, slot in (
            (runner.sig_progress, self.progress.setValue),
            (runner.sig_stats, self.stats.update_stats),
            (runner.sig_stats, self.on_stats),
            (runner.sig_preview, self.preview.show_heatmaps),
            (runner.sig_done, self.on_done),
        ):
            signal.connect(slot)
        self.runner = runner
        runner.start()

    def on_stats(self, d: dict):
        self.history.addItem(
            f"round {d['round']:>4}: ARI {d['ari_a']:.3f}/{d['ari_b']:.3f}  "
            f"kappa {d['kappa']:.3f}  DBS {d['dbs_a']:.3f}/{d['dbs_b']:.3f}  TopSim {d['topsim']:.3f}"
        )

    def on_pause(self):
        """Holds the runner at the next round boundary."""
        if self.runner:
            self.runner.pause()
            self._set_running(True, paused=True)

    def on_resume(self):
        if self.runner:
            self.runner.resume()
            self._set_running(True)

    def on_cancel(self):
        """Requests cancellation of the running experiment."""
        if self.runner:
            self.runner.cancel()

    def on_done(self, ok: bool, msg: str):
        """
        Re-arms the controls once the runner thread has finished.

        Args:
            ok (bool): True if every round completed; False on cancel or error.
            msg (str): Summary line from the runner, appended to the log.
        """
        self._append_log(msg)
        self._set_running(False)
        if ok:
            self.progress.setValue(100)

    def on_open_out(self):
        """Opens the output directory in the system's file explorer."""
        path = self.out_dir.path()
        if os.path.isdir(path):
            QDesktopServices.openUrl(QUrl.fromLocalFile(os.path.abspath(path)))
        else:
            self._append_log("Output folder does not exist yet.")

    def closeEvent(self, ev):
        if self.runner is not None and self.runner.isRunning():
            self.runner.cancel()
            self.runner.wait()
        logging.getLogger("app").removeHandler(self._log_handler)
        super().closeEvent(ev)
