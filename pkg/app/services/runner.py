# =============================
# services/runner.py
# =============================
"""
This module defines the QThread worker that runs one experiment in the
background, allowing the UI to remain responsive.
"""

from PyQt5.QtCore import QThread, pyqtSignal

from app.domain.config_model import RunConfig
from app.domain.metrics import MetricsReport
from app.domain.mhng import GameState
from app.infrastructure.plots import heatmap_rgba
from app.services.experiment import run_experiment
from app.services.logging_bus import LogBus


class ExperimentRunner(QThread):
    """
    A QThread that runs the co-construction loop of one RunConfig.

    Emits signals for progress, per-round metrics, heatmap previews, and
    completion. Can be paused, resumed, and cancelled between rounds.
    """

    sig_progress = pyqtSignal(int)  # percent
    sig_stats = pyqtSignal(dict)  # latest metrics row
    sig_preview = pyqtSignal(object, object)  # rgba heatmaps of agent A, agent B
    sig_done = pyqtSignal(bool, str)

    def __init__(self, cfg: RunConfig, logbus: LogBus, preview_every: int = 1):
        """
        Initializes the runner.

        Args:
            cfg (RunConfig): The configuration of the run.
            logbus (LogBus): The logging bus for sending log messages to the UI.
            preview_every (int): Render heatmap previews every n rounds.
        """
        super().__init__()
        self.cfg = cfg
        self.logbus = logbus
        self.preview_every = max(1, preview_every)
        self._pause = False
        self._cancel = False

    def pause(self):
        """Pauses before the next round."""
        self._pause = True
        self.logbus.log("Paused...")

    def resume(self):
        """Resumes a paused run."""
        self._pause = False
        self.logbus.log("Resumed.")

    def cancel(self):
        """Requests cancellation; the rounds completed so far are still written."""
        self._cancel = True
        self._pause = False
        self.logbus.log("Cancel requested...")

    def _should_stop(self) -> bool:
        while self._pause and not self._cancel:
            self.msleep(100)
        return self._cancel

    def _on_report(self, report: MetricsReport, state: GameState):
        self.sig_stats.emit(report.row())
        if report.round % self.preview_every == 0 or report.round == self.cfg.rounds:
            self.sig_preview.emit(
                heatmap_rgba(report.recall_a, f"agent a, round {report.round}"),
                heatmap_rgba(report.recall_b, f"agent b, round {report.round}"),
            )

    def _on_progress(self, done: int, total: int):
        self.sig_progress.emit(int(100 * done / max(total, 1)))

    def run(self):
        """The main execution method of the thread."""
        try:
            self.logbus.log(
                f"Starting {self.cfg.scenario} / {self.cfg.condition}, seed {self.cfg.seed}, {self.cfg.rounds} rounds..."
            )
            result = run_experiment(
                self.cfg,
                self.cfg.out_dir,
                progress=self._on_progress,
                on_report=self._on_report,
                should_stop=self._should_stop,
            )
            if not result.completed:
                self.sig_done.emit(False, f"Cancelled after round {result.final.round}.")
                return
            final = result.final
            self.sig_done.emit(
                True, f"Done. ARI a={final.ari_a:.3f} b={final.ari_b:.3f}, kappa={final.kappa:.3f}, written to {result.out_dir}"
            )
        except Exception as e:
            self.logbus.log(f"<span style='color:#c00'>An error occurred: {e}</span>")
            self.sig_done.emit(False, f"Error: {e}")
