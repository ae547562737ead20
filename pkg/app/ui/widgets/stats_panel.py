# =============================
# app/ui/widgets/stats_panel.py
# =============================
import math

from PyQt5.QtWidgets import QLabel, QVBoxLayout, QWidget

_FIELDS = (
    ("round", "Round"),
    ("ari_a", "ARI (A)"),
    ("ari_b", "ARI (B)"),
    ("kappa", "Kappa"),
    ("dbs_a", "DBS (A)"),
    ("dbs_b", "DBS (B)"),
    ("topsim", "TopSim"),
)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "-" if math.isnan(v) else f"{v:.3f}"
    return str(v)


class StatsPanel(QWidget):
    """Latest per-round metrics of the running experiment."""

    def __init__(self):
        super().__init__()
        lay = QVBoxLayout(self)
        self.lbl = QLabel("Metrics: -")
        lay.addWidget(self.lbl)

    def update_stats(self, d: dict):
        text = [f"{name}: {_fmt(d[k])}" for k, name in _FIELDS if k in d]
        self.lbl.setText("\n".join(text) if text else "Metrics: -")
