# =============================
# app/ui/widgets/path_picker.py
# =============================
from PyQt5.QtCore import pyqtSignal
from PyQt5.QtWidgets import QFileDialog, QHBoxLayout, QLabel, QLineEdit, QPushButton, QWidget


class PathPicker(QWidget):
    """Label + line edit + browse button for a folder, or for a file when `file_filter` is set."""

    sig_picked = pyqtSignal(str)

    def __init__(self, label: str = "Path", file_filter: str = ""):
        super().__init__()
        self.file_filter = file_filter
        lay = QHBoxLayout(self)
        lay.setContentsMargins(0, 0, 0, 0)
        self.lbl = QLabel(label)
        self.edit = QLineEdit()
        self.btn = QPushButton("Browse…")
        lay.addWidget(self.lbl)
        lay.addWidget(self.edit)
        lay.addWidget(self.btn)
        self.btn.clicked.connect(self._browse)

    def _browse(self):
        if self.file_filter:
            p, _ = QFileDialog.getOpenFileName(self, "Select File", ".", self.file_filter)
        else:
            p = QFileDialog.getExistingDirectory(self, "Select Folder", ".")
        if p:
            self.set_path(p)
            self.sig_picked.emit(p)

    def set_path(self, p: str):
        self.edit.setText(p or "")

    def path(self) -> str:
        return self.edit.text().strip()
