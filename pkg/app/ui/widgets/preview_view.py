# app/ui/widgets/preview_view.py
from typing import Optional

import numpy as np
from PyQt5.QtCore import QRectF, Qt
from PyQt5.QtGui import QImage, QPainter, QPixmap
from PyQt5.QtWidgets import (
    QGraphicsPixmapItem,
    QGraphicsScene,
    QGraphicsView,
    QHBoxLayout,
    QLabel,
    QVBoxLayout,
    QWidget,
)

_ZOOM_STEP = 1.25


def rgba_to_pixmap(rgba: np.ndarray) -> QPixmap:
    """HxWx4 uint8 array (as drawn by the Agg canvas) -> detached QPixmap."""
    if rgba.ndim != 3 or rgba.shape[2] != 4:
        raise ValueError("RGBA must be HxWx4")
    if rgba.dtype != np.uint8:
        rgba = np.clip(rgba, 0, 255).astype(np.uint8)
    rgba = np.ascontiguousarray(rgba)
    h, w = rgba.shape[:2]
    img = QImage(rgba.data, w, h, 4 * w, QImage.Format_RGBA8888)
    return QPixmap.fromImage(img.copy())


class HeatmapPane(QGraphicsView):
    """
    One agent's heatmap. Fits the view by default; a double-click switches to
    free zoom (wheel) and back.
    """

    def __init__(self, agent: str):
        super().__init__()
        self.agent = agent
        self.setRenderHints(QPainter.Antialiasing | QPainter.SmoothPixmapTransform)
        self.setDragMode(QGraphicsView.ScrollHandDrag)
        self.setTransformationAnchor(QGraphicsView.AnchorUnderMouse)

        self._scene = QGraphicsScene(self)
        self._item = QGraphicsPixmapItem()
        self._scene.addItem(self._item)
        self.setScene(self._scene)
        self.caption = QLabel(f"Agent {agent.upper()}")
        self.fit_mode = True

    def pixmap(self) -> Optional[QPixmap]:
        pm = self._item.pixmap()
        return None if pm.isNull() else pm

    def set_heatmap(self, rgba: Optional[np.ndarray], caption: str = ""):
        if rgba is None:
            pm = QPixmap(400, 340)
            pm.fill(Qt.darkGray)
        else:
            pm = rgba_to_pixmap(rgba)
        self._item.setPixmap(pm)
        self._scene.setSceneRect(QRectF(pm.rect()))
        self.caption.setText(f"Agent {self.agent.upper()}" + (f" - {caption}" if caption else ""))
        self._refit()

    def _refit(self):
        if self.fit_mode and self.pixmap() is not None:
            self.resetTransform()
            self.fitInView(self._scene.sceneRect(), Qt.KeepAspectRatio)

    def mouseDoubleClickEvent(self, ev):
        if ev.button() == Qt.LeftButton:
            self.fit_mode = not self.fit_mode
            self._refit()
        super().mouseDoubleClickEvent(ev)

    def wheelEvent(self, ev):
        delta = ev.angleDelta().y()
        if self.fit_mode or self.pixmap() is None or delta == 0:
            super().wheelEvent(ev)
            return
        factor = _ZOOM_STEP if delta > 0 else 1.0 / _ZOOM_STEP
        # not below native size
        if factor < 1.0 and self.transform().m11() < 1.0:
            return
        self.scale(factor, factor)

    def resizeEvent(self, ev):
        super().resizeEvent(ev)
        self._refit()


class PreviewView(QWidget):
    """Latest matched-recall heatmaps of agent A (left) and agent B (right)."""

    def __init__(self):
        super().__init__()
        root = QVBoxLayout(self)
        root.setContentsMargins(0, 0, 0, 0)
        root.setSpacing(6)

        title = QLabel("Matched recall heatmaps")
        title.setAlignment(Qt.AlignCenter)
        title.setStyleSheet("font-weight:bold; padding:4px 0;")
        root.addWidget(title)

        self.pane_a = HeatmapPane("a")
        self.pane_b = HeatmapPane("b")
        captions = QHBoxLayout()
        panes = QHBoxLayout()
        for pane in (self.pane_a, self.pane_b):
            captions.addWidget(pane.caption, 1, Qt.AlignCenter)
            panes.addWidget(pane, 1)
        root.addLayout(captions)
        root.addLayout(panes, 1)

    def show_heatmaps(self, rgba_a, rgba_b, caption: str = ""):
        self.pane_a.set_heatmap(rgba_a, caption)
        self.pane_b.set_heatmap(rgba_b, caption)

    def clear(self):
        self.show_heatmaps(None, None)
