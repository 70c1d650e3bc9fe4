"""Deterministic top-down rasterization of layouts.

Image x grows to the right with center_x and image y grows *downward* with
center_y, so the picture reads the same way as the layout numbers. Each
object gets a translucent fill, a solid outline in its palette color, and
its label in black just below its center. Labels are drawn after all boxes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from layoutforge.errors import CanvasTooLarge, EmptyLayout
from layoutforge.font import text_mask
from layoutforge.layout import BevLayout, BevObject, Room, Scene3D
from layoutforge.png import encode_png

PALETTE = (
    (230, 25, 75), (60, 180, 75), (0, 130, 200), (245, 130, 48), (145, 30, 180),
    (70, 240, 240), (240, 50, 230), (128, 128, 0), (0, 128, 128), (170, 110, 40),
    (128, 0, 0), (0, 0, 128),
)
BACKGROUND = (255, 255, 255)
INK = (0, 0, 0)
FILL_ALPHA = 96  # out of 256


@dataclass(frozen=True)
class RasterConfig:
    scale: int = 4
    palette: tuple[tuple[int, int, int], ...] = PALETTE
    outline_px: int = 2
    max_pixels: int = 4096 * 4096
    draw_labels: bool = True
    draw_axes: bool = True

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError("scale must be a positive integer")


def object_color(index: int, cfg: RasterConfig = RasterConfig()) -> tuple[int, int, int]:
    return cfg.palette[index % len(cfg.palette)]


def _blend(base: np.ndarray, color: tuple[int, int, int]) -> np.ndarray:
    c = np.asarray(color, dtype=np.int32)
    return ((base.astype(np.int32) * (256 - FILL_ALPHA) + c * FILL_ALPHA + 128) >> 8).astype(np.uint8)


def fill_color(index: int, cfg: RasterConfig = RasterConfig(),
               over: tuple[int, int, int] = BACKGROUND) -> tuple[int, int, int]:
    """Color of an object's interior where it covers ``over`` and nothing else."""
    return tuple(int(v) for v in _blend(np.array(over, dtype=np.uint8), object_color(index, cfg)))


def _trig(degrees: float) -> tuple[float, float]:
    quarter = degrees / 90.0
    if quarter.is_integer():
        return ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))[int(quarter) % 4]
    rad = math.radians(degrees)
    return math.cos(rad), math.sin(rad)


def _draw_object(img: np.ndarray, obj: BevObject, color, cfg: RasterConfig) -> None:
    s = cfg.scale
    c, sn = _trig(obj.orientation)
    hl, hw = obj.length / 2 * s, obj.width / 2 * s
    cx, cy = obj.center_x * s, obj.center_y * s
    reach = abs(hl * c) + abs(hw * sn), abs(hl * sn) + abs(hw * c)
    h, w, _ = img.shape
    x0, x1 = max(0, math.floor(cx - reach[0])), min(w, math.ceil(cx + reach[0]) + 1)
    y0, y1 = max(0, math.floor(cy - reach[1])), min(h, math.ceil(cy + reach[1]) + 1)
    if x0 >= x1 or y0 >= y1:
        return
    px = np.arange(x0, x1, dtype=np.float64) + 0.5 - cx
    py = np.arange(y0, y1, dtype=np.float64) + 0.5 - cy
    dx, dy = np.meshgrid(px, py)
    u = dx * c + dy * sn
    v = -dx * sn + dy * c
    inside = (np.abs(u) <= hl) & (np.abs(v) <= hw)
    edge = inside & ((hl - np.abs(u) < cfg.outline_px) | (hw - np.abs(v) < cfg.outline_px))
    region = img[y0:y1, x0:x1]
    region[inside] = _blend(region[inside], color)
    region[edge] = color


def _stamp(img: np.ndarray, mask: np.ndarray, top: int, left: int, color) -> None:
    h, w, _ = img.shape
    mh, mw = mask.shape
    t0, l0 = max(top, 0), max(left, 0)
    t1, l1 = min(top + mh, h), min(left + mw, w)
    if t0 >= t1 or l0 >= l1:
        return
    sub = mask[t0 - top:t1 - top, l0 - left:l1 - left]
    img[t0:t1, l0:l1][sub] = color


def _draw_axes(img: np.ndarray, cfg: RasterConfig) -> None:
    """Tiny +x (right) and +y (down) arrows in the top-left corner."""
    n, o = 6 * cfg.scale, 4
    h, w, _ = img.shape
    if h < o + n + 4 or w < o + n + 4:
        return
    img[o, o:o + n + 1] = INK
    img[o:o + n + 1, o] = INK
    for k in range(1, 4):
        img[o - k, o + n - k] = INK
        img[o + k, o + n - k] = INK
        img[o + n - k, o - k] = INK
        img[o + n - k, o + k] = INK


def rasterize_array(layout: BevLayout | Scene3D, room: Room, cfg: RasterConfig = RasterConfig()) -> np.ndarray:
    objects = layout.bev_layout().objects if isinstance(layout, Scene3D) else layout.objects
    if not objects:
        raise EmptyLayout("nothing to render")
    w, h = room.max_length * cfg.scale, room.max_width * cfg.scale
    if w * h > cfg.max_pixels:
        raise CanvasTooLarge(f"{w}x{h} canvas exceeds {cfg.max_pixels} pixels")
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = BACKGROUND
    if cfg.draw_axes:
        _draw_axes(img, cfg)
    for i, obj in enumerate(objects):
        _draw_object(img, obj, object_color(i, cfg), cfg)
    if cfg.draw_labels:
        glyph_scale = max(1, cfg.scale // 2)
        for obj in objects:
            mask = text_mask(obj.label, glyph_scale)
            cx, cy = math.floor(obj.center_x * cfg.scale), math.floor(obj.center_y * cfg.scale)
            _stamp(img, mask, cy + 2, cx - mask.shape[1] // 2, INK)
    # room outline on top
    img[0, :] = INK
    img[-1, :] = INK
    img[:, 0] = INK
    img[:, -1] = INK
    return img


def rasterize_bev(layout: BevLayout | Scene3D, room: Room, cfg: RasterConfig = RasterConfig()) -> bytes:
    return encode_png(rasterize_array(layout, room, cfg))

