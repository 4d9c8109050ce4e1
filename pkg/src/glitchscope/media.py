"""Video decoding, windowing and composite stitching.

Frames are numpy arrays of shape (height, width, 3), RGB, uint8. A video is
sampled on a uniform timestamp grid (independent of the native frame rate),
split into fixed-size windows, and each window is stitched into one labeled
grid composite that downstream stages send to vision models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import (
    BadRegionError,
    EmptySequenceError,
    LayoutTooSmallError,
    UnreadableSourceError,
    ZeroLengthError,
)

# Label rendering geometry. Glyphs are a fixed 5x7 bitmap font scaled by
# LABEL_SCALE, drawn as white text over a 2 px black outline at the cell's
# top-left corner. Everything is integer pixel math so tests can mask the
# exact glyph area.
GLYPH_W = 5
GLYPH_H = 7
LABEL_SCALE = 2
LABEL_MARGIN = 4
LABEL_OUTLINE = 2
_GLYPH_GAP = 1  # columns between glyphs, pre-scale

_FONT = {
    "#": ("01010", "01010", "11111", "01010", "11111", "01010", "01010"),
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    "3": ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    "5": ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}

NAMED_REGIONS = {
    "top_left": (0, 0),
    "top_center": (1, 0),
    "top_right": (2, 0),
    "middle_left": (0, 1),
    "center": (1, 1),
    "middle_right": (2, 1),
    "bottom_left": (0, 2),
    "bottom_center": (1, 2),
    "bottom_right": (2, 2),
}


@dataclass(frozen=True)
class FrameSequence:
    """Time-uniform frames: frame i sits at video time i/fps seconds."""

    frames: tuple[np.ndarray, ...]
    fps: float
    source_duration: float

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def frame_size(self) -> tuple[int, int]:
        h, w = self.frames[0].shape[:2]
        return (w, h)


@dataclass(frozen=True)
class Window:
    """A contiguous run of sampled frames; the pipeline's atomic unit."""

    index: int
    frames: tuple[np.ndarray, ...]
    global_frame_range: tuple[int, int]  # inclusive global frame indices

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class StitchedImage:
    """One window rendered as a rows x cols grid with per-cell index labels."""

    pixels: np.ndarray
    rows: int
    cols: int
    labels: list[str]
    window_index: int

    @property
    def cell_size(self) -> tuple[int, int]:
        return (self.pixels.shape[1] // self.cols, self.pixels.shape[0] // self.rows)

    def cell_box(self, m: int) -> tuple[int, int, int, int]:
        """Pixel box (x1, y1, x2, y2), exclusive ends, of grid cell m."""
        cw, ch = self.cell_size
        r, c = divmod(m, self.cols)
        return (c * cw, r * ch, (c + 1) * cw, (r + 1) * ch)

    def label_box(self, m: int) -> tuple[int, int, int, int]:
        """Pixel box covering the label glyphs plus outline of cell m, clipped to the cell."""
        x1, y1, x2, y2 = self.cell_box(m)
        tw, th = _text_size(self.labels[m])
        bx1 = x1 + LABEL_MARGIN - LABEL_OUTLINE
        by1 = y1 + LABEL_MARGIN - LABEL_OUTLINE
        bx2 = min(x1 + LABEL_MARGIN + tw + LABEL_OUTLINE, x2)
        by2 = min(y1 + LABEL_MARGIN + th + LABEL_OUTLINE, y2)
        return (bx1, by1, bx2, by2)


def _text_size(text: str) -> tuple[int, int]:
    n = len(text)
    w = n * GLYPH_W * LABEL_SCALE + (n - 1) * _GLYPH_GAP * LABEL_SCALE
    return (w, GLYPH_H * LABEL_SCALE)


def _render_label(canvas: np.ndarray, x: int, y: int, text: str) -> None:
    """Draw white glyphs over a 2 px black outline, clipped to the canvas."""
    h, w = canvas.shape[:2]
    tw, th = _text_size(text)
    mask = np.zeros((th, tw), dtype=bool)
    cx = 0
    for ch in text:
        glyph = _FONT[ch]
        for gy, row in enumerate(glyph):
            for gx, bit in enumerate(row):
                if bit == "1":
                    ys = gy * LABEL_SCALE
                    xs = cx + gx * LABEL_SCALE
                    mask[ys : ys + LABEL_SCALE, xs : xs + LABEL_SCALE] = True
        cx += (GLYPH_W + _GLYPH_GAP) * LABEL_SCALE

    pad = LABEL_OUTLINE
    outline = np.zeros((th + 2 * pad, tw + 2 * pad), dtype=bool)
    for dy in range(-pad, pad + 1):
        for dx in range(-pad, pad + 1):
            outline[pad + dy : pad + dy + th, pad + dx : pad + dx + tw] |= mask

    for oy in range(outline.shape[0]):
        py = y - pad + oy
        if not 0 <= py < h:
            continue
        for ox in range(outline.shape[1]):
            px = x - pad + ox
            if not 0 <= px < w:
                continue
            if outline[oy, ox]:
                canvas[py, px] = (0, 0, 0)
    for my in range(th):
        py = y + my
        if not 0 <= py < h:
            continue
        for mx in range(tw):
            px = x + mx
            if not 0 <= px < w:
                continue
            if mask[my, mx]:
                canvas[py, px] = (255, 255, 255)


def sample_frames(video_source: str | Path, fps: float) -> FrameSequence:
    """Decode a video at a fixed sampling rate, independent of its native rate.

    One frame is taken per sample timestamp n/fps for every n with
    n/fps < duration; each sample maps to the nearest source frame by
    timestamp.

    Raises:
        UnreadableSourceError: container missing or not decodable.
        ZeroLengthError: no frames sampled.
    """
    if fps <= 0:
        raise ValueError("fps must be > 0")
    path = str(video_source)
    cap = cv2.VideoCapture(path)
    try:
        if not cap.isOpened():
            raise UnreadableSourceError(f"cannot open video source: {path}")
        native_fps = cap.get(cv2.CAP_PROP_FPS)
        frame_count = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        if native_fps <= 0 or frame_count <= 0:
            raise UnreadableSourceError(f"no usable decode metadata for: {path}")
        duration = frame_count / native_fps

        # number of sample timestamps strictly below the duration
        n_samples = max(int(math.ceil(duration * fps - 1e-9)), 0)
        if n_samples == 0:
            raise ZeroLengthError(f"no frames sampled from {path}")

        needed = []
        for n in range(n_samples):
            t = n / fps
            src = int(math.floor(t * native_fps + 0.5))
            needed.append(min(max(src, 0), frame_count - 1))

        frames: list[np.ndarray] = []
        pointer = 0
        pos = 0
        while pointer < len(needed):
            ok, bgr = cap.read()
            if not ok:
                break
            while pointer < len(needed) and needed[pointer] == pos:
                frames.append(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB))
                pointer += 1
            pos += 1
        if pointer < len(needed):
            # metadata promised more frames than the decoder produced; reuse
            # the last decoded frame for the trailing samples
            if not frames:
                raise ZeroLengthError(f"no frames decoded from {path}")
            while pointer < len(needed):
                frames.append(frames[-1].copy())
                pointer += 1
    finally:
        cap.release()

    return FrameSequence(frames=tuple(frames), fps=float(fps), source_duration=duration)


def partition_windows(seq: FrameSequence, k: int) -> list[Window]:
    """Split a frame sequence into non-overlapping k-frame windows in order.

    All windows except possibly the last hold exactly k frames; the trailing
    partial window is kept so glitches near the video end are not dropped.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(seq) == 0:
        raise EmptySequenceError("cannot partition an empty frame sequence")
    windows = []
    for j in range(0, (len(seq) + k - 1) // k):
        start = j * k
        end = min(start + k, len(seq))
        windows.append(
            Window(
                index=j,
                frames=seq.frames[start:end],
                global_frame_range=(start, end - 1),
            )
        )
    return windows


def stitch_window(w: Window, rows: int, cols: int) -> StitchedImage:
    """Compose a window's frames row-major onto a rows x cols grid.

    Cell m holds frame m labeled "#m"; unfilled cells stay solid black.
    """
    if rows * cols < len(w.frames):
        raise LayoutTooSmallError(
            f"layout {rows}x{cols} cannot hold {len(w.frames)} frames"
        )
    fh, fw = w.frames[0].shape[:2]
    for f in w.frames:
        if f.shape[:2] != (fh, fw):
            raise ValueError("window frames must share one size")
    canvas = np.zeros((rows * fh, cols * fw, 3), dtype=np.uint8)
    labels = []
    for m, frame in enumerate(w.frames):
        r, c = divmod(m, cols)
        canvas[r * fh : (r + 1) * fh, c * fw : (c + 1) * fw] = frame
        text = f"#{m}"
        _render_label(canvas, c * fw + LABEL_MARGIN, r * fh + LABEL_MARGIN, text)
        labels.append(text)
    return StitchedImage(
        pixels=canvas, rows=rows, cols=cols, labels=labels, window_index=w.index
    )


def resolve_region(region: str | list | tuple) -> tuple[float, float, float, float]:
    """Turn a named region or fractional box into a validated fractional box."""
    if isinstance(region, str):
        if region not in NAMED_REGIONS:
            raise BadRegionError(f"unknown region name: {region!r}")
        col, row = NAMED_REGIONS[region]
        return (col / 3.0, row / 3.0, (col + 1) / 3.0, (row + 1) / 3.0)
    if isinstance(region, (list, tuple)) and len(region) == 4:
        try:
            x1, y1, x2, y2 = (float(v) for v in region)
        except (TypeError, ValueError):
            raise BadRegionError(f"non-numeric box: {region!r}") from None
        if not (0.0 <= x1 <= 1.0 and 0.0 <= y1 <= 1.0 and 0.0 <= x2 <= 1.0 and 0.0 <= y2 <= 1.0):
            raise BadRegionError(f"box coordinates outside [0, 1]: {region!r}")
        if x1 >= x2 or y1 >= y2:
            raise BadRegionError(f"degenerate box: {region!r}")
        return (x1, y1, x2, y2)
    raise BadRegionError(f"region must be a name or a 4-element box, got {region!r}")


def crop_region(frame: np.ndarray, region: str | list | tuple, zoom_factor: int = 2) -> np.ndarray:
    """Crop a named or fractional region and upscale it (nearest-neighbor)."""
    x1, y1, x2, y2 = resolve_region(region)
    h, w = frame.shape[:2]
    px1 = int(round(x1 * w))
    px2 = int(round(x2 * w))
    py1 = int(round(y1 * h))
    py2 = int(round(y2 * h))
    if px1 >= px2 or py1 >= py2:
        raise BadRegionError(f"box {region!r} collapses to zero pixels at {w}x{h}")
    crop = frame[py1:py2, px1:px2]
    if zoom_factor > 1:
        crop = np.repeat(np.repeat(crop, zoom_factor, axis=0), zoom_factor, axis=1)
    return np.ascontiguousarray(crop)


def encode_jpeg(image: np.ndarray, quality: int = 90) -> bytes:
    """Serialize an RGB frame as JPEG bytes (the wire format for model calls)."""
    ok, buf = cv2.imencode(
        ".jpg", cv2.cvtColor(image, cv2.COLOR_RGB2BGR), [cv2.IMWRITE_JPEG_QUALITY, quality]
    )
    if not ok:
        raise ValueError("JPEG encoding failed")
    return buf.tobytes()


def decode_jpeg(data: bytes) -> np.ndarray:
    bgr = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_COLOR)
    if bgr is None:
        raise ValueError("JPEG decoding failed")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
