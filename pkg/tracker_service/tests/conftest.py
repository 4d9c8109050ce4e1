"""Synthetic clip helpers shared by the service tests."""

from __future__ import annotations

import base64

import cv2
import numpy as np


def red_square_clip(n_frames=8, size=(64, 48), square=6, step=5):
    """Frames with a red square marching right; returns (frames, centers)."""
    width, height = size
    frames = []
    centers = []
    for i in range(n_frames):
        frame = np.full((height, width, 3), 90, dtype=np.uint8)
        x = 4 + i * step
        y = height // 2 - square // 2
        frame[y : y + square, x : x + square] = (255, 0, 0)
        frames.append(frame)
        centers.append((x + (square - 1) / 2, y + (square - 1) / 2))
    return frames, centers


def encode_b64_jpeg(frame: np.ndarray, quality=95) -> str:
    ok, buf = cv2.imencode(
        ".jpg", cv2.cvtColor(frame, cv2.COLOR_RGB2BGR), [cv2.IMWRITE_JPEG_QUALITY, quality]
    )
    assert ok
    return base64.b64encode(buf.tobytes()).decode("ascii")
