"""Frame sampling, windowing, stitching and cropping."""

from __future__ import annotations

import numpy as np
import pytest

from glitchscope import media
from glitchscope.errors import (
    BadRegionError,
    EmptySequenceError,
    LayoutTooSmallError,
    UnreadableSourceError,
    ZeroLengthError,
)

from conftest import write_video


def _random_frames(n, h=24, w=32, seed=0):
    rng = np.random.default_rng(seed)
    return tuple(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8) for _ in range(n))


def _seq(frames, fps=4.0):
    return media.FrameSequence(
        frames=tuple(frames), fps=fps, source_duration=len(frames) / fps
    )


class TestSampleFrames:
    def test_ten_second_video_at_4fps_yields_40_frames(self, tmp_path):
        path = tmp_path / "ten.avi"
        write_video(path, duration_s=10.0)
        seq = media.sample_frames(path, fps=4.0)
        assert len(seq) == 40
        assert seq.fps == 4.0
        assert seq.source_duration == pytest.approx(10.0)

    def test_sixty_second_video_yields_240_frames(self, tmp_path):
        path = tmp_path / "sixty.avi"
        write_video(path, duration_s=60.0, moving_square=False)
        seq = media.sample_frames(path, fps=4.0)
        assert len(seq) == 240

    def test_tenth_second_video_yields_one_frame(self, tmp_path):
        path = tmp_path / "tiny.avi"
        write_video(path, duration_s=0.1, native_fps=30.0)
        seq = media.sample_frames(path, fps=4.0)
        assert len(seq) == 1

    def test_unreadable_source(self, tmp_path):
        bogus = tmp_path / "not_a_video.avi"
        bogus.write_bytes(b"this is not a container")
        with pytest.raises(UnreadableSourceError):
            media.sample_frames(bogus, fps=4.0)

    def test_missing_file(self, tmp_path):
        with pytest.raises(UnreadableSourceError):
            media.sample_frames(tmp_path / "missing.avi", fps=4.0)

    def test_frame_count_monotone_in_duration_and_fps(self, tmp_path):
        counts = {}
        for dur in (2.0, 4.0, 6.0):
            path = tmp_path / f"d{dur}.avi"
            write_video(path, duration_s=dur, moving_square=False)
            for fps in (2.0, 4.0):
                counts[(dur, fps)] = len(media.sample_frames(path, fps=fps))
        assert counts[(2.0, 2.0)] <= counts[(4.0, 2.0)] <= counts[(6.0, 2.0)]
        assert counts[(2.0, 2.0)] <= counts[(2.0, 4.0)]
        assert counts[(4.0, 2.0)] <= counts[(4.0, 4.0)]

    def test_sampling_is_timestamp_based_not_native_rate(self, tmp_path):
        # same duration at different native rates gives the same sample count
        a, b = tmp_path / "a.avi", tmp_path / "b.avi"
        write_video(a, duration_s=5.0, native_fps=8.0)
        write_video(b, duration_s=5.0, native_fps=24.0)
        assert len(media.sample_frames(a, 4.0)) == len(media.sample_frames(b, 4.0)) == 20


class TestPartitionWindows:
    def test_240_frames_k8_gives_30_full_windows(self):
        seq = _seq(_random_frames(240))
        windows = media.partition_windows(seq, k=8)
        assert len(windows) == 30
        assert all(len(w) == 8 for w in windows)

    def test_41_frames_k8_gives_6_windows_last_holds_1(self):
        seq = _seq(_random_frames(41))
        windows = media.partition_windows(seq, k=8)
        assert len(windows) == 6
        assert [len(w) for w in windows] == [8, 8, 8, 8, 8, 1]
        assert windows[5].global_frame_range == (40, 40)

    def test_exactly_one_window(self):
        seq = _seq(_random_frames(8))
        windows = media.partition_windows(seq, k=8)
        assert len(windows) == 1
        assert windows[0].global_frame_range == (0, 7)

    def test_empty_sequence(self):
        seq = media.FrameSequence(frames=(), fps=4.0, source_duration=0.0)
        with pytest.raises(EmptySequenceError):
            media.partition_windows(seq, k=8)

    @pytest.mark.parametrize("n,k", [(17, 4), (64, 8), (33, 16), (5, 5)])
    def test_round_trip_concatenation(self, n, k):
        seq = _seq(_random_frames(n, seed=n))
        windows = media.partition_windows(seq, k=k)
        rebuilt = [f for w in windows for f in w.frames]
        assert len(rebuilt) == n
        for orig, back in zip(seq.frames, rebuilt):
            assert np.array_equal(orig, back)

    def test_windows_cover_in_order_without_overlap(self):
        seq = _seq(_random_frames(29))
        windows = media.partition_windows(seq, k=8)
        expected_start = 0
        for w in windows:
            a, b = w.global_frame_range
            assert a == expected_start
            assert b - a + 1 == len(w.frames)
            expected_start = b + 1
        assert expected_start == 29

    def test_window_time_span_at_default_config(self):
        # window j at fps=4, k=8 spans [2j, 2j+2) seconds
        seq = _seq(_random_frames(64), fps=4.0)
        for w in media.partition_windows(seq, k=8):
            a, _ = w.global_frame_range
            assert a / seq.fps == 2.0 * w.index


class TestStitchWindow:
    def test_eight_480x270_frames_on_2x4_grid(self):
        frames = _random_frames(8, h=270, w=480)
        w = media.Window(index=0, frames=frames, global_frame_range=(0, 7))
        img = media.stitch_window(w, rows=2, cols=4)
        assert img.pixels.shape == (540, 1920, 3)
        assert img.labels == [f"#{m}" for m in range(8)]

    def test_partial_window_leaves_black_cells(self):
        frames = _random_frames(1, h=40, w=40)
        w = media.Window(index=3, frames=frames, global_frame_range=(24, 24))
        img = media.stitch_window(w, rows=2, cols=4)
        for m in range(1, 8):
            x1, y1, x2, y2 = img.cell_box(m)
            assert not img.pixels[y1:y2, x1:x2].any(), f"cell {m} should be black"

    def test_solid_color_preserved_outside_labels(self):
        red = np.zeros((40, 40, 3), dtype=np.uint8)
        red[:, :] = (255, 0, 0)
        w = media.Window(index=0, frames=(red,) * 8, global_frame_range=(0, 7))
        img = media.stitch_window(w, rows=2, cols=4)
        for m in range(8):
            x1, y1, x2, y2 = img.cell_box(m)
            cell = img.pixels[y1:y2, x1:x2].copy()
            lx1, ly1, lx2, ly2 = img.label_box(m)
            mask = np.ones(cell.shape[:2], dtype=bool)
            mask[ly1 - y1 : ly2 - y1, lx1 - x1 : lx2 - x1] = False
            assert (cell[mask] == (255, 0, 0)).all()

    def test_layout_too_small(self):
        frames = _random_frames(5)
        w = media.Window(index=0, frames=frames, global_frame_range=(0, 4))
        with pytest.raises(LayoutTooSmallError):
            media.stitch_window(w, rows=2, cols=2)

    @pytest.mark.parametrize("k,rows,cols", [(4, 1, 4), (4, 2, 2), (8, 2, 4), (16, 4, 4)])
    def test_stitch_then_crop_cell_recovers_frame(self, k, rows, cols):
        frames = _random_frames(k, h=30, w=42, seed=k)
        w = media.Window(index=0, frames=frames, global_frame_range=(0, k - 1))
        img = media.stitch_window(w, rows=rows, cols=cols)
        for m in range(k):
            box = (
                (m % cols) / cols,
                (m // cols) / rows,
                (m % cols + 1) / cols,
                (m // cols + 1) / rows,
            )
            crop = media.crop_region(img.pixels, list(box), zoom_factor=1)
            lx1, ly1, lx2, ly2 = img.label_box(m)
            x1, y1, _, _ = img.cell_box(m)
            mask = np.ones(crop.shape[:2], dtype=bool)
            mask[ly1 - y1 : ly2 - y1, lx1 - x1 : lx2 - x1] = False
            assert np.array_equal(crop[mask], frames[m][mask])


class TestCropRegion:
    def test_bottom_center_of_900_square(self):
        frame = np.arange(900 * 900 * 3, dtype=np.int64).reshape(900, 900, 3)
        frame = (frame % 256).astype(np.uint8)
        out = media.crop_region(frame, "bottom_center", zoom_factor=2)
        assert out.shape == (600, 600, 3)
        expected = frame[600:900, 300:600]
        expected = np.repeat(np.repeat(expected, 2, axis=0), 2, axis=1)
        assert np.array_equal(out, expected)

    def test_full_frame_box_is_identity_at_2x(self):
        frame = _random_frames(1, h=20, w=30)[0]
        out = media.crop_region(frame, [0, 0, 1, 1], zoom_factor=2)
        assert out.shape == (40, 60, 3)
        assert np.array_equal(out[::2, ::2], frame)

    def test_degenerate_box_rejected(self):
        frame = _random_frames(1)[0]
        with pytest.raises(BadRegionError):
            media.crop_region(frame, [0.5, 0.5, 0.5, 0.9])

    def test_unknown_name_rejected(self):
        frame = _random_frames(1)[0]
        with pytest.raises(BadRegionError):
            media.crop_region(frame, "upper_middle")

    def test_out_of_range_box_rejected(self):
        frame = _random_frames(1)[0]
        with pytest.raises(BadRegionError):
            media.crop_region(frame, [0.0, 0.0, 1.2, 1.0])

    def test_all_named_regions_tile_the_frame(self):
        frame = _random_frames(1, h=90, w=90)[0]
        seen = np.zeros((90, 90), dtype=int)
        for name in media.NAMED_REGIONS:
            x1, y1, x2, y2 = media.resolve_region(name)
            seen[int(y1 * 90) : int(y2 * 90), int(x1 * 90) : int(x2 * 90)] += 1
        assert (seen == 1).all()


class TestJpegRoundTrip:
    def test_encode_decode_shape(self):
        frame = _random_frames(1, h=48, w=64)[0]
        data = media.encode_jpeg(frame)
        back = media.decode_jpeg(data)
        assert back.shape == frame.shape

    def test_encode_deterministic(self):
        frame = _random_frames(1)[0]
        assert media.encode_jpeg(frame) == media.encode_jpeg(frame)
