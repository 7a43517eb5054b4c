"""Filling-in-frames machinery: training windows, binary frame masks, and
mask application with a mask channel for the generator input.

Masks zero out whole spectrogram columns. The masked frame count is always
exactly round(mask_fraction * window_frames); test-time masks are all ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import MaskConfig


@dataclass
class FrameMask:
    values: np.ndarray  # (window_frames,) float, 1 = keep, 0 = masked

    @property
    def num_masked(self) -> int:
        return int(np.count_nonzero(self.values == 0.0))

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class WindowSample:
    values: np.ndarray  # (bins, window_frames)
    start: int  # column offset into the source spectrogram
    padded_frames: int  # right-padding appended for short utterances


@dataclass
class MaskedWindow:
    window: np.ndarray  # (bins, window_frames) source columns
    mask: FrameMask
    masked_input: np.ndarray  # window with masked columns set to the fill value
    mask_channel: np.ndarray  # mask broadcast to (bins, window_frames)


def sample_window(
    values: np.ndarray,
    cfg: MaskConfig,
    rng: np.random.Generator,
    fill_value: float = 0.0,
) -> WindowSample:
    """Crop a contiguous window of `window_frames` columns at a random start.

    Spectrograms shorter than the window are right-padded with `fill_value`
    (the silence floor in normalized units) and flagged.
    """
    if values.ndim != 2 or values.shape[1] == 0:
        raise ValueError(f"expected a non-empty (bins, frames) matrix, got {values.shape}")
    bins, frames = values.shape
    w = cfg.window_frames
    if frames < w:
        padded = np.full((bins, w), fill_value, dtype=values.dtype)
        padded[:, :frames] = values
        return WindowSample(values=padded, start=0, padded_frames=w - frames)
    start = int(rng.integers(0, frames - w + 1))
    return WindowSample(values=values[:, start : start + w].copy(), start=start, padded_frames=0)


def generate_mask(cfg: MaskConfig, rng: np.random.Generator) -> FrameMask:
    """Draw a training mask with exactly `cfg.masked_frames` zeros.

    non_subsequent scatters the masked positions uniformly without
    replacement; subsequent masks one contiguous block at a random offset.
    """
    w = cfg.window_frames
    k = cfg.masked_frames
    values = np.ones(w)
    if k > 0:
        if cfg.scatter == "non_subsequent":
            positions = rng.choice(w, size=k, replace=False)
        else:
            offset = int(rng.integers(0, w - k + 1))
            positions = np.arange(offset, offset + k)
        values[positions] = 0.0
    return FrameMask(values=values)


def test_mask(window_frames: int) -> FrameMask:
    """The null-effect all-ones mask used at conversion time."""
    if window_frames < 1:
        raise ValueError("window_frames must be >= 1")
    return FrameMask(values=np.ones(window_frames))


def apply_mask(window: np.ndarray, mask: FrameMask, fill_value: float = 0.0) -> MaskedWindow:
    """Zero masked columns and attach the mask as a second channel.

    Unmasked columns are copied bit-exactly; masked columns become exactly
    `fill_value`, so the network can tell masked silence from real silence
    through the mask channel.
    """
    if window.ndim != 2 or window.shape[1] != len(mask):
        raise ValueError(f"mask length {len(mask)} does not match window shape {window.shape}")
    keep = mask.values[None, :]
    masked_input = np.where(keep == 1.0, window, fill_value)
    mask_channel = np.broadcast_to(mask.values, window.shape).copy()
    return MaskedWindow(
        window=window, mask=mask, masked_input=masked_input, mask_channel=mask_channel
    )
