"""Whole-utterance conversion through a trained checkpoint.

The spectrogram is normalized with the source-domain statistics, tiled into
non-overlapping generator windows under all-ones masks (the final partial
window is padded then cropped), translated, and denormalized with the
target-domain statistics. Output frame count always equals the input's.
"""

from __future__ import annotations

import numpy as np
import torch

from .. import dsp
from ..masking import apply_mask, test_mask
from .trainer import Checkpoint, denormalize, normalize

DIRECTIONS = {
    "whisper_to_normal": ("whisper", "normal", "g_xy"),
    "normal_to_whisper": ("normal", "whisper", "g_yx"),
}


class ConversionError(RuntimeError):
    pass


def _tile_windows(values: np.ndarray, window: int) -> tuple[np.ndarray, int]:
    """Stack (bins, T) into (n, bins, window) with zero right-padding."""
    bins, frames = values.shape
    n = max(1, -(-frames // window))
    padded = np.zeros((bins, n * window), dtype=values.dtype)
    padded[:, :frames] = values
    return np.stack([padded[:, i * window : (i + 1) * window] for i in range(n)]), frames


def convert_features(values: np.ndarray, ckpt: Checkpoint, direction: str) -> np.ndarray:
    """Translate a normalized (bins, T) matrix; shape-preserving."""
    gen_name = _check_direction(direction)[2]
    generator = getattr(ckpt.nets, gen_name)
    generator.eval()
    window = ckpt.window_frames
    tiles, frames = _tile_windows(values, window)
    ones = test_mask(window)
    stacked = np.stack([np.stack([apply_mask(t, ones).masked_input, np.ones_like(t)]) for t in tiles])
    with torch.no_grad():
        out = generator(torch.from_numpy(stacked).float())
    out = out[:, 0].numpy()
    joined = np.concatenate(list(out), axis=1)[:, :frames]
    if not np.all(np.isfinite(joined)):
        raise ConversionError("generator produced non-finite values")
    return joined


def convert_mel(
    spec: dsp.MelSpectrogram, ckpt: Checkpoint, direction: str = "whisper_to_normal"
) -> dsp.MelSpectrogram:
    """Convert a raw log-mel spectrogram end to end; output shape == input."""
    src, dst, _ = _check_direction(direction)
    if spec.values.shape[0] != ckpt.bins and ckpt.feature_mode != "image224":
        raise ConversionError(
            f"checkpoint expects {ckpt.bins} bins, spectrogram has {spec.values.shape[0]}"
        )
    if ckpt.feature_mode == "image224":
        feats = dsp.resize_to_image(spec).values
    else:
        feats = spec.values
    feats = normalize(feats, ckpt.stats[src])
    out = convert_features(feats, ckpt, direction)
    out = denormalize(out, ckpt.stats[dst])
    if ckpt.feature_mode == "image224":
        img = dsp.SpecImage(values=out, source_shape=spec.values.shape, config=spec.config)
        return dsp.resize_from_image(img)
    return dsp.MelSpectrogram(values=out, config=spec.config)


def _check_direction(direction: str):
    if direction not in DIRECTIONS:
        raise ConversionError(
            f"unknown direction {direction!r}, expected one of {sorted(DIRECTIONS)}"
        )
    return DIRECTIONS[direction]
