"""Waveform synthesis from converted spectrograms.

A pretrained neural vocoder is loaded through an adapter with sidecar
metadata; any mismatch between its expected mel configuration and the
pipeline's is a hard error, never a silent resample. Griffin-Lim is the
zero-asset fallback so the pipeline and tests run without downloads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from . import dsp
from .config import VocoderConfig

BACKENDS = ("pretrained_neural", "griffin_lim")


class VocoderContractError(RuntimeError):
    """Adapter and spectrogram configs disagree."""


@dataclass
class VocoderAdapter:
    backend: str
    expected_mel_bins: int
    expected_sample_rate: int
    model: Optional[torch.nn.Module] = None
    griffin_lim_iterations: int = 60


def load_adapter(cfg: VocoderConfig, mel_bins: int, sample_rate: int) -> VocoderAdapter:
    """Build the vocoder adapter for the pipeline's mel configuration.

    The neural backend expects `model_path` (TorchScript) plus a JSON
    sidecar `<model_path>.json` declaring mel_bins and sample_rate.
    """
    if cfg.backend == "griffin_lim":
        return VocoderAdapter(
            backend="griffin_lim",
            expected_mel_bins=mel_bins,
            expected_sample_rate=sample_rate,
            griffin_lim_iterations=cfg.griffin_lim_iterations,
        )
    if cfg.backend != "pretrained_neural":
        raise ValueError(f"unknown vocoder backend {cfg.backend!r}, expected one of {BACKENDS}")
    if not cfg.model_path:
        raise VocoderContractError("pretrained_neural backend requires model_path")
    sidecar = Path(str(cfg.model_path) + ".json")
    if not sidecar.exists():
        raise VocoderContractError(f"missing vocoder metadata sidecar: {sidecar}")
    meta = json.loads(sidecar.read_text(encoding="utf-8"))
    if meta.get("mel_bins") != mel_bins or meta.get("sample_rate") != sample_rate:
        raise VocoderContractError(
            f"vocoder expects mel_bins={meta.get('mel_bins')} sample_rate="
            f"{meta.get('sample_rate')}, pipeline uses mel_bins={mel_bins} "
            f"sample_rate={sample_rate}"
        )
    model = torch.jit.load(str(cfg.model_path), map_location="cpu")
    model.eval()
    return VocoderAdapter(
        backend="pretrained_neural",
        expected_mel_bins=mel_bins,
        expected_sample_rate=sample_rate,
        model=model,
    )


def vocode(spec: dsp.MelSpectrogram, adapter: VocoderAdapter) -> dsp.Waveform:
    """Synthesize audio; duration is num_frames * shift within one frame."""
    cfg = spec.config
    if spec.values.shape[0] != adapter.expected_mel_bins:
        raise VocoderContractError(
            f"spectrogram has {spec.values.shape[0]} mel bins, adapter expects "
            f"{adapter.expected_mel_bins}"
        )
    if cfg.sample_rate != adapter.expected_sample_rate:
        raise VocoderContractError(
            f"spectrogram rate {cfg.sample_rate} != adapter rate {adapter.expected_sample_rate}"
        )
    if adapter.backend == "griffin_lim":
        w = dsp.griffin_lim(spec, iterations=adapter.griffin_lim_iterations)
    else:
        with torch.no_grad():
            samples = adapter.model(torch.from_numpy(spec.values).float()[None])
        samples = samples.squeeze().numpy().astype(np.float64)
        peak = np.max(np.abs(samples)) if samples.size else 0.0
        if peak > 1.0:  # scale into [-1, 1]; quiet outputs stay quiet
            samples = samples / peak
        w = dsp.Waveform(samples=samples, sample_rate=cfg.sample_rate)
    if not np.all(np.isfinite(w.samples)):
        raise RuntimeError("vocoder produced non-finite samples")
    target = spec.num_frames * cfg.shift_len
    if abs(len(w) - target) > cfg.frame_len:
        # Length comes out of overlap-add arithmetic; pad/crop to the contract.
        w = dsp.Waveform(samples=_fit_length(w.samples, target), sample_rate=w.sample_rate)
    return w


def _fit_length(x: np.ndarray, target: int) -> np.ndarray:
    if len(x) >= target:
        return x[:target]
    return np.pad(x, (0, target - len(x)))
