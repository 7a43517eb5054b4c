"""Audio I/O, framing, log-mel analysis, image resizing, and Griffin-Lim.

All analysis uses left-aligned frames (no centering): frame i covers samples
[i * shift, i * shift + frame_len), giving
num_frames = 1 + floor((num_samples - frame_len) / shift_len).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.io.wavfile
import scipy.signal
import torch

from .config import AnalysisConfig, _from_dict, config_hash, config_to_dict

PIPELINE_SAMPLE_RATE = 22050
IMAGE_SIZE = 224


class AudioLoadError(RuntimeError):
    """A WAV file could not be read or decoded."""


class TooShortError(ValueError):
    """Signal shorter than a single analysis frame."""


@dataclass
class Waveform:
    samples: np.ndarray  # float64 mono, |x| <= 1
    sample_rate: int

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class MelSpectrogram:
    values: np.ndarray  # (mel_bins, num_frames) log-amplitudes
    config: AnalysisConfig
    stats: Optional[dict] = None  # per-bin {'mean': ..., 'std': ...}

    @property
    def num_frames(self) -> int:
        return self.values.shape[1]


@dataclass
class SpecImage:
    values: np.ndarray  # (IMAGE_SIZE, IMAGE_SIZE)
    source_shape: tuple[int, int]
    config: AnalysisConfig
    normalization: Optional[dict] = None


def load_audio(path: str | Path, sample_rate: int = PIPELINE_SAMPLE_RATE) -> Waveform:
    """Load a PCM WAV as mono float at the pipeline rate, peak-normalized.

    Silent signals are passed through unscaled so normalization never
    divides by zero.
    """
    try:
        rate, data = scipy.io.wavfile.read(str(path))
    except Exception as exc:
        raise AudioLoadError(f"cannot read WAV {path}: {exc}") from exc
    raw = np.asarray(data)
    x = raw.astype(np.float64)
    if x.ndim == 2:
        x = x.mean(axis=1)
    if np.issubdtype(raw.dtype, np.integer):
        x = x / float(np.iinfo(raw.dtype).max)
    if rate != sample_rate:
        g = np.gcd(int(sample_rate), int(rate))
        x = scipy.signal.resample_poly(x, sample_rate // g, rate // g)
    peak = np.max(np.abs(x)) if len(x) else 0.0
    if peak > 0:
        x = x / peak
    return Waveform(samples=x, sample_rate=sample_rate)


def save_audio(path: str | Path, w: Waveform) -> None:
    """Write a waveform as 16-bit PCM WAV."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    x = np.clip(w.samples, -1.0, 1.0)
    scipy.io.wavfile.write(str(path), w.sample_rate, (x * 32767.0).astype(np.int16))


def frame_count(num_samples: int, frame_len: int, shift_len: int) -> int:
    if num_samples < frame_len:
        return 0
    return 1 + (num_samples - frame_len) // shift_len


def frame_signal(x: np.ndarray, frame_len: int, shift_len: int) -> np.ndarray:
    """Slice a 1-D signal into (num_frames, frame_len) left-aligned frames."""
    n = frame_count(len(x), frame_len, shift_len)
    if n == 0:
        raise TooShortError(
            f"signal of {len(x)} samples is shorter than one frame ({frame_len})"
        )
    idx = shift_len * np.arange(n)[:, None] + np.arange(frame_len)[None, :]
    return x[idx]


def _hann(frame_len: int) -> np.ndarray:
    return scipy.signal.get_window("hann", frame_len, fftbins=True)


def stft(x: np.ndarray, cfg: AnalysisConfig) -> np.ndarray:
    """Complex STFT, shape (fft_size // 2 + 1, num_frames)."""
    frames = frame_signal(x, cfg.frame_len, cfg.shift_len) * _hann(cfg.frame_len)
    return np.fft.rfft(frames, n=cfg.fft_size, axis=1).T


def istft(spec: np.ndarray, cfg: AnalysisConfig, num_samples: Optional[int] = None) -> np.ndarray:
    """Windowed overlap-add inverse of :func:`stft`."""
    frame_len, shift = cfg.frame_len, cfg.shift_len
    win = _hann(frame_len)
    frames = np.fft.irfft(spec.T, n=cfg.fft_size, axis=1)[:, :frame_len]
    n = shift * (spec.shape[1] - 1) + frame_len
    out = np.zeros(n)
    norm = np.zeros(n)
    for i in range(spec.shape[1]):
        out[i * shift : i * shift + frame_len] += frames[i] * win
        norm[i * shift : i * shift + frame_len] += win**2
    out = out / np.maximum(norm, 1e-10)
    return out[:num_samples] if num_samples is not None else out


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: AnalysisConfig) -> np.ndarray:
    """Triangular mel filterbank, shape (mel_bins, fft_size // 2 + 1)."""
    n_bins = cfg.fft_size // 2 + 1
    freqs = np.linspace(0.0, cfg.sample_rate / 2.0, n_bins)
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax_hz), cfg.mel_bins + 2))
    fb = np.zeros((cfg.mel_bins, n_bins))
    for m in range(cfg.mel_bins):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (freqs - lo) / max(center - lo, 1e-10)
        falling = (hi - freqs) / max(hi - center, 1e-10)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def mel_spectrogram(w: Waveform, cfg: AnalysisConfig) -> MelSpectrogram:
    """Log-mel magnitude spectrogram; every value is >= log(log_floor)."""
    if w.sample_rate != cfg.sample_rate:
        raise ValueError(
            f"waveform rate {w.sample_rate} does not match analysis rate {cfg.sample_rate}"
        )
    mag = np.abs(stft(w.samples, cfg))
    mel = mel_filterbank(cfg) @ mag
    return MelSpectrogram(values=np.log(np.maximum(mel, cfg.log_floor)), config=cfg)


def _resize(values: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resample of a 2-D field onto a (rows, cols) grid."""
    t = torch.from_numpy(np.ascontiguousarray(values, dtype=np.float64))[None, None]
    out = torch.nn.functional.interpolate(t, size=shape, mode="bilinear", align_corners=True)
    return out[0, 0].numpy()


def resize_to_image(spec: MelSpectrogram, size: int = IMAGE_SIZE) -> SpecImage:
    if spec.values.size == 0:
        raise ValueError("cannot resize an empty spectrogram")
    return SpecImage(
        values=_resize(spec.values, (size, size)),
        source_shape=spec.values.shape,
        config=spec.config,
        normalization=spec.stats,
    )


def resize_from_image(img: SpecImage) -> MelSpectrogram:
    values = _resize(img.values, img.source_shape)
    return MelSpectrogram(values=values, config=img.config, stats=img.normalization)


def mel_to_linear(mel_values: np.ndarray, cfg: AnalysisConfig) -> np.ndarray:
    """Approximate linear-frequency magnitudes from log-mel via pseudo-inverse."""
    fb = mel_filterbank(cfg)
    mag = np.linalg.pinv(fb) @ np.exp(mel_values)
    return np.maximum(mag, 0.0)


def griffin_lim(spec: MelSpectrogram, iterations: int = 60, seed: int = 0) -> Waveform:
    """Reconstruct a waveform from a log-mel spectrogram by phase iteration."""
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    cfg = spec.config
    mag = mel_to_linear(spec.values, cfg)
    rng = np.random.default_rng(seed)
    angles = np.exp(2j * np.pi * rng.random(mag.shape))
    x = istft(mag * angles, cfg)
    for _ in range(iterations):
        rebuilt = stft(x, cfg)
        phase = rebuilt / np.maximum(np.abs(rebuilt), 1e-10)
        x = istft(mag * phase, cfg)
    # Drop the partial-overlap edges: their tiny window sums amplify the
    # inconsistent iterate into spikes. Stays within one frame of T * shift.
    edge = cfg.frame_len - cfg.shift_len
    if len(x) > 2 * edge:
        x = x[edge:-edge] if edge else x
    peak = np.max(np.abs(x))
    if peak > 1.0:  # scale into [-1, 1]; quiet reconstructions stay quiet
        x = x / peak
    return Waveform(samples=x, sample_rate=cfg.sample_rate)


def save_mel(path: str | Path, spec: MelSpectrogram) -> None:
    """Persist a spectrogram with its analysis config and config hash."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    header = {
        "dims": list(spec.values.shape),
        "dtype": str(spec.values.dtype),
        "config": config_to_dict(spec.config),
        "config_hash": config_hash(spec.config),
        "stats": _stats_to_json(spec.stats),
    }
    with open(path, "wb") as fh:  # explicit handle keeps the exact path (.npz not appended)
        np.savez(
            fh,
            values=spec.values,
            header=np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8),
        )


def load_mel(path: str | Path) -> MelSpectrogram:
    with np.load(str(path)) as data:
        header = json.loads(bytes(data["header"]).decode("utf-8"))
        values = data["values"]
    cfg = _from_dict(AnalysisConfig, header["config"])
    if config_hash(cfg) != header["config_hash"]:
        raise ValueError(f"config hash mismatch in {path}")
    stats = header.get("stats")
    if stats is not None:
        stats = {k: np.asarray(v) for k, v in stats.items()}
    return MelSpectrogram(values=values, config=cfg, stats=stats)


def _stats_to_json(stats: Optional[dict]) -> Optional[dict]:
    if stats is None:
        return None
    return {k: np.asarray(v).tolist() for k, v in stats.items()}
