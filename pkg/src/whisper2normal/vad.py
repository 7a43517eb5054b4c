"""Voice activity detection from band-energy ratio and zero-crossing rate.

Per frame, the ratio of spectral energy inside the speech band to total
energy decides speech/non-speech against a style-dependent threshold
(0.6 for normal speech, 0.2 for whisper). The zero-crossing rate, compared
to reference values of roughly 12 (voiced) and 50 (unvoiced) crossings per
10 ms, assigns the voiced/unvoiced sublabel. Speech decisions are smoothed
with a 0.5 s median filter before trimming utterance edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import AnalysisConfig, VadConfig
from .dsp import TooShortError, Waveform, _hann, frame_signal

RATIO_EPS = 1e-12
SILENT_TOTAL_ENERGY = 1e-20


@dataclass
class VadLabels:
    speech: np.ndarray  # (num_frames,) bool
    zcr_class: np.ndarray  # (num_frames,) 'v'/'u' from ZCR alone
    config: VadConfig
    shift_s: float  # frame shift in seconds, fixed by the analysis config

    @property
    def voicing(self) -> np.ndarray:
        """'v'/'u' on speech frames, 'n' elsewhere."""
        return np.where(self.speech, self.zcr_class, "n")

    def to_chars(self) -> str:
        return "".join(self.voicing)

    def __len__(self) -> int:
        return len(self.speech)


def zero_crossing_rate(frame: np.ndarray) -> int:
    """Count adjacent sign changes; zero counts as positive."""
    if len(frame) < 2:
        raise ValueError(f"frame of {len(frame)} samples is too short for ZCR")
    signs = frame >= 0
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def zcr_per_10ms(frame: np.ndarray, sample_rate: int) -> float:
    return zero_crossing_rate(frame) * (0.010 * sample_rate) / len(frame)


def band_energy_ratio(frame: np.ndarray, cfg: VadConfig, analysis: AnalysisConfig) -> float:
    """Energy in [band_low, band_high] over total spectral energy, in [0, 1]."""
    if len(frame) < 2:
        raise ValueError(f"frame of {len(frame)} samples is too short")
    spec = np.fft.rfft(frame * _hann(len(frame)), n=analysis.fft_size)
    power = np.abs(spec) ** 2
    total = power.sum()
    if total < SILENT_TOTAL_ENERGY:
        return 0.0
    freqs = np.fft.rfftfreq(analysis.fft_size, d=1.0 / analysis.sample_rate)
    band = (freqs >= cfg.band_low) & (freqs <= cfg.band_high)
    return float(power[band].sum() / (total + RATIO_EPS))


def classify(w: Waveform, style: str, cfg: VadConfig, analysis: AnalysisConfig) -> VadLabels:
    """Label every analysis frame of `w` and median-smooth the speech track."""
    threshold = cfg.threshold(style)
    try:
        frames = frame_signal(w.samples, analysis.frame_len, analysis.shift_len)
    except TooShortError as exc:
        raise TooShortError(f"utterance too short for VAD: {exc}") from exc

    win = _hann(analysis.frame_len)
    spec = np.fft.rfft(frames * win, n=analysis.fft_size, axis=1)
    power = np.abs(spec) ** 2
    total = power.sum(axis=1)
    freqs = np.fft.rfftfreq(analysis.fft_size, d=1.0 / analysis.sample_rate)
    band = (freqs >= cfg.band_low) & (freqs <= cfg.band_high)
    ratios = np.where(
        total < SILENT_TOTAL_ENERGY, 0.0, power[:, band].sum(axis=1) / (total + RATIO_EPS)
    )

    signs = frames >= 0
    crossings = np.count_nonzero(signs[:, 1:] != signs[:, :-1], axis=1)
    zcr = crossings * (0.010 * analysis.sample_rate) / analysis.frame_len
    zcr_class = np.where(zcr < cfg.zcr_boundary, "v", "u")

    labels = VadLabels(
        speech=ratios > threshold,
        zcr_class=zcr_class,
        config=cfg,
        shift_s=analysis.shift_len / analysis.sample_rate,
    )
    return median_smooth(labels)


def _median_pass(speech: np.ndarray, window: int) -> np.ndarray:
    """One windowed-majority pass; edge windows shrink, ties keep the label."""
    h = window // 2
    n = len(speech)
    cumsum = np.concatenate(([0], np.cumsum(speech.astype(np.int64))))
    lo = np.maximum(np.arange(n) - h, 0)
    hi = np.minimum(np.arange(n) + h + 1, n)
    ones = cumsum[hi] - cumsum[lo]
    zeros = (hi - lo) - ones
    out = speech.copy()
    out[ones > zeros] = True
    out[zeros > ones] = False
    return out


def median_smooth(labels: VadLabels) -> VadLabels:
    """Median-filter the speech labels to a fixpoint.

    A single windowed-majority pass is not idempotent in general (the window
    count can hover around the majority threshold), so passes repeat until
    the labels stop changing. Convergence is fast in practice; the pass count
    is bounded by the label length as a hard stop.
    """
    if len(labels) == 0:
        raise ValueError("cannot smooth empty labels")
    window = labels.config.median_window_frames(labels.shift_s)
    speech = labels.speech.astype(bool)
    for _ in range(len(speech)):
        smoothed = _median_pass(speech, window)
        if np.array_equal(smoothed, speech):
            break
        speech = smoothed
    return VadLabels(
        speech=speech, zcr_class=labels.zcr_class, config=labels.config, shift_s=labels.shift_s
    )


@dataclass
class TrimResult:
    waveform: Waveform
    start_sample: int
    end_sample: int
    no_speech: bool  # no speech found; waveform returned unchanged


def trim_silence(w: Waveform, labels: VadLabels, analysis: AnalysisConfig) -> TrimResult:
    """Drop leading/trailing non-speech frames; interior non-speech stays."""
    speech_idx = np.flatnonzero(labels.speech)
    if len(speech_idx) == 0:
        return TrimResult(waveform=w, start_sample=0, end_sample=len(w), no_speech=True)
    start = int(speech_idx[0]) * analysis.shift_len
    if speech_idx[-1] == len(labels) - 1:
        end = len(w)  # keep the sub-frame tail no frame covers
    else:
        end = min(int(speech_idx[-1]) * analysis.shift_len + analysis.frame_len, len(w))
    return TrimResult(
        waveform=Waveform(samples=w.samples[start:end], sample_rate=w.sample_rate),
        start_sample=start,
        end_sample=end,
        no_speech=False,
    )
