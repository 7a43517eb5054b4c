"""Configuration dataclasses, YAML round-tripping, and dotted-path overrides.

Every pipeline run resolves its full configuration up front and persists it
next to the run's outputs, so experiments stay reproducible from the artifact
alone.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml


class ConfigError(ValueError):
    """Raised for invalid or inconsistent configuration values."""


@dataclass
class AnalysisConfig:
    """Framing and log-mel analysis settings (20 ms frames, 5 ms shift)."""

    sample_rate: int = 22050
    frame_ms: float = 20.0
    shift_ms: float = 5.0
    fft_size: int = 1024
    mel_bins: int = 80
    fmin: float = 0.0
    fmax: Optional[float] = None  # None -> Nyquist
    log_floor: float = 1e-5

    @property
    def frame_len(self) -> int:
        return int(round(self.frame_ms * self.sample_rate / 1000.0))

    @property
    def shift_len(self) -> int:
        return int(round(self.shift_ms * self.sample_rate / 1000.0))

    @property
    def fmax_hz(self) -> float:
        return self.sample_rate / 2.0 if self.fmax is None else self.fmax

    def validate(self) -> "AnalysisConfig":
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.frame_len < 2:
            raise ConfigError("frame length must be at least 2 samples")
        if self.shift_len < 1:
            raise ConfigError("frame shift must be at least 1 sample")
        if self.fft_size < self.frame_len:
            raise ConfigError(
                f"fft_size {self.fft_size} is smaller than the frame length {self.frame_len}"
            )
        if self.mel_bins < 1:
            raise ConfigError("mel_bins must be >= 1")
        if not (0 <= self.fmin < self.fmax_hz <= self.sample_rate / 2.0 + 1e-9):
            raise ConfigError(
                f"need 0 <= fmin < fmax <= Nyquist, got fmin={self.fmin} fmax={self.fmax_hz}"
            )
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be a small positive amplitude")
        return self


@dataclass
class VadConfig:
    """Band-energy-ratio / zero-crossing voice activity detector settings.

    Ratio thresholds differ per speaking style; the ZCR references are
    crossings per 10 ms of clean speech and their midpoint is the
    voiced/unvoiced decision boundary.
    """

    band_low: float = 300.0
    band_high: float = 3400.0
    ratio_threshold_normal: float = 0.6
    ratio_threshold_whisper: float = 0.2
    zcr_voiced_ref: float = 12.0
    zcr_unvoiced_ref: float = 50.0
    median_window_s: float = 0.5
    enabled: bool = True

    @property
    def zcr_boundary(self) -> float:
        return (self.zcr_voiced_ref + self.zcr_unvoiced_ref) / 2.0

    def threshold(self, style: str) -> float:
        if style == "normal":
            return self.ratio_threshold_normal
        if style == "whisper":
            return self.ratio_threshold_whisper
        raise ConfigError(f"unknown style {style!r}, expected 'whisper' or 'normal'")

    def median_window_frames(self, shift_s: float) -> int:
        n = int(round(self.median_window_s / shift_s))
        return n if n % 2 == 1 else n + 1

    def validate(self, nyquist: float) -> "VadConfig":
        for name, t in (
            ("ratio_threshold_normal", self.ratio_threshold_normal),
            ("ratio_threshold_whisper", self.ratio_threshold_whisper),
        ):
            if not 0.0 < t < 1.0:
                raise ConfigError(f"{name} must be in (0, 1), got {t}")
        if not 0.0 <= self.band_low < self.band_high <= nyquist + 1e-9:
            raise ConfigError(
                f"need 0 <= band_low < band_high <= Nyquist, got [{self.band_low}, {self.band_high}]"
            )
        if self.median_window_s <= 0:
            raise ConfigError("median_window_s must be positive")
        return self


@dataclass
class MaskConfig:
    """Filling-in-frames mask parameters (proposed: 128-frame window, 50%)."""

    window_frames: int = 128
    mask_fraction: float = 0.5
    scatter: str = "non_subsequent"  # or "subsequent": one contiguous block
    seed: int = 0

    @property
    def masked_frames(self) -> int:
        return int(round(self.mask_fraction * self.window_frames))

    def validate(self) -> "MaskConfig":
        if self.window_frames < 1:
            raise ConfigError("window_frames must be >= 1")
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise ConfigError("mask_fraction must be in [0, 1]")
        if self.scatter not in ("non_subsequent", "subsequent"):
            raise ConfigError(f"unknown scatter mode {self.scatter!r}")
        return self


@dataclass
class ModelConfig:
    """Width/depth of the translation networks and discriminators."""

    base_channels: int = 64
    residual_blocks: int = 6
    disc_channels: int = 64
    disc_layers: int = 3


@dataclass
class TrainConfig:
    epochs: int = 400
    batch_size: int = 1
    g_lr: float = 2e-4
    d_lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    lambda_cycle: float = 10.0
    lambda_identity: float = 5.0
    identity_stop_iter: int = 10000
    checkpoint_every_epochs: int = 50
    feature_mode: str = "image224"  # or "native": raw mel_bins x frames
    seed: int = 0
    single_threaded: bool = True
    mask: MaskConfig = field(default_factory=MaskConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lambda_cycle <= 0:
            raise ConfigError("lambda_cycle must be > 0")
        if self.lambda_identity < 0:
            raise ConfigError("lambda_identity must be >= 0")
        if self.feature_mode not in ("image224", "native"):
            raise ConfigError(f"unknown feature_mode {self.feature_mode!r}")
        self.mask.validate()
        return self


@dataclass
class CorpusConfig:
    root: str = ""
    site_filter: Optional[str] = "US"
    # Applied to the filename stem; must bind speaker, style and utterance.
    stem_regex: str = r"^(?P<speaker>[A-Za-z0-9]+)_(?P<style>[A-Za-z]+)_(?P<utterance>[A-Za-z0-9-]+)$"
    test_list: Optional[str] = None  # file of utterance ids; overrides the seeded split
    test_fraction: float = 0.07
    split_seed: int = 0


@dataclass
class VocoderConfig:
    backend: str = "griffin_lim"  # or "pretrained_neural"
    model_path: Optional[str] = None
    griffin_lim_iterations: int = 60


@dataclass
class EvalConfig:
    pesq_rate: int = 16000
    pesq_mode: str = "wb"
    mcd_coefficients: int = 13


@dataclass
class MosConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    clips_per_session: int = 6
    fixed_clips: bool = False  # serve the same random draw to every session
    results_token: Optional[str] = None
    seed: int = 0


@dataclass
class PipelineConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    vad: VadConfig = field(default_factory=VadConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    vocoder: VocoderConfig = field(default_factory=VocoderConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    mos: MosConfig = field(default_factory=MosConfig)
    out_dir: str = "runs"
    seed: int = 0

    def validate(self) -> "PipelineConfig":
        self.analysis.validate()
        self.vad.validate(self.analysis.sample_rate / 2.0)
        self.train.validate()
        return self


def _from_dict(cls: type, data: Any) -> Any:
    if not dataclasses.is_dataclass(cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"expected mapping for {cls.__name__}, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        target = _DATACLASS_FIELDS.get((cls, name))
        kwargs[name] = _from_dict(target, value) if target else value
    return cls(**kwargs)


# Nested dataclass fields resolved statically (dataclasses.fields gives string
# annotations under `from __future__ import annotations`).
_DATACLASS_FIELDS = {
    (TrainConfig, "mask"): MaskConfig,
    (TrainConfig, "model"): ModelConfig,
    (PipelineConfig, "corpus"): CorpusConfig,
    (PipelineConfig, "analysis"): AnalysisConfig,
    (PipelineConfig, "vad"): VadConfig,
    (PipelineConfig, "train"): TrainConfig,
    (PipelineConfig, "vocoder"): VocoderConfig,
    (PipelineConfig, "evaluation"): EvalConfig,
    (PipelineConfig, "mos"): MosConfig,
}


def config_to_dict(cfg: Any) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(data: dict) -> PipelineConfig:
    return _from_dict(PipelineConfig, data)


def load_config(path: str | Path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    return config_from_dict(data).validate()


def save_config(cfg: Any, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=True)


def apply_overrides(cfg: PipelineConfig, overrides: dict[str, Any]) -> PipelineConfig:
    """Apply {'train.mask.window_frames': 128}-style dotted-path overrides."""
    for dotted, value in overrides.items():
        target = cfg
        *parents, leaf = dotted.split(".")
        for part in parents:
            if not hasattr(target, part):
                raise ConfigError(f"no config section {part!r} in override {dotted!r}")
            target = getattr(target, part)
        if not hasattr(target, leaf):
            raise ConfigError(f"no config field {leaf!r} in override {dotted!r}")
        current = getattr(target, leaf)
        setattr(target, leaf, _coerce(value, current))
    return cfg


def _coerce(value: Any, current: Any) -> Any:
    if current is None or value is None or not isinstance(value, str):
        return value
    if isinstance(current, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {value!r}")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value


def config_hash(cfg: Any) -> str:
    """Stable short hash of a config dataclass, for artifact provenance."""
    payload = json.dumps(config_to_dict(cfg), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:16]
