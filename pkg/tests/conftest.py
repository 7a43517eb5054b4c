import numpy as np
import pytest
import scipy.io.wavfile

from whisper2normal.config import AnalysisConfig, MaskConfig, ModelConfig, PipelineConfig


def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion.
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        print(f"\n[ACCEPTANCE] {report.outcome.upper()}: {name}", flush=True)


@pytest.fixture
def small_analysis():
    """Cheap analysis config for unit tests."""
    return AnalysisConfig(sample_rate=8000, fft_size=256, mel_bins=32).validate()


@pytest.fixture
def tiny_pipeline():
    """Native-mode pipeline with a tiny model, for fast training tests."""
    cfg = PipelineConfig()
    cfg.analysis = AnalysisConfig(sample_rate=8000, fft_size=256, mel_bins=32)
    cfg.train.feature_mode = "native"
    cfg.train.mask = MaskConfig(window_frames=32, mask_fraction=0.5)
    cfg.train.model = ModelConfig(base_channels=8, residual_blocks=2, disc_channels=8, disc_layers=2)
    cfg.train.epochs = 2
    cfg.train.checkpoint_every_epochs = 1
    cfg.vad.enabled = False
    cfg.vad.median_window_s = 0.1  # sub-second fixtures; 0.5 s would span them
    return cfg.validate()


def tone(freq, duration_s, sample_rate, amplitude=0.8, phase=0.0):
    t = np.arange(int(round(duration_s * sample_rate))) / sample_rate
    return amplitude * np.sin(2 * np.pi * freq * t + phase)


def harmonic_burst(f0, duration_s, sample_rate, harmonics=5):
    t = np.arange(int(round(duration_s * sample_rate))) / sample_rate
    x = sum(np.sin(2 * np.pi * f0 * (k + 1) * t) / (k + 1) for k in range(harmonics))
    return 0.8 * x / np.max(np.abs(x))


def noise_burst(duration_s, sample_rate, seed=0, amplitude=0.5):
    rng = np.random.default_rng(seed)
    return amplitude * rng.standard_normal(int(round(duration_s * sample_rate)))


def write_wav(path, samples, sample_rate):
    path.parent.mkdir(parents=True, exist_ok=True)
    x = np.clip(samples, -1.0, 1.0)
    scipy.io.wavfile.write(str(path), sample_rate, (x * 32767.0).astype(np.int16))


def speech_like(style, utterance_seed, sample_rate, silence_s=0.15, voiced_s=0.45):
    """Silence-padded burst; whisper is noise, normal is harmonic.

    The fundamental sits above 300 Hz so the whole harmonic stack lands in
    the detector's speech band.
    """
    if style == "normal":
        core = harmonic_burst(320 + 20 * (utterance_seed % 5), voiced_s, sample_rate)
    else:
        core = noise_burst(voiced_s, sample_rate, seed=utterance_seed)
    pad = np.zeros(int(round(silence_s * sample_rate)))
    return np.concatenate([pad, core, pad])


def synthetic_mel_pair(bins=32, frames=64):
    """One parallel 'utterance' pair: broadband whisper-like X, harmonic Y."""
    b = np.arange(bins)[:, None]
    t = np.arange(frames)[None, :]
    x = -6 + 3 * np.exp(-(((b - 10) / 6.0) ** 2)) * (1 + 0.3 * np.sin(2 * np.pi * t / 24.0))
    y = (-8 + 5 * (np.cos(2 * np.pi * b / 4.0) > 0.3)) * (1 + 0.2 * np.cos(2 * np.pi * t / 32.0))
    return x.astype(np.float64), (y * np.ones_like(t)).astype(np.float64)


def synthetic_speaker_features(bins=32, frames=64):
    from whisper2normal.gan.trainer import SpeakerFeatures, _domain_stats, normalize

    x, y = synthetic_mel_pair(bins, frames)
    stats = {"whisper": _domain_stats([x]), "normal": _domain_stats([y])}
    return (
        SpeakerFeatures(
            speaker_id="synth",
            whisper=[normalize(x, stats["whisper"])],
            normal=[normalize(y, stats["normal"])],
            stats=stats,
            bins=bins,
            feature_mode="native",
        ),
        x,
        y,
    )


@pytest.fixture
def corpus_tree(tmp_path):
    """3 speakers x 2 styles x 5 sentences of synthetic parallel audio."""
    root = tmp_path / "corpus"
    sample_rate = 22050
    n = 0
    for speaker in ("s01", "s02", "s03"):
        for k in range(5):
            utt = f"u{k:03d}"
            for style in ("whisper", "normal"):
                n += 1
                write_wav(
                    root / "US" / speaker / f"{speaker}_{style}_{utt}.wav",
                    speech_like(style, k, sample_rate),
                    sample_rate,
                )
    return root
