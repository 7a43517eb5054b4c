"""Objective evaluation: PESQ through an external scorer, mel-cepstral
distortion as the internal fallback metric, and the results table.

PESQ scores come only from a real P.862 implementation: either the command
named by the W2N_PESQ_CMD environment variable (invoked as
``cmd ref.wav deg.wav rate``, float on stdout) or the python ``pesq``
package. When neither is present, scoring raises PesqUnavailableError and
reports say "unavailable"; a number is never fabricated.
"""

from __future__ import annotations

import json
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.fft
import scipy.signal

from . import dsp
from .config import EvalConfig

PESQ_CMD_ENV = "W2N_PESQ_CMD"
PESQ_SCALE = (-0.5, 4.5)  # nominal P.862 score range
MCD_CONSTANT = 10.0 * np.sqrt(2.0) / np.log(10.0)


class PesqUnavailableError(RuntimeError):
    """No external PESQ scorer is configured or importable."""


class MetricError(ValueError):
    pass


@dataclass
class PesqScorer:
    """Adapter over whichever P.862 implementation is installed."""

    kind: str  # 'command' | 'package'
    command: Optional[list[str]] = None
    rate: int = 16000
    mode: str = "wb"

    @staticmethod
    def resolve(cfg: Optional[EvalConfig] = None) -> "PesqScorer":
        cfg = cfg or EvalConfig()
        cmd = os.environ.get(PESQ_CMD_ENV)
        if cmd:
            return PesqScorer(kind="command", command=shlex.split(cmd), rate=cfg.pesq_rate, mode=cfg.pesq_mode)
        try:
            import pesq  # noqa: F401
        except ImportError:
            raise PesqUnavailableError(
                f"no PESQ scorer: set {PESQ_CMD_ENV} or install the 'pesq' package"
            ) from None
        return PesqScorer(kind="package", rate=cfg.pesq_rate, mode=cfg.pesq_mode)

    @staticmethod
    def available(cfg: Optional[EvalConfig] = None) -> bool:
        try:
            PesqScorer.resolve(cfg)
            return True
        except PesqUnavailableError:
            return False

    def score(self, reference: dsp.Waveform, degraded: dsp.Waveform) -> float:
        ref = _to_rate(reference, self.rate)
        deg = _to_rate(degraded, self.rate)
        if self.kind == "package":
            import pesq

            return float(pesq.pesq(self.rate, ref.samples, deg.samples, self.mode))
        with tempfile.TemporaryDirectory() as tmp:
            ref_path = Path(tmp) / "ref.wav"
            deg_path = Path(tmp) / "deg.wav"
            dsp.save_audio(ref_path, ref)
            dsp.save_audio(deg_path, deg)
            out = subprocess.run(
                [*self.command, str(ref_path), str(deg_path), str(self.rate)],
                capture_output=True,
                text=True,
                check=True,
            )
            return float(out.stdout.strip().splitlines()[-1])


def _to_rate(w: dsp.Waveform, rate: int) -> dsp.Waveform:
    if w.sample_rate == rate:
        return w
    g = np.gcd(int(rate), int(w.sample_rate))
    samples = scipy.signal.resample_poly(w.samples, rate // g, w.sample_rate // g)
    return dsp.Waveform(samples=samples, sample_rate=rate)


def pesq_score(
    reference: dsp.Waveform, degraded: dsp.Waveform, cfg: Optional[EvalConfig] = None
) -> float:
    """P.862-family score of converted audio against the parallel normal take."""
    return PesqScorer.resolve(cfg).score(reference, degraded)


def mel_cepstra(spec: dsp.MelSpectrogram, n_coefficients: int) -> np.ndarray:
    """Cepstral coefficients 1..K per frame from log-mel columns (DCT-II)."""
    cep = scipy.fft.dct(spec.values, type=2, axis=0, norm="ortho")
    return cep[1 : n_coefficients + 1]


def mcd(
    reference: dsp.MelSpectrogram, converted: dsp.MelSpectrogram, n_coefficients: int = 13
) -> float:
    """Mel-cepstral distortion in dB over cepstral coefficients 1..K.

    Frame counts may differ; the longer input is truncated. Symmetric, and
    exactly 0 for identical inputs.
    """
    if reference.values.shape[0] != converted.values.shape[0]:
        raise MetricError(
            f"mel bin mismatch: {reference.values.shape[0]} vs {converted.values.shape[0]}"
        )
    if reference.config.mel_bins != converted.config.mel_bins:
        raise MetricError("analysis configs disagree")
    ref = mel_cepstra(reference, n_coefficients)
    conv = mel_cepstra(converted, n_coefficients)
    frames = min(ref.shape[1], conv.shape[1])
    dist = np.sqrt(np.sum((ref[:, :frames] - conv[:, :frames]) ** 2, axis=0))
    return float(MCD_CONSTANT * dist.mean())


@dataclass
class UtteranceScore:
    utterance_id: str
    pesq: Optional[float]  # None when the scorer is unavailable
    mcd: Optional[float] = None


@dataclass
class QualityReport:
    """Scores for one configuration's converted test set."""

    mask_percent: int
    window_frames: int
    vad_enabled: bool
    utterances: list[UtteranceScore] = field(default_factory=list)
    final_g_loss: Optional[float] = None

    @property
    def mean_pesq(self) -> Optional[float]:
        vals = [u.pesq for u in self.utterances if u.pesq is not None]
        return sum(vals) / len(vals) if vals else None

    @property
    def mean_mcd(self) -> Optional[float]:
        vals = [u.mcd for u in self.utterances if u.mcd is not None]
        return sum(vals) / len(vals) if vals else None


def final_epoch_g_loss(loss_log_path: str | Path) -> Optional[float]:
    """Mean reported G-Loss metric over the last epoch of a training loss log."""
    last = None
    with open(loss_log_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            if row.get("kind") == "epoch":
                last = row
    return None if last is None else float(last["g_loss_metric"])


RESULT_COLUMNS = ("Mask Len.", "Num. Frames", "VAD", "PESQ", "G-Loss")


def results_rows(reports: list[QualityReport]) -> list[dict]:
    """One row per configuration; the best PESQ row is flagged."""
    rows = []
    for r in reports:
        rows.append(
            {
                "mask_percent": r.mask_percent,
                "window_frames": r.window_frames,
                "vad": r.vad_enabled,
                "pesq": r.mean_pesq,
                "g_loss": r.final_g_loss,
                "best": False,
            }
        )
    scored = [row for row in rows if row["pesq"] is not None]
    if scored:
        max(scored, key=lambda row: row["pesq"])["best"] = True
    return rows


def _fmt(value, best=False) -> str:
    if value is None:
        return "unavailable"
    text = f"{value:.3f}"
    return f"*{text}*" if best else text


def render_results_text(rows: list[dict]) -> str:
    """Aligned plain-text table: mask %, frames, VAD, mean PESQ, G-Loss."""
    cells = [
        (
            f"{row['mask_percent']}%",
            str(row["window_frames"]),
            "Yes" if row["vad"] else "No",
            _fmt(row["pesq"], row["best"]),
            _fmt(row["g_loss"]),
        )
        for row in rows
    ]
    widths = [
        max(len(RESULT_COLUMNS[i]), *(len(c[i]) for c in cells)) if cells else len(RESULT_COLUMNS[i])
        for i in range(5)
    ]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(RESULT_COLUMNS)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for c in cells:
        lines.append("  ".join(c[i].ljust(widths[i]) for i in range(5)).rstrip())
    return "\n".join(lines) + "\n"


def write_results_tsv(rows: list[dict], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("mask_percent\twindow_frames\tvad\tpesq\tg_loss\tbest\n")
        for row in rows:
            pesq = "unavailable" if row["pesq"] is None else f"{row['pesq']:.6f}"
            g = "unavailable" if row["g_loss"] is None else f"{row['g_loss']:.6f}"
            fh.write(
                f"{row['mask_percent']}\t{row['window_frames']}\t"
                f"{'yes' if row['vad'] else 'no'}\t{pesq}\t{g}\t"
                f"{'yes' if row['best'] else 'no'}\n"
            )
