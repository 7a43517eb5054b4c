"""Speaker-dependent adversarial training on masked spectrogram windows.

One epoch visits every whisper utterance once in shuffled order, pairing it
with a randomly drawn normal utterance of the same speaker; no time
alignment is used anywhere. Each visit draws one random window and one
random mask. Per iteration the generators step first, then all four
discriminators, on the same generator outputs.

Runs are reproducible: with a fixed seed and single-threaded torch, two
trainings write byte-identical loss logs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .. import dsp, masking, vad
from ..config import PipelineConfig, TrainConfig, config_to_dict, _from_dict
from ..config import AnalysisConfig
from ..corpus import CorpusManifest, speaker_view, subset_by_split
from .losses import (
    GanBundle,
    NonFiniteLossError,
    TrainingBatch,
    discriminator_losses,
    generator_losses,
)
from .models import (
    DiscriminatorSpec,
    GeneratorSpec,
    build_discriminator,
    build_generator,
    parameter_count,
)

CHECKPOINT_VERSION = 1
STD_FLOOR = 1e-8


def _scalar(v) -> float:
    return float(v.detach()) if isinstance(v, torch.Tensor) else float(v)


class TrainingError(RuntimeError):
    pass


class TrainingDiverged(TrainingError):
    def __init__(self, component: str, last_checkpoint: Optional[str]):
        super().__init__(
            f"training aborted: non-finite loss in {component!r}; "
            f"last good checkpoint: {last_checkpoint}"
        )
        self.component = component
        self.last_checkpoint = last_checkpoint


@dataclass
class SpeakerFeatures:
    """Normalized per-speaker training matrices for both styles."""

    speaker_id: str
    whisper: list[np.ndarray]  # (bins, T) in normalized units
    normal: list[np.ndarray]
    stats: dict  # per style: {'mean': (bins,), 'std': (bins,)}
    bins: int
    feature_mode: str


def _domain_stats(matrices: list[np.ndarray]) -> dict:
    frames = np.concatenate(matrices, axis=1)
    return {
        "mean": frames.mean(axis=1),
        "std": np.maximum(frames.std(axis=1), STD_FLOOR),
    }


def normalize(values: np.ndarray, stats: dict) -> np.ndarray:
    return (values - stats["mean"][:, None]) / stats["std"][:, None]


def denormalize(values: np.ndarray, stats: dict) -> np.ndarray:
    return values * stats["std"][:, None] + stats["mean"][:, None]


def utterance_features(w: dsp.Waveform, style: str, cfg: PipelineConfig) -> np.ndarray:
    """Raw (unnormalized) feature matrix for one utterance."""
    if cfg.vad.enabled:
        labels = vad.classify(w, style, cfg.vad, cfg.analysis)
        w = vad.trim_silence(w, labels, cfg.analysis).waveform
    spec = dsp.mel_spectrogram(w, cfg.analysis)
    if cfg.train.feature_mode == "image224":
        return dsp.resize_to_image(spec).values
    return spec.values


def prepare_speaker_features(
    manifest: CorpusManifest, speaker_id: str, cfg: PipelineConfig
) -> SpeakerFeatures:
    """Load, trim, analyze, and normalize one speaker's training utterances."""
    view = speaker_view(manifest, speaker_id)
    if view.split:
        view = subset_by_split(view, "train")
    raw = {"whisper": [], "normal": []}
    for style in ("whisper", "normal"):
        for rec in view.records_for(speaker_id, style):
            w = dsp.load_audio(rec.audio_path, cfg.analysis.sample_rate)
            raw[style].append(utterance_features(w, style, cfg))
    if not raw["whisper"] or not raw["normal"]:
        raise TrainingError(
            f"speaker {speaker_id!r} needs training data in both styles, got "
            f"{len(raw['whisper'])} whisper / {len(raw['normal'])} normal"
        )
    stats = {style: _domain_stats(mats) for style, mats in raw.items()}
    return SpeakerFeatures(
        speaker_id=speaker_id,
        whisper=[normalize(m, stats["whisper"]) for m in raw["whisper"]],
        normal=[normalize(m, stats["normal"]) for m in raw["normal"]],
        stats=stats,
        bins=raw["whisper"][0].shape[0],
        feature_mode=cfg.train.feature_mode,
    )


def build_networks(bins: int, cfg: TrainConfig, seed: Optional[int] = None) -> GanBundle:
    if seed is not None:
        torch.manual_seed(seed)
    m = cfg.model
    gspec = GeneratorSpec(bins, cfg.mask.window_frames, m.base_channels, m.residual_blocks)
    dspec = DiscriminatorSpec(bins, cfg.mask.window_frames, m.disc_channels, m.disc_layers)
    return GanBundle(
        g_xy=build_generator(gspec),
        g_yx=build_generator(gspec),
        d_x=build_discriminator(dspec),
        d_y=build_discriminator(dspec),
        d2_x=build_discriminator(dspec),
        d2_y=build_discriminator(dspec),
    )


def _draw_input(
    matrix: np.ndarray, mask_cfg, rng: np.random.Generator
) -> tuple[torch.Tensor, torch.Tensor]:
    """Random (window, mask) draw -> (unmasked window, two-channel input)."""
    window = masking.sample_window(matrix, mask_cfg, rng).values
    mask = masking.generate_mask(mask_cfg, rng)
    masked = masking.apply_mask(window, mask)
    spec_t = torch.from_numpy(window).float()[None, None]
    stacked = np.stack([masked.masked_input, masked.mask_channel])
    return spec_t, torch.from_numpy(stacked).float()[None]


def save_checkpoint(
    path: str | Path,
    nets: GanBundle,
    features: SpeakerFeatures,
    cfg: PipelineConfig,
    epoch: int,
    iteration: int,
    data_rng: Optional[np.random.Generator] = None,
) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "version": CHECKPOINT_VERSION,
            "speaker_id": features.speaker_id,
            "bins": features.bins,
            "feature_mode": features.feature_mode,
            "stats": features.stats,
            "train_config": config_to_dict(cfg.train),
            "analysis_config": config_to_dict(cfg.analysis),
            "epoch": epoch,
            "iteration": iteration,
            "torch_rng_state": torch.get_rng_state(),
            "data_rng_state": None if data_rng is None else data_rng.bit_generator.state,
            "state": {
                "g_xy": nets.g_xy.state_dict(),
                "g_yx": nets.g_yx.state_dict(),
                "d_x": nets.d_x.state_dict(),
                "d_y": nets.d_y.state_dict(),
                "d2_x": nets.d2_x.state_dict(),
                "d2_y": nets.d2_y.state_dict(),
            },
        },
        str(path),
    )


@dataclass
class Checkpoint:
    speaker_id: str
    bins: int
    feature_mode: str
    stats: dict
    train_config: TrainConfig
    analysis_config: AnalysisConfig
    nets: GanBundle
    epoch: int
    iteration: int

    @property
    def window_frames(self) -> int:
        return self.train_config.mask.window_frames


def load_checkpoint(path: str | Path) -> Checkpoint:
    if not Path(path).exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(str(path), map_location="cpu", weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise TrainingError(f"unsupported checkpoint version {payload.get('version')} in {path}")
    train_cfg = _from_dict(TrainConfig, payload["train_config"])
    nets = build_networks(payload["bins"], train_cfg)
    for name, state in payload["state"].items():
        getattr(nets, name).load_state_dict(state)
    for net in nets.all_nets():
        net.eval()
    return Checkpoint(
        speaker_id=payload["speaker_id"],
        bins=payload["bins"],
        feature_mode=payload["feature_mode"],
        stats=payload["stats"],
        train_config=train_cfg,
        analysis_config=_from_dict(AnalysisConfig, payload["analysis_config"]),
        nets=nets,
        epoch=payload["epoch"],
        iteration=payload["iteration"],
    )


@dataclass
class TrainResult:
    checkpoint_path: Path
    loss_log_path: Path
    epochs_run: int
    iterations_run: int


def train_on_features(
    features: SpeakerFeatures, cfg: PipelineConfig, run_dir: str | Path
) -> TrainResult:
    """Run the full training loop, writing checkpoints and the loss log."""
    if not features.whisper or not features.normal:
        raise TrainingError(f"speaker {features.speaker_id!r} has no training utterances")
    tcfg = cfg.train.validate()
    run_dir = Path(run_dir)
    ckpt_dir = run_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    loss_log_path = run_dir / "loss_log.jsonl"

    if tcfg.single_threaded:
        torch.set_num_threads(1)
    torch.manual_seed(tcfg.seed)
    # window/mask draws get their own stream so mask.seed varies them
    # independently of the weight initialization
    rng = np.random.default_rng(np.random.SeedSequence([tcfg.seed, tcfg.mask.seed]))

    nets = build_networks(features.bins, tcfg)
    for net in nets.all_nets():
        net.train()
    g_opt = torch.optim.Adam(
        nets.generator_parameters(), lr=tcfg.g_lr, betas=(tcfg.beta1, tcfg.beta2)
    )
    d_opt = torch.optim.Adam(
        nets.discriminator_parameters(), lr=tcfg.d_lr, betas=(tcfg.beta1, tcfg.beta2)
    )

    last_ckpt = ckpt_dir / "epoch_0000.pt"
    save_checkpoint(last_ckpt, nets, features, cfg, epoch=0, iteration=0, data_rng=rng)

    iteration = 0
    with open(loss_log_path, "w", encoding="utf-8") as log:
        log.write(
            json.dumps(
                {
                    "kind": "run",
                    "speaker_id": features.speaker_id,
                    "parameters_g": parameter_count(nets.g_xy),
                    "parameters_d": parameter_count(nets.d_y),
                },
                sort_keys=True,
            )
            + "\n"
        )
        for epoch in range(1, tcfg.epochs + 1):
            order = rng.permutation(len(features.whisper))
            epoch_rows = []
            for idx in order:
                iteration += 1
                lam_id = tcfg.lambda_identity if iteration <= tcfg.identity_stop_iter else 0.0
                x_mat = features.whisper[int(idx)]
                y_mat = features.normal[int(rng.integers(len(features.normal)))]
                x, x_in = _draw_input(x_mat, tcfg.mask, rng)
                y, y_in = _draw_input(y_mat, tcfg.mask, rng)
                batch = TrainingBatch(x=x, y=y, x_masked_input=x_in, y_masked_input=y_in)

                try:
                    g_losses, outputs = generator_losses(nets, batch, tcfg.lambda_cycle, lam_id)
                    g_opt.zero_grad()
                    g_losses["total_G"].backward()
                    g_opt.step()

                    d_losses = discriminator_losses(nets, batch, outputs)
                    d_opt.zero_grad()
                    d_losses["total_D"].backward()
                    d_opt.step()
                except NonFiniteLossError as exc:
                    raise TrainingDiverged(exc.component, str(last_ckpt)) from exc

                row = {
                    "kind": "iter",
                    "iteration": iteration,
                    "epoch": epoch,
                    "adversarial_G": _scalar(g_losses["adversarial_G"]),
                    "adversarial_D": _scalar(d_losses["adversarial_D"]),
                    "second_adversarial": _scalar(g_losses["second_adversarial"]),
                    "cycle": _scalar(g_losses["cycle"]),
                    "identity": _scalar(g_losses["identity"]),
                    "total_G": _scalar(g_losses["total_G"]),
                    "total_D": _scalar(d_losses["total_D"]),
                    "g_loss_metric": _scalar(g_losses["g_loss_metric"]),
                }
                log.write(json.dumps(row, sort_keys=True) + "\n")
                epoch_rows.append(row)

            means = {
                k: sum(r[k] for r in epoch_rows) / len(epoch_rows)
                for k in epoch_rows[0]
                if k not in ("kind", "iteration", "epoch")
            }
            log.write(
                json.dumps({"kind": "epoch", "epoch": epoch, **means}, sort_keys=True) + "\n"
            )
            if epoch % tcfg.checkpoint_every_epochs == 0 or epoch == tcfg.epochs:
                last_ckpt = ckpt_dir / f"epoch_{epoch:04d}.pt"
                save_checkpoint(last_ckpt, nets, features, cfg, epoch, iteration, data_rng=rng)

    final = run_dir / "final.pt"
    save_checkpoint(final, nets, features, cfg, tcfg.epochs, iteration, data_rng=rng)
    return TrainResult(
        checkpoint_path=final,
        loss_log_path=loss_log_path,
        epochs_run=tcfg.epochs,
        iterations_run=iteration,
    )


def train_speaker(
    manifest: CorpusManifest, speaker_id: str, cfg: PipelineConfig, run_dir: str | Path
) -> TrainResult:
    features = prepare_speaker_features(manifest, speaker_id, cfg)
    return train_on_features(features, cfg, run_dir)
