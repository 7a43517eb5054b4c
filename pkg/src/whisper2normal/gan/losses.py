"""The four training losses plus the reported generator-loss metric.

Training uses the least-squares adversarial form on both the first
discriminators (on translated outputs) and the second discriminators (on
cycle-reconstructed outputs, countering the statistical smoothing of the
cycle term), alongside L1 cycle-consistency and identity-mapping losses.

The reported G-Loss metric is the non-saturating mean over patches of
-log D(G(x)); it is computed from sigmoid probabilities of the
whisper-to-normal discriminator and never trained on directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

G_LOSS_PROB_EPS = 1e-12


class NonFiniteLossError(RuntimeError):
    """A loss component became NaN/Inf; carries the component name."""

    def __init__(self, component: str, value: float):
        super().__init__(f"loss component {component!r} is non-finite ({value})")
        self.component = component


def lsgan_generator_loss(fake_scores: torch.Tensor) -> torch.Tensor:
    return torch.mean((fake_scores - 1.0) ** 2)


def lsgan_discriminator_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    return torch.mean((real_scores - 1.0) ** 2) + torch.mean(fake_scores**2)


def g_loss_metric(patch_probs) -> float:
    """Mean over patches of -log p, with p clamped away from {0, 1}."""
    p = torch.as_tensor(patch_probs, dtype=torch.float64)
    p = torch.clamp(p, G_LOSS_PROB_EPS, 1.0 - G_LOSS_PROB_EPS)
    return float(torch.mean(-torch.log(p)))


@dataclass
class GanBundle:
    """The six networks of the two-direction model."""

    g_xy: torch.nn.Module  # whisper -> normal
    g_yx: torch.nn.Module  # normal -> whisper
    d_x: torch.nn.Module
    d_y: torch.nn.Module
    d2_x: torch.nn.Module  # second discriminators, judge cycle reconstructions
    d2_y: torch.nn.Module

    def all_nets(self):
        return [self.g_xy, self.g_yx, self.d_x, self.d_y, self.d2_x, self.d2_y]

    def generator_parameters(self):
        return list(self.g_xy.parameters()) + list(self.g_yx.parameters())

    def discriminator_parameters(self):
        params = []
        for d in (self.d_x, self.d_y, self.d2_x, self.d2_y):
            params += list(d.parameters())
        return params


@dataclass
class TrainingBatch:
    """One training step's tensors, all shaped (batch, channels, bins, frames).

    `x_masked_input` / `y_masked_input` are the two-channel generator inputs
    (masked spectrogram + mask channel); `x` / `y` are the unmasked windows
    the cycle must restore.
    """

    x: torch.Tensor
    y: torch.Tensor
    x_masked_input: torch.Tensor
    y_masked_input: torch.Tensor

    @staticmethod
    def ones_input(spec_window: torch.Tensor) -> torch.Tensor:
        return torch.cat([spec_window, torch.ones_like(spec_window)], dim=1)


@dataclass
class GeneratorOutputs:
    fake_y: torch.Tensor
    fake_x: torch.Tensor
    cycle_x: torch.Tensor
    cycle_y: torch.Tensor


def generator_losses(
    nets: GanBundle, batch: TrainingBatch, lambda_cycle: float, lambda_identity: float
) -> tuple[dict[str, torch.Tensor], GeneratorOutputs]:
    """All loss components that flow gradients into the generators.

    The cycle passes feed the translated output back through the opposite
    generator under an all-ones mask, so masked frames must be restored
    from context (the filling-in-frames task). Returns the component dict
    (adversarial, second adversarial, cycle, identity, weighted total, and
    the reported reported G-Loss metric for whisper-to-normal) plus the raw outputs for
    the discriminator step.
    """
    fake_y = nets.g_xy(batch.x_masked_input)
    fake_x = nets.g_yx(batch.y_masked_input)
    cycle_x = nets.g_yx(TrainingBatch.ones_input(fake_y))
    cycle_y = nets.g_xy(TrainingBatch.ones_input(fake_x))

    d_y_fake = nets.d_y(fake_y)
    adversarial = lsgan_generator_loss(d_y_fake) + lsgan_generator_loss(nets.d_x(fake_x))
    second_adversarial = lsgan_generator_loss(nets.d2_x(cycle_x)) + lsgan_generator_loss(
        nets.d2_y(cycle_y)
    )
    cycle = torch.mean(torch.abs(cycle_x - batch.x)) + torch.mean(torch.abs(cycle_y - batch.y))

    if lambda_identity > 0:
        id_y = nets.g_xy(TrainingBatch.ones_input(batch.y))
        id_x = nets.g_yx(TrainingBatch.ones_input(batch.x))
        identity = torch.mean(torch.abs(id_y - batch.y)) + torch.mean(torch.abs(id_x - batch.x))
    else:
        identity = torch.zeros((), dtype=batch.x.dtype)

    total = adversarial + second_adversarial + lambda_cycle * cycle + lambda_identity * identity
    losses = {
        "adversarial_G": adversarial,
        "second_adversarial": second_adversarial,
        "cycle": cycle,
        "identity": identity,
        "total_G": total,
        "g_loss_metric": g_loss_metric(torch.sigmoid(d_y_fake.detach())),
    }
    check_finite(losses)
    return losses, GeneratorOutputs(fake_y=fake_y, fake_x=fake_x, cycle_x=cycle_x, cycle_y=cycle_y)


def discriminator_losses(
    nets: GanBundle, batch: TrainingBatch, outputs: GeneratorOutputs
) -> dict[str, torch.Tensor]:
    """Least-squares real/fake losses for all four discriminators.

    Generator outputs are detached so only discriminator parameters receive
    gradients.
    """
    adv = lsgan_discriminator_loss(
        nets.d_y(batch.y), nets.d_y(outputs.fake_y.detach())
    ) + lsgan_discriminator_loss(nets.d_x(batch.x), nets.d_x(outputs.fake_x.detach()))
    second = lsgan_discriminator_loss(
        nets.d2_x(batch.x), nets.d2_x(outputs.cycle_x.detach())
    ) + lsgan_discriminator_loss(nets.d2_y(batch.y), nets.d2_y(outputs.cycle_y.detach()))
    losses = {"adversarial_D": adv, "second_adversarial_D": second, "total_D": adv + second}
    check_finite(losses)
    return losses


def check_finite(components: dict) -> None:
    for name, value in components.items():
        if isinstance(value, torch.Tensor):
            value = value.detach()
        if not math.isfinite(float(value)):
            raise NonFiniteLossError(name, float(value))
