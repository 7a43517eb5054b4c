from .convert import ConversionError, convert_features, convert_mel
from .losses import (
    GanBundle,
    GeneratorOutputs,
    NonFiniteLossError,
    TrainingBatch,
    discriminator_losses,
    g_loss_metric,
    generator_losses,
    lsgan_discriminator_loss,
    lsgan_generator_loss,
)
from .models import (
    DiscriminatorSpec,
    Generator,
    GeneratorSpec,
    PatchDiscriminator,
    SpecError,
    build_discriminator,
    build_generator,
    parameter_count,
)
from .trainer import (
    Checkpoint,
    SpeakerFeatures,
    TrainingDiverged,
    TrainingError,
    TrainResult,
    build_networks,
    load_checkpoint,
    prepare_speaker_features,
    save_checkpoint,
    train_on_features,
    train_speaker,
)
