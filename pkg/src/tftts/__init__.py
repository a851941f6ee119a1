"""Joint time/frequency training criterion for text-to-speech, at desk scale.

Mel analysis, Griffin-Lim reconstruction, an SI-SDR waveform loss, a
reverse-mode tape that differentiates through the whole mel-to-waveform
path, and a toy attention model trained on the combined loss.
"""
from types import ModuleType as _Module

from .errors import (
    CorruptFileError,
    FormatError,
    InvalidConfigError,
    InvalidInputError,
    InvalidStatsError,
    NumericalError,
    TfttsError,
    TrainingFailure,
    UnsupportedFormatError,
)
from .signal import (
    AmplitudeSpectrogram,
    ComplexSpectrogram,
    StftConfig,
    Waveform,
    amplitude,
    istft,
    make_window,
    stft,
)
from .mel import (
    MelFilterbank,
    MelSpectrogram,
    NormStats,
    build_filterbank,
    denormalize,
    epsilon_amplitude,
    extract_mel,
    mel_spectrum,
    normalize,
)
from .phase import (
    RUNTIME_GL,
    TRAIN_GL,
    GriffinLimConfig,
    griffin_lim,
    inconsistency,
    project_amplitude,
    project_consistency,
    reconstruct,
)
from .loss import LossReport, joint_loss, loss_f, loss_t, si_sdr
from .gradcheck import GradCheckReport, grad_check, mel_path_check
from .corpus import SyntheticCorpus, make_corpus
from .trainer import Frontend, TrainConfig, Trainer, evaluate_heldout, synthesize, train
from .config import RunConfig

__all__ = [n for n, v in list(globals().items()) if not n.startswith("_") and not isinstance(v, _Module)]
__version__ = "0.1.0"
