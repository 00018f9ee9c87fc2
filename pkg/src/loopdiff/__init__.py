"""loopdiff: simplex diffusion over tokenized 4-bar MIDI loops.

The generative model is a bidirectional transformer denoising
continuous logit simplices over nine note attributes; vocabulary
priors steer sampling toward user constraints without retraining.
"""

__version__ = "0.1.0"

from .vocab import Vocabulary, build_vocabulary
from .codec import LoopSample, NoteEvent, TokenizedLoop, decode_loop, encode_loop
from .diffusion import DiffusionConfig, generate
from .model import Denoiser, DenoiserConfig
from .priors import VocabularyPrior
from .tasks import TaskSpec, run_task

__all__ = [
    "__version__",
    "Vocabulary", "build_vocabulary",
    "LoopSample", "NoteEvent", "TokenizedLoop", "decode_loop", "encode_loop",
    "DiffusionConfig", "generate",
    "Denoiser", "DenoiserConfig",
    "VocabularyPrior",
    "TaskSpec", "run_task",
]
