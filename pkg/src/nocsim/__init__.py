"""Multi-user semantic communication over a shared channel with fixed-angle
binary codewords as user identities."""

from .codebook import Codebook, NocGenConfig, generate_noc, load_codebook, pairwise_angles, save_codebook, walsh_matrix
from .errors import *  # noqa: F401,F403
from .model import ModelDims, ModelParameters, init_model, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, evaluate, mismatch_eval, train

__version__ = "0.1.0"
