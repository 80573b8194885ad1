"""Chebyshev-KAN residual backbone with kernel attention for inertial odometry.

A float64 numpy implementation: a small reverse-mode tensor engine, the
ChebyKAN layer and residual backbone, linearised exponential-kernel
attention, training with checkpoint files, an IMU data pipeline with a
synthetic trajectory generator, and trajectory metrics.
"""

from .backbone import BackboneConfig, ResChebyKAN
from .chebykan import ChebyKANConfig, ChebyKANLayer
from .config import RunConfig, load_config
from .data import ImuSequence, SynthSpec, WindowBatch, make_windows, read_sequence, remove_gravity, synthesize
from .eksa import EksaConfig, EksaLayer
from .errors import ContractError, DomainError, FormatError, NumericalError, ParseError, ShapeError
from .evaluation import TrajectoryReport, ate, evaluate_sequence, pde, rte
from .model import ModelConfig, ResKACNNet
from .tensor import Tensor
from .training import Checkpoint, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "BackboneConfig", "ResChebyKAN", "ChebyKANConfig", "ChebyKANLayer", "RunConfig", "load_config",
    "ImuSequence", "SynthSpec", "WindowBatch", "make_windows", "read_sequence", "remove_gravity", "synthesize",
    "EksaConfig", "EksaLayer", "ContractError", "DomainError", "FormatError", "NumericalError", "ParseError",
    "ShapeError", "TrajectoryReport", "ate", "evaluate_sequence", "pde", "rte", "ModelConfig", "ResKACNNet",
    "Tensor", "Checkpoint", "load_checkpoint", "save_checkpoint", "train",
]
