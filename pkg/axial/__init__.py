from .tensor import Tensor, Parameter, Tape, backward, no_grad, default_dtype
from .attention import (
    AttentionAxis, AxialAttentionConfig, GatedAxialLayer, AxialPair, FullAttentionWeights,
    full_attention_2d, multi_head_combine, gated_axial_attention, attention_weights, axial_pair, relative_index,
)
from .model_config import ModelConfig
from .model import AxialLobModel, RunMode, init, parameter_count
from .checkpoint import save_checkpoint, load_checkpoint, read_checkpoint
from .optim import SGDMomentum, cosine_lr_multiplier, sgd_momentum_step

__all__ = [
    'Tensor', 'Parameter', 'Tape', 'backward', 'no_grad', 'default_dtype',
    'AttentionAxis', 'AxialAttentionConfig', 'GatedAxialLayer', 'AxialPair', 'FullAttentionWeights',
    'full_attention_2d', 'multi_head_combine', 'gated_axial_attention', 'attention_weights', 'axial_pair',
    'relative_index',
    'ModelConfig', 'AxialLobModel', 'RunMode', 'init', 'parameter_count',
    'save_checkpoint', 'load_checkpoint', 'read_checkpoint',
    'SGDMomentum', 'cosine_lr_multiplier', 'sgd_momentum_step',
]
