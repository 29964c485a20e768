from .module import Module, ModuleList
from .layers import Conv2d, Dropout, GroupNorm, LayerNorm, Linear, Mlp
from .attention import (
    CrossAttentionTransformer,
    MultiHeadSelfAttention,
    SpatialAttentionTransformer,
    TransformerEncoderLayer,
)
from .resnet import BasicBlock, BranchNet
