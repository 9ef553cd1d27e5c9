import logging
from dataclasses import dataclass

import numpy as np
import pandas
import torch
from torch import nn

from src.errors import ConfigError
from src.errors import ShapeError
from src.errors import UnsupportedCombinationError
from src.serialization import atomic_write
from src.tracks import FramewiseProbabilities

logger = logging.getLogger(__name__)

PATCH = 16


@dataclass
class AstConfig:
    embed_dim: int = 192
    n_layers: int = 3
    n_heads: int = 3
    head: str = 'cls'            # or 'sequence'
    mlp_ratio: int = 4
    dropout: float = 0.0
    max_time_patches: int = 64
    positional: bool = True
    pad_mode: str = 'repeat'     # or 'truncate'

    def validate(self, n_mel=None):
        if self.embed_dim % self.n_heads != 0:
            raise ConfigError('embed_dim %d is not divisible by n_heads %d' % (self.embed_dim, self.n_heads))
        if self.head not in ('cls', 'sequence'):
            raise ConfigError('unknown transformer head %r' % self.head)
        if self.pad_mode not in ('repeat', 'truncate'):
            raise ConfigError('unknown pad mode %r' % self.pad_mode)
        if n_mel is not None and n_mel % PATCH != 0:
            raise ConfigError('n_mel = %d is not divisible by the patch size %d' % (n_mel, PATCH))
        return self


def patch_frames(T, pad_mode='repeat'):
    """Frame indices that bring T frames to a multiple of 16, and the flag of the change."""
    if T % PATCH == 0:
        return np.arange(T), None
    if pad_mode == 'repeat':
        return np.minimum(np.arange(T + PATCH - T % PATCH), T - 1), 'padded'
    if T < PATCH:
        raise ShapeError('%d frames cannot be truncated to a whole patch' % T)
    return np.arange(T - T % PATCH), 'truncated'


def ast_patchify(spec, pad_mode='repeat'):
    """
    Split a (n_mel, T) log-mel matrix into flattened 16x16 patches.

    Returns (patches of shape (n_mel/16 * T'/16, 256), flags). T' is T rounded up
    by repeating the last frame, or rounded down with pad_mode='truncate'.
    """
    spec = np.asarray(spec)
    n_mel, T = spec.shape
    if n_mel % PATCH != 0:
        raise ConfigError('n_mel = %d is not divisible by the patch size %d' % (n_mel, PATCH))
    idx, flag = patch_frames(T, pad_mode)
    flags = [] if flag is None else [flag]
    if flag is not None:
        spec = spec[:, idx]
        logger.warning('%d frames %s to %d', T, flag, len(idx))
    F, Tp = n_mel // PATCH, spec.shape[1] // PATCH
    patches = spec.reshape(F, PATCH, Tp, PATCH).transpose(0, 2, 1, 3).reshape(F*Tp, PATCH*PATCH)
    return patches, flags


def _patchify_batch(x):
    B, n_mel, T = x.shape
    F, Tp = n_mel // PATCH, T // PATCH
    return x.reshape(B, F, PATCH, Tp, PATCH).permute(0, 1, 3, 2, 4).reshape(B, F*Tp, PATCH*PATCH)


class SelfAttention(nn.Module):

    def __init__(self, dim, n_heads, dropout=0.0):
        nn.Module.__init__(self)
        self.n_heads = n_heads
        self.qkv = nn.Linear(dim, 3*dim)
        self.proj = nn.Linear(dim, dim)
        self.drop = nn.Dropout(dropout)
        self.keep_weights = False
        self.weights = None

    def forward(self, x):
        B, N, E = x.shape
        q, k, v = self.qkv(x).reshape(B, N, 3, self.n_heads, E // self.n_heads).permute(2, 0, 3, 1, 4)
        att = torch.softmax(q @ k.transpose(-2, -1) / np.sqrt(E // self.n_heads), dim=-1)
        if self.keep_weights:
            self.weights = att.detach()
        out = (self.drop(att) @ v).transpose(1, 2).reshape(B, N, E)
        return self.proj(out)


class EncoderBlock(nn.Module):
    """Pre-norm transformer block with GELU feed-forward."""

    def __init__(self, dim, n_heads, mlp_ratio, dropout):
        nn.Module.__init__(self)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, n_heads, dropout)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, mlp_ratio*dim), nn.GELU(), nn.Dropout(dropout), nn.Linear(mlp_ratio*dim, dim))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class AstNet(nn.Module):
    """
    Input (batch, n_mel, frames). Frames that do not fill the last patch are
    padded with the last frame or dropped, following cfg.pad_mode.

    The learnable classification token exists for both heads so that the two
    heads share one backbone layout; only 'head.*' parameters differ.
    """

    def __init__(self, n_mel, n_classes, cfg=None):
        nn.Module.__init__(self)
        self.cfg = (AstConfig() if cfg is None else cfg).validate(n_mel)
        E = self.cfg.embed_dim
        self.n_freq = n_mel // PATCH
        self.patch_embed = nn.Linear(PATCH*PATCH, E)
        self.pos_embed = nn.Parameter(0.02*torch.randn(self.n_freq*self.cfg.max_time_patches, E))
        self.cls_token = nn.Parameter(0.02*torch.randn(1, 1, E))
        self.blocks = nn.ModuleList([ EncoderBlock(E, self.cfg.n_heads, self.cfg.mlp_ratio, self.cfg.dropout)
                                      for _ in range(self.cfg.n_layers) ])
        self.norm = nn.LayerNorm(E)
        self.head = nn.Sequential(nn.LayerNorm(E), nn.Linear(E, n_classes))

    def token_positions(self, n_time):
        # token f*n_time + t is frequency row f, time column t
        f = torch.arange(self.n_freq).repeat_interleave(n_time)
        t = torch.arange(n_time).repeat(self.n_freq)
        return f*self.cfg.max_time_patches + t

    def embed(self, x):
        B, n_mel, T = x.shape
        if n_mel != self.n_freq*PATCH:
            raise ShapeError('transformer input must be (batch, %d, frames), got %s' % (self.n_freq*PATCH, tuple(x.shape)))
        idx, flag = patch_frames(T, self.cfg.pad_mode)
        if flag is not None:
            x = x[:, :, torch.as_tensor(idx)]
            logger.warning('transformer input of %d frames %s to %d', T, flag, len(idx))
        n_time = len(idx) // PATCH
        if n_time > self.cfg.max_time_patches:
            raise ShapeError('%d time patches exceed the positional table of %d' % (n_time, self.cfg.max_time_patches))
        tokens = self.patch_embed(_patchify_batch(x))
        if self.cfg.positional:
            tokens = tokens + self.pos_embed[self.token_positions(n_time)]
        return tokens, n_time

    def encode(self, x):
        """Encoder output including the classification token at position 0."""
        tokens, n_time = self.embed(x)
        cls = self.cls_token.expand(tokens.shape[0], -1, -1)
        h = torch.cat([cls, tokens], dim=1) if self.cfg.head == 'cls' else tokens
        for block in self.blocks:
            h = block(h)
        return self.norm(h), n_time

    def forward(self, x):
        h, n_time = self.encode(x)
        if self.cfg.head == 'cls':
            return self.head(h[:, 0])
        B, _, E = h.shape
        columns = h.reshape(B, self.n_freq, n_time, E).mean(dim=1)
        return self.head(columns)

    def backbone_parameters(self):
        return [ p for name, p in self.named_parameters() if not name.startswith('head.') ]

    def head_parameters(self):
        return list(self.head.parameters())


def ast_forward(net, x):
    """Probabilities: (batch, C) for the cls head, (batch, T/16, C) for the sequence head."""
    net.eval()
    with torch.no_grad():
        x = torch.as_tensor(x, dtype=next(net.parameters()).dtype)
        return torch.sigmoid(net(x)).numpy()


def resample_track(times, values, target_times, recording_id=None, classes=None, start_frame=0):
    """
    Linear interpolation of a coarse (n, C) track onto target_times; values
    beyond either end are clamped to the nearest point. A single point is
    extended as a constant and flagged.
    """
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64).reshape(len(times), -1)
    target_times = np.asarray(target_times, dtype=np.float64)
    classes = [ str(c) for c in range(values.shape[1]) ] if classes is None else classes
    flags = []
    if len(times) == 0:
        return FramewiseProbabilities(recording_id, classes, np.zeros((0, len(classes))), start_frame, flags=['empty'])
    if len(times) == 1:
        logger.warning('%s: single output point, extended as a constant', recording_id)
        flags.append('single-point')
        out = np.tile(values[0], (len(target_times), 1))
    else:
        out = np.column_stack([ np.interp(target_times, times, values[:, c]) for c in range(values.shape[1]) ])
    return FramewiseProbabilities(recording_id, classes, out, start_frame, flags=flags)


def export_attention(net, x):
    """
    Attention weights of every layer for one input (n_mel, frames).
    Returns an array (n_layers, n_heads, tokens, tokens) of row-stochastic matrices.
    """
    if not isinstance(net, AstNet):
        raise UnsupportedCombinationError('attention export needs a transformer model, got %s' % type(net).__name__)
    net.eval()
    for block in net.blocks:
        block.attn.keep_weights = True
    try:
        with torch.no_grad():
            net(torch.as_tensor(np.asarray(x)[None], dtype=next(net.parameters()).dtype))
        return np.stack([ block.attn.weights[0].numpy() for block in net.blocks ])
    finally:
        for block in net.blocks:
            block.attn.keep_weights = False
            block.attn.weights = None


def attention_table(weights):
    L, H, N, _ = weights.shape
    layer, head, query, key = np.meshgrid(np.arange(L), np.arange(H), np.arange(N), np.arange(N), indexing='ij')
    return pandas.DataFrame({ 'layer': layer.ravel(), 'head': head.ravel(), 'query': query.ravel(),
                              'key': key.ravel(), 'weight': weights.ravel() })


def write_attention(path, weights):
    with atomic_write(path, 'w') as handle:
        attention_table(weights).to_csv(handle, index=False, float_format='%.8f', lineterminator='\n')
