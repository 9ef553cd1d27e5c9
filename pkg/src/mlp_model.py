from dataclasses import dataclass

import torch
from torch import nn

from src.errors import ConfigError
from src.errors import ShapeError

ACTIVATIONS = { 'relu': nn.ReLU, 'gelu': nn.GELU, 'tanh': nn.Tanh }


@dataclass
class MlpConfig:
    widths: tuple = (256, 256)
    dropout: float = 0.125
    activation: str = 'relu'

    def validate(self):
        if any(w < 1 for w in self.widths):
            raise ConfigError('MLP layer widths must be positive, got %s' % (self.widths,))
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError('dropout must lie in [0, 1), got %g' % self.dropout)
        if self.activation not in ACTIVATIONS:
            raise ConfigError('unknown activation %r' % self.activation)
        return self


class MlpNet(nn.Module):
    """Fully connected classifier of one flattened context window; returns per-class logits."""

    def __init__(self, n_inputs, n_classes, cfg=None):
        nn.Module.__init__(self)
        self.cfg = (MlpConfig() if cfg is None else cfg).validate()
        self.n_inputs = n_inputs
        layers, width = [], n_inputs
        for w in self.cfg.widths:
            layers += [ nn.Linear(width, w), ACTIVATIONS[self.cfg.activation](), nn.Dropout(self.cfg.dropout) ]
            width = w
        self.backbone = nn.Sequential(*layers)
        self.head = nn.Linear(width, n_classes)

    def forward(self, x):
        if x.shape[-1] != self.n_inputs:
            raise ShapeError('MLP expects %d inputs, got %d' % (self.n_inputs, x.shape[-1]))
        return self.head(self.backbone(x))

    def backbone_parameters(self):
        return list(self.backbone.parameters())

    def head_parameters(self):
        return list(self.head.parameters())


def forward_mlp(net, x):
    """Probabilities for a batch of context windows (numpy or tensor), evaluation mode."""
    net.eval()
    with torch.no_grad():
        x = torch.as_tensor(x, dtype=next(net.parameters()).dtype)
        return torch.sigmoid(net(x)).numpy()
