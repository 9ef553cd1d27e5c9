from dataclasses import dataclass

import torch
from torch import nn

from src.errors import ConfigError
from src.errors import ShapeError


@dataclass
class CnnConfig:
    channels: tuple = (16, 32, 64, 64, 32)
    kernels: tuple = (5, 3, 3, 3, 3)
    pools: tuple = (2, 2, 2, 1, 2)
    fc_widths: tuple = (128,)
    dropout: float = 0.125
    block: str = 'plain'         # or 'residual', two convolutions per stage with a skip

    def validate(self):
        if not (len(self.channels) == len(self.kernels) == len(self.pools)):
            raise ConfigError('channels, kernels and pools must have the same length')
        if self.block not in ('plain', 'residual'):
            raise ConfigError('unknown CNN block %r' % self.block)
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError('dropout must lie in [0, 1), got %g' % self.dropout)
        return self


class ResidualBlock(nn.Module):

    def __init__(self, c_in, c_out, kernel):
        nn.Module.__init__(self)
        self.conv1 = nn.Conv2d(c_in, c_out, kernel, padding=kernel//2)
        self.conv2 = nn.Conv2d(c_out, c_out, kernel, padding=kernel//2)
        self.skip = nn.Identity() if c_in == c_out else nn.Conv2d(c_in, c_out, 1)
        self.act = nn.ReLU()

    def forward(self, x):
        return self.act(self.conv2(self.act(self.conv1(x))) + self.skip(x))


class CnnNet(nn.Module):
    """Input (batch, n_mel, frames); returns per-class logits."""

    def __init__(self, n_mel, n_frames, n_classes, cfg=None):
        nn.Module.__init__(self)
        self.cfg = (CnnConfig() if cfg is None else cfg).validate()
        self.input_shape = (n_mel, n_frames)
        layers, c_in = [], 1
        h, w = n_mel, n_frames
        for c_out, k, p in zip(self.cfg.channels, self.cfg.kernels, self.cfg.pools):
            if self.cfg.block == 'plain':
                layers += [ nn.Conv2d(c_in, c_out, k, padding=k//2), nn.ReLU() ]
            else:
                layers.append(ResidualBlock(c_in, c_out, k))
            if p > 1:
                layers.append(nn.MaxPool2d(p))
                h, w = h // p, w // p
            if h < 1 or w < 1:
                raise ConfigError('input %dx%d shrinks below one cell in the convolution stack' % (n_mel, n_frames))
            c_in = c_out
        fc, width = [nn.Flatten()], c_in*h*w
        for u in self.cfg.fc_widths:
            fc += [ nn.Linear(width, u), nn.ReLU(), nn.Dropout(self.cfg.dropout) ]
            width = u
        self.backbone = nn.Sequential(*(layers + fc))
        self.head = nn.Linear(width, n_classes)

    def forward(self, x):
        if tuple(x.shape[-2:]) != self.input_shape:
            raise ShapeError('CNN expects windows of shape %s, got %s' % (self.input_shape, tuple(x.shape[-2:])))
        return self.head(self.backbone(x.unsqueeze(1)))

    def backbone_parameters(self):
        return list(self.backbone.parameters())

    def head_parameters(self):
        return list(self.head.parameters())


def forward_cnn(net, x):
    net.eval()
    with torch.no_grad():
        x = torch.as_tensor(x, dtype=next(net.parameters()).dtype)
        return torch.sigmoid(net(x)).numpy()
