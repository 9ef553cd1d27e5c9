import copy
import logging
from dataclasses import dataclass
from dataclasses import field

import numpy as np
import pandas
import torch
from torch import nn
from torch.utils.data import DataLoader
from torch.utils.data import Dataset
from torch.utils.data import TensorDataset
from tqdm import tqdm

from src.errors import ConfigError
from src.errors import NonFiniteError
from src.errors import TopologyError
from src.helpers import max_workers
from src.serialization import atomic_write
from src.serialization import read_model_container
from src.serialization import write_model_container

logger = logging.getLogger(__name__)


@dataclass
class TrainSchedule:
    optimizer: str = 'adam'
    lr: float = 1.0e-3
    batch_size: int = 64
    max_epochs: int = 30
    patience: int = 3
    convergence_tol: float = 1.0e-5
    convergence_epochs: int = 3
    freeze_epochs: int = 10
    ramp_epochs: int = 2
    backbone_lr_start: float = 0.01
    weight_decay: float = 0.01   # adamw only
    seed: int = 0

    def validate(self):
        if self.optimizer not in ('adam', 'adamw'):
            raise ConfigError('unknown optimizer %r' % self.optimizer)
        if self.patience < 1:
            raise ConfigError('patience must be at least 1')
        if self.ramp_epochs < 0 or self.freeze_epochs < 0:
            raise ConfigError('freeze and ramp epochs must be non-negative')
        if self.lr <= 0.0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError('invalid learning rate, batch size or epoch count')
        return self


def backbone_lr_factor(epoch, sched, pretrained):
    """
    Backbone learning rate as a fraction of the head learning rate in `epoch`
    (counted from 1). Pretrained backbones are frozen for freeze_epochs, then
    start at backbone_lr_start and reach 1 after ramp_epochs.
    """
    if not pretrained:
        return 1.0
    if epoch <= sched.freeze_epochs:
        return 0.0
    r = epoch - sched.freeze_epochs
    if r > sched.ramp_epochs:
        return 1.0
    return sched.backbone_lr_start + (1.0 - sched.backbone_lr_start)*(r - 1)/sched.ramp_epochs


class EarlyStopping:
    """
    Stops after `patience` consecutive epochs without a new best development
    loss, or when the loss changed by less than `tol` for `window` epochs.
    Keeps a copy of the best state for the rewind.
    """

    def __init__(self, patience=3, tol=1.0e-5, window=3):
        self.patience   = patience
        self.tol        = tol
        self.window     = window
        self.best_loss  = np.inf
        self.best_epoch = None
        self.best_state = None
        self.bad_epochs = 0
        self.losses     = []
        self.reason     = None

    def update(self, epoch, loss, state=None):
        """Record the epoch; returns True when training should stop."""
        self.losses.append(loss)
        if loss < self.best_loss:
            self.best_loss, self.best_epoch, self.bad_epochs = loss, epoch, 0
            self.best_state = copy.deepcopy(state)
        else:
            self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.reason = 'diverged'
            return True
        recent = np.abs(np.diff(self.losses[-(self.window+1):]))
        if len(recent) >= self.window and np.all(recent < self.tol):
            self.reason = 'converged'
            return True
        return False


@dataclass
class TrainResult:
    history: list = field(default_factory=list)   # dicts epoch, train_loss, dev_loss, head_lr, backbone_lr
    best_epoch: int = None
    stop_reason: str = None

    def table(self):
        return pandas.DataFrame(self.history, columns=['epoch', 'train_loss', 'dev_loss', 'head_lr', 'backbone_lr'])


def write_history(path, result):
    with atomic_write(path, 'w') as handle:
        result.table()[['epoch', 'train_loss', 'dev_loss']].to_csv(handle, index=False, float_format='%.8f',
                                                                    lineterminator='\n')


def as_dataset(data, dtype):
    if isinstance(data, Dataset):
        return data
    X, Y = data
    return TensorDataset(torch.as_tensor(X, dtype=dtype), torch.as_tensor(Y, dtype=dtype))


def _loader(data, batch_size, shuffle, seed, dtype):
    generator = torch.Generator().manual_seed(seed)
    return DataLoader(as_dataset(data, dtype), batch_size=batch_size, shuffle=shuffle, generator=generator)


def evaluate_loss(net, data, batch_size=256):
    """Mean BCE of the network's logits against {0,1} targets."""
    dtype = next(net.parameters()).dtype
    net.eval()
    total, count = 0.0, 0
    loss_fn = nn.BCEWithLogitsLoss(reduction='sum')
    with torch.no_grad():
        for xb, yb in _loader(data, batch_size, False, 0, dtype):
            total += float(loss_fn(net(xb.to(dtype)), yb.to(dtype)))
            count += yb.numel()
    return total / max(count, 1)


def _optimizer(net, sched):
    groups = [ {'params': net.backbone_parameters(), 'lr': sched.lr},
               {'params': net.head_parameters(), 'lr': sched.lr} ]
    if sched.optimizer == 'adamw':
        return torch.optim.AdamW(groups, lr=sched.lr, betas=(0.9, 0.98), weight_decay=sched.weight_decay)
    return torch.optim.Adam(groups, lr=sched.lr, betas=(0.9, 0.999))


def train(net, train_data, dev_data=None, sched=None, pretrained=False, show_progress=False):
    """
    Fit `net` on a torch Dataset or an (X, Y) numpy pair. Without development
    data the stopping rules watch the training loss. Returns a TrainResult;
    the network holds the parameters of the best epoch afterwards.
    """
    sched = (TrainSchedule() if sched is None else sched).validate()
    torch.set_num_threads(max_workers())
    torch.manual_seed(sched.seed)
    dtype = next(net.parameters()).dtype
    loader = _loader(train_data, sched.batch_size, True, sched.seed, dtype)
    if len(loader.dataset) == 0:
        raise ConfigError('no training example fits the model context')
    optimizer = _optimizer(net, sched)
    loss_fn = nn.BCEWithLogitsLoss()
    stopper = EarlyStopping(sched.patience, sched.convergence_tol, sched.convergence_epochs)
    result = TrainResult()
    for epoch in tqdm(range(1, sched.max_epochs + 1), 'Epochs', disable=(not show_progress)):
        factor = backbone_lr_factor(epoch, sched, pretrained)
        optimizer.param_groups[0]['lr'] = sched.lr*factor
        for p in net.backbone_parameters():
            p.requires_grad_(factor > 0.0)
        net.train()
        total, batches = 0.0, 0
        for b, (xb, yb) in enumerate(loader):
            optimizer.zero_grad()
            loss = loss_fn(net(xb.to(dtype)), yb.to(dtype))
            if not torch.isfinite(loss):
                raise NonFiniteError('non-finite training loss %s at epoch %d, batch %d (lr %g, backbone factor %g)'
                                     % (float(loss), epoch, b, sched.lr, factor))
            loss.backward()
            optimizer.step()
            total += float(loss)
            batches += 1
        train_loss = total / max(batches, 1)
        dev_loss = evaluate_loss(net, dev_data) if dev_data is not None else None
        result.history.append({ 'epoch': epoch, 'train_loss': train_loss, 'dev_loss': dev_loss,
                                'head_lr': sched.lr, 'backbone_lr': sched.lr*factor })
        monitored = dev_loss if dev_data is not None else train_loss
        if not np.isfinite(monitored):
            raise NonFiniteError('non-finite monitored loss at epoch %d' % epoch)
        logger.debug('epoch %d: train %.6f dev %s', epoch, train_loss, dev_loss)
        if stopper.update(epoch, monitored, net.state_dict()):
            break
    for p in net.parameters():
        p.requires_grad_(True)
    if stopper.best_state is not None:
        net.load_state_dict(stopper.best_state)
    result.best_epoch = stopper.best_epoch
    result.stop_reason = stopper.reason or 'max-epochs'
    logger.info('training stopped after %d epochs (%s), best epoch %s', len(result.history), result.stop_reason,
                result.best_epoch)
    return result


def state_blocks(net):
    return { name: tensor.detach().cpu().numpy().astype(np.float64) for name, tensor in net.state_dict().items() }


def export_weights(net, path, kind, hyperparams, extra_blocks=None):
    blocks = state_blocks(net)
    blocks.update(extra_blocks or {})
    write_model_container(path, kind, hyperparams, blocks)


def check_topology(net, blocks, backbone_only=False):
    """Itemized list of blocks missing from, or shaped differently than, the network."""
    mismatches = []
    for name, tensor in net.state_dict().items():
        if backbone_only and name.startswith('head.'):
            continue
        if name not in blocks:
            mismatches.append('%s: missing' % name)
        elif tuple(blocks[name].shape) != tuple(tensor.shape):
            mismatches.append('%s: expected %s, found %s' % (name, tuple(tensor.shape), tuple(blocks[name].shape)))
    return mismatches


def load_blocks(net, blocks, backbone_only=False):
    mismatches = check_topology(net, blocks, backbone_only)
    if mismatches:
        raise TopologyError(mismatches)
    state = net.state_dict()
    for name, tensor in state.items():
        if backbone_only and name.startswith('head.'):
            continue
        state[name] = torch.as_tensor(blocks[name], dtype=tensor.dtype)
    net.load_state_dict(state)
    return net


def import_weights(net, path, backbone_only=True):
    """
    Load an EMD1 weight container into `net`. The container is read and every
    block checked before any parameter changes.
    """
    kind, hyperparams, blocks = read_model_container(path)
    logger.info('importing %s weights of kind %s', 'backbone' if backbone_only else 'all', kind)
    if any(name.startswith('net.') for name in blocks):
        # a saved classifier, keep its network blocks only
        blocks = { name[4:]: v for name, v in blocks.items() if name.startswith('net.') }
    return load_blocks(net, blocks, backbone_only)
