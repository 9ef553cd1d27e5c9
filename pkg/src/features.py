import hashlib
import json
import logging
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct
from scipy.fft import rfft
from scipy.signal import get_window

from src.errors import ConfigError
from src.errors import ShapeError
from src.helpers import check_finite
from src.serialization import read_feature_cache
from src.serialization import write_feature_cache

logger = logging.getLogger(__name__)

LOG_FLOOR = 1.0e-10
VARIANCE_FLOOR = 1.0e-8
FEATURE_KINDS = ('power', 'mel', 'logmel', 'mfcc')

# only these fields change the cached matrix
_EXTRACTION_FIELDS = ('sample_rate', 'frame_len_ms', 'stride_ms', 'dft_size', 'n_mel', 'n_cep', 'f_min', 'f_max', 'kind')


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int = 16000
    frame_len_ms: float = 25.0
    stride_ms: float = 10.0
    dft_size: int = 1024
    n_mel: int = 128
    n_cep: int = 31
    f_min: float = 0.0
    f_max: float = 8000.0
    kind: str = 'mfcc'
    cmvn: bool = True
    pca_fraction: float = None
    pca_components: int = None
    pca_whiten: bool = True

    @property
    def frame_len(self):
        return int(round(self.frame_len_ms * self.sample_rate / 1000.0))

    @property
    def stride(self):
        return int(round(self.stride_ms * self.sample_rate / 1000.0))

    @property
    def n_bins(self):
        return self.dft_size // 2 + 1

    @property
    def dim(self):
        return { 'power': self.n_bins, 'mel': self.n_mel, 'logmel': self.n_mel, 'mfcc': self.n_cep }[self.kind]

    def validate(self):
        if self.kind not in FEATURE_KINDS:
            raise ConfigError('unknown feature kind %r, expected one of %s' % (self.kind, ', '.join(FEATURE_KINDS)))
        if self.frame_len < 1 or self.stride < 1:
            raise ConfigError('frame length and stride must be at least one sample')
        if self.frame_len > self.dft_size:
            raise ConfigError('frame of %d samples does not fit a %d point DFT' % (self.frame_len, self.dft_size))
        if not (1 <= self.n_cep <= self.n_mel):
            raise ConfigError('need 1 <= n_cep <= n_mel, got n_cep=%d, n_mel=%d' % (self.n_cep, self.n_mel))
        if not (0.0 <= self.f_min < self.f_max <= self.sample_rate / 2.0):
            raise ConfigError('invalid mel band [%g, %g] Hz' % (self.f_min, self.f_max))
        if self.pca_fraction is not None and not (0.0 < self.pca_fraction <= 1.0):
            raise ConfigError('explained variance fraction must lie in (0, 1], got %g' % self.pca_fraction)
        return self

    def extraction_dict(self):
        return { k: v for k, v in asdict(self).items() if k in _EXTRACTION_FIELDS }

    def config_hash(self):
        text = json.dumps(self.extraction_dict(), sort_keys=True)
        return int.from_bytes(hashlib.sha1(text.encode('utf-8')).digest()[:4], 'little')


@dataclass
class FeatureMatrix:
    """
    Time-major feature matrix.

    offset ... index of the extraction frame that row 0 is centred on; non-zero
               after context windowing drops edge rows
    """
    values: np.ndarray
    config: FeatureConfig
    recording_id: str = None
    offset: int = 0
    flags: list = field(default_factory=list)

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    @property
    def frame_times(self):
        cfg = self.config
        idx = np.arange(self.rows) + self.offset
        return (idx*cfg.stride + 0.5*cfg.frame_len) / float(cfg.sample_rate)

    def with_values(self, values, **changes):
        return replace(self, values=values, flags=list(self.flags), **changes)


def frame_count(n_samples, cfg):
    if n_samples < cfg.frame_len:
        return 0
    return (n_samples - cfg.frame_len) // cfg.stride + 1


def stft_power(rec, cfg):
    """Squared magnitude of the zero-padded, Hamming-windowed DFT of every frame."""
    cfg.validate()
    samples = np.asarray(rec.samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ShapeError('stft_power needs a mono recording')
    T = frame_count(samples.shape[0], cfg)
    if T == 0:
        return FeatureMatrix(np.zeros((0, cfg.n_bins)), cfg, rec.id, flags=['empty'])
    frames = sliding_window_view(samples, cfg.frame_len)[::cfg.stride][:T]
    window = get_window('hamming', cfg.frame_len, fftbins=True)
    spectrum = rfft(frames * window, n=cfg.dft_size, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    return FeatureMatrix(power, cfg, rec.id)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0**(np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(cfg):
    """
    Triangular filters equally spaced on the mel scale, shape (n_mel, n_bins).
    Filter j rises from centre j-1 to 1 at centre j and falls to 0 at centre j+1.
    """
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mel + 2))
    freqs = np.arange(cfg.n_bins) * cfg.sample_rate / float(cfg.dft_size)
    lower, centre, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lower) / (centre - lower)
    falling = (upper - freqs[None, :]) / (upper - centre)
    bank = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(np.sum(bank, axis=1) <= 0.0)
    if empty.size > 0:
        raise ConfigError('%d mel filters cover no DFT bin (n_mel=%d too large for dft_size=%d), first empty filter %d'
                          % (empty.size, cfg.n_mel, cfg.dft_size, empty[0]))
    return bank


def mel_spectrogram(power, cfg=None, log=False):
    cfg = power.config if cfg is None else cfg
    if power.cols != cfg.n_bins:
        raise ShapeError('power spectrum has %d bins, configuration expects %d' % (power.cols, cfg.n_bins))
    mel = power.values @ mel_filterbank(cfg).T
    if log:
        mel = np.log(mel + LOG_FLOOR)
    return power.with_values(mel)


def mfcc(mel, cfg=None):
    """Orthonormal DCT-II of log mel energies, first n_cep coefficients."""
    cfg = mel.config if cfg is None else cfg
    log_mel = np.log(np.maximum(mel.values, LOG_FLOOR))
    cepstra = dct(log_mel, type=2, norm='ortho', axis=1)[:, :cfg.n_cep]
    return mel.with_values(cepstra)


def extract_features(rec, cfg):
    cfg.validate()
    power = stft_power(rec, cfg)
    if cfg.kind == 'power':
        result = power
    elif cfg.kind == 'mel':
        result = mel_spectrogram(power, cfg)
    elif cfg.kind == 'logmel':
        result = mel_spectrogram(power, cfg, log=True)
    else:
        result = mfcc(mel_spectrogram(power, cfg), cfg)
    check_finite(result.values, 'features of %s' % rec.id)
    return result


@dataclass
class CmvnStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, f):
        if f.cols != self.mean.shape[0]:
            raise ShapeError('CMVN statistics have %d columns, features %d' % (self.mean.shape[0], f.cols))
        return f.with_values((f.values - self.mean) / self.std)


def fit_cmvn(matrices):
    """Column statistics pooled over all rows of the given matrices (population variance)."""
    if isinstance(matrices, FeatureMatrix):
        matrices = [matrices]
    stacked = np.concatenate([m.values for m in matrices], axis=0)
    if stacked.shape[0] == 0:
        raise ShapeError('cannot fit CMVN statistics on an empty matrix')
    mean = np.mean(stacked, axis=0)
    var = np.var(stacked, axis=0)
    return CmvnStats(mean, np.sqrt(np.maximum(var, VARIANCE_FLOOR)))


def cmvn(f, stats=None):
    # stats=None normalises with the matrix's own statistics
    if stats is None:
        if f.rows < 2:
            raise ShapeError('per-recording CMVN needs at least two frames, got %d' % f.rows)
        stats = fit_cmvn(f)
    return stats.apply(f)


def context_span(w, step=1):
    """Number of extraction frames covered by a context of w frames taken every `step` frames."""
    return (w - 1)*step + 1


def context_windows(f, w, step=1):
    """
    Row i is the concatenation of w frames centred on frame offset+i+(span-1)//2.
    Windows crossing the recording edge are dropped.
    """
    if w < 1 or step < 1:
        raise ConfigError('context length and step must be positive')
    span = context_span(w, step)
    if span > f.rows:
        return f.with_values(np.zeros((0, f.cols*w)), offset=f.offset + (span-1)//2)
    windows = sliding_window_view(f.values, span, axis=0)[:, :, ::step]   # (rows, D, w)
    values = np.ascontiguousarray(np.transpose(windows, (0, 2, 1))).reshape(windows.shape[0], f.cols*w)
    return f.with_values(values, offset=f.offset + (span-1)//2)


def save_features(path, f):
    write_feature_cache(path, f.values, f.config.config_hash())


def load_features(path, cfg, recording_id=None):
    values, config_hash = read_feature_cache(path)
    if config_hash != cfg.config_hash():
        raise ConfigError('%s was extracted with a different feature configuration (hash %08x, expected %08x)'
                          % (path, config_hash, cfg.config_hash()))
    if values.shape[1] != cfg.dim and values.shape[0] > 0:
        raise ShapeError('%s has %d columns, configuration expects %d' % (path, values.shape[1], cfg.dim))
    return FeatureMatrix(values.astype(np.float64), cfg, recording_id)
