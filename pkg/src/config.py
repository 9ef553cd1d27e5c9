import json
import logging
import os
from dataclasses import replace
from typing import Any
from typing import Dict
from typing import List
from typing import Optional

from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import ValidationError as PydanticValidationError
from pydantic import model_validator

from src.dataset import TASKS
from src.errors import ConfigError
from src.errors import FormatError
from src.errors import MissingInputError
from src.estimators import FAMILIES
from src.estimators import default_feature_config
from src.labels import LabelGrid
from src.pipeline import DetectionConfig
from src.synthesis import SynthSpec

logger = logging.getLogger(__name__)


class Settings(BaseModel):
    model_config = ConfigDict(extra='forbid')


class DataSettings(Settings):
    audio_dir: str
    annotations: str
    channel_policy: str = 'average'
    max_len: float = 60.0          # longer recordings are split at call-free points


class SynthSettings(Settings):
    seed: int = 7
    n_recordings: int = 20
    duration: float = 60.0
    snr_db: float = 10.0
    noise_event_rate: float = 3.0

    def spec(self):
        return SynthSpec(seed=self.seed, n_recordings=self.n_recordings, duration_range=(self.duration, self.duration),
                         noise_event_rate=self.noise_event_rate, snr_db=self.snr_db)


class FeatureSettings(Settings):
    """Unset fields keep the model family's default."""
    kind: Optional[str] = None
    frame_len_ms: Optional[float] = None
    stride_ms: Optional[float] = None
    dft_size: Optional[int] = None
    n_mel: Optional[int] = None
    n_cep: Optional[int] = None
    f_min: Optional[float] = None
    f_max: Optional[float] = None
    cmvn: Optional[bool] = None
    pca: bool = True
    pca_fraction: Optional[float] = None
    pca_components: Optional[int] = None
    pca_whiten: Optional[bool] = None


class ModelSettings(Settings):
    family: str = 'logreg'
    params: Dict[str, Any] = {}
    search: Dict[str, List[Any]] = {}
    path: Optional[str] = None     # trained model container for detect/classify


class CvSettings(Settings):
    folds: int = 5
    plan: Optional[str] = None     # reuse an existing fold plan


class DetectionSettings(Settings):
    threshold: float = 0.5
    strategy: Optional[str] = None
    margin: Optional[float] = None
    min_gap: float = 0.0
    min_duration: float = 0.0
    tolerance: float = 0.2
    label_window: float = 0.1


class RunConfig(Settings):
    task: str = 'detect-binary'
    seed: int = 7
    data: Optional[DataSettings] = None
    synth: Optional[SynthSettings] = None
    features: FeatureSettings = FeatureSettings()
    model: ModelSettings = ModelSettings()
    cv: CvSettings = CvSettings()
    detection: DetectionSettings = DetectionSettings()
    cache_dir: Optional[str] = None
    show_progress: bool = False

    @model_validator(mode='after')
    def check(self):
        if self.data is not None and self.synth is not None:
            raise ValueError('configure exactly one data source, data or synth')
        if self.data is None and self.synth is None:
            self.synth = SynthSettings()
        if self.task not in TASKS:
            raise ValueError('unknown task %r, expected one of %s' % (self.task, ', '.join(TASKS)))
        if self.model.family not in FAMILIES:
            raise ValueError('unknown model family %r, expected one of %s' % (self.model.family, ', '.join(FAMILIES)))
        if not (0.0 < self.detection.threshold < 1.0):
            raise ValueError('detection.threshold must lie in (0, 1)')
        if self.cv.folds < 3:
            raise ValueError('cv.folds must be at least 3')
        strategy = self.detection_strategy()
        if self.model.family == 'ast-seq':
            if strategy != 'sequence':
                raise ValueError('ast-seq needs the sequence strategy')
            if self.features.kind not in (None, 'logmel'):
                raise ValueError('ast-seq needs logmel features')
        elif strategy == 'sequence':
            raise ValueError('the sequence strategy needs the ast-seq family')
        return self

    def detection_strategy(self):
        if self.detection.strategy is not None:
            return self.detection.strategy
        return 'sequence' if self.model.family == 'ast-seq' else 'per-frame'

    def feature_config(self):
        cfg = default_feature_config(self.model.family)
        changes = { k: v for k, v in self.features.model_dump().items() if v is not None and k != 'pca' }
        if not self.features.pca:
            changes.update(pca_fraction=None, pca_components=None)
        return replace(cfg, **changes).validate()

    def detection_config(self):
        d = self.detection
        return DetectionConfig(d.threshold, self.detection_strategy(), d.margin, d.min_gap, d.min_duration).validate()

    def label_grid(self):
        return LabelGrid(window=self.detection.label_window)


def set_override(raw, assignment):
    """Apply one 'dotted.key=value' override to a nested dict."""
    if '=' not in assignment:
        raise ConfigError('override %r is not of the form key=value' % assignment)
    key, text = assignment.split('=', 1)
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    node = raw
    parts = key.strip().split('.')
    for part in parts[:-1]:
        if not isinstance(node.get(part, {}), dict):
            raise ConfigError('override %r descends into a non-object' % key)
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return raw


def load_config(path=None, overrides=()):
    """Defaults < file < `--set` overrides; override values are parsed as JSON, else kept as strings."""
    raw = {}
    if path is not None:
        if not os.path.isfile(path):
            raise MissingInputError('config file %s does not exist' % path)
        with open(path, 'r') as handle:
            try:
                raw = json.load(handle)
            except json.JSONDecodeError as e:
                raise FormatError('%s: %s' % (path, e))
        if not isinstance(raw, dict):
            raise FormatError('%s: the configuration must be a JSON object' % path)
    for assignment in overrides:
        set_override(raw, assignment)
    try:
        return RunConfig.model_validate(raw)
    except PydanticValidationError as e:
        problems = [ '%s: %s' % ('.'.join(str(p) for p in err['loc']) or 'config', err['msg']) for err in e.errors() ]
        raise ConfigError('; '.join(problems))


def dump_config(cfg):
    """Canonical JSON text of a configuration."""
    return json.dumps(cfg.model_dump(mode='json'), indent=2, sort_keys=True) + '\n'


def config_schema():
    return json.dumps(RunConfig.model_json_schema(), indent=2, sort_keys=True) + '\n'
