class TrunklineError(Exception):
    code = 'ERROR'
    exit_code = 3

    def __init__(self, message, code=None):
        Exception.__init__(self, message)
        if code is not None:
            self.code = code

    def one_line(self):
        return '%s: %s' % (self.code, ' '.join(str(self).split()))


class ValidationError(TrunklineError):
    code = 'VALIDATION'
    exit_code = 2


class FormatError(ValidationError):
    code = 'FORMAT'


class UnsupportedCodecError(ValidationError):
    code = 'UNSUPPORTED_CODEC'


class ConfigError(ValidationError):
    code = 'CONFIG'


class ShapeError(ValidationError):
    code = 'SHAPE'


class TopologyError(ValidationError):
    """Weight container does not match the model; `mismatches` is itemized per block."""
    code = 'TOPOLOGY'

    def __init__(self, mismatches):
        self.mismatches = list(mismatches)
        ValidationError.__init__(self, 'topology mismatch: ' + '; '.join(self.mismatches))


class UnmappedLabelError(ValidationError):
    code = 'UNMAPPED_LABEL'

    def __init__(self, labels):
        self.labels = sorted(set(labels))
        ValidationError.__init__(self, 'unmapped source label(s): ' + ', '.join(self.labels))


class UnsupportedCombinationError(ValidationError):
    code = 'UNSUPPORTED_COMBINATION'


class DegenerateCalibrationError(ValidationError):
    code = 'DEGENERATE_CALIBRATION'


class MissingInputError(ValidationError):
    code = 'MISSING_INPUT'


class EmptySearchSpaceError(ValidationError):
    code = 'EMPTY_SEARCH_SPACE'


class RuntimeFailure(TrunklineError):
    code = 'RUNTIME'
    exit_code = 3


class UntrainedModelError(RuntimeFailure):
    code = 'UNTRAINED'


class NonFiniteError(RuntimeFailure):
    code = 'NON_FINITE'


class LeakageError(RuntimeFailure):
    """A model was fitted on recordings of the fold it is evaluated on."""
    code = 'LEAKAGE'
