"""Exception hierarchy shared by every stage of the safety pipeline."""


class PSMError(Exception):
    """Base class for all errors raised by :mod:`psm`."""


class SingularMass(PSMError):
    """The pendulum mass matrix could not be factorized."""


class StateDiverged(PSMError):
    """The pendulum state left its configured bounds."""


class SeriesTooShort(PSMError):
    """A filter was asked to process fewer samples than its edge padding."""


class NotCalibrated(PSMError):
    """Gravity compensation was requested before a stillness window was seen."""


class IndexOutOfGrid(PSMError):
    """A probability-grid index lies outside the grid."""


class EmptyRecordings(PSMError):
    """A dataset build was requested without any samples."""


class WindowNotFull(PSMError):
    """A spectral score was requested before the window buffer filled up."""


class ConfigError(PSMError):
    """A configuration file or value is malformed."""
