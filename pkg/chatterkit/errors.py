"""Exceptions raised by chatterkit."""


class ChatterkitError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameter(ChatterkitError, ValueError):
    """A parameter is outside its documented range."""


class MissingFile(ChatterkitError, FileNotFoundError):
    pass


class ParseError(ChatterkitError, ValueError):
    pass


class IoError(ChatterkitError, OSError):
    pass


class EmptyDataset(ChatterkitError, ValueError):
    pass


class MixedDatasetTags(ChatterkitError, ValueError):
    pass


class InvalidCutoff(ChatterkitError, ValueError):
    pass


class ZeroFactor(ChatterkitError, ValueError):
    pass


class EmptyInput(ChatterkitError, ValueError):
    pass


class LagTooLarge(ChatterkitError, ValueError):
    pass


class SignalTooShort(ChatterkitError, ValueError):
    pass


class UnknownWavelet(ChatterkitError, ValueError):
    pass


class IndexOutOfRange(ChatterkitError, IndexError):
    pass


class NoUnstableRecords(ChatterkitError, ValueError):
    pass


class ConstantSignal(ChatterkitError, ValueError):
    pass


class InfeasibleWindow(ChatterkitError, ValueError):
    pass


class KTooLarge(ChatterkitError, ValueError):
    pass


class TooFewPoints(ChatterkitError, ValueError):
    pass


class InvalidPixelSize(ChatterkitError, ValueError):
    pass


class DegenerateMesh(ChatterkitError, ValueError):
    pass


class SingleClassTrainingSet(ChatterkitError, ValueError):
    pass


class DimensionMismatch(ChatterkitError, ValueError):
    pass


class FeatureMismatch(ChatterkitError, ValueError):
    pass


class TooFewTags(ChatterkitError, ValueError):
    pass


class MissingFeatures(ChatterkitError, KeyError):
    def __str__(self) -> str:
        # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class InvalidConfiguration(ChatterkitError, ValueError):
    pass


class IncompleteReport(ChatterkitError, ValueError):
    pass


class UnresolvableDelay(ChatterkitError, ValueError):
    pass
