"""Exception hierarchy shared across the toolkit."""


class CavelineError(Exception):
    """Base class for all caveline toolkit errors."""


class MissingFile(CavelineError):
    pass


class DuplicateId(CavelineError):
    pass


class InvalidSplit(CavelineError):
    pass


class IoFailure(CavelineError):
    pass


class InvalidConfig(CavelineError):
    pass


class ShapeMismatch(CavelineError):
    pass


class EmptyDataset(CavelineError):
    pass


class NonFiniteLoss(CavelineError):
    pass


class EmptySeed(CavelineError):
    pass


class NoCheckpoint(CavelineError):
    pass


class UnknownSample(CavelineError):
    pass


class DuplicateVerdict(CavelineError):
    pass


class NothingNew(CavelineError):
    pass
