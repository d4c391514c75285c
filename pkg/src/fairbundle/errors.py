"""Exception hierarchy shared across the package."""


class FairBundleError(Exception):
    """Base class for all package errors."""


class UnknownItemError(FairBundleError, KeyError):
    pass


class MissingRelevanceError(FairBundleError, KeyError):
    pass


class EmptySessionError(FairBundleError):
    """Raised when exposure is requested before any item was served."""


class ZeroTargetError(FairBundleError, ValueError):
    pass


class HorizonExceededError(FairBundleError):
    pass


class InstanceTooLargeError(FairBundleError):
    pass


class MalformedRequestError(FairBundleError, ValueError):
    pass


class ConfigError(FairBundleError):
    pass


class DataError(FairBundleError):
    """Raised for unreadable, malformed or inconsistent input data."""


class TraceMismatchError(FairBundleError):
    pass
