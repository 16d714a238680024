"""Exception hierarchy shared across the package."""


class FedMapError(Exception):
    """Base class for all errors raised by fedmap."""


class ParseError(FedMapError):
    pass


class IntegrityError(FedMapError):
    pass


class LevelOutOfRange(FedMapError):
    pass


class CoverTooLarge(FedMapError):
    pass


class MalformedCellDomain(FedMapError):
    pass


class NameOutsideSuffix(FedMapError):
    pass


class ResolutionFailure(FedMapError):
    pass


class NotAuthorized(FedMapError):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class ServiceNotImplemented(FedMapError):
    pass


class Unreachable(FedMapError):
    pass


class SnapFailed(FedMapError):
    pass


class UnknownNode(FedMapError):
    pass


class NoFingerprintCoverage(FedMapError):
    pass


class FrameMismatch(FedMapError):
    pass


class RootUnavailable(FedMapError):
    pass


class AllServersFailed(FedMapError):
    pass


class NoRoute(FedMapError):
    pass


class GeocodeFailed(FedMapError):
    pass


class NoCandidates(FedMapError):
    pass


class ScenarioError(FedMapError):
    pass


class ServerUnavailable(FedMapError):
    """A map server could not be reached (after retry) or answered garbage."""


class RemoteError(FedMapError):
    def __init__(self, status, kind, detail=""):
        super().__init__(f"{status} {kind}: {detail}")
        self.status = status
        self.kind = kind
        self.detail = detail
