class DomainscopeError(RuntimeError):
    exit_status = 1


class ValidationError(DomainscopeError):
    exit_status = 1


class ConfigError(ValidationError):
    pass


class UsageError(ValidationError):
    pass


class RegistryError(ValidationError):
    pass


class MalformedHost(ValidationError):
    pass


class DecodeError(ValidationError):
    pass


class MissingCorporateSnapshot(ValidationError):
    pass


class HostNotInGraph(ValidationError):
    pass


class DuplicateEdge(ValidationError):
    pass


class BackendError(DomainscopeError):
    exit_status = 2


class BackendUnavailable(BackendError):
    retryable = True


class QuotaExhausted(BackendError):
    pass


class QueryRejected(BackendError):
    pass


class FetcherUnavailable(BackendError):
    pass


class StatsError(DomainscopeError):
    pass


class DegenerateColumn(StatsError):
    pass


class SingularMatrix(StatsError):
    pass


class InsufficientData(StatsError):
    pass


class PageFetchFailed(DomainscopeError):
    pass
