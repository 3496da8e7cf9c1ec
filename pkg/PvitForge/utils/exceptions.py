class PvitError(Exception):
    exit_code = 2

    def __init__(self, errr: str):
        super().__init__(errr)


class ConfigInvalid(PvitError):
    exit_code = 1


class MissingStageInput(PvitError):
    pass


class PreconditionError(PvitError):
    pass


class MalformedRequest(PreconditionError):
    pass


class CorruptRecord(PvitError):
    def __init__(self, errr: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {errr}" if line else errr)


# backends


class BackendError(PvitError):
    pass


class BackendUnreachable(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class EmptyCompletion(BackendError):
    pass


class QuotaExceeded(BackendError):
    pass


class PrefixTooLarge(BackendError):
    pass


class ImageDecode(BackendError):
    pass


# curation


class InsufficientPersons(PvitError):
    pass


# extraction


class PlaceholderMissing(PvitError):
    pass


class FusionDegenerate(PvitError):
    pass


# synthesis


class NoTemplates(PvitError):
    pass


class ParseFailure(PvitError):
    pass


class PoolExhausted(PvitError):
    pass


class UnboundPlaceholder(PvitError):
    pass


class UnknownRelation(PvitError):
    pass


class NoDonorScenes(PvitError):
    pass


# bench / eval


class InsufficientScenes(PvitError):
    def __init__(self, bench_type: str, wanted: int, available: int):
        self.bench_type = bench_type
        super().__init__(
            f"{bench_type}: quota {wanted} but only {available} eligible scenes"
        )


class MissingResponses(PvitError):
    pass
