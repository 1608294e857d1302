"""Exception hierarchy shared by all pipeline stages."""


class PipelineError(Exception):
    """Base class for every error raised by pamflow."""


class IoFailure(PipelineError):
    pass


# media_io
class MalformedHeader(PipelineError):
    pass


class UnsupportedEncoding(PipelineError):
    pass


class PayloadTruncated(PipelineError):
    pass


# inventory / csv tables
class TargetMissing(PipelineError):
    pass


class SchemaMismatch(PipelineError):
    pass


class RowParseFailure(PipelineError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


# classify
class DuplicateCode(PipelineError):
    def __init__(self, code: str):
        super().__init__(f"duplicate class code {code!r}")
        self.code = code


class ValueOutOfRange(PipelineError):
    def __init__(self, field: str, line: int, message: str = ""):
        super().__init__(f"line {line}: field {field!r} out of range" + (f" ({message})" if message else ""))
        self.field = field
        self.line = line


class BackendFailure(PipelineError):
    pass


class ShapeMismatch(PipelineError):
    pass


# detect
class UnknownClassOverride(PipelineError):
    pass


class HeaderMismatch(PipelineError):
    def __init__(self, column: int, expected: str, found: str):
        super().__init__(f"column {column}: expected {expected!r}, found {found!r}")
        self.column = column
        self.expected = expected
        self.found = found


class DuplicateClipId(PipelineError):
    def __init__(self, clip_id: str):
        super().__init__(f"duplicate clip_id {clip_id!r}")
        self.clip_id = clip_id


class SourceNotInInventory(PipelineError):
    pass


class UsageError(PipelineError):
    pass
