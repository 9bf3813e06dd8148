"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 1 for invalid input,
2 for I/O problems, 3 for corpus generation failures.
"""


class AggtokError(Exception):
    exit_code = 1


class ValidationError(AggtokError):
    exit_code = 1


class IoError(AggtokError):
    exit_code = 2


class GenerationError(AggtokError):
    exit_code = 3


# tokenizer_core
class EmptyCorpus(ValidationError):
    pass


class VocabTooSmall(ValidationError):
    pass


class IdOutOfRange(ValidationError):
    def __init__(self, token_id, position=None, limit=None):
        self.token_id = token_id
        self.position = position
        self.limit = limit
        msg = f"token id {token_id} out of range"
        if limit is not None:
            msg += f" [0, {limit})"
        if position is not None:
            msg += f" at position {position}"
        super().__init__(msg)


class MalformedModel(ValidationError):
    def __init__(self, reason, path=None):
        self.reason = reason
        self.path = path
        super().__init__(f"{path}: {reason}" if path else reason)


# aggregate
class DuplicateLanguage(ValidationError):
    pass


class TooFewParts(ValidationError):
    pass


class UnknownLanguage(ValidationError):
    def __init__(self, language, segment_index=None):
        self.language = language
        self.segment_index = segment_index
        msg = f"unknown language {language!r}"
        if segment_index is not None:
            msg += f" in segment {segment_index}"
        super().__init__(msg)


class HashMismatch(ValidationError):
    def __init__(self, language, path, expected, actual):
        self.language = language
        self.path = path
        super().__init__(
            f"model for {language!r} at {path} has sha256 {actual}, expected {expected}"
        )


# lid
class EmptyTokenSequence(ValidationError):
    pass


# corpus
class MalformedLine(ValidationError):
    def __init__(self, line_no, reason):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class MissingField(MalformedLine):
    def __init__(self, line_no, field):
        self.field = field
        super().__init__(line_no, f"missing field {field!r}")


class UnsupportedFormat(ValidationError):
    def __init__(self, detail, path=None):
        self.detail = detail
        self.path = path
        super().__init__(f"{path}: unsupported format ({detail})" if path else detail)


# csgen
class EmptyPool(GenerationError):
    def __init__(self, language):
        self.language = language
        super().__init__(f"pool for language {language!r} is empty")


class GenerationStuck(GenerationError):
    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class DurationMismatch(ValidationError):
    def __init__(self, path, stated, actual):
        self.path = path
        self.stated = stated
        self.actual = actual
        super().__init__(
            f"{path}: audio lasts {actual:.3f} s but manifest states {stated:.3f} s"
        )


# metrics
class EmptyReference(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass
