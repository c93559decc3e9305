"""Exception types shared across the package."""


class DistillError(Exception):
    """Base class for all mapdistill errors."""


class ContractError(DistillError):
    """A documented precondition or invariant was violated by the caller."""


class EmptyInputError(DistillError):
    """An operation received (or produced) an empty element set."""


class SessionFormatError(DistillError):
    """Base class for session file format problems."""


class BadMagicError(SessionFormatError):
    """Session file does not start with the expected magic bytes."""


class VersionMismatchError(SessionFormatError):
    """Session file was written with an unsupported format version."""


class TruncatedSessionError(SessionFormatError):
    """Session file ended before the declared number of records."""


class MissingPayloadError(DistillError):
    """A scan payload file referenced by the log does not exist."""


class SpecFileError(DistillError):
    """A synthetic world/trajectory spec file failed to parse or validate."""
