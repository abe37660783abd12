"""Exception taxonomy for the selection engine.

Every failure mode that callers are expected to handle gets its own class;
plain ValueError/TypeError are reserved for programmer errors (wrong types,
mismatched shapes passed directly to library functions).
"""


class MzselError(Exception):
    """Base class for all engine errors."""


# --- wire format / ingestion ------------------------------------------------

class WireFormatError(MzselError):
    """Base class for errors while reading the binary embedding format."""


class BadMagic(WireFormatError):
    pass


class VersionMismatch(WireFormatError):
    pass


class TruncatedFile(WireFormatError):
    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (at byte offset {byte_offset})")
        self.byte_offset = byte_offset


class InvariantViolation(MzselError):
    """A domain-type invariant failed; `row` is set when a sample is at fault."""

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row


class IoError(MzselError):
    pass


class ManifestError(MzselError):
    pass


# --- kernels ------------------------------------------------------------------

class KindMismatch(MzselError):
    pass


class DegenerateMatrix(MzselError):
    """Centered norm of a kernel is numerically zero; Pearson is undefined."""


# --- scores -------------------------------------------------------------------

class ConstantRow(MzselError):
    def __init__(self, row: int):
        super().__init__(f"row {row} is constant; per-row correlation undefined")
        self.row = row


class DegenerateRanking(MzselError):
    pass


class NoSurvivingClass(MzselError):
    pass


class SolverNonConvergence(MzselError):
    pass


# --- dynamics -----------------------------------------------------------------

class NonConvergence(MzselError):
    pass


class AllEigenvaluesFloored(MzselError):
    pass


class ZeroRangeResidual(MzselError):
    pass


class Divergence(MzselError):
    pass


# --- evaluation ---------------------------------------------------------------

class DuplicateModel(MzselError):
    pass


class InsufficientGroundTruth(MzselError):
    pass


class MissingInput(MzselError):
    """A method lacks a required input file for some model; the harness skips
    the method zoo-wide and records a warning instead of crashing."""

    def __init__(self, model: str, method: str, what: str):
        super().__init__(f"model '{model}' lacks {what} required by method '{method}'")
        self.model = model
        self.method = method
