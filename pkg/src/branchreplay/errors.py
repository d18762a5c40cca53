"""Exception hierarchy for the branchreplay package.

Every error raised by this package derives from BranchReplayError, so callers
can catch one type at an API boundary. The leaf classes are grouped by the
subsystem that raises them.
"""

from __future__ import annotations


class BranchReplayError(Exception):
    """Base class for all errors raised by branchreplay."""


# -- hardware encoding limits -------------------------------------------------

class CapacityExceeded(BranchReplayError):
    """A compacted pattern store needs more than 16 pattern elements."""


class OffsetOverflow(BranchReplayError):
    """A branch target offset does not fit the signed 12-bit field."""


class CounterOverflow(BranchReplayError):
    """A repetition count does not fit its unsigned counter field."""


class InvalidHint(BranchReplayError):
    """Hint bits claim single-target and short-trace at the same time."""


class MalformedBundle(BranchReplayError):
    """A serialized trace bundle is truncated, mistagged, or inconsistent."""


# -- compression pipeline -----------------------------------------------------

class EmptyTrace(BranchReplayError):
    """A raw trace with zero outcomes cannot be compressed."""


class KTooLarge(BranchReplayError):
    """k-mer length exceeds the sequence length being scanned."""


class DanglingSymbol(BranchReplayError):
    """A compressed trace references a symbol with no definition."""


# -- trace generation ---------------------------------------------------------

class EmptyLog(BranchReplayError):
    """A branch log with no records cannot seed trace generation."""


class NonConstantControlFlow(BranchReplayError):
    """Two runs with identical inputs disagree on some branch's trace."""


# -- toy ISA ------------------------------------------------------------------

class ParseError(BranchReplayError):
    """Source text does not conform to the toy ISA grammar."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InvalidAddress(BranchReplayError):
    """Control transferred outside the program's address space."""


class UndefinedRegister(BranchReplayError):
    """An instruction names a register that was never declared."""


class StepBudgetExceeded(BranchReplayError):
    """A program ran longer than the configured step budget."""


# -- formal hardware model ----------------------------------------------------

class TraceExhausted(BranchReplayError):
    """A tagged branch fetched beyond the end of its control-flow trace."""


# -- replay unit / pipeline simulator ----------------------------------------

class CorruptEntry(BranchReplayError):
    """A replay-unit entry violates one of its structural invariants."""


class CommitWithoutFetch(BranchReplayError):
    """Commit arrived for a branch with no outstanding lookup."""


class MissingCheckpoint(BranchReplayError):
    """Squash targeted a branch with no entry or no in-flight lookups."""


class BundleMismatch(BranchReplayError):
    """A bundle does not match the program it is being replayed against."""
