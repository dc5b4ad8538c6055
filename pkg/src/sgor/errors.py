"""Exception hierarchy shared by every pipeline stage.

Each class carries the process exit code the CLI maps it to, so the
exit-code contract lives next to the error definitions.
"""

from __future__ import annotations


class SGORError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 10
    stage = "pipeline"


class InputError(SGORError):
    exit_code = 3
    stage = "input"


class LengthMismatch(InputError, ValueError):
    pass


class MalformedFile(InputError):
    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DimensionMismatch(InputError, ValueError):
    stage = "match"


class EmptyCloud(SGORError, ValueError):
    exit_code = 3
    stage = "input"


class DegenerateConfiguration(SGORError, ValueError):
    exit_code = 7
    stage = "solve"


class NoGroundPoints(SGORError):
    exit_code = 8
    stage = "ground"


class EmptyOverlap(SGORError):
    exit_code = 4
    stage = "overlap"


class GroupTooSmall(SGORError, ValueError):
    exit_code = 6
    stage = "group"


class AllZeroRow(SGORError):
    exit_code = 7
    stage = "consistency"


class NoCandidates(SGORError):
    exit_code = 5
    stage = "verify"


class TooFewPoints(SGORError, ValueError):
    exit_code = 6
    stage = "synth"


EXIT_CODES = {
    "ok": 0,
    "usage": 2,
    InputError.__name__: InputError.exit_code,
    EmptyOverlap.__name__: EmptyOverlap.exit_code,
    NoCandidates.__name__: NoCandidates.exit_code,
    GroupTooSmall.__name__: GroupTooSmall.exit_code,
    DegenerateConfiguration.__name__: DegenerateConfiguration.exit_code,
    NoGroundPoints.__name__: NoGroundPoints.exit_code,
    SGORError.__name__: SGORError.exit_code,
}
