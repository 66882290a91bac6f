"""Error types shared by every vesselseg module.

Each error carries a machine-readable ``category`` so the CLI can report
failures as a single parseable line.
"""

from typing import Optional


class VesselsegError(Exception):
    """Base class for all vesselseg failures."""

    category = "internal"


class ContractViolation(VesselsegError, ValueError):
    """A precondition or invariant of an operation was not met."""

    category = "contract"


class FormatError(VesselsegError, ValueError):
    """A file could not be parsed (PGM, SRW1, CVS1, manifest, config)."""

    category = "format"

    def __init__(
        self, message: str, offset: Optional[int] = None, record: Optional[str] = None
    ):
        self.offset = offset
        self.record = record
        details = []
        if record is not None:
            details.append(f"record={record}")
        if offset is not None:
            details.append(f"offset={offset}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)


class DivergenceError(VesselsegError, RuntimeError):
    """Training produced a non-finite loss."""

    category = "divergence"

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")


def require(condition: bool, message: str) -> None:
    """Raise ContractViolation with ``message`` unless ``condition`` holds."""
    if not condition:
        raise ContractViolation(message)
