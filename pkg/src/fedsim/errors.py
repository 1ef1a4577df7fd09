"""Exception hierarchy shared by every fedsim module."""

from __future__ import annotations


class FedSimError(Exception):
    """Base class for all simulator errors."""


# model-core
class InvalidShape(FedSimError, ValueError):
    pass


class ShapeMismatch(FedSimError, ValueError):
    pass


class EmptyShard(FedSimError, ValueError):
    pass


class NonFiniteLoss(FedSimError, ArithmeticError):
    pass


class ShrinkNotAllowed(FedSimError, ValueError):
    pass


# synth-data
class GeometryError(FedSimError, RuntimeError):
    pass


class TooManyClients(FedSimError, ValueError):
    pass


class ParseError(FedSimError, ValueError):
    pass


class SchemaError(FedSimError, ValueError):
    pass


class NonContiguousClass(FedSimError, ValueError):
    pass


class UnknownRegion(FedSimError, KeyError):
    pass


# fl-protocol
class NoUpdates(FedSimError, ValueError):
    pass


class WireError(FedSimError, ValueError):
    """Raised for any undecodable byte sequence."""


class BadMagic(WireError):
    pass


class VersionUnsupported(WireError):
    pass


class ChecksumMismatch(WireError):
    pass


class Truncated(WireError):
    pass


# gate
class MismatchedRuns(FedSimError, ValueError):
    pass


# fleet-cluster
class TooManyGroups(FedSimError, ValueError):
    pass


class InvalidK(FedSimError, ValueError):
    pass


class EmptyGroup(FedSimError, ValueError):
    pass


class NotADriver(FedSimError, ValueError):
    pass


# config / cli
class ConfigError(FedSimError, ValueError):
    """Invalid experiment configuration.

    ``problems`` holds ``(field_path, message)`` pairs so callers can report
    every offending field at once.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [("", problems)]
        self.problems = list(problems)
        text = "; ".join(f"{p or '<root>'}: {m}" for p, m in self.problems)
        super().__init__(text)


class ExistsError(FedSimError, FileExistsError):
    pass
