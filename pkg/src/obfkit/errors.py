class ObfError(Exception):
    """Base class for toolkit errors."""


class FormatError(ObfError):
    """Input file could not be parsed."""


class StructureError(ObfError):
    """Taxonomy is not a tree (cycle, orphan, duplicate id)."""


class LookupFailure(ObfError, KeyError):
    """Unknown interest, GIC, or domain."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class IncompatibleProfiles(ObfError, ValueError):
    pass


class UndefinedOverlap(ObfError, ValueError):
    pass


class InsufficientData(ObfError, ValueError):
    pass


class NoEvidence(ObfError, ValueError):
    """None of the queried domains is in the model vocabulary."""


class CapacityError(ObfError, ValueError):
    pass


class StrategyError(ObfError, RuntimeError):
    pass


class GenerationError(ObfError, ValueError):
    pass
