"""Exception hierarchy shared by every genet module."""


class GenetError(Exception):
    """Base class for all library errors."""


class DataError(GenetError):
    """Bad input data; the CLI maps these to exit code 2."""


class UnknownNode(DataError, KeyError):
    pass


class DuplicateIncidence(DataError):
    pass


class EmptyHyperedge(DataError):
    pass


class UndersizedHyperedge(EmptyHyperedge):
    """A construction-time hyperedge with a single member."""


class NotIncident(GenetError):
    pass


class IsolatedAfterPerturbation(GenetError):
    """Removing the conditioning incidence left the node with no hyperedges."""


class EmptyHypergraph(DataError):
    pass


class KTooLarge(DataError):
    pass


class EmptyInput(DataError):
    pass


class DimensionMismatch(GenetError, ValueError):
    pass


class ShapeMismatch(GenetError, ValueError):
    pass


class NoEligibleEdge(GenetError):
    pass


class EmptyBatch(GenetError, ValueError):
    pass


class EmptySequence(GenetError, ValueError):
    pass


class NonFiniteGradient(GenetError, FloatingPointError):
    pass


class EmptyLog(DataError):
    pass


class UnknownUser(DataError, KeyError):
    pass


class UnknownItem(DataError, KeyError):
    pass


class ParseError(DataError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class MissingCheckpoint(DataError):
    pass


class DumpFormatError(DataError):
    """Embedding dump failed its magic/version/length check."""
