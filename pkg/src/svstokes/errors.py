"""Exception types raised by the toolkit."""


class SvStokesError(Exception):
    """Base class for all toolkit errors."""


class ParseError(SvStokesError):
    """Malformed mesh text."""


class NonConformingMesh(SvStokesError):
    """Triangulation violates conformity (bad edge incidence, hanging
    vertex, non-manifold vertex fan, duplicated triangle, ...)."""


class DegenerateTriangle(SvStokesError):
    """Triangle area below the degeneracy threshold."""


class UnknownVertex(SvStokesError):
    """Vertex id out of range."""


class UnknownTriangle(SvStokesError):
    """Triangle id out of range."""


class InvalidParameter(SvStokesError):
    """Parameter outside its admissible range."""


class AllVerticesCritical(SvStokesError):
    """No vertex left outside the eta-critical set."""


class MissingCompanion(SvStokesError):
    """A super-critical vertex has no adjacent triangle outside its patch."""


class NotRobinson(SvStokesError):
    """Operation requires all super-critical vertices to be Robinson."""


class SingularGram(SvStokesError):
    """Gram matrix of a pressure-space basis is numerically singular."""


class SingularSystem(SvStokesError):
    """Discrete saddle-point system is singular (inf-sup degenerate)."""

    def __init__(self, message, smallest_sv=None):
        super().__init__(message)
        self.smallest_sv = smallest_sv


class UnknownCase(SvStokesError):
    """Unknown manufactured-solution id."""
