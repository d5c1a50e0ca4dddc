"""Exception hierarchy.

Every error raised on purpose by this package derives from
:class:`LinfPerturbError`; argument problems additionally derive from
``ValueError`` so callers that only know the builtins still catch them.
"""


class LinfPerturbError(Exception):
    """Base class for all package errors."""


class NonSymmetric(LinfPerturbError, ValueError):
    """Input matrix is not symmetric within tolerance."""


class NoConvergence(LinfPerturbError, ArithmeticError):
    """The eigensolver hit its iteration cap."""


class IndexOutOfRange(LinfPerturbError, IndexError):
    """A row/column index is outside ``[0, n)``."""


class RankExceeded(LinfPerturbError, ValueError):
    """Requested more singular components than the matrix rank."""


class LengthMismatch(LinfPerturbError, ValueError):
    pass


class ShapeMismatch(LinfPerturbError, ValueError):
    pass


class BadSize(LinfPerturbError, ValueError):
    pass


class BadPartition(LinfPerturbError, ValueError):
    pass


class BadSpec(LinfPerturbError, ValueError):
    pass


class BadDensity(LinfPerturbError, ValueError):
    pass


class NotBinary(LinfPerturbError, ValueError):
    pass


class NonPositiveInput(LinfPerturbError, ValueError):
    pass


class TooFewTrials(LinfPerturbError, ValueError):
    pass


class SizeCap(LinfPerturbError, ValueError):
    """Instance too large for exhaustive per-coordinate evaluation."""


class ZeroMatrix(LinfPerturbError, ValueError):
    pass


class RankDeficient(LinfPerturbError, ValueError):
    pass


class BlockTooSmall(LinfPerturbError, ValueError):
    pass


class UniverseMismatch(LinfPerturbError, ValueError):
    pass


class BoundViolated(LinfPerturbError, ValueError):
    pass


class ConfigParse(LinfPerturbError, ValueError):
    pass


class AssignmentAmbiguous(LinfPerturbError):
    """A held-out vertex is fully adjacent to zero or several recovered blocks.

    ``vertex`` is the offending vertex, ``candidates`` the block indices it is
    fully adjacent to and ``partial`` the blocks recovered before assignment.
    """

    def __init__(self, vertex, candidates, partial):
        super().__init__(
            f"vertex {vertex} is fully adjacent to blocks {list(candidates)}"
        )
        self.vertex = vertex
        self.candidates = tuple(candidates)
        self.partial = partial
