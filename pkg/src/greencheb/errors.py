"""Exception types shared across greencheb."""

from __future__ import annotations


class GreenChebError(Exception):
    """Base class for all library errors."""

    code = "error"

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


class DomainMismatch(GreenChebError):
    code = "domain_mismatch"


class NonConvergence(GreenChebError):
    """Adaptive construction hit its degree cap before the coefficient tail decayed."""

    code = "non_convergence"


class ShapeMismatch(GreenChebError):
    code = "shape_mismatch"


class RankDeficient(GreenChebError):
    code = "rank_deficient"

    def __init__(self, column: int, message: str | None = None):
        self.column = column
        super().__init__(message or f"quasimatrix column {column} is numerically dependent")


class RankMismatch(GreenChebError):
    code = "rank_mismatch"


class ZeroLengthSegment(GreenChebError):
    code = "zero_length_segment"


class NonFiniteOutput(GreenChebError):
    code = "non_finite_output"


class ZeroResponseNorm(GreenChebError):
    code = "zero_response_norm"

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"response {index} has zero L2 norm")


class Diverged(GreenChebError):
    code = "diverged"

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"training loss became non-finite at epoch {epoch}")


class FactorizationFailure(GreenChebError):
    code = "factorization_failure"


class SingularOperator(GreenChebError):
    code = "singular_operator"


class ZeroMeanViolation(GreenChebError):
    code = "zero_mean_violation"


class Resonance(GreenChebError):
    code = "resonance"


class NotOrthonormalBase(GreenChebError):
    code = "not_orthonormal_base"


class DuplicateNodes(GreenChebError):
    code = "duplicate_nodes"


class ZeroExactNorm(GreenChebError):
    code = "zero_exact_norm"


class CorruptContainer(GreenChebError):
    code = "corrupt_container"


class VersionMismatch(GreenChebError):
    code = "version_mismatch"
