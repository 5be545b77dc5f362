"""Exception types shared across the library.

Every failure mode raised by this package derives from :class:`SparseCertError`
so callers can catch library errors without swallowing programming mistakes.
"""

from __future__ import annotations


class SparseCertError(Exception):
    """Base class for all library errors."""


# --- dictionary ------------------------------------------------------------

class ZeroColumn(SparseCertError):
    """A column with (near-)zero norm cannot be normalized to a unit atom."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"column {index} has norm <= 1e-12 and cannot be normalized")


class TooFewAtoms(SparseCertError):
    """Pairwise coherence quantities need at least two atoms."""


class OutOfRange(SparseCertError):
    """A sparsity-level argument lies outside its valid range."""


class TooLarge(SparseCertError):
    """Exact RIP enumeration is guarded to small dictionaries (p <= 20)."""


# --- encoder ---------------------------------------------------------------

class BadPenalty(SparseCertError):
    """The l1 penalty must be strictly positive."""


class NoConvergence(SparseCertError):
    """KKT residual still above tolerance after all refinement restarts."""


class SingularSupport(SparseCertError):
    """The on-support Gram matrix is numerically singular (cond > 1e12)."""


# --- model -----------------------------------------------------------------

class ZeroWeights(SparseCertError):
    """Binary margin is undefined for a (near-)zero weight vector."""


class DomainError(SparseCertError):
    """An input violates a documented precondition of a calculator."""


# --- train -----------------------------------------------------------------

class NonFinite(SparseCertError):
    """A loss or gradient became NaN/Inf during optimization."""


# --- data / persistence ----------------------------------------------------

class GenerationStalled(SparseCertError):
    """Rejection sampling accepted fewer than 1% of 1e5 candidates."""


class BadMagic(SparseCertError):
    """A file does not start with the expected magic bytes."""


class VersionMismatch(SparseCertError):
    """A file declares an unsupported format version."""


class CorruptPayload(SparseCertError):
    """A file's payload size disagrees with its header."""


class DenormalizedDictionary(SparseCertError):
    """A stored dictionary has columns that are not unit-norm."""


class TruncatedFile(SparseCertError):
    """An IDX file ends before the bytes promised by its header."""


class CountMismatch(SparseCertError):
    """Image and label files disagree on the number of samples."""


class IoError(SparseCertError):
    """Filesystem failure while writing results."""
