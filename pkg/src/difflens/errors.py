"""Exception types shared across the engine."""

from __future__ import annotations


class DiffLensError(Exception):
    """Base class for all engine errors."""


class BundleError(DiffLensError):
    """A bundle failed to load; carries the validation violations that caused it."""

    def __init__(self, violations):
        self.violations = tuple(violations)
        first = self.violations[0].message if self.violations else "unknown bundle error"
        extra = f" (+{len(self.violations) - 1} more)" if len(self.violations) > 1 else ""
        super().__init__(first + extra)


class MatrixFormatError(DiffLensError):
    """An embedding matrix file is malformed (bad magic, truncated, wrong size)."""


class SynthSpecError(DiffLensError):
    """A synthetic-bundle spec is infeasible or malformed."""


class IndexError_(DiffLensError):
    """Nearest-neighbor index misuse: bad k, dimension mismatch, empty split."""


class PcaError(DiffLensError):
    """PCA misuse: p out of range, dimension mismatch."""


class ProfileError(DiffLensError):
    """Difficulty profiling failed: missing prediction, bad config."""


class FlowError(DiffLensError):
    """Flow aggregation misuse: empty subset, unknown element."""


class SubsetError(DiffLensError):
    """Subset manager misuse: unknown subset, cross-bundle combine, store version mismatch."""
