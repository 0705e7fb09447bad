"""Exception types shared across the package."""


class RankDeficiencyError(ValueError):
    """Input matrix is (numerically) rank deficient where full rank is required."""


class SketchFailureError(RuntimeError):
    """A randomized sketch produced an unusable (rank-deficient) result after retries."""


class InnerSolveError(RuntimeError):
    """An inner iterative solver failed to reach its tolerance."""


class GridExhaustedError(RuntimeError):
    """Every step-size candidate in a grid search diverged."""


class DataFormatError(ValueError):
    """A dataset file could not be parsed; the message carries row/column diagnostics."""
