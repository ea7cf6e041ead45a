"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad input data or configuration, detected before any heavy compute."""


class DegenerateRotationError(ValidationError):
    """6D rotation input whose Gram-Schmidt orthonormalization is undefined."""


class FrozenModelError(RuntimeError):
    """Attempt to train or mutate a model that has been frozen."""


class NonFiniteGradientError(RuntimeError):
    """A gradient became NaN/Inf; the optimizer step was aborted."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training.

    Carries a reference to the last checkpoint known to be good (may be
    None when the run diverged before the first snapshot).
    """

    def __init__(self, message: str, last_good_checkpoint=None):
        super().__init__(message)
        self.last_good_checkpoint = last_good_checkpoint


class MetricError(RuntimeError):
    """A metric computation failed numerically (e.g. matrix square root)."""
