"""Exception hierarchy shared by the solver, mapping and surrogate layers."""


class BifireError(Exception):
    """Base class for all package errors."""


class ConfigError(BifireError, ValueError):
    """Invalid configuration or argument."""


class InvalidStateError(BifireError, ValueError):
    """A field violates a physical precondition (e.g. non-positive temperature)."""


class SingularConfigurationError(BifireError, ValueError):
    """Parameter combination makes a closed-form expression singular."""


class StabilityError(BifireError, RuntimeError):
    """Explicit time step violates the advection/diffusion stability bound."""

    def __init__(self, ratio, step=0):
        self.ratio = float(ratio)
        self.step = int(step)
        super().__init__(
            f"stability bound violated at step {self.step}: ratio {self.ratio:.4g} > 1"
        )


class DivergenceError(BifireError, RuntimeError):
    """Non-finite values appeared during time integration."""

    def __init__(self, step):
        self.step = int(step)
        super().__init__(f"solution diverged (non-finite values) at step {self.step}")


class DegenerateFrontError(BifireError, ValueError):
    """A 1D field carries no front to align on."""


class DegenerateIndicatorError(BifireError, ValueError):
    """The 2D activity indicator has zero total mass."""


class InvalidDescriptorError(BifireError, ValueError):
    """Geometric descriptors outside their admissible range."""


class RankDeficiencyError(BifireError, RuntimeError):
    """Pivoted Cholesky ran out of numerically independent columns."""

    def __init__(self, achievable, requested):
        self.achievable = int(achievable)
        self.requested = int(requested)
        super().__init__(
            f"Gramian is numerically rank deficient: only {self.achievable} of "
            f"{self.requested} requested nodes can be selected"
        )


class IllConditionedError(BifireError, RuntimeError):
    """Linear system too ill-conditioned to solve reliably."""


class UndefinedMetricError(BifireError, ValueError):
    """Metric undefined for the given inputs (e.g. zero reference norm)."""
