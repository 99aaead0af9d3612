"""Error types shared across the package."""


class DimensionError(ValueError):
    """An array has a shape incompatible with the requested operation."""


class ValidationError(ValueError):
    """Input data violates a documented contract (range, labels, counts)."""


class ConfigurationError(ValueError):
    """Mismatched or inconsistent configuration objects."""


class DataError(RuntimeError):
    """A dataset cannot satisfy a sampling request (e.g. empty group)."""


class CapabilityError(TypeError):
    """A supplied component lacks a required capability (e.g. gradients)."""


class TrainingDiverged(RuntimeError):
    """A training step produced a non-finite loss; carries the diagnostics."""

    def __init__(self, step: int, components: dict):
        self.step = step
        self.components = components
        detail = ", ".join(f"{k}={v}" for k, v in components.items())
        super().__init__(f"non-finite loss at step {step}: {detail}")
