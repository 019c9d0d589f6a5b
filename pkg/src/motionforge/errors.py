"""Exception types shared across the package."""


class MotionForgeError(Exception):
    """Base class for all library errors."""


class ConfigError(MotionForgeError):
    """Invalid or inconsistent configuration (bad value, mismatched shapes vs config)."""


class UsageError(MotionForgeError):
    """Caller misuse of the CLI or a pipeline entry point. Maps to exit code 2."""


class TrainingDivergenceError(MotionForgeError):
    """A loss term became non-finite during training. Carries the name of the part."""

    def __init__(self, part: str, value: float):
        super().__init__(f"training diverged: loss part '{part}' is non-finite ({value})")
        self.part = part
        self.value = value
