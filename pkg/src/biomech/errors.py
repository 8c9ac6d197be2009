"""Exception taxonomy shared across the pipeline."""


class ContractViolation(ValueError):
    """An operation was called with arguments that break its preconditions."""


class EmptyInputError(ValueError):
    """An operation that needs at least one element received none."""


class ConfigError(ValueError):
    """Invalid configuration (bad ranges, weights not summing to one, ...)."""


class FoldConstructionError(ValueError):
    """Stratified cross-validation folds would leave a class unseen in training."""


class MissingArtifactError(FileNotFoundError):
    """A pipeline stage needs an artifact that has not been produced yet."""

    def __init__(self, path, producer: str):
        super().__init__(f"missing artifact {path}; run `{producer}` first")
        self.path = path
        self.producer = producer


class TrainingDivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, message: str = "non-finite loss"):
        super().__init__(f"{message} at step {step}")
        self.step = step


class UndefinedCorrelationError(ValueError):
    """Pearson correlation is undefined (zero variance in an argument)."""


class UpstreamError(RuntimeError):
    """The external chat endpoint failed after retries."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class UpstreamTimeoutError(UpstreamError):
    """The external chat endpoint timed out."""
