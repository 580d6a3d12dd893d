"""Exception hierarchy shared by all modules."""


class SeparatrixError(Exception):
    """Base class; the CLI maps these to a nonzero exit code."""


class InvalidMapError(SeparatrixError):
    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class ConfigError(SeparatrixError):
    pass


class DomainError(SeparatrixError):
    pass


class TruncationOverflow(SeparatrixError):
    pass


class ResonanceError(SeparatrixError):
    pass


class SeedDivergence(SeparatrixError):
    pass


class MarchOverflow(SeparatrixError):
    def __init__(self, step: int, detail: str = ""):
        self.step = step
        super().__init__(f"overflow at march step {step} {detail}".strip())


class PrecisionInsufficient(SeparatrixError):
    pass


class NoRootInWindow(SeparatrixError):
    pass


class TailNotConverged(SeparatrixError):
    pass


class QuadratureError(SeparatrixError):
    pass


class IllConditioned(SeparatrixError):
    pass


class DivergenceWarning(UserWarning):
    """Formal series terms are not decreasing at the evaluation point."""


class MultipleRootsWarning(UserWarning):
    pass
