"""Exception hierarchy shared by all suplab modules."""


class SuplabError(Exception):
    """Base class for every error raised by suplab."""


class InvalidGrid(SuplabError, ValueError):
    pass


class WindowTooSmall(SuplabError, ValueError):
    pass


class GridMismatch(SuplabError, ValueError):
    pass


class NotNormalized(SuplabError, ValueError):
    pass


class EmptyEnsemble(SuplabError, ValueError):
    pass


class UnknownCatalogId(SuplabError, KeyError):
    def __str__(self):  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


class CflViolation(SuplabError, ValueError):
    pass


class MassDrift(SuplabError, RuntimeError):
    pass


class NegativeDensity(SuplabError, RuntimeError):
    pass


class NonmonotoneBeta(SuplabError, ValueError):
    pass


class KernelUnbounded(SuplabError, ValueError):
    pass


class NegativeDiffusion(SuplabError, ValueError):
    pass


class TrajectoryTooShort(SuplabError, ValueError):
    pass


class StartOutsideDomain(SuplabError, ValueError):
    pass


class GeneratorBoundFailed(SuplabError, RuntimeError):
    pass


class DominationViolated(SuplabError, RuntimeError):
    pass


class UnknownPsi(UnknownCatalogId):
    pass


class CheckpointOutsideTrajectory(SuplabError, ValueError):
    pass


class InitialDominationFails(SuplabError, ValueError):
    pass


class ScenarioError(SuplabError, ValueError):
    """Configuration problem; ``key`` names the offending scenario key."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
