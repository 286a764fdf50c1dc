"""Exception hierarchy shared across the package."""


class NetlocError(Exception):
    """Base class for all errors raised by netloc."""


class InvalidNetwork(NetlocError, ValueError):
    pass


class DisconnectedGraph(InvalidNetwork):
    pass


class NonPositiveSlope(NetlocError, ValueError):
    pass


class MultipleZeroModes(NetlocError, ValueError):
    pass


class SingularInteriorBlock(NetlocError, ValueError):
    pass


class SingularUpdate(NetlocError, ValueError):
    pass


class NoConvergence(NetlocError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class Divergence(NetlocError, RuntimeError):
    pass


class InvalidTarget(NetlocError, ValueError):
    pass


class DimensionMismatch(NetlocError, ValueError):
    pass


class DegenerateSignatures(NetlocError, ValueError):
    pass


class GenerationFailed(NetlocError, RuntimeError):
    pass


class InadmissibleDisturbance(NetlocError, ValueError):
    pass
