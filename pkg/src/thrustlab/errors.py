"""Exception types shared across the package."""


class ThrustlabError(Exception):
    pass


class DegenerateSixD(ThrustlabError, ValueError):
    """A 6D rotation vector could not be orthonormalized."""


class LayoutMismatch(ThrustlabError, ValueError):
    pass


class NonFiniteState(ThrustlabError, FloatingPointError):
    """Integration produced NaN/inf. ``mask`` marks the offending batch entries."""

    def __init__(self, message, mask=None):
        super().__init__(message)
        self.mask = mask


class KindMismatch(ThrustlabError, TypeError):
    pass


class ConfigInvalid(ThrustlabError, ValueError):
    pass


class ShapeMismatch(ThrustlabError, ValueError):
    pass


class NonFiniteLoss(ThrustlabError, FloatingPointError):
    pass


class ParamInvalid(ThrustlabError, ValueError):
    pass


class PolicyTaskMismatch(ThrustlabError, ValueError):
    pass


class EmptyInput(ThrustlabError, ValueError):
    pass
