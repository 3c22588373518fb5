"""Exception types raised by the simulation and analysis code."""


class NoEquilibrium(ValueError):
    """No positive stationary density exists for the given parameters."""


class NonFinite(FloatingPointError):
    """A trajectory left the finite range during integration."""


class DegeneratePhase(ValueError):
    """A mode sits at the origin, so its phase is undefined."""


class NoThreshold(ValueError):
    """The entanglement polynomial has no root in (0, 1]."""


class NeverEntangled(ValueError):
    """The pre-quench state already fails the squeezing threshold."""


class ConfigError(ValueError):
    """Scenario configuration failed validation.

    ``errors`` lists ``{"path": dotted.key, "msg": ...}`` entries.
    """

    def __init__(self, message: str, errors=None):
        super().__init__(message)
        self.errors = list(errors or [])
