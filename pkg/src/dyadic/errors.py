"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Vector lengths do not match the model truncation."""


class AdmissibilityError(ValueError):
    """A parameter lies outside the range where a formula or theorem applies."""


class UnsupportedConversionError(ValueError):
    pass


class NonFiniteStateError(FloatingPointError):
    """An integration step produced NaN or infinite amplitudes."""


class ConfigError(ValueError):
    pass


class PastBlowupError(ValueError):
    """Riccati solution requested at or beyond its blow-up time."""

    def __init__(self, t, t_star):
        super().__init__(f"t={t!r} is past the Riccati blow-up time t_star={t_star!r}")
        self.t = t
        self.t_star = t_star


class FitRejected(ValueError):
    pass
