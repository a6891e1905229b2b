"""Exception types raised across the package.

Everything derives from ValueError or RuntimeError so callers can stay
coarse-grained; the subclasses exist to make diagnostics precise and to let
tests pin failure modes.
"""


class InvalidParameterError(ValueError):
    """A model parameter violates its contract (shape, range, stochasticity)."""


class DegenerateLikelihoodError(ValueError):
    """All states assign zero mass to an observation.

    Carries the offending time index in ``t``.
    """

    def __init__(self, t: int, message: str | None = None):
        self.t = int(t)
        super().__init__(message or f"zero total likelihood at t={t}")


class DegenerateFitError(ValueError):
    """Requested state count exceeds what the data can support."""


class InsufficientSegmentsError(ValueError):
    """Fewer trend segments than requested states."""


class InsufficientDataError(ValueError):
    """Not enough observations for the requested fit."""


class DegenerateSplineError(ValueError):
    """Spline is numerically zero everywhere; no sign structure to extract."""


class SplineFitError(ValueError):
    """Constrained spline fit failed (rank deficiency, bad domain coverage)."""


class OutOfSessionError(ValueError):
    """Timestamp falls outside the trading session."""


class IngestError(ValueError):
    """Malformed tick data. Carries the 1-based data line number in ``line``."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class SamplerError(RuntimeError):
    """MCMC sampler failed to produce a usable chain."""


class BridgeFailureError(RuntimeError):
    """Bridge-sampling recursion failed to stabilize."""
