"""Exception types shared across the package."""


class RomassimError(Exception):
    """Base class for all package-specific errors."""


# -- meshes and fields ------------------------------------------------------

class ZeroDimension(RomassimError):
    """Mesh with zero cells requested."""


class RegionGap(RomassimError):
    """Some cell was left without a region id."""


class MeshMismatch(RomassimError):
    """Two fields/functionals live on different meshes."""


# -- solvers ----------------------------------------------------------------

class NegativeCoefficient(RomassimError):
    """Operator assembly produced a non-positive stencil diagonal."""


class NoFission(RomassimError):
    """Eigenvalue solve requested without any fission source."""


class NoConvergence(RomassimError):
    """Iterative solve exceeded its iteration budget."""


class SingularSystem(RomassimError):
    """A linear solve failed."""


class NonPositiveTemperature(RomassimError):
    """Coupling law evaluated at T <= 0."""


class DegenerateRange(RomassimError):
    """Interval with zero width where a proper range is required."""


class ParameterOutOfRange(RomassimError):
    """Requested parameter lies outside the benchmark's parameter box."""


# -- reduction / sensing ----------------------------------------------------

class RankDeficient(RomassimError):
    """Requested more basis vectors than the data numerically supports."""


class ExtrapolationRequest(RomassimError):
    """Surrogate evaluated outside its training hull with clamping disabled."""


class EmptyLibrary(RomassimError):
    """Sensor library construction produced no sensors."""


# -- greedy algorithms ------------------------------------------------------

class LibraryExhausted(RomassimError):
    """All library sensors were consumed before the stopping rule fired."""


class DegenerateSnapshot(RomassimError):
    """Greedy residual invisible to every remaining sensor."""


class SizeMismatch(RomassimError):
    """Vector/matrix dimensions inconsistent with the model."""


class ZeroVariance(RomassimError):
    """A training coefficient has zero sample variance."""


class StalledSelection(RomassimError):
    """Greedy argmax score fell below the stall threshold."""


class SingularSaddle(RomassimError):
    """Saddle-point system is (numerically) singular."""

    def __init__(self, message, smallest_singular_value=None):
        super().__init__(message)
        self.smallest_singular_value = smallest_singular_value


# -- harness ----------------------------------------------------------------

class EmptyValidation(RomassimError):
    """Hyper-parameter tuning invoked with an empty validation set."""


class EmptySet(RomassimError):
    """Error metric requested over an empty parameter set."""


class MissingField(RomassimError):
    """Snapshot set lacks a field required by the requested output."""


class StageError(RomassimError):
    """Pipeline stage failed; carries the stage name."""

    def __init__(self, stage, message):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage
