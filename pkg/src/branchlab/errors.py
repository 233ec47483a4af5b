"""Exception hierarchy shared across branchlab modules."""


class BranchlabError(Exception):
    """Base class for all branchlab errors."""


# -- state algebra ------------------------------------------------------------

class LabelCollision(BranchlabError):
    """Two subsystem factors share a name."""


class LabelMissing(BranchlabError):
    """An operation referenced a subsystem not present in the space."""


class NotUnitary(BranchlabError):
    """Matrix failed the unitarity check."""


class EmptyKeepSet(BranchlabError):
    """Partial trace asked to keep nothing."""


class NotNormalized(BranchlabError):
    """State vector norm differs from one beyond tolerance."""


class DimensionTooLarge(BranchlabError):
    """Joint dimension exceeds the dense-representation cap."""


# -- branching ----------------------------------------------------------------

class DimensionTooSmall(BranchlabError):
    """Detector or environment lacks room for the required records."""


class NoRecord(BranchlabError):
    """Conditioned on a detector that has not recorded anything."""


class NotDecohered(BranchlabError):
    """Off-diagonal block between putative branches exceeds the threshold."""

    def __init__(self, magnitude, threshold):
        self.magnitude = magnitude
        self.threshold = threshold
        super().__init__(
            f"off-diagonal block magnitude {magnitude:.3e} exceeds "
            f"threshold {threshold:.3e}"
        )


class IncompleteWiring(BranchlabError):
    """A detector outcome with support has no display symbol wired."""


# -- credence -----------------------------------------------------------------

class NoCopies(BranchlabError):
    """A copy class came up empty."""


class ApproximationFailed(BranchlabError):
    """No common denominator meets the rational-approximation bar."""


class WeightMismatch(BranchlabError):
    """Branch weights disagree with the supplied rational weights."""


class NotEnvironmentOnly(BranchlabError):
    """Unitary claimed to act on the environment touches agent or detector."""


class PremiseFailed(BranchlabError):
    """A proof-replay premise deviated beyond tolerance."""

    def __init__(self, step_id, deviation, report=None):
        self.step_id = step_id
        self.deviation = deviation
        self.report = report
        super().__init__(f"premise {step_id!r} deviates by {deviation:.3e}")


class NoSupport(BranchlabError):
    """All weights are zero; no probability distribution exists."""


class NotSwappable(BranchlabError):
    """Branches selected for a swap carry unequal weights."""


# -- scenarios ----------------------------------------------------------------

class ParseError(BranchlabError):
    """Scenario document violates the schema."""

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class LinkError(ParseError):
    """Scenario document references an undeclared entity."""


class EventError(BranchlabError):
    """An event's preconditions were violated during a run."""


class UnknownScenario(BranchlabError):
    """No bundled scenario by that name."""


# -- epistemics ---------------------------------------------------------------

class PartitionMismatch(BranchlabError):
    """Bet payoffs do not cover the hypothesis partition."""


class ZeroEvidence(BranchlabError):
    """Observed outcome has zero probability under every theory."""


# -- cosmology ----------------------------------------------------------------

class InvalidDensity(BranchlabError):
    """Observer-density sample is negative."""
