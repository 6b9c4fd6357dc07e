"""Exception types raised across the pipeline."""


class AutoboxError(Exception):
    """Base class for all errors raised by this package."""


class OutOfBounds(AutoboxError):
    """A box or region exceeds the extents of its image."""


class NonConvergence(AutoboxError):
    """The merge loop hit its iteration cap without reaching the target count."""


class InsufficientProposals(AutoboxError):
    """Fewer proposals survived filtering than objects requested."""


class EmptyCategory(AutoboxError):
    """A declared category has no training crops."""


class ScorerProtocolError(AutoboxError):
    """The external scorer response is missing or malformed."""


class EmptyForeground(AutoboxError):
    """Mask thresholding left no foreground pixel; the patch is unusable."""


class NoOverlap(AutoboxError):
    """A placed patch lies entirely outside the target image."""


class EmptyPatchDb(AutoboxError):
    """Patch mode requested but the patch database holds no patches."""


class ParseError(AutoboxError):
    """A file does not conform to its expected format."""


class InvariantViolation(AutoboxError):
    """Parsed data violates a structural invariant (e.g. box outside image)."""


class IoFailure(AutoboxError):
    """An underlying read or write failed."""


class DuplicatePath(AutoboxError):
    """A manifest lists the same image path twice."""


class NoGroundTruth(AutoboxError):
    """Evaluation requested with an empty ground-truth set."""


class ZeroGroundTruth(AutoboxError):
    """Average precision requested for a class with no ground-truth boxes."""


class PlacementFailure(AutoboxError):
    """Could not place sprites without violating the minimum gap."""


class ConfigError(AutoboxError):
    """Bad configuration key, value, or cross-field invariant."""
