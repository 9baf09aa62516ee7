"""Typed errors shared across the pipeline.

Every error the package raises deliberately derives from LexforgeError so
callers (and the CLI exit-code mapping) can tell our failures apart from bugs.
"""


class LexforgeError(Exception):
    """Base class for all errors raised on purpose by this package."""


# --- tokenizer ---

class CorpusEmpty(LexforgeError):
    """Tokenizer training received no text."""


class VocabTooSmall(LexforgeError):
    """Requested vocabulary cannot hold the byte base plus specials."""


class UnknownToken(LexforgeError):
    """A token id at or beyond the vocabulary size."""


# --- tensor math / model ---

class ShapeError(LexforgeError):
    """Incompatible tensor shapes."""


class NotScalar(LexforgeError):
    """backward() called on a non-scalar node."""


class DoubleBackward(LexforgeError):
    """backward() called twice on the same recorded graph."""


class ContextOverflow(LexforgeError):
    """Sequence does not fit the model context window."""


# --- training ---

class NoTargets(LexforgeError):
    """Sequence too short to contain any prediction target."""


class EmptyOutputMask(LexforgeError):
    """Fine-tuning example with an empty output index set."""


class NoData(LexforgeError):
    """A stage or build received no usable records."""


class StagePreconditionError(LexforgeError):
    """Stage run out of order (e.g. fine-tuning without pre-trained init)."""


class ChecksumError(LexforgeError):
    """Checkpoint payload failed integrity verification."""


class VersionError(LexforgeError):
    """File carries an unknown format magic/version."""


# --- datakit ---

class EmptyField(LexforgeError):
    """Instruction or output empty after trimming."""


class ParseError(LexforgeError):
    """No JSON object could be extracted from a response."""


class SchemaError(LexforgeError):
    """Extracted JSON object lacks the expected keys."""


class TooLong(LexforgeError):
    """Tokenized example exceeds the context length."""


# --- evaluation ---

class UnknownMetric(LexforgeError):
    """Scorer id not present in the registry."""


class BadReference(LexforgeError):
    """Numeric scorer could not parse the reference value."""
