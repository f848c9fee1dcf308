"""Exception hierarchy for the extractor."""


class ExtractorError(Exception):
    pass


class JobError(ExtractorError):
    """Invalid job parameters, or a context type whose encoder class does
    not match."""


class AlignmentError(ExtractorError):
    """Alignment file missing, malformed, or structurally invalid."""


class EncoderError(ExtractorError):
    """Unknown encoder name, unloadable vector table, or an operation the
    encoder class does not support."""
